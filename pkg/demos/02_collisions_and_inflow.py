"""
Collisions and inflow
=====================

The no-time-counter scheme picks a number of candidate pairs per cell from
the running maximum of sigma*c_r and accepts each with probability
sigma*c_r / max. Inflow through the inlet disk follows the one-sided flux
of a drifting Maxwellian.
"""

import math

import numpy as np

from dsmc_balance import GasModel, Inlet
from dsmc_balance.kernel import (
    collide_cell,
    expected_candidates,
    flux_density,
    inflow_count,
    maxwellian_velocity,
)

gas = GasModel(fnum=1e12)
rng = np.random.default_rng(1)

# two beams relax towards a Maxwellian
v = np.concatenate([np.tile([600.0, 0, 0], (500, 1)), np.tile([-600.0, 0, 0], (500, 1))])
v += rng.normal(0, 1.0, v.shape)
smax = np.array([1e-15])
p0, e0 = v.sum(axis=0), (v ** 2).sum()
for step in range(8):
    cand, coll = collide_cell(v, 5e-6, 1e-6, gas, smax, rng)
    print(f"step {step}: {cand} candidates, {coll} collisions, var(vx)/var(vy) = {v[:, 0].var() / v[:, 1].var():.2f}")
print("momentum drift", np.abs(v.sum(axis=0) - p0).max(), "energy drift", (v ** 2).sum() / e0 - 1)
print("expected candidates for 100 particles in 1 mm^3:", expected_candidates(100, 1e12, 5e-16, 1e-7, 1e-9))

# the argon jet inlet: speed ratio about 8, so the flux is essentially n*u
inlet = Inlet((0.4, 0.4, 0.0), 0.1, (0.0, 0.0, 2900.0), 0.01, 300.0)
n = inlet.number_density(gas)
print(f"n = {n:.3e} /m^3, flux = {flux_density(n, 300.0, 2900.0, gas.molecular_mass):.3e} /m^2/s, "
      f"n*u = {n * 2900:.3e}")
print("simulated particles created per step at fnum 7e16, dt 7e-7:",
      inflow_count(inlet, 7e-7, GasModel(fnum=7e16)))

sample = maxwellian_velocity(300.0, (0, 0, 0), gas.molecular_mass, rng, size=100_000)
c_mp = math.sqrt(2 * 1.380649e-23 * 300 / gas.molecular_mass)
print(f"mean speed {np.linalg.norm(sample, axis=1).mean():.1f} m/s vs 2/sqrt(pi) c_mp = {2 / math.sqrt(math.pi) * c_mp:.1f}")
