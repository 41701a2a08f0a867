"""DSMC physics: free flight with wall/vacuum boundaries, Maxwellian inflow,
and NTC selection of VHS collision pairs on a uniform collision grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .costmap import grid_shape
from .geometry import Box3

K_BOLTZMANN = 1.380649e-23


@dataclass(frozen=True)
class GasModel:
    """Single-species VHS gas. Defaults are literature values for argon."""

    molecular_mass: float = 6.63e-26
    vhs_diameter_ref: float = 4.17e-10
    vhs_temperature_ref: float = 273.0
    vhs_omega: float = 0.81
    fnum: float = 1.0e15

    def __post_init__(self):
        for name in ("molecular_mass", "vhs_diameter_ref", "vhs_temperature_ref", "fnum"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.5 <= self.vhs_omega <= 1.0:
            raise ValueError("vhs_omega must lie in [0.5, 1]")

    @property
    def reduced_mass(self) -> float:
        return 0.5 * self.molecular_mass

    def sigma_cr_coefficient(self) -> float:
        """``A`` in ``sigma(c_r) * c_r = A * c_r**(2 - 2*omega)``."""
        w = self.vhs_omega
        base = 2.0 * K_BOLTZMANN * self.vhs_temperature_ref / self.reduced_mass
        return math.pi * self.vhs_diameter_ref**2 * base ** (w - 0.5) / math.gamma(2.5 - w)

    def most_probable_speed(self, temperature: float) -> float:
        return math.sqrt(2.0 * K_BOLTZMANN * temperature / self.molecular_mass)


@dataclass(frozen=True)
class Inlet:
    """Disk on the bottom (z = lo) face injecting a drifting Maxwellian gas."""

    center: tuple[float, float, float]
    radius: float
    bulk_velocity: tuple[float, float, float]
    density: float
    temperature: float

    def number_density(self, gas: GasModel) -> float:
        return self.density / gas.molecular_mass

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True)
class DomainSpec:
    """Box with a specular wall on top; every other face is vacuum."""

    bounds: Box3
    inlet: Inlet

    def __post_init__(self):
        c = self.inlet.center
        b = self.bounds
        if c[2] != b.lo[2]:
            raise ValueError("inlet centre must lie on the bottom face")
        r = self.inlet.radius
        if c[0] - r < b.lo[0] or c[0] + r > b.hi[0] or c[1] - r < b.lo[1] or c[1] + r > b.hi[1]:
            raise ValueError("inlet disk must fit inside the bottom face")
        if self.inlet.bulk_velocity[2] < 0:
            raise ValueError("inlet bulk velocity must point into the domain")


# --------------------------------------------------------------------------
# free flight


def advect(positions, velocities, dt: float, bounds: Box3):
    """Move particles ballistically for ``dt`` (scalar or one value per particle).

    The top face reflects specularly; every other face removes particles that
    cross it. Arrays are updated in place.

    Returns
    -------
    inside : ndarray of bool
        False where the particle exited through a vacuum face.
    """
    x = positions
    v = velocities
    lo = np.asarray(bounds.lo)
    hi = np.asarray(bounds.hi)
    dt = np.asarray(dt, dtype=float)
    x += v * (dt[:, None] if dt.ndim == 1 else dt)
    # only z meets the wall, so x/y stay linear and at most one fold is possible
    # before the particle would have to leave through the bottom
    above = x[:, 2] > hi[2]
    if above.any():
        x[above, 2] = 2.0 * hi[2] - x[above, 2]
        v[above, 2] = -v[above, 2]
    inside = np.all(x[:, :2] >= lo[:2], axis=1) & np.all(x[:, :2] <= hi[:2], axis=1)
    inside &= x[:, 2] >= lo[2]
    return inside


def advect_particle(position, velocity, dt: float, bounds: Box3):
    """Single-particle :func:`advect`; returns ``(position, velocity)`` or ``None`` if exited."""
    x = np.array(position, dtype=float).reshape(1, 3)
    v = np.array(velocity, dtype=float).reshape(1, 3)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not advect(x, v, dt, bounds)[0]:
        return None
    return x[0], v[0]


# --------------------------------------------------------------------------
# sampling


def maxwellian_velocity(temperature: float, bulk, mass: float, rng, size=None) -> np.ndarray:
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if not mass > 0:
        raise ValueError("mass must be positive")
    sd = math.sqrt(K_BOLTZMANN * temperature / mass)
    shape = (3,) if size is None else (size, 3)
    bulk = np.asarray(bulk, dtype=float)
    if sd == 0:
        return np.broadcast_to(bulk, shape).copy()
    return rng.normal(bulk, sd, size=shape)


def flux_density(n: float, temperature: float, normal_speed: float, mass: float) -> float:
    """One-sided Maxwellian number flux (per m^2 per s) through a plane."""
    if n == 0:
        return 0.0
    c_mp = math.sqrt(2.0 * K_BOLTZMANN * temperature / mass)
    s = normal_speed / c_mp
    return n * c_mp * (math.exp(-s * s) + math.sqrt(math.pi) * s * (1.0 + math.erf(s))) / (
        2.0 * math.sqrt(math.pi)
    )


def inflow_count(inlet: Inlet, dt: float, gas: GasModel, density_scale: float = 1.0) -> float:
    """Expected number of simulated particles entering through the inlet in ``dt``."""
    if dt <= 0 or inlet.density <= 0 or density_scale <= 0:
        return 0.0
    n = density_scale * inlet.number_density(gas)
    phi = flux_density(n, inlet.temperature, inlet.bulk_velocity[2], gas.molecular_mass)
    return phi * inlet.area * dt / gas.fnum


def sample_flux_normal_speed(mean: float, sd: float, size: int, rng) -> np.ndarray:
    """Draw from ``f(u) ~ u exp(-(u - mean)^2 / 2 sd^2)`` on ``u > 0``.

    The envelope ``mean*N(mean, sd) + max(u - mean, 0)*N(mean, sd)`` is a
    mixture of a truncated normal and a shifted Rayleigh; samples below the
    mean are accepted with probability ``u / mean``.
    """
    out = np.empty(size)
    filled = 0
    # untruncated weight: negative normal draws are rejected after the component is picked
    w_norm = max(mean, 0.0)
    w_ray = sd / math.sqrt(2.0 * math.pi)
    p_norm = w_norm / (w_norm + w_ray)
    while filled < size:
        m = max(16, int(1.2 * (size - filled)))
        use_norm = rng.random(m) < p_norm
        u = np.where(
            use_norm,
            rng.normal(mean, sd, m),
            mean + sd * np.sqrt(-2.0 * np.log1p(-rng.random(m))),
        )
        ok = u > 0
        below = u < mean
        ok &= ~below | (rng.random(m) * mean < u)
        u = u[ok]
        take = min(len(u), size - filled)
        out[filled : filled + take] = u[:take]
        filled += take
    return out


def sample_inlet_positions(inlet: Inlet, count: int, rng) -> np.ndarray:
    r = inlet.radius * np.sqrt(rng.random(count))
    theta = 2.0 * math.pi * rng.random(count)
    pos = np.empty((count, 3))
    pos[:, 0] = inlet.center[0] + r * np.cos(theta)
    pos[:, 1] = inlet.center[1] + r * np.sin(theta)
    pos[:, 2] = inlet.center[2]
    return pos


def sample_inlet_velocities(inlet: Inlet, gas: GasModel, count: int, rng) -> np.ndarray:
    sd = math.sqrt(K_BOLTZMANN * inlet.temperature / gas.molecular_mass)
    bulk = inlet.bulk_velocity
    v = np.empty((count, 3))
    v[:, 0] = rng.normal(bulk[0], sd, count) if sd > 0 else bulk[0]
    v[:, 1] = rng.normal(bulk[1], sd, count) if sd > 0 else bulk[1]
    v[:, 2] = sample_flux_normal_speed(bulk[2], sd, count, rng) if sd > 0 else bulk[2]
    return v


def insert(positions, velocities, dt: float, bounds: Box3, rng):
    """Advance freshly created particles by a random fraction of ``dt``; drop any that exit."""
    positions = positions.copy()
    velocities = velocities.copy()
    keep = advect(positions, velocities, rng.random(len(positions)) * dt, bounds)
    return positions[keep], velocities[keep]


def create_inflow(inlet: Inlet, dt: float, gas: GasModel, rng, density_scale: float = 1.0,
                  bounds: Box3 | None = None):
    """Poisson number of inflow particles, already inserted into the domain."""
    expected = inflow_count(inlet, dt, gas, density_scale)
    count = int(rng.poisson(expected)) if expected > 0 else 0
    pos = sample_inlet_positions(inlet, count, rng)
    vel = sample_inlet_velocities(inlet, gas, count, rng)
    if bounds is None:
        return pos, vel
    return insert(pos, vel, dt, bounds, rng)


# --------------------------------------------------------------------------
# collisions


def vhs_cross_section(c_r: float, gas: GasModel) -> float:
    if not c_r > 0:
        raise ValueError("VHS cross-section is singular at zero relative speed")
    w = gas.vhs_omega
    ratio = 2.0 * K_BOLTZMANN * gas.vhs_temperature_ref / (gas.reduced_mass * c_r * c_r)
    return math.pi * gas.vhs_diameter_ref**2 * ratio ** (w - 0.5) / math.gamma(2.5 - w)


@numba.njit(cache=True, nogil=True)
def _scatter(v1, v2, u_cos, u_phi):
    """Isotropic elastic scatter of two like-mass particles (in place)."""
    vcm0 = 0.5 * (v1[0] + v2[0])
    vcm1 = 0.5 * (v1[1] + v2[1])
    vcm2 = 0.5 * (v1[2] + v2[2])
    d0 = v1[0] - v2[0]
    d1 = v1[1] - v2[1]
    d2 = v1[2] - v2[2]
    cr = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    if cr == 0.0:
        return
    cos_t = 2.0 * u_cos - 1.0
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u_phi
    h0 = 0.5 * cr * cos_t
    h1 = 0.5 * cr * sin_t * math.cos(phi)
    h2 = 0.5 * cr * sin_t * math.sin(phi)
    v1[0] = vcm0 + h0
    v1[1] = vcm1 + h1
    v1[2] = vcm2 + h2
    v2[0] = vcm0 - h0
    v2[1] = vcm1 - h1
    v2[2] = vcm2 - h2


def elastic_collision(v1, v2, rng):
    """Post-collision velocities; centre-of-mass velocity and ``|v1 - v2|`` are kept."""
    a = np.array(v1, dtype=float)
    b = np.array(v2, dtype=float)
    _scatter(a, b, rng.random(), rng.random())
    return a, b


@numba.njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << numba.uint64(k)) | (x >> numba.uint64(64 - k))


@numba.njit(cache=True, nogil=True, inline="always")
def _uniform(state):
    """xoshiro256** step; returns a double in [0, 1)."""
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    result = _rotl(s1 * numba.uint64(5), 7) * numba.uint64(9)
    t = s1 << numba.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return (result >> numba.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, nogil=True)
def _collide_cells(vel, order, starts, counts, sigma_cr_max, pair_factor, coeff, exponent, state):
    """NTC over every cell. ``state`` is a 4-word xoshiro256** state, advanced in place."""
    total_cand = 0
    total_coll = 0
    half_exp = 0.5 * exponent
    buf = np.empty((64, 3))
    for c in range(counts.shape[0]):
        n = counts[c]
        if n < 2:
            continue
        ncand = int(0.5 * n * (n - 1) * pair_factor * sigma_cr_max[c] + _uniform(state))
        if ncand == 0:
            continue
        total_cand += ncand
        if buf.shape[0] < n:
            buf = np.empty((2 * n, 3))
        base = starts[c]
        for q in range(n):
            p = order[base + q]
            buf[q, 0] = vel[p, 0]
            buf[q, 1] = vel[p, 1]
            buf[q, 2] = vel[p, 2]
        smax = sigma_cr_max[c]
        for _ in range(ncand):
            i = int(_uniform(state) * n)
            j = int(_uniform(state) * (n - 1))
            if j >= i:
                j += 1
            d0 = buf[i, 0] - buf[j, 0]
            d1 = buf[i, 1] - buf[j, 1]
            d2 = buf[i, 2] - buf[j, 2]
            cr2 = d0 * d0 + d1 * d1 + d2 * d2
            u_acc = _uniform(state)
            if cr2 == 0.0:
                continue
            scr = coeff * math.exp(half_exp * math.log(cr2))
            if scr > smax:
                smax = scr
            if u_acc * smax < scr:
                # Marsaglia: uniform direction without trig calls
                while True:
                    a1 = 2.0 * _uniform(state) - 1.0
                    a2 = 2.0 * _uniform(state) - 1.0
                    sq = a1 * a1 + a2 * a2
                    if sq < 1.0:
                        break
                half = 0.5 * math.sqrt(cr2)
                root = 2.0 * math.sqrt(1.0 - sq)
                h0 = half * (1.0 - 2.0 * sq)
                h1 = half * a1 * root
                h2 = half * a2 * root
                m0 = 0.5 * (buf[i, 0] + buf[j, 0])
                m1 = 0.5 * (buf[i, 1] + buf[j, 1])
                m2 = 0.5 * (buf[i, 2] + buf[j, 2])
                buf[i, 0] = m0 + h0
                buf[i, 1] = m1 + h1
                buf[i, 2] = m2 + h2
                buf[j, 0] = m0 - h0
                buf[j, 1] = m1 - h1
                buf[j, 2] = m2 - h2
                total_coll += 1
        sigma_cr_max[c] = smax
        for q in range(n):
            p = order[base + q]
            vel[p, 0] = buf[q, 0]
            vel[p, 1] = buf[q, 1]
            vel[p, 2] = buf[q, 2]
    return total_cand, total_coll


def _rng_state(rng) -> np.ndarray:
    """Fresh xoshiro256** state drawn from a numpy Generator."""
    state = rng.integers(0, 2**64, size=4, dtype=np.uint64)
    if not state.any():
        state[0] = 1
    return state


def expected_candidates(n: int, fnum: float, sigma_cr_max: float, dt: float, volume: float) -> float:
    return 0.5 * n * (n - 1) * fnum * sigma_cr_max * dt / volume


def collide_cell(velocities, dt: float, cell_volume: float, gas: GasModel, sigma_cr_max, rng):
    """NTC collisions among one cell's particles (velocities updated in place).

    ``sigma_cr_max`` is a length-1 array so the running maximum can be returned.
    Returns ``(candidates, collisions)``.
    """
    if dt <= 0 or cell_volume <= 0:
        raise ValueError("dt and cell_volume must be positive")
    n = len(velocities)
    return _collide_cells(
        velocities,
        np.arange(n, dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        np.array([n], dtype=np.int64),
        sigma_cr_max,
        gas.fnum * dt / cell_volume,
        gas.sigma_cr_coefficient(),
        2.0 - 2.0 * gas.vhs_omega,
        _rng_state(rng),
    )


class CollisionGrid:
    """Uniform collision cells over one rank's box, with a running ``sigma*c_r`` max per cell."""

    def __init__(self, box: Box3, target_cells: int, sigma_cr_init: float):
        self.box = box
        self.shape = grid_shape(box.lengths, max(1, int(target_cells)))
        self.n_cells = self.shape[0] * self.shape[1] * self.shape[2]
        self.spacing = box.lengths / np.asarray(self.shape)
        self.cell_volume = box.volume / self.n_cells
        self.sigma_cr_max = np.full(self.n_cells, float(sigma_cr_init))

    def sort(self, positions):
        """Return ``(order, starts, counts)`` grouping particle indices by cell."""
        lo = np.asarray(self.box.lo)
        idx = np.floor((positions - lo) / self.spacing).astype(np.int64)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        flat = np.ravel_multi_index(idx.T, self.shape) if len(positions) else np.zeros(0, np.int64)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_cells)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return order, starts, counts

    def collide(self, positions, velocities, dt: float, gas: GasModel, rng):
        order, starts, counts = self.sort(positions)
        return _collide_cells(
            velocities,
            order,
            starts,
            counts,
            self.sigma_cr_max,
            gas.fnum * dt / self.cell_volume,
            gas.sigma_cr_coefficient(),
            2.0 - 2.0 * gas.vhs_omega,
            _rng_state(rng),
        )
