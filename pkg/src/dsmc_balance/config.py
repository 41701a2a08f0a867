"""Experiment configuration: a flat ``key = value`` format with ``[section]`` headers.

Keys are unique across sections, so a key may also appear before any header.
Lines starting with ``#`` are comments. Vector values are comma separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .balance import STRATEGIES, BalanceSchedule, StrategyConfig
from .geometry import Box3
from .kernel import DomainSpec, GasModel, Inlet
from .rcb import is_power_of_two
from .runtime import SyntheticCostModel, make_world


class ConfigError(ValueError):
    pass


@dataclass
class DomainSection:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (0.8, 0.8, 0.8)


@dataclass
class GasSection:
    molecular_mass: float = 6.63e-26
    vhs_diameter: float = 4.17e-10
    vhs_temperature: float = 273.0
    vhs_omega: float = 0.81
    fnum: float = 7.0e16
    # effective fnum = fnum / ranks, so the simulated particle count grows with ranks
    weak_scaling: bool = False


@dataclass
class InletSection:
    center: tuple = (0.4, 0.4, 0.0)
    radius: float = 0.1
    velocity: tuple = (0.0, 0.0, 2900.0)
    density: float = 0.01
    temperature: float = 300.0
    ramp_steps: int = 50
    ramp_fraction: float = 0.01


@dataclass
class RunSection:
    ranks: int = 16
    dt: float = 7.0e-7
    steps: int = 1000
    seed: int = 1
    timer: str = "synthetic"
    workers: int = 1
    map_cells_per_rank: int = 1000
    collision_cells_per_rank: int = 500
    sigma_safety: float = 5.0


@dataclass
class BalanceSection:
    strategy: str = "tacf"
    damping: float = 0.5
    history: int = 1
    weight_floor: float = 0.0
    early_interval: int = 25
    early_until: int = 100
    late_interval: int = 50
    stop_at: int = 900
    particle_cap: int = 50_000


@dataclass
class SyntheticSection:
    a_move: float = 1.0
    a_pair: float = 4.0
    a_create: float = 2.0
    a_fixed: float = 0.0


@dataclass
class OutputSection:
    dir: str = "out"
    dump_costmaps: bool = False
    # "none", "final" or "rebalance" (one file per rebalance step plus the final window)
    rank_files: str = "final"
    summary_window: int = 50


SECTIONS = {
    "domain": DomainSection,
    "gas": GasSection,
    "inlet": InletSection,
    "run": RunSection,
    "balance": BalanceSection,
    "synthetic": SyntheticSection,
    "output": OutputSection,
}

KEY_SECTION = {f.name: name for name, cls in SECTIONS.items() for f in dataclasses.fields(cls)}


@dataclass
class ExperimentConfig:
    domain: DomainSection = field(default_factory=DomainSection)
    gas: GasSection = field(default_factory=GasSection)
    inlet: InletSection = field(default_factory=InletSection)
    run: RunSection = field(default_factory=RunSection)
    balance: BalanceSection = field(default_factory=BalanceSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`ConfigError` naming the first violated constraint."""
        try:
            self.bounds()
            self.domain_spec()
            self.gas_model()
            self.strategy()
            self.schedule()
            self.cost_model()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        r = self.run
        if not is_power_of_two(r.ranks):
            raise ConfigError(f"ranks must be a power of two, got {r.ranks}")
        if not r.dt > 0:
            raise ConfigError("dt must be positive")
        if r.steps < 0:
            raise ConfigError("steps must be non-negative")
        if r.timer not in ("synthetic", "wall"):
            raise ConfigError(f"timer must be 'synthetic' or 'wall', got {r.timer!r}")
        if r.workers < 1 or r.map_cells_per_rank < 1 or r.collision_cells_per_rank < 1:
            raise ConfigError("workers and cell counts must be positive")
        if self.balance.history < 1:
            raise ConfigError("history must be >= 1")
        if self.output.rank_files not in ("none", "final", "rebalance"):
            raise ConfigError("rank_files must be none, final or rebalance")
        if self.output.summary_window < 1:
            raise ConfigError("summary_window must be >= 1")
        if not 0 < self.inlet.ramp_fraction <= 1 or self.inlet.ramp_steps < 0:
            raise ConfigError("ramp_fraction must lie in (0, 1] and ramp_steps >= 0")
        return self

    def bounds(self) -> Box3:
        return Box3(self.domain.lo, self.domain.hi)

    def domain_spec(self) -> DomainSpec:
        i = self.inlet
        return DomainSpec(self.bounds(), Inlet(i.center, i.radius, i.velocity, i.density, i.temperature))

    def gas_model(self) -> GasModel:
        g = self.gas
        fnum = g.fnum / self.run.ranks if g.weak_scaling else g.fnum
        return GasModel(g.molecular_mass, g.vhs_diameter, g.vhs_temperature, g.vhs_omega, fnum)

    def strategy(self) -> StrategyConfig:
        b = self.balance
        if b.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {b.strategy!r}; expected one of {STRATEGIES}")
        damping = b.damping if b.strategy == "timer_damped" else None
        return StrategyConfig(b.strategy, damping, b.weight_floor if b.strategy == "tacf" else 0.0)

    def schedule(self) -> BalanceSchedule:
        b = self.balance
        return BalanceSchedule(b.early_interval, b.early_until, b.late_interval, b.stop_at, b.particle_cap)

    def cost_model(self) -> SyntheticCostModel | None:
        if self.run.timer == "wall":
            return None
        s = self.synthetic
        return SyntheticCostModel(s.a_move, s.a_pair, s.a_create, s.a_fixed)

    def build_world(self):
        r = self.run
        return make_world(self.domain_spec(), self.gas_model(), r.dt, r.ranks, r.seed,
                          self.cost_model(), r.map_cells_per_rank, r.collision_cells_per_rank,
                          r.sigma_safety, r.workers)

    def replace(self, **overrides) -> "ExperimentConfig":
        """Copy with ``key=value`` overrides (keys as in the file format)."""
        new = dataclasses.replace(self, **{s: dataclasses.replace(getattr(self, s)) for s in SECTIONS})
        for key, value in overrides.items():
            if key not in KEY_SECTION:
                raise ConfigError(f"unknown key {key!r}")
            setattr(getattr(new, KEY_SECTION[key]), key, value)
        return new.validate()


def _convert(raw: str, default, key: str, lineno: int):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            try:
                return int(raw)
            except ValueError:
                pass
            # scientific notation such as 4e6
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = tuple(float(p) for p in raw.split(","))
            if len(parts) != len(default):
                raise ValueError(raw)
            return parts
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in SECTIONS:
                raise ConfigError(f"line {lineno}: bad section header {line!r}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        home = KEY_SECTION.get(key)
        if home is None or (section is not None and home != section):
            where = f"section [{section}]" if section else "config"
            raise ConfigError(f"line {lineno}: unknown key {key!r} in {where}")
        target = getattr(cfg, home)
        setattr(target, key, _convert(value, getattr(type(target)(), key), key, lineno))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        section = getattr(cfg, name)
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def scenario_path(name: str) -> Path:
    """Path of a shipped scenario file such as ``desk_jet.cfg`` (extension optional)."""
    if not name.endswith(".cfg"):
        name += ".cfg"
    return Path(__file__).parent / "scenarios" / name
