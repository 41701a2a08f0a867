"""Load-balanced 3D DSMC with particle, processor-timer and timer-augmented cost maps."""

from .balance import (
    BalanceSchedule,
    RankTiming,
    StrategyConfig,
    imbalance_metrics,
    should_rebalance,
    tacf_weight,
)
from .config import ExperimentConfig, load_config, parse_config, scenario_path, serialize_config
from .costmap import CostMap, deposit, deposit_many, find_cut, integrate, new_cost_map
from .geometry import Box3
from .kernel import DomainSpec, GasModel, Inlet
from .rcb import CutTree, owner_of, rcb_partition, subdomain_of
from .runtime import SyntheticCostModel, World, make_world, rebalance, run, step

__version__ = "0.1.0"
