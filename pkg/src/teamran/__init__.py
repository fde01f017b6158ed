"""Multi-cell downlink simulator with cooperating DQN xAPPs.

Two resource-allocation agents (transmit power and radio-resource-group
scheduling) are trained with deep Q-learning either independently or as a
team that exchanges intended actions before committing.
"""

from .environment import (
    Environment,
    MobilityParams,
    NetworkTopology,
    RandomStreams,
    SlotOutcome,
    UserBuffer,
)
from .experiment import (
    RunMetrics,
    Scenario,
    convergence_stats,
    desk_scale_scenario,
    run_scenario,
    sweep,
)
from .phy import Allocation, SimParams
from .rl import (
    DqnAgent,
    Experience,
    QNetwork,
    ReplayMemory,
    TrainConfig,
    TrainingDiverged,
)
from .xapps import FeatureScales, SlotRunner, power_ladder

__all__ = [
    "Allocation",
    "DqnAgent",
    "Environment",
    "Experience",
    "FeatureScales",
    "MobilityParams",
    "NetworkTopology",
    "QNetwork",
    "RandomStreams",
    "ReplayMemory",
    "RunMetrics",
    "Scenario",
    "SimParams",
    "SlotOutcome",
    "SlotRunner",
    "TrainConfig",
    "TrainingDiverged",
    "UserBuffer",
    "convergence_stats",
    "desk_scale_scenario",
    "power_ladder",
    "run_scenario",
    "sweep",
]

__version__ = "0.1.0"
