"""Two-tier (container + VM) reactive autoscaling engine and cluster simulator."""

from .cluster import ClusterSim, ContainerType, VmFlavor, place_container
from .engine import Engine, UtilizationWindow
from .model import (
    CyclicDependency,
    Direction,
    InvalidPolicy,
    MacroPolicy,
    Reason,
    ReplicationSpec,
    ScalingDecision,
    ServicePolicy,
    Tier,
    UnknownReference,
    UtilizationVector,
    Weights,
    validate_topology,
)
from .policy import ScoreInputs, decide_macro, decide_micro, score
from .report import run_scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "ClusterSim", "ContainerType", "VmFlavor", "place_container",
    "Engine", "UtilizationWindow",
    "CyclicDependency", "Direction", "InvalidPolicy", "MacroPolicy", "Reason",
    "ReplicationSpec", "ScalingDecision", "ServicePolicy", "Tier", "UnknownReference",
    "UtilizationVector", "Weights", "validate_topology",
    "ScoreInputs", "decide_macro", "decide_micro", "score",
    "run_scenario", "simulate",
]
