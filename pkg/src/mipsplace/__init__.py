"""Two-stage Monte Carlo tree search placement of streaming applications.

Stage 1 packs the instances of one application request into containers;
stage 2 maps the non-empty containers onto cluster servers.
"""

from .errors import ConfigError, ContractError, MipsError, OracleRefused, PlacementError, TopologyError
from .harness import SchemePair, process_request, run_experiment, run_stream, sweep
from .mcts import MctsConfig, run_stage
from .model import AppRequest, ClusterState, CsmpAssignment, IcmpAssignment, build_request, commit
from .objectives import ObjectiveConfig, csmp_objective, icmp_objective
from .topology import ClusterConfig, build_cluster
from .workload import WorkloadConfig, generate_request, generate_stream

__version__ = "0.1.0"

__all__ = [
    "AppRequest", "ClusterConfig", "ClusterState", "ConfigError", "ContractError", "CsmpAssignment",
    "IcmpAssignment", "MctsConfig", "MipsError", "ObjectiveConfig", "OracleRefused", "PlacementError",
    "SchemePair", "TopologyError", "WorkloadConfig", "build_cluster", "build_request", "commit",
    "csmp_objective", "generate_request", "generate_stream", "icmp_objective", "process_request",
    "run_experiment", "run_stage", "run_stream", "sweep",
]
