from .search import (
    MctsConfig,
    SearchNode,
    SearchTree,
    StageResult,
    back_prop,
    best_child,
    expand,
    next_action,
    run_stage,
    seed_state,
    simulate,
    traverse,
    ucb1_score,
)
from .stage import PlacementStage, StageState, csmp_stage, icmp_stage

__all__ = [
    "MctsConfig", "SearchNode", "SearchTree", "StageResult", "PlacementStage", "StageState",
    "back_prop", "best_child", "expand", "next_action", "run_stage", "seed_state", "simulate",
    "traverse", "ucb1_score", "icmp_stage", "csmp_stage",
]
