"""Array encoding of the two mapping stages as sequential placement problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import EPS, AppRequest, ClusterState, IcmpAssignment
from . import kernels as K


@dataclass
class StageState:
    """Partial assignment: ``assign[item]`` is a target index or -1."""

    assign: np.ndarray
    load: np.ndarray
    count: np.ndarray

    def copy(self) -> "StageState":
        return StageState(self.assign.copy(), self.load.copy(), self.count.copy())

    @property
    def placed(self) -> int:
        return int(np.count_nonzero(self.assign >= 0))


@dataclass(frozen=True, eq=False)
class PlacementStage:
    """A mapping stage: items placed one at a time onto capacity-bounded targets.

    ``items``/``targets`` hold the external ids (instance, container or server
    ids) that the array positions stand for.
    """

    name: str
    items: tuple[int, ...]
    targets: tuple[int, ...]
    demand: np.ndarray
    capacity: np.ndarray
    traffic: np.ndarray
    distance: np.ndarray
    traffic_weight: float = 1.0
    util_weight: float = 0.0
    eps: float = EPS
    adjacency: np.ndarray = field(init=False, repr=False)
    coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, m = len(self.items), len(self.targets)
        kdim = self.demand.shape[1] if self.demand.ndim == 2 and self.demand.shape[1] else (
            self.capacity.shape[1] if self.capacity.ndim == 2 else 1)
        set_ = object.__setattr__
        set_(self, "demand", np.ascontiguousarray(np.asarray(self.demand, float).reshape(n, kdim)))
        set_(self, "capacity", np.ascontiguousarray(np.asarray(self.capacity, float).reshape(m, kdim)))
        set_(self, "traffic", np.ascontiguousarray(np.asarray(self.traffic, float).reshape(n, n)))
        set_(self, "distance", np.ascontiguousarray(np.asarray(self.distance, float).reshape(m, m)))
        set_(self, "adjacency", self.traffic + self.traffic.T)
        set_(self, "coef", np.array([self.traffic_weight, self.util_weight], dtype=float))

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def prior_cost(self) -> float:
        """Upper bound on any leaf cost, used as the prior for biased nodes."""
        dmax = float(self.distance.max()) if self.distance.size else 0.0
        return self.traffic_weight * float(self.traffic.sum()) * dmax + self.util_weight * self.n_targets

    # -- sequential-decision interface

    def initial_state(self) -> StageState:
        return StageState(np.full(self.n_items, -1, dtype=np.int64),
                          np.zeros_like(self.capacity), np.zeros(self.n_targets, dtype=np.int64))

    def feasible_actions(self, state: StageState) -> list[tuple[int, int]]:
        """(item, target) index pairs that respect capacities, in index order."""
        return [(i, t) for i in range(self.n_items) if state.assign[i] < 0
                for t in range(self.n_targets)
                if K.fits(state.load, self.capacity, self.demand, t, i, self.eps)]

    def apply(self, state: StageState, action: tuple[int, int]) -> StageState:
        i, t = action
        if state.assign[i] >= 0:
            raise ValueError(f"item {i} already placed")
        if not K.fits(state.load, self.capacity, self.demand, t, i, self.eps):
            raise ValueError(f"action {action} violates capacity")
        nxt = state.copy()
        K.apply_action(nxt.assign, nxt.load, nxt.count, self.demand, i, t)
        return nxt

    def is_leaf(self, state: StageState) -> bool:
        return state.placed == self.n_items

    def satisfies_constraints(self, state: StageState) -> bool:
        return self.is_leaf(state) and bool(np.all(state.load <= self.capacity + self.eps))

    def reward(self, state: StageState) -> float:
        return float(K.objective(state.assign, state.count, self.traffic, self.distance, self.coef))

    def delta(self, state: StageState, action: tuple[int, int]) -> float:
        i, t = action
        return float(K.placement_delta(state.assign, state.count, self.traffic, self.distance, self.coef, i, t))

    def greedy_action(self, state: StageState, item: int) -> tuple[int, int] | None:
        t = K.greedy_target(state.assign, state.load, state.count, self.demand, self.capacity,
                            self.traffic, self.distance, self.coef, self.eps, item)
        return None if t < 0 else (item, int(t))

    def to_mapping(self, state: StageState) -> dict[int, int]:
        return {self.items[i]: self.targets[int(t)] for i, t in enumerate(state.assign) if t >= 0}


def icmp_stage(req: AppRequest, alpha: float) -> PlacementStage:
    """Instances onto containers, cost alpha*T + (1-alpha)*U."""
    m = len(req.containers)
    return PlacementStage(
        "icmp",
        items=tuple(i.id for i in req.instances),
        targets=tuple(c.id for c in req.containers),
        demand=req.demand_matrix(),
        capacity=np.array([c.capacity for c in req.containers], dtype=float).reshape(m, req.k),
        traffic=req.traffic_matrix(),
        distance=1.0 - np.eye(m),
        traffic_weight=float(alpha),
        util_weight=1.0 - float(alpha),
    )


def csmp_stage(state: ClusterState, req: AppRequest, icmp: IcmpAssignment) -> PlacementStage:
    """Non-empty containers onto servers, cost sum of hop cost times container traffic."""
    from ..objectives import container_traffic_matrix

    used = icmp.used_containers()
    traffic = container_traffic_matrix(req, icmp)[np.ix_(used, used)] if used else np.zeros((0, 0))
    return PlacementStage(
        "csmp",
        items=tuple(used),
        targets=tuple(s.id for s in state.servers),
        demand=np.array([req.containers[c].capacity for c in used], dtype=float).reshape(len(used), state.k),
        capacity=state.free_matrix(),
        traffic=traffic,
        distance=state.hop_cost,
        traffic_weight=1.0,
        util_weight=0.0,
    )
