"""Stage costs: cross-container traffic, container utilisation, inter-server cost.

These are straightforward evaluations over the model types. They are kept
separate from the array kernels so tests can use one to check the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OracleRefused
from .model import (
    EPS,
    AppRequest,
    ClusterState,
    CsmpAssignment,
    IcmpAssignment,
    leq,
    vsum,
)

DEFAULT_ORACLE_CAP = 10**7


@dataclass(frozen=True)
class ObjectiveConfig:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def container_pair_traffic(req: AppRequest, icmp: IcmpAssignment, c1: int, c2: int) -> float:
    """Directed traffic from instances in ``c1`` to instances in ``c2``."""
    if c1 == c2:
        raise ValueError("container pair traffic needs two distinct containers")
    place = icmp.placement
    return sum(rate for i1, i2, rate in req.links if place.get(i1) == c1 and place.get(i2) == c2)


def container_traffic_matrix(req: AppRequest, icmp: IcmpAssignment) -> np.ndarray:
    """``T[c, c']`` for all ordered container pairs; the diagonal is zero."""
    m = len(req.containers)
    T = np.zeros((m, m))
    place = icmp.placement
    for i1, i2, rate in req.links:
        c1, c2 = place.get(i1), place.get(i2)
        if c1 is not None and c2 is not None and c1 != c2:
            T[c1, c2] += rate
    return T


def cross_container_traffic(req: AppRequest, icmp: IcmpAssignment) -> float:
    place = icmp.placement
    total = 0.0
    for i1, i2, rate in req.links:
        c1, c2 = place.get(i1), place.get(i2)
        if c1 is not None and c2 is not None and c1 != c2:
            total += rate
    return total


def container_utilization(req: AppRequest, icmp: IcmpAssignment) -> int:
    return len(set(icmp.placement.values()))


def icmp_objective(req: AppRequest, icmp: IcmpAssignment, cfg: ObjectiveConfig) -> float:
    return cfg.alpha * cross_container_traffic(req, icmp) + (1.0 - cfg.alpha) * container_utilization(req, icmp)


def csmp_pair_cost(state: ClusterState, req: AppRequest, icmp: IcmpAssignment, csmp: CsmpAssignment,
                   s1: int, s2: int, traffic: np.ndarray | None = None) -> float:
    T = container_traffic_matrix(req, icmp) if traffic is None else traffic
    theta = state.hop_cost[s1, s2]
    if theta == 0:
        return 0.0
    on1 = [c for c, s in csmp.placement.items() if s == s1]
    on2 = [c for c, s in csmp.placement.items() if s == s2]
    return float(theta * sum(T[c, c2] for c in on1 for c2 in on2))


def csmp_objective(state: ClusterState, req: AppRequest, icmp: IcmpAssignment, csmp: CsmpAssignment,
                   traffic: np.ndarray | None = None) -> float:
    T = container_traffic_matrix(req, icmp) if traffic is None else traffic
    total = 0.0
    for c, s in csmp.placement.items():
        for c2, s2 in csmp.placement.items():
            if T[c, c2]:
                total += state.hop_cost[s, s2] * T[c, c2]
    return float(total)


def _container_load(req: AppRequest, placement, c: int) -> tuple[float, ...]:
    return vsum((req.instances[i].demand for i, cc in placement.items() if cc == c), req.k)


def icmp_delta(req: AppRequest, partial: IcmpAssignment, i: int, c: int, cfg: ObjectiveConfig) -> float:
    """Change of the stage-1 cost when unmapped instance ``i`` joins container ``c``.

    The cost part only touches the streams incident to ``i``.
    """
    place = partial.placement
    if i in place:
        raise ValueError(f"instance {i} is already mapped")
    if not 0 <= c < len(req.containers):
        raise ValueError(f"unknown container {c}")
    load = _container_load(req, place, c)
    need = tuple(x + y for x, y in zip(load, req.instances[i].demand))
    if not leq(need, req.containers[c].capacity):
        raise ValueError(f"instance {i} does not fit container {c}")
    added = sum(rate for j, rate in req.neighbours[i] if j in place and place[j] != c)
    opens = 0 if c in place.values() else 1
    return cfg.alpha * added + (1.0 - cfg.alpha) * opens


def csmp_delta(state: ClusterState, req: AppRequest, icmp: IcmpAssignment, partial: CsmpAssignment,
               c: int, s: int, traffic: np.ndarray | None = None) -> float:
    """Change of the stage-2 cost when container ``c`` is put on server ``s``."""
    place = partial.placement
    if c in place:
        raise ValueError(f"container {c} is already mapped")
    if not 0 <= s < len(state.servers):
        raise ValueError(f"unknown server {s}")
    loads = [state.committed.get(s, [])] + [[req.containers[x].capacity for x, sx in place.items() if sx == s]]
    used = vsum([v for group in loads for v in group], state.k)
    need = tuple(x + y for x, y in zip(used, req.containers[c].capacity))
    if not leq(need, state.servers[s].capacity):
        raise ValueError(f"container {c} does not fit server {s}")
    T = container_traffic_matrix(req, icmp) if traffic is None else traffic
    theta = state.hop_cost
    return float(sum(T[c, c2] * theta[s, s2] + T[c2, c] * theta[s2, s] for c2, s2 in place.items()))


def brute_force_icmp(req: AppRequest, cfg: ObjectiveConfig, cap: int = DEFAULT_ORACLE_CAP):
    """Exhaustive stage-1 optimum: ``(IcmpAssignment, value)``.

    Enumerates in lexicographic order of the container tuple, so ties go to
    the lexicographically smallest placement.
    """
    n, m = len(req.instances), len(req.containers)
    if n and m ** n > cap:
        raise OracleRefused(f"{m}^{n} assignments exceed the cap {cap}")
    demands = [inst.demand for inst in req.instances]
    caps = [c.capacity for c in req.containers]
    kdim = req.k
    loads = [[0.0] * kdim for _ in range(m)]
    choice = [0] * n
    best = [math.inf, None]

    def dfs(i):
        if i == n:
            a = IcmpAssignment(req.id, dict(enumerate(choice)))
            val = icmp_objective(req, a, cfg)
            if val < best[0] - EPS:
                best[0], best[1] = val, a
            return
        d = demands[i]
        for c in range(m):
            if all(loads[c][k] + d[k] <= caps[c][k] + EPS for k in range(kdim)):
                for k in range(kdim):
                    loads[c][k] += d[k]
                choice[i] = c
                dfs(i + 1)
                for k in range(kdim):
                    loads[c][k] -= d[k]

    dfs(0)
    if best[1] is None:
        return None, math.inf
    return best[1], best[0]


def brute_force_csmp(state: ClusterState, req: AppRequest, icmp: IcmpAssignment,
                     cap: int = DEFAULT_ORACLE_CAP):
    """Exhaustive stage-2 optimum over the non-empty containers: ``(CsmpAssignment, value)``."""
    used = icmp.used_containers()
    ns = len(state.servers)
    if used and ns ** len(used) > cap:
        raise OracleRefused(f"{ns}^{len(used)} assignments exceed the cap {cap}")
    T = container_traffic_matrix(req, icmp)
    free = [list(state.free_of(s.id)) for s in state.servers]
    kdim = state.k
    choice = {}
    best = [math.inf, None]

    def dfs(x):
        if x == len(used):
            a = CsmpAssignment(req.id, dict(choice))
            val = csmp_objective(state, req, icmp, a, traffic=T)
            if val < best[0] - EPS:
                best[0], best[1] = val, a
            return
        c = used[x]
        d = req.containers[c].capacity
        for s in range(ns):
            if all(d[k] <= free[s][k] + EPS for k in range(kdim)):
                for k in range(kdim):
                    free[s][k] -= d[k]
                choice[c] = s
                dfs(x + 1)
                del choice[c]
                for k in range(kdim):
                    free[s][k] += d[k]

    dfs(0)
    if best[1] is None:
        return None, math.inf
    return best[1], best[0]
