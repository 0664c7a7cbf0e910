"""Comparison schemes: FFD, R-Heron and T-Heron for stage 1, best-fit for stage 2."""

from __future__ import annotations

import math
from collections import deque

from .errors import PlacementError
from .model import EPS, AppRequest, ClusterState, CsmpAssignment, IcmpAssignment


class _Containers:
    """Remaining capacity per container while a request is being packed."""

    def __init__(self, req: AppRequest):
        self.req = req
        self.free = [list(c.capacity) for c in req.containers]
        self.placement: dict[int, int] = {}

    def fits(self, i: int, c: int) -> bool:
        d = self.req.instances[i].demand
        return all(d[k] <= self.free[c][k] + EPS for k in range(len(d)))

    def put(self, i: int, c: int):
        d = self.req.instances[i].demand
        for k in range(len(d)):
            self.free[c][k] -= d[k]
        self.placement[i] = c

    def added_traffic(self, i: int, c: int) -> float:
        return sum(rate for j, rate in self.req.neighbours[i]
                   if j in self.placement and self.placement[j] != c)

    def fail(self, i: int, scheme: str):
        raise PlacementError(f"{scheme}: no container can host instance {i}", self.placement, stage="icmp")


def ffd_icmp(req: AppRequest) -> IcmpAssignment:
    """First fit over active containers sorted by descending free resources.

    Free vectors are ordered lexicographically (then by container id); an
    unused container is activated only when no active one fits.
    """
    box = _Containers(req)
    active: list[int] = []
    next_unused = 0
    for inst in req.instances:
        order = sorted(active, key=lambda c: (tuple(-x for x in box.free[c]), c))
        target = next((c for c in order if box.fits(inst.id, c)), None)
        if target is None:
            if next_unused >= len(req.containers) or not box.fits(inst.id, next_unused):
                box.fail(inst.id, "ffd")
            target = next_unused
            active.append(target)
            next_unused += 1
        box.put(inst.id, target)
    return IcmpAssignment(req.id, box.placement)


def sink_first_order(req: AppRequest) -> list[int]:
    """Breadth-first component order over reversed streams, rooted at a virtual
    node that precedes every sink."""
    n = len(req.components)
    preds = [[] for _ in range(n)]
    has_out = [False] * n
    for e in req.edges:
        preds[e.dst].append(e.src)
        has_out[e.src] = True
    sinks = [v for v in range(n) if not has_out[v]]
    seen = set(sinks)
    queue = deque(sinks)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for u in sorted(preds[v]):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return order


def r_heron_icmp(req: AppRequest) -> IcmpAssignment:
    """Resource-aware placement: per instance, minimise added cross-container
    traffic plus the Euclidean distance between demand and free capacity."""
    box = _Containers(req)
    for v in sink_first_order(req):
        for i in req.instances_of[v]:
            d = req.instances[i].demand
            best, best_score = None, math.inf
            for c in range(len(req.containers)):
                if not box.fits(i, c):
                    continue
                dist = math.sqrt(sum((x - y) ** 2 for x, y in zip(d, box.free[c])))
                score = box.added_traffic(i, c) + dist
                if score < best_score:
                    best, best_score = c, score
            if best is None:
                box.fail(i, "r-heron")
            box.put(i, best)
    return IcmpAssignment(req.id, box.placement)


def incident_rate(req: AppRequest, i: int) -> float:
    return sum(rate for _, rate in req.neighbours[i])


def t_heron_icmp(req: AppRequest) -> IcmpAssignment:
    """Traffic-aware greedy: heaviest instances first, each to the feasible
    container adding the least cross-container traffic."""
    box = _Containers(req)
    order = sorted(range(len(req.instances)), key=lambda i: (-incident_rate(req, i), i))
    for i in order:
        best, best_add = None, math.inf
        for c in range(len(req.containers)):
            if box.fits(i, c):
                add = box.added_traffic(i, c)
                if add < best_add:
                    best, best_add = c, add
        if best is None:
            box.fail(i, "t-heron")
        box.put(i, best)
    return IcmpAssignment(req.id, box.placement)


def best_fit_csmp(state: ClusterState, req: AppRequest, icmp: IcmpAssignment) -> CsmpAssignment:
    """Each non-empty container, in id order, to the feasible server with the
    smallest residual free vector (Euclidean norm) after placement."""
    free = [list(state.free_of(s.id)) for s in state.servers]
    placement = {}
    for c in icmp.used_containers():
        cap = req.containers[c].capacity
        best, best_norm = None, math.inf
        for s, f in enumerate(free):
            if all(cap[k] <= f[k] + EPS for k in range(len(cap))):
                norm = math.sqrt(sum((f[k] - cap[k]) ** 2 for k in range(len(cap))))
                if norm < best_norm:
                    best, best_norm = s, norm
        if best is None:
            raise PlacementError(f"best-fit: no server can host container {c}", placement, stage="csmp")
        for k in range(len(cap)):
            free[best][k] -= cap[k]
        placement[c] = best
    return CsmpAssignment(req.id, placement)


STAGE1 = {"ffd": ffd_icmp, "r-heron": r_heron_icmp, "t-heron": t_heron_icmp}
STAGE2 = {"best-fit": best_fit_csmp}
