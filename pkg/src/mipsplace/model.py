"""Domain types for clusters, streaming applications and placement decisions."""

from __future__ import annotations

import copy
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError

# Absolute tolerance for all resource comparisons.
EPS = 1e-9
DEFAULT_K = 2  # CPU cores, memory GB


def as_vector(values: Iterable[float], positive: bool = False) -> tuple[float, ...]:
    vec = tuple(float(v) for v in values)
    if not vec:
        raise ValueError("resource vector must have at least one entry")
    for v in vec:
        if not np.isfinite(v) or v < 0 or (positive and v <= 0):
            raise ValueError(f"invalid resource vector {vec}")
    return vec


def leq(a: Sequence[float], b: Sequence[float], tol: float = EPS) -> bool:
    """Componentwise partial order a <= b."""
    if len(a) != len(b):
        raise ValueError("resource vectors of different dimension")
    return all(x <= y + tol for x, y in zip(a, b))


def vsum(vectors: Iterable[Sequence[float]], k: int) -> tuple[float, ...]:
    acc = [0.0] * k
    for vec in vectors:
        for j, x in enumerate(vec):
            acc[j] += x
    return tuple(acc)


def vsub(a: Sequence[float], b: Sequence[float]) -> tuple[float, ...]:
    return tuple(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class Server:
    id: int
    capacity: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacity", as_vector(self.capacity, positive=True))


@dataclass(frozen=True)
class Component:
    id: int
    parallelism: int

    def __post_init__(self):
        if int(self.parallelism) != self.parallelism or self.parallelism < 1:
            raise ValueError(f"component {self.id}: parallelism must be a positive integer")


@dataclass(frozen=True)
class StreamEdge:
    src: int
    dst: int
    rate: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("self-loop stream")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"invalid stream rate {self.rate}")


@dataclass(frozen=True)
class Instance:
    id: int
    component: int
    demand: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "demand", as_vector(self.demand))


@dataclass(frozen=True)
class Container:
    id: int
    capacity: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacity", as_vector(self.capacity, positive=True))


@dataclass(frozen=True)
class AppRequest:
    """One streaming application: component DAG, instances and its container budget.

    Ids of components, instances and containers are their positions in the
    respective sequences.
    """

    id: int
    components: tuple[Component, ...]
    edges: tuple[StreamEdge, ...]
    instances: tuple[Instance, ...]
    containers: tuple[Container, ...]

    def __post_init__(self):
        for name in ("components", "edges", "instances", "containers"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for seq, label in ((self.components, "component"), (self.instances, "instance"),
                           (self.containers, "container")):
            for pos, item in enumerate(seq):
                if item.id != pos:
                    raise ValueError(f"{label} ids must be 0..n-1 in order")
        n_comp = len(self.components)
        seen = set()
        for e in self.edges:
            if not (0 <= e.src < n_comp and 0 <= e.dst < n_comp):
                raise ValueError(f"edge {e} references unknown component")
            if (e.src, e.dst) in seen:
                raise ValueError(f"duplicate edge {e.src}->{e.dst}")
            seen.add((e.src, e.dst))
        for inst in self.instances:
            if not 0 <= inst.component < n_comp:
                raise ValueError(f"instance {inst.id} references unknown component")
        counts = [0] * n_comp
        for inst in self.instances:
            counts[inst.component] += 1
        for comp in self.components:
            if counts[comp.id] != comp.parallelism:
                raise ValueError(f"component {comp.id} has {counts[comp.id]} instances, "
                                 f"parallelism {comp.parallelism}")
        dims = {len(i.demand) for i in self.instances} | {len(c.capacity) for c in self.containers}
        if len(dims) > 1:
            raise ValueError("mixed resource dimensions in request")
        if topological_order(n_comp, [(e.src, e.dst) for e in self.edges]) is None:
            raise ValueError("stream graph has a cycle")

    @property
    def k(self) -> int:
        if self.instances:
            return len(self.instances[0].demand)
        if self.containers:
            return len(self.containers[0].capacity)
        return DEFAULT_K

    @cached_property
    def edge_rate(self) -> dict[tuple[int, int], float]:
        return {(e.src, e.dst): float(e.rate) for e in self.edges}

    @cached_property
    def instances_of(self) -> dict[int, tuple[int, ...]]:
        groups = defaultdict(list)
        for inst in self.instances:
            groups[inst.component].append(inst.id)
        return {c.id: tuple(groups[c.id]) for c in self.components}

    @cached_property
    def links(self) -> tuple[tuple[int, int, float], ...]:
        """Directed instance-level streams (i1, i2, rate) with nonzero rate."""
        out = []
        for e in self.edges:
            p = self.components[e.src].parallelism * self.components[e.dst].parallelism
            rate = e.rate / p
            if rate == 0:
                continue
            for i1 in self.instances_of[e.src]:
                for i2 in self.instances_of[e.dst]:
                    out.append((i1, i2, rate))
        return tuple(out)

    @cached_property
    def neighbours(self) -> tuple[tuple[tuple[int, float], ...], ...]:
        """Per instance: (other instance, rate) for streams in either direction."""
        adj = [[] for _ in self.instances]
        for i1, i2, rate in self.links:
            adj[i1].append((i2, rate))
            adj[i2].append((i1, rate))
        return tuple(tuple(a) for a in adj)

    def traffic_matrix(self) -> np.ndarray:
        n = len(self.instances)
        w = np.zeros((n, n))
        for i1, i2, rate in self.links:
            w[i1, i2] = rate
        return w

    def demand_matrix(self) -> np.ndarray:
        return np.array([i.demand for i in self.instances], dtype=float).reshape(len(self.instances), self.k)

    @property
    def total_rate(self) -> float:
        return float(sum(e.rate for e in self.edges))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


FEASIBLE = Verdict(True)


@dataclass(frozen=True)
class IcmpAssignment:
    request_id: int
    placement: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "placement", dict(self.placement))

    def used_containers(self) -> list[int]:
        return sorted(set(self.placement.values()))

    def members(self) -> dict[int, list[int]]:
        groups = defaultdict(list)
        for i, c in sorted(self.placement.items()):
            groups[c].append(i)
        return dict(groups)


@dataclass(frozen=True)
class CsmpAssignment:
    request_id: int
    placement: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "placement", dict(self.placement))


@dataclass
class ClusterState:
    """Servers, hop-cost matrix and the container capacities committed so far."""

    servers: tuple[Server, ...]
    hop_cost: np.ndarray
    committed: dict[int, list[tuple[float, ...]]] = field(default_factory=dict)
    topology: dict | None = None

    def __post_init__(self):
        self.servers = tuple(self.servers)
        for pos, s in enumerate(self.servers):
            if s.id != pos:
                raise ValueError("server ids must be 0..n-1 in order")
        self.hop_cost = np.asarray(self.hop_cost, dtype=float)
        n = len(self.servers)
        if self.hop_cost.shape != (n, n):
            raise ValueError(f"hop_cost must be {n}x{n}")
        if n and (np.any(np.diag(self.hop_cost) != 0) or not np.array_equal(self.hop_cost, self.hop_cost.T)
                  or np.any(self.hop_cost < 0)):
            raise ValueError("hop_cost must be symmetric, nonnegative with zero diagonal")
        self.committed = {int(s): [as_vector(c) for c in caps] for s, caps in self.committed.items()}
        for s, caps in self.committed.items():
            if not 0 <= s < n:
                raise ValueError(f"committed containers on unknown server {s}")
            if not leq(vsum(caps, self.k), self.servers[s].capacity):
                raise ValueError(f"server {s} is over-committed")

    @property
    def k(self) -> int:
        return len(self.servers[0].capacity) if self.servers else DEFAULT_K

    @property
    def free(self) -> dict[int, tuple[float, ...]]:
        return {s.id: self.free_of(s.id) for s in self.servers}

    def free_of(self, server: int) -> tuple[float, ...]:
        used = vsum(self.committed.get(server, ()), self.k)
        return tuple(max(0.0, x) for x in vsub(self.servers[server].capacity, used))

    def free_matrix(self) -> np.ndarray:
        return np.array([self.free_of(s.id) for s in self.servers], dtype=float).reshape(len(self.servers), self.k)

    def copy(self) -> "ClusterState":
        return ClusterState(self.servers, self.hop_cost.copy(), copy.deepcopy(self.committed), self.topology)


def topological_order(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    """Kahn's algorithm; ``None`` when the graph has a cycle."""
    indeg = [0] * n
    succ = defaultdict(list)
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    queue = deque(v for v in range(n) if indeg[v] == 0)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for u in succ[v]:
            indeg[u] -= 1
            if indeg[u] == 0:
                queue.append(u)
    return order if len(order) == n else None


def build_request(request_id: int, parallelism: Sequence[int], demands: Sequence[Sequence[float]],
                  edges: Iterable[tuple[int, int, float]], n_containers: int,
                  container_capacity: Sequence[float]) -> AppRequest:
    """Expand per-component parallelism and demand into instances (component-major ids)."""
    components = [Component(v, int(p)) for v, p in enumerate(parallelism)]
    instances = []
    for v, p in enumerate(parallelism):
        for _ in range(int(p)):
            instances.append(Instance(len(instances), v, demands[v]))
    containers = [Container(c, container_capacity) for c in range(n_containers)]
    return AppRequest(request_id, components, [StreamEdge(a, b, r) for a, b, r in edges],
                      instances, containers)


def validate_request(req: AppRequest) -> Verdict:
    """Intake check: identical container capacities, no instance larger than a container."""
    caps = {c.capacity for c in req.containers}
    if len(caps) > 1:
        return Verdict(False, "heterogeneous-containers", "containers of one request must be identical")
    if req.instances and not req.containers:
        return Verdict(False, "no-containers", "request has instances but no containers")
    for inst in req.instances:
        for c in req.containers:
            if not leq(inst.demand, c.capacity):
                return Verdict(False, "oversized-instance",
                               f"instance {inst.id} demand {inst.demand} exceeds container {c.id}")
    return FEASIBLE


def instance_traffic_rate(req: AppRequest, i1: int, i2: int) -> float:
    """Directed rate from instance i1 to i2 under even splitting across instances."""
    n = len(req.instances)
    if not (0 <= i1 < n and 0 <= i2 < n):
        raise ValueError(f"unknown instance id ({i1}, {i2})")
    v1, v2 = req.instances[i1].component, req.instances[i2].component
    rate = req.edge_rate.get((v1, v2))
    if rate is None:
        return 0.0
    return rate / (req.components[v1].parallelism * req.components[v2].parallelism)


def validate_icmp(req: AppRequest, a: IcmpAssignment, partial: bool = False) -> Verdict:
    n, m = len(req.instances), len(req.containers)
    for i, c in a.placement.items():
        if not 0 <= i < n:
            return Verdict(False, "unknown-instance", f"instance {i}")
        if not 0 <= c < m:
            return Verdict(False, "unknown-container", f"container {c}")
    if not partial:
        missing = [i for i in range(n) if i not in a.placement]
        if missing:
            return Verdict(False, "unmapped-instance", f"instances {missing} not mapped")
    for c, members in a.members().items():
        load = vsum((req.instances[i].demand for i in members), req.k)
        if not leq(load, req.containers[c].capacity):
            return Verdict(False, "container-capacity",
                           f"container {c} load {load} exceeds {req.containers[c].capacity}")
    return FEASIBLE


def validate_csmp(state: ClusterState, req: AppRequest, a: CsmpAssignment, partial: bool = False,
                  required: Iterable[int] | None = None) -> Verdict:
    """Check server capacities; ``required`` lists the containers that must be mapped
    when ``partial`` is false (defaults to every container of the request)."""
    m, ns = len(req.containers), len(state.servers)
    for c, s in a.placement.items():
        if not 0 <= c < m:
            return Verdict(False, "unknown-container", f"container {c}")
        if not 0 <= s < ns:
            return Verdict(False, "unknown-server", f"server {s}")
    if not partial:
        need = range(m) if required is None else required
        missing = [c for c in need if c not in a.placement]
        if missing:
            return Verdict(False, "unmapped-container", f"containers {missing} not mapped")
    new_load = defaultdict(list)
    for c, s in a.placement.items():
        new_load[s].append(req.containers[c].capacity)
    for s, caps in sorted(new_load.items()):
        total = vsum(list(state.committed.get(s, ())) + caps, state.k)
        if not leq(total, state.servers[s].capacity):
            return Verdict(False, "server-capacity",
                           f"server {s} load {total} exceeds {state.servers[s].capacity}")
    return FEASIBLE


def commit(state: ClusterState, req: AppRequest, icmp: IcmpAssignment, csmp: CsmpAssignment) -> ClusterState:
    """Return a new state with the request's non-empty containers deployed."""
    used = icmp.used_containers()
    v1 = validate_icmp(req, icmp)
    v2 = validate_csmp(state, req, csmp, required=used)
    if not v1 or not v2:
        raise ContractError(f"cannot commit infeasible placement: {v1.detail or v2.detail}")
    extra = sorted(set(csmp.placement) - set(used))
    if extra:
        raise ContractError(f"containers {extra} are empty and must not be deployed")
    new = state.copy()
    for c in used:
        new.committed.setdefault(csmp.placement[c], []).append(req.containers[c].capacity)
    return new
