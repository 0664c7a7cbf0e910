"""Data-center network generators and hop-count cost matrices."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError

DEFAULT_LINK_GBPS = 40.0


@dataclass(frozen=True)
class NetworkGraph:
    """Switch fabric plus servers; server ``j`` hangs off ``server_switch[j]``.

    Graph node ids: switches are ``0..n_switches-1``, server ``j`` is
    ``n_switches + j``.
    """

    kind: str
    n_switches: int
    switch_links: tuple[tuple[int, int], ...]
    server_switch: tuple[int, ...]
    ports: int | None = None
    params: dict = field(default_factory=dict)
    link_gbps: float = DEFAULT_LINK_GBPS

    @property
    def n_servers(self) -> int:
        return len(self.server_switch)

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_switches + self.n_servers)]
        for a, b in self.switch_links:
            adj[a].append(b)
            adj[b].append(a)
        for j, sw in enumerate(self.server_switch):
            adj[self.n_switches + j].append(sw)
            adj[sw].append(self.n_switches + j)
        for nbrs in adj:
            nbrs.sort()
        return adj

    def degree(self, switch: int) -> int:
        return len(self.adjacency()[switch])

    def to_json(self) -> dict:
        adj = self.adjacency()
        name = [f"sw{v}" for v in range(self.n_switches)] + [f"srv{j}" for j in range(self.n_servers)]
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "n_switches": self.n_switches,
            "n_servers": self.n_servers,
            "ports": self.ports,
            "link_gbps": self.link_gbps,
            "adjacency": {name[v]: [name[u] for u in adj[v]] for v in range(len(adj))},
        }


def build_fat_tree(k: int) -> NetworkGraph:
    """Canonical k-ary fat-tree: (k/2)^2 cores, k pods of k/2 aggregation + k/2 edge switches."""
    if not isinstance(k, (int, np.integer)) or k < 2 or k % 2:
        raise ValueError(f"fat-tree port count must be an even integer >= 2, got {k}")
    half = k // 2
    n_core = half * half
    links = []
    server_switch = []
    for pod in range(k):
        agg0 = n_core + pod * k
        edge0 = agg0 + half
        for a in range(half):
            # aggregation switch a of each pod connects to cores a*half .. a*half+half-1
            for j in range(half):
                links.append((a * half + j, agg0 + a))
            for e in range(half):
                links.append((agg0 + a, edge0 + e))
        for e in range(half):
            server_switch.extend([edge0 + e] * half)
    return NetworkGraph("fat-tree", n_core + k * k, tuple(links), tuple(server_switch),
                        ports=k, params={"k": int(k)})


def build_jellyfish(n_switches: int, n_ports: int, n_servers: int, seed: int,
                    max_retries: int = 50) -> NetworkGraph:
    """Random regular switch graph built by incremental link insertion with link swaps.

    Servers are attached round-robin (server j to switch j mod n_switches); the
    remaining ports of each switch are wired randomly. Retries with a derived
    seed until the result is connected.
    """
    if n_switches < 1 or n_ports < 1 or n_servers < 0:
        raise ValueError("jellyfish needs positive switch and port counts")
    if n_servers > n_switches * (n_ports - 1):
        raise ValueError("too many servers for the switch ports")
    server_switch = tuple(j % n_switches for j in range(n_servers))
    free_ports = [n_ports - server_switch.count(v) for v in range(n_switches)]
    params = {"n_switches": n_switches, "n_ports": n_ports, "n_servers": n_servers, "seed": int(seed)}
    for attempt in range(max_retries):
        rng = np.random.default_rng([int(seed), attempt])
        links = _jellyfish_links(list(free_ports), rng)
        g = NetworkGraph("jellyfish", n_switches, links, server_switch, ports=n_ports, params=params)
        if _connected(g.adjacency()):
            return g
    raise TopologyError(f"no connected jellyfish after {max_retries} attempts")


def _jellyfish_links(free: list[int], rng: np.random.Generator) -> tuple[tuple[int, int], ...]:
    n = len(free)
    links: set[tuple[int, int]] = set()

    def linked(a, b):
        return (min(a, b), max(a, b)) in links

    while True:
        open_sw = [v for v in range(n) if free[v] > 0]
        pairs = [(a, b) for x, a in enumerate(open_sw) for b in open_sw[x + 1:] if not linked(a, b)]
        if not pairs:
            break
        a, b = pairs[rng.integers(len(pairs))]
        links.add((a, b))
        free[a] -= 1
        free[b] -= 1
    # a switch left with >= 2 free ports splices itself into an existing link
    progress = True
    while progress:
        progress = False
        for v in range(n):
            if free[v] < 2:
                continue
            cands = sorted(l for l in links if v not in l and not linked(v, l[0]) and not linked(v, l[1]))
            if not cands:
                continue
            x, y = cands[rng.integers(len(cands))]
            links.remove((x, y))
            links.add((min(v, x), max(v, x)))
            links.add((min(v, y), max(v, y)))
            free[v] -= 2
            progress = True
    return tuple(sorted(links))


def _connected(adj: list[list[int]]) -> bool:
    if not adj:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == len(adj)


def hop_cost_matrix(g: NetworkGraph) -> np.ndarray:
    """Shortest-path hop counts between servers, by breadth-first search."""
    adj = g.adjacency()
    ns = g.n_servers
    theta = np.zeros((ns, ns))
    for j in range(ns):
        src = g.n_switches + j
        dist = {src: 0}
        queue = deque([src])
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        for j2 in range(ns):
            node = g.n_switches + j2
            if node not in dist:
                raise TopologyError(f"servers {j} and {j2} are not connected")
            theta[j, j2] = dist[node]
    return theta


@dataclass(frozen=True)
class ClusterConfig:
    """Topology choice plus the ranges server capacities are drawn from."""

    topology: str = "fat-tree"
    fat_tree_k: int = 4
    jellyfish_switches: int = 24
    jellyfish_ports: int = 4
    jellyfish_servers: int = 16
    capacity_ranges: tuple[tuple[int, int], ...] = ((16, 64), (8, 32))
    seed: int = 0

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; choose from {sorted(TOPOLOGIES)}")
        ranges = tuple((int(lo), int(hi)) for lo, hi in self.capacity_ranges)
        if any(lo < 1 or lo > hi for lo, hi in ranges):
            raise ValueError("capacity ranges must satisfy 1 <= lo <= hi")
        object.__setattr__(self, "capacity_ranges", ranges)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["capacity_ranges"] = [list(r) for r in self.capacity_ranges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown cluster keys {sorted(unknown)}")
        d = dict(d)
        if "capacity_ranges" in d:
            d["capacity_ranges"] = tuple(tuple(r) for r in d["capacity_ranges"])
        return cls(**d)

    def replace(self, **changes) -> "ClusterConfig":
        return ClusterConfig(**{**self.__dict__, **changes})


TOPOLOGIES = ("fat-tree", "jellyfish")


def build_network(cfg: ClusterConfig) -> NetworkGraph:
    if cfg.topology == "fat-tree":
        return build_fat_tree(cfg.fat_tree_k)
    return build_jellyfish(cfg.jellyfish_switches, cfg.jellyfish_ports, cfg.jellyfish_servers, cfg.seed)


def build_cluster(cfg: ClusterConfig):
    """Empty cluster on the configured topology with seeded heterogeneous servers."""
    from .model import ClusterState, Server

    g = build_network(cfg)
    rng = np.random.default_rng([int(cfg.seed), 0x5E12])
    servers = [Server(j, tuple(float(rng.integers(lo, hi + 1)) for lo, hi in cfg.capacity_ranges))
               for j in range(g.n_servers)]
    return ClusterState(servers, hop_cost_matrix(g), {}, topology=g.to_json())
