"""Seeded generator of online streaming-application requests (layered DAGs)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .model import AppRequest, build_request


def _range(value, name, integer=False):
    lo, hi = value
    if lo > hi:
        raise ConfigError(f"{name}: empty range [{lo}, {hi}]")
    if integer and (int(lo) != lo or int(hi) != hi):
        raise ConfigError(f"{name}: integer range expected")
    return (int(lo), int(hi)) if integer else (float(lo), float(hi))


@dataclass(frozen=True)
class WorkloadConfig:
    """Distributions of the generated requests. Resource ranges are integers
    (cores, GB); ``demand_ranges`` has one entry per resource dimension."""

    n_requests: int = 10
    depth: tuple[int, int] = (3, 5)
    components: tuple[int, int] = (3, 6)
    parallelism: tuple[int, int] = (2, 6)
    demand_ranges: tuple[tuple[int, int], ...] = ((2, 6), (4, 8))
    rate: tuple[float, float] = (1.0, 10.0)
    extra_edge_prob: float = 0.2
    container_headroom: float = 2.0
    container_slack: int = 1
    seed: int = 0

    def __post_init__(self):
        set_ = object.__setattr__
        if self.n_requests < 0:
            raise ConfigError("n_requests must be >= 0")
        set_(self, "depth", _range(self.depth, "depth", True))
        set_(self, "components", _range(self.components, "components", True))
        set_(self, "parallelism", _range(self.parallelism, "parallelism", True))
        set_(self, "demand_ranges", tuple(_range(r, "demand", True) for r in self.demand_ranges))
        set_(self, "rate", _range(self.rate, "rate"))
        if self.depth[0] < 1 or self.components[0] < 1 or self.parallelism[0] < 1:
            raise ConfigError("depth, components and parallelism must be >= 1")
        if self.components[1] < self.depth[0]:
            raise ConfigError("component range cannot cover the minimum depth")
        if any(lo < 0 for lo, _ in self.demand_ranges) or self.rate[0] < 0:
            raise ConfigError("negative demand or rate range")
        if any(hi <= 0 for _, hi in self.demand_ranges):
            raise ConfigError("every resource needs a positive upper demand bound")
        if self.container_headroom < 1 or self.container_slack < 0:
            raise ConfigError("container headroom must be >= 1 and slack >= 0")
        if not 0 <= self.extra_edge_prob <= 1:
            raise ConfigError("extra_edge_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("depth", "components", "parallelism", "rate"):
            d[key] = list(d[key])
        d["demand_ranges"] = [list(r) for r in self.demand_ranges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown workload keys {sorted(unknown)}")
        d = dict(d)
        for key in ("depth", "components", "parallelism", "rate"):
            if key in d:
                d[key] = tuple(d[key])
        if "demand_ranges" in d:
            d["demand_ranges"] = tuple(tuple(r) for r in d["demand_ranges"])
        return cls(**d)

    def replace(self, **changes) -> "WorkloadConfig":
        return WorkloadConfig(**{**self.__dict__, **changes})


def _layered_dag(rng, n_comp, depth, extra_p):
    """Components split into ``depth`` nonempty layers; edges only go to later
    layers, every non-first-layer node has a predecessor in the layer just
    before it, and every non-last-layer node has a successor."""
    sizes = np.ones(depth, dtype=int)
    for _ in range(n_comp - depth):
        sizes[rng.integers(depth)] += 1
    layers, start = [], 0
    for s in sizes:
        layers.append(list(range(start, start + s)))
        start += s
    layer_of = {v: li for li, layer in enumerate(layers) for v in layer}
    edges = set()
    for li in range(1, depth):
        for v in layers[li]:
            edges.add((int(rng.choice(layers[li - 1])), v))
    for li in range(depth - 1):
        for v in layers[li]:
            if not any(a == v for a, _ in edges):
                edges.add((v, int(rng.choice(layers[li + 1]))))
    for a in range(n_comp):
        for b in range(n_comp):
            if layer_of[b] > layer_of[a] and (a, b) not in edges and rng.random() < extra_p:
                edges.add((a, b))
    if depth >= 2:
        # join weakly connected parts: first-layer node of one part to second-layer node of another
        parent = list(range(n_comp))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in edges:
            parent[find(a)] = find(b)
        roots = sorted({find(v) for v in range(n_comp)})
        while len(roots) > 1:
            part_a = [v for v in layers[0] if find(v) == roots[0]]
            part_b = [v for v in layers[1] if find(v) == roots[1]]
            a, b = part_a[0], part_b[0]
            edges.add((a, b))
            parent[find(a)] = find(b)
            roots = sorted({find(v) for v in range(n_comp)})
    return sorted(edges), layers


def generate_request(cfg: WorkloadConfig, index: int) -> AppRequest:
    """Request ``index`` of the stream; a pure function of ``(cfg, index)``."""
    rng = np.random.default_rng([int(cfg.seed), int(index)])
    lo_m = max(cfg.components[0], cfg.depth[0])
    n_comp = int(rng.integers(lo_m, cfg.components[1] + 1))
    depth = int(rng.integers(cfg.depth[0], min(cfg.depth[1], n_comp) + 1))
    edges, _ = _layered_dag(rng, n_comp, depth, cfg.extra_edge_prob)
    rates = [float(rng.uniform(*cfg.rate)) for _ in edges]
    parallelism = [int(rng.integers(cfg.parallelism[0], cfg.parallelism[1] + 1)) for _ in range(n_comp)]
    demands = [tuple(float(rng.integers(lo, hi + 1)) for lo, hi in cfg.demand_ranges) for _ in range(n_comp)]
    kdim = len(cfg.demand_ranges)
    peak = [max(d[k] for d in demands) for k in range(kdim)]
    capacity = [max(cfg.container_headroom * p, 1.0) for p in peak]
    totals = [sum(p * d[k] for p, d in zip(parallelism, demands)) for k in range(kdim)]
    n_containers = max(math.ceil(totals[k] / capacity[k] - 1e-9) for k in range(kdim)) + cfg.container_slack
    return build_request(index, parallelism, demands, [(a, b, r) for (a, b), r in zip(edges, rates)],
                         max(n_containers, 1), capacity)


def generate_stream(cfg: WorkloadConfig) -> list[AppRequest]:
    return [generate_request(cfg, r) for r in range(cfg.n_requests)]


def component_depth(req: AppRequest) -> int:
    """Number of components on the longest stream path."""
    from .model import topological_order

    order = topological_order(len(req.components), [(e.src, e.dst) for e in req.edges])
    level = {v: 1 for v in order}
    for v in order:
        for e in req.edges:
            if e.src == v:
                level[e.dst] = max(level[e.dst], level[v] + 1)
    return max(level.values(), default=0)
