"""Online two-stage pipeline, repeated experiments and parameter sweeps."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines
from .errors import ConfigError, PlacementError
from .mcts import MctsConfig, csmp_stage, icmp_stage, run_stage
from .model import (
    AppRequest,
    ClusterState,
    CsmpAssignment,
    IcmpAssignment,
    commit,
    validate_request,
)
from .objectives import (
    ObjectiveConfig,
    container_traffic_matrix,
    container_utilization,
    cross_container_traffic,
    csmp_objective,
)
from .topology import ClusterConfig, build_cluster
from .workload import WorkloadConfig, generate_stream

STAGE1_SCHEMES = ("mips", "ffd", "r-heron", "t-heron")
STAGE2_SCHEMES = ("mips", "best-fit")
METRICS = ("T", "U", "icmp_obj", "W")
CSV_HEADER = ["grid_value", "rep", "requests", "rejections", "T", "U", "icmp_obj", "W",
              "ms_stage1", "ms_stage2"]
SWEEP_PARAMS = ("alpha", "samples", "omega")


def derive_seed(*parts: int) -> int:
    """64-bit seed from an integer path (experiment seed, repetition, request, ...)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SchemePair:
    stage1: str = "mips"
    stage2: str = "mips"
    alpha: float = 0.5
    mcts1: MctsConfig = field(default_factory=MctsConfig)
    mcts2: MctsConfig = field(default_factory=MctsConfig)

    def __post_init__(self):
        if self.stage1 not in STAGE1_SCHEMES:
            raise ConfigError(f"unknown stage-1 scheme {self.stage1!r}; choose from {STAGE1_SCHEMES}")
        if self.stage2 not in STAGE2_SCHEMES:
            raise ConfigError(f"unknown stage-2 scheme {self.stage2!r}; choose from {STAGE2_SCHEMES}")
        ObjectiveConfig(self.alpha)

    @property
    def label(self) -> str:
        short = {"mips": "M", "ffd": "F", "r-heron": "R", "t-heron": "T", "best-fit": "B"}
        return f"{short[self.stage1]}/{short[self.stage2]}"

    def with_param(self, param: str, value) -> "SchemePair":
        if param == "alpha":
            return SchemePair(self.stage1, self.stage2, float(value), self.mcts1, self.mcts2)
        if param == "samples":
            n = int(value)
            return SchemePair(self.stage1, self.stage2, self.alpha,
                              self.mcts1.replace(max_samples_per_step=n),
                              self.mcts2.replace(max_samples_per_step=n))
        if param == "omega":
            w = float(value)
            return SchemePair(self.stage1, self.stage2, self.alpha,
                              self.mcts1.replace(exploration_weight=w),
                              self.mcts2.replace(exploration_weight=w))
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")

    def to_dict(self) -> dict:
        return {"stage1": self.stage1, "stage2": self.stage2, "alpha": self.alpha,
                "mcts1": asdict(self.mcts1), "mcts2": asdict(self.mcts2)}

    @classmethod
    def from_dict(cls, d: dict) -> "SchemePair":
        d = dict(d)
        for key in ("mcts1", "mcts2"):
            if key in d:
                d[key] = MctsConfig(**d[key])
        return cls(**d)


@dataclass
class RequestMetrics:
    request_id: int
    rejected: bool = False
    reason: str | None = None
    T: float | None = None
    U: int | None = None
    icmp_obj: float | None = None
    W: float | None = None
    ms_stage1: float = 0.0
    ms_stage2: float = 0.0
    samples_stage1: int = 0
    samples_stage2: int = 0
    icmp: dict[int, int] = field(default_factory=dict)
    csmp: dict[int, int] = field(default_factory=dict)


def _stage1(req: AppRequest, pair: SchemePair, seed: int) -> tuple[IcmpAssignment, int]:
    if pair.stage1 == "mips":
        res = run_stage(icmp_stage(req, pair.alpha), pair.mcts1, seed)
        return IcmpAssignment(req.id, res.mapping), res.accepted_samples
    return baselines.STAGE1[pair.stage1](req), 0


def _stage2(state: ClusterState, req: AppRequest, x: IcmpAssignment, pair: SchemePair,
            seed: int) -> tuple[CsmpAssignment, int]:
    if pair.stage2 == "mips":
        res = run_stage(csmp_stage(state, req, x), pair.mcts2, seed)
        return CsmpAssignment(req.id, res.mapping), res.accepted_samples
    return baselines.STAGE2[pair.stage2](state, req, x), 0


def process_request(state: ClusterState, req: AppRequest, pair: SchemePair,
                    seed: int = 0) -> tuple[ClusterState, RequestMetrics]:
    """Stage 1, drop empty containers, stage 2, commit. Failures become rejections
    and leave the state untouched."""
    out = RequestMetrics(req.id)
    verdict = validate_request(req)
    if not verdict:
        out.rejected, out.reason = True, verdict.reason
        return state, out
    t0 = time.perf_counter()
    try:
        x, out.samples_stage1 = _stage1(req, pair, derive_seed(seed, 1))
    except PlacementError as exc:
        out.ms_stage1 = (time.perf_counter() - t0) * 1e3
        out.rejected, out.reason = True, f"stage1: {exc}"
        return state, out
    out.ms_stage1 = (time.perf_counter() - t0) * 1e3
    out.icmp = dict(x.placement)
    out.T = cross_container_traffic(req, x)
    out.U = container_utilization(req, x)
    out.icmp_obj = pair.alpha * out.T + (1 - pair.alpha) * out.U
    t0 = time.perf_counter()
    try:
        y, out.samples_stage2 = _stage2(state, req, x, pair, derive_seed(seed, 2))
    except PlacementError as exc:
        out.ms_stage2 = (time.perf_counter() - t0) * 1e3
        out.rejected, out.reason = True, f"stage2: {exc}"
        return state, out
    out.ms_stage2 = (time.perf_counter() - t0) * 1e3
    out.csmp = dict(y.placement)
    out.W = csmp_objective(state, req, x, y, traffic=container_traffic_matrix(req, x))
    return commit(state, req, x, y), out


def run_stream(state: ClusterState, requests, pair: SchemePair, seed: int = 0):
    """Process requests in arrival order; returns (final state, per-request metrics)."""
    metrics = []
    for req in requests:
        state, m = process_request(state, req, pair, derive_seed(seed, req.id))
        metrics.append(m)
    return state, metrics


@dataclass
class RepetitionMetrics:
    """One repetition: cost means over accepted requests, times summed."""

    rep: int
    requests: int
    rejections: int
    T: float
    U: float
    icmp_obj: float
    W: float
    ms_stage1: float
    ms_stage2: float
    samples: int
    per_request: list[RequestMetrics] = field(default_factory=list, repr=False)

    @classmethod
    def from_requests(cls, rep: int, reqs: list[RequestMetrics]) -> "RepetitionMetrics":
        acc = [r for r in reqs if not r.rejected]

        def mean(key):
            return float(np.mean([getattr(r, key) for r in acc])) if acc else math.nan

        return cls(rep, len(reqs), len(reqs) - len(acc), mean("T"), mean("U"), mean("icmp_obj"), mean("W"),
                   float(sum(r.ms_stage1 for r in reqs)), float(sum(r.ms_stage2 for r in reqs)),
                   int(sum(r.samples_stage1 + r.samples_stage2 for r in reqs)), list(reqs))


@dataclass
class ExperimentResult:
    pair: SchemePair
    rows: list[RepetitionMetrics]

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.rows], dtype=float)

    def mean(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.mean()) if v.size else math.nan

    def var(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.var(ddof=1)) if v.size > 1 else 0.0

    def sem(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return math.sqrt(self.var(metric) / v.size) if v.size > 1 else 0.0

    def summary(self) -> dict:
        out = {m: {"mean": self.mean(m), "var": self.var(m), "sem": self.sem(m)} for m in METRICS}
        out["requests"] = int(sum(r.requests for r in self.rows))
        out["rejections"] = int(sum(r.rejections for r in self.rows))
        out["repetitions"] = len(self.rows)
        return out


def workload_seed(seed: int, rep: int, redraw: bool = True) -> int:
    return derive_seed(seed, rep if redraw else 0, 0xA11)


def _one_repetition(args):
    cluster_cfg, workload_cfg, pair, seed, rep, redraw, requests, cluster = args
    if requests is None:
        requests = generate_stream(workload_cfg.replace(seed=workload_seed(seed, rep, redraw)))
    state = build_cluster(cluster_cfg) if cluster is None else cluster.copy()
    _, reqs = run_stream(state, requests, pair, derive_seed(seed, rep, 0x5C4))
    return RepetitionMetrics.from_requests(rep, reqs)


def run_experiment(cluster_cfg: ClusterConfig, workload_cfg: WorkloadConfig, pair: SchemePair,
                   repetitions: int, seed: int = 0, redraw_workload: bool = True,
                   workers: int = 1, requests=None, cluster: ClusterState | None = None) -> ExperimentResult:
    """Repeat the request stream on a fresh cluster. With ``redraw_workload`` off
    every repetition replays the same requests and only the search is re-seeded;
    an explicit ``requests`` list is replayed in every repetition. ``cluster``
    replaces the generated cluster as the starting state."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if requests is not None:
        requests = list(requests)
    jobs = [(cluster_cfg, workload_cfg, pair, seed, rep, redraw_workload, requests, cluster)
            for rep in range(repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_one_repetition, jobs))
    else:
        rows = [_one_repetition(j) for j in jobs]
    return ExperimentResult(pair, sorted(rows, key=lambda r: r.rep))


def sweep(param: str, grid, cluster_cfg: ClusterConfig, workload_cfg: WorkloadConfig, pair: SchemePair,
          repetitions: int, seed: int = 0, redraw_workload: bool = True,
          workers: int = 1, requests=None, cluster: ClusterState | None = None) -> dict[float, ExperimentResult]:
    """One experiment per grid value; all grid points share workload seeds."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    grid = list(grid)
    if not grid:
        raise ConfigError("empty sweep grid")
    return {g: run_experiment(cluster_cfg, workload_cfg, pair.with_param(param, g), repetitions, seed,
                              redraw_workload, workers, requests, cluster) for g in grid}


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def results_csv(results: dict, timing: bool = False) -> str:
    """CSV text with :data:`CSV_HEADER`; timing columns stay empty unless ``timing``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for g, res in results.items():
        for r in res.rows:
            writer.writerow(["" if g is None else g, r.rep, r.requests, r.rejections,
                             _fmt(r.T), _fmt(r.U), _fmt(r.icmp_obj), _fmt(r.W),
                             _fmt(r.ms_stage1) if timing else "", _fmt(r.ms_stage2) if timing else ""])
    return buf.getvalue()


def results_summary(results: dict, param: str | None, meta: dict | None = None, timing: bool = False) -> dict:
    def clean(x):
        return None if isinstance(x, float) and math.isnan(x) else x

    points = []
    for g, res in results.items():
        s = res.summary()
        points.append({
            "grid_value": g,
            "scheme": res.pair.label,
            "repetitions": s["repetitions"],
            "requests": s["requests"],
            "rejections": s["rejections"],
            "metrics": {m: {k: clean(v) for k, v in s[m].items()} for m in METRICS},
        })
        if timing:
            points[-1]["timing"] = {"ms_stage1": float(np.mean(res.values("ms_stage1"))),
                                    "ms_stage2": float(np.mean(res.values("ms_stage2")))}
    return {"schema_version": 1, "kind": "summary", "param": param, "meta": meta or {}, "points": points}
