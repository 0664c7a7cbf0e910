"""``mipsplace`` command line: generation, single placements, experiments, sweeps, oracle."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .errors import ConfigError, MipsError, OracleRefused, TopologyError
from .harness import (
    SWEEP_PARAMS,
    SchemePair,
    process_request,
    results_csv,
    results_summary,
    run_experiment,
    sweep,
)
from .mcts import MctsConfig
from .objectives import (
    ObjectiveConfig,
    brute_force_csmp,
    brute_force_icmp,
    container_utilization,
    cross_container_traffic,
)
from .topology import TOPOLOGIES, ClusterConfig, build_cluster
from .workload import WorkloadConfig, generate_stream

log = logging.getLogger("mipsplace")

MCTS_KEYS = {"samples": "max_samples_per_step", "omega": "exploration_weight", "rollout_policy": "rollout_policy",
             "expansion_policy": "expansion_policy", "prior_bias": "prior_bias", "prior_q": "prior_q",
             "max_attempts_factor": "max_attempts_factor"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Everything a subcommand needs, after merging the config file and flags."""

    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    scheme: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)

    def pair(self) -> SchemePair:
        s = self.scheme
        mcts = MctsConfig(**{MCTS_KEYS[k]: v for k, v in s.items() if k in MCTS_KEYS})
        return SchemePair(s.get("stage1", "mips"), s.get("stage2", "mips"), float(s.get("alpha", 0.5)), mcts, mcts)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    doc = io.read_json(path)
    io.validate(doc, "config")
    try:
        return RunConfig(ClusterConfig.from_dict(doc.get("cluster", {})),
                         WorkloadConfig.from_dict(doc.get("workload", {})),
                         dict(doc.get("scheme", {})), dict(doc.get("experiment", {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    for flag in ("alpha", "samples", "omega", "stage1", "stage2"):
        if get(flag) is not None:
            cfg.scheme[flag] = get(flag)
    if get("topology") is not None:
        cfg.cluster = cfg.cluster.replace(topology=args.topology)
    if get("requests") is not None:
        cfg.workload = cfg.workload.replace(n_requests=args.requests)
    for flag, key in (("reps", "reps"), ("workers", "workers"), ("param", "param")):
        if get(flag) is not None:
            cfg.experiment[key] = get(flag)
    if get("grid") is not None:
        cfg.experiment["grid"] = args.grid
    if get("fixed_workload"):
        cfg.experiment["redraw_workload"] = False
    if get("timing"):
        cfg.experiment["timing"] = True
    return cfg


def _grid(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("grid must not be empty")
    return [int(v) if v.is_integer() else v for v in values]


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        log.info("wrote %s", out)


def _emit_json(doc: dict, kind: str, out: str | None):
    io.validate(doc, kind)
    _emit(io.dumps(doc), out)


# -- subcommands ------------------------------------------------------------

def cmd_gen_workload(cfg: RunConfig, args) -> int:
    wl = cfg.workload if args.seed is None else cfg.workload.replace(seed=args.seed)
    _emit_json(io.workload_to_dict(generate_stream(wl), wl), "workload", args.out)
    return 0


def cmd_gen_cluster(cfg: RunConfig, args) -> int:
    cl = cfg.cluster if args.seed is None else cfg.cluster.replace(seed=args.seed)
    _emit_json(io.cluster_to_dict(build_cluster(cl), cl), "cluster", args.out)
    return 0


def _scheme_doc(pair: SchemePair, seed: int) -> dict:
    return {"stage1": pair.stage1, "stage2": pair.stage2, "alpha": pair.alpha, "seed": seed,
            "samples": pair.mcts1.max_samples_per_step, "omega": pair.mcts1.exploration_weight,
            "rollout_policy": pair.mcts1.rollout_policy}


def cmd_place(cfg: RunConfig, args) -> int:
    req = io.load_request(args.request)
    state = io.load_cluster(args.cluster)
    pair = cfg.pair()
    seed = 0 if args.seed is None else args.seed
    new_state, m = process_request(state, req, pair, seed)
    _emit_json(io.placement_to_dict(m, _scheme_doc(pair, seed), timing=bool(args.timing)), "placement", args.out)
    if m.rejected:
        log.error("request %d rejected: %s", req.id, m.reason)
        return 2
    if args.state_out:
        io.write_json(args.state_out, io.cluster_to_dict(new_state), "cluster")
    return 0


def _experiment_inputs(cfg: RunConfig, args):
    exp = cfg.experiment
    requests = io.load_workload(args.workload) if args.workload else None
    cluster = io.load_cluster(args.cluster) if args.cluster else None
    seed = 0 if args.seed is None else args.seed
    kw = dict(repetitions=int(exp.get("reps", 10)), seed=seed, redraw_workload=bool(exp.get("redraw_workload", True)),
              workers=int(exp.get("workers", 1)), requests=requests, cluster=cluster)
    meta = {"cluster": cfg.cluster.to_dict(), "workload": cfg.workload.to_dict(), "scheme": cfg.pair().to_dict(),
            "seed": seed, "reps": kw["repetitions"], "redraw_workload": kw["redraw_workload"],
            "workload_file": bool(requests), "cluster_file": cluster is not None}
    return kw, meta


def _write_results(results: dict, param, meta: dict, args, timing: bool):
    _emit(results_csv(results, timing=timing), args.out)
    summary = results_summary(results, param, meta, timing=timing)
    io.validate(summary, "summary")
    target = args.summary or (str(Path(args.out).with_suffix(".summary.json")) if args.out else None)
    if target:
        Path(target).write_text(io.dumps(summary))
        log.info("wrote %s", target)


def cmd_experiment(cfg: RunConfig, args) -> int:
    kw, meta = _experiment_inputs(cfg, args)
    res = run_experiment(cfg.cluster, cfg.workload, cfg.pair(), **kw)
    _write_results({None: res}, None, meta, args, bool(cfg.experiment.get("timing")))
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    param, grid = cfg.experiment.get("param"), cfg.experiment.get("grid")
    if param is None or not grid:
        raise ConfigError("sweep needs --param and --grid (or experiment.param/grid in the config)")
    kw, meta = _experiment_inputs(cfg, args)
    meta["grid"] = list(grid)
    results = sweep(param, grid, cfg.cluster, cfg.workload, cfg.pair(), **kw)
    _write_results(results, param, meta, args, bool(cfg.experiment.get("timing")))
    return 0


def cmd_oracle(cfg: RunConfig, args) -> int:
    req = io.load_request(args.request)
    alpha = float(cfg.scheme.get("alpha", 0.5))
    x, value = brute_force_icmp(req, ObjectiveConfig(alpha), cap=args.cap)
    doc = {"schema_version": io.SCHEMA_VERSION, "kind": "oracle", "request_id": req.id, "alpha": alpha,
           "X": None, "icmp_obj": None}
    if x is None:
        log.error("request %d has no feasible container assignment", req.id)
        _emit_json(doc, "oracle", args.out)
        return 2
    doc.update(X=[[i, c] for i, c in sorted(x.placement.items())], icmp_obj=value,
               T=cross_container_traffic(req, x), U=container_utilization(req, x))
    if args.cluster:
        state = io.load_cluster(args.cluster)
        y, w = brute_force_csmp(state, req, x, cap=args.cap)
        if y is None:
            log.error("optimal containers of request %d fit no server assignment", req.id)
            _emit_json({**doc, "Y": None, "W": None}, "oracle", args.out)
            return 2
        doc.update(Y=[[c, s] for c, s in sorted(y.placement.items())], W=w)
    _emit_json(doc, "oracle", args.out)
    return 0


COMMANDS = {"gen-workload": cmd_gen_workload, "gen-cluster": cmd_gen_cluster, "place": cmd_place,
            "experiment": cmd_experiment, "sweep": cmd_sweep, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mipsplace", description="Two-stage placement of streaming applications.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_help):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help=seed_help)
        p.add_argument("--out", help="output file (default: stdout)")

    def scheme(p):
        p.add_argument("--alpha", type=float, help="traffic weight of the stage-1 cost, in [0, 1]")
        p.add_argument("--samples", type=int, help="search samples per decision step")
        p.add_argument("--omega", type=float, help="exploration weight")
        p.add_argument("--stage1", choices=["mips", "ffd", "r-heron", "t-heron"])
        p.add_argument("--stage2", choices=["mips", "best-fit"])

    def experiment(p):
        scheme(p)
        p.add_argument("--topology", choices=TOPOLOGIES)
        p.add_argument("--reps", type=int, help="repetitions")
        p.add_argument("--requests", type=int, help="requests per repetition")
        p.add_argument("--fixed-workload", action="store_true", help="replay one workload in every repetition")
        p.add_argument("--workload", help="workload JSON replayed in every repetition")
        p.add_argument("--cluster", help="cluster JSON used instead of generating one")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--timing", action="store_true", help="record wall-clock times (not reproducible)")
        p.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")

    p = sub.add_parser("gen-workload", help="generate a request stream")
    common(p, "workload seed")
    p.add_argument("--requests", type=int, help="number of requests")

    p = sub.add_parser("gen-cluster", help="generate a cluster")
    common(p, "cluster seed")
    p.add_argument("--topology", choices=TOPOLOGIES)

    p = sub.add_parser("place", help="place one request on a cluster")
    common(p, "search seed")
    scheme(p)
    p.add_argument("request")
    p.add_argument("cluster")
    p.add_argument("--state-out", help="write the cluster after committing the placement")
    p.add_argument("--timing", action="store_true", help="include stage times (not reproducible)")

    p = sub.add_parser("experiment", help="repeated runs of one scheme pair")
    common(p, "experiment seed")
    experiment(p)

    p = sub.add_parser("sweep", help="experiments over a parameter grid")
    common(p, "experiment seed")
    experiment(p)
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--grid", type=_grid, help="comma-separated values")

    p = sub.add_parser("oracle", help="exhaustive optimum of a small request")
    common(p, "unused; accepted for symmetry")
    p.add_argument("request")
    p.add_argument("cluster", nargs="?", help="also solve the server mapping on this cluster")
    p.add_argument("--alpha", type=float)
    p.add_argument("--cap", type=int, default=10**7, help="largest search space to enumerate")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="mipsplace: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        cfg.pair()  # validate scheme values early
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, OracleRefused, TopologyError) as exc:
        print(f"mipsplace: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"mipsplace: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except MipsError as exc:
        print(f"mipsplace: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
