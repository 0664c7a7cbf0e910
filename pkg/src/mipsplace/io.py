"""JSON documents for requests, workloads, clusters, placements and summaries.

Every document carries ``schema_version`` and ``kind`` and is checked against
the bundled JSON schema on load and before it is written.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .model import AppRequest, ClusterState, Component, Container, Instance, Server, StreamEdge
from .topology import ClusterConfig
from .workload import WorkloadConfig

SCHEMA_VERSION = 1
KINDS = ("request", "workload", "cluster", "placement", "oracle", "summary", "config")


@lru_cache(maxsize=None)
def schema(kind: str) -> dict:
    if kind not in KINDS:
        raise KeyError(kind)
    text = resources.files("mipsplace").joinpath("schemas", f"{kind}.schema.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _validator(kind: str, embedded: bool = False) -> jsonschema.Draft7Validator:
    sch = schema(kind)
    if embedded:
        # requests inside a workload document carry no header of their own
        sch = {**sch, "required": [r for r in sch["required"] if r not in ("schema_version", "kind")]}
    return jsonschema.Draft7Validator(sch)


def _check(validator, doc, label: str) -> None:
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.path) or "<root>"
        raise ConfigError(f"invalid {label} document at {where}: {err.message}")


def validate(doc: dict, kind: str) -> None:
    """Raise :class:`ConfigError` unless ``doc`` is a valid ``kind`` document."""
    _check(_validator(kind), doc, kind)
    if kind == "workload":
        for pos, req in enumerate(doc["requests"]):
            _check(_validator("request", True), req, f"workload request {pos}")


def dumps(doc: dict) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def write_json(path, doc: dict, kind: str) -> None:
    validate(doc, kind)
    Path(path).write_text(dumps(doc))


def _header(kind: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind}


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() else x


def _vec(v) -> list:
    return [_num(x) for x in v]


# -- requests ---------------------------------------------------------------

def request_to_dict(req: AppRequest, header: bool = True) -> dict:
    comps = []
    for comp in req.components:
        demands = [req.instances[i].demand for i in req.instances_of.get(comp.id, ())]
        entry = {"id": comp.id, "parallelism": comp.parallelism}
        if demands and all(d == demands[0] for d in demands):
            entry["demand"] = _vec(demands[0])
        else:
            entry["instance_demands"] = [_vec(d) for d in demands]
        comps.append(entry)
    caps = [c.capacity for c in req.containers]
    if caps and all(c == caps[0] for c in caps):
        containers = {"count": len(caps), "capacity": _vec(caps[0])}
    else:
        containers = {"capacities": [_vec(c) for c in caps]}
    doc = {
        "id": req.id,
        "components": comps,
        "edges": [{"src": e.src, "dst": e.dst, "rate": _num(e.rate)} for e in req.edges],
        "containers": containers,
    }
    return {**_header("request"), **doc} if header else doc


def request_from_dict(doc: dict) -> AppRequest:
    try:
        comps = sorted(doc["components"], key=lambda c: c["id"])
        components, instances = [], []
        for pos, c in enumerate(comps):
            if c["id"] != pos:
                raise ConfigError("component ids must be 0..n-1")
            p = int(c["parallelism"])
            if "instance_demands" in c:
                demands = c["instance_demands"]
                if len(demands) != p:
                    raise ConfigError(f"component {pos}: {len(demands)} instance demands for parallelism {p}")
            elif "demand" in c:
                demands = [c["demand"]] * p
            else:
                raise ConfigError(f"component {pos}: demand missing")
            components.append(Component(pos, p))
            for d in demands:
                instances.append(Instance(len(instances), pos, tuple(d)))
        cont = doc["containers"]
        if "capacities" in cont:
            caps = cont["capacities"]
        else:
            caps = [cont["capacity"]] * int(cont["count"])
        containers = [Container(c, tuple(cap)) for c, cap in enumerate(caps)]
        edges = [StreamEdge(int(e["src"]), int(e["dst"]), float(e["rate"])) for e in doc["edges"]]
        return AppRequest(int(doc.get("id", 0)), components, edges, instances, containers)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed request: {exc}") from exc


def load_request(path) -> AppRequest:
    doc = read_json(path)
    validate(doc, "request")
    return request_from_dict(doc)


# -- workloads --------------------------------------------------------------

def workload_to_dict(requests, cfg: WorkloadConfig | None = None) -> dict:
    doc = {**_header("workload"), "requests": [request_to_dict(r, header=False) for r in requests]}
    if cfg is not None:
        doc["config"] = cfg.to_dict()
    return doc


def load_workload(path) -> list[AppRequest]:
    doc = read_json(path)
    validate(doc, "workload")
    return [request_from_dict(r) for r in doc["requests"]]


# -- clusters ---------------------------------------------------------------

def cluster_to_dict(state: ClusterState, cfg: ClusterConfig | None = None) -> dict:
    doc = {
        **_header("cluster"),
        "servers": [{"id": s.id, "capacity": _vec(s.capacity)} for s in state.servers],
        "hop_cost": [_vec(row) for row in np.asarray(state.hop_cost)],
        "committed": {str(s): [_vec(c) for c in caps] for s, caps in sorted(state.committed.items()) if caps},
    }
    if state.topology is not None:
        doc["topology"] = state.topology
    if cfg is not None:
        doc["config"] = cfg.to_dict()
    return doc


def cluster_from_dict(doc: dict) -> ClusterState:
    try:
        servers = [Server(int(s["id"]), tuple(s["capacity"])) for s in sorted(doc["servers"], key=lambda s: s["id"])]
        committed = {int(k): [tuple(c) for c in v] for k, v in doc.get("committed", {}).items()}
        return ClusterState(servers, np.array(doc["hop_cost"], dtype=float).reshape(len(servers), len(servers)),
                            committed, topology=doc.get("topology"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed cluster: {exc}") from exc


def load_cluster(path) -> ClusterState:
    doc = read_json(path)
    validate(doc, "cluster")
    return cluster_from_dict(doc)


# -- placements -------------------------------------------------------------

def placement_to_dict(metrics, scheme: dict, timing: bool = False) -> dict:
    """Outcome of one request: instance→container ``X``, container→server ``Y`` and costs."""
    doc = {
        **_header("placement"),
        "request_id": metrics.request_id,
        "scheme": scheme,
        "accepted": not metrics.rejected,
        "reason": metrics.reason,
        "X": [[i, c] for i, c in sorted(metrics.icmp.items())],
        "Y": [[c, s] for c, s in sorted(metrics.csmp.items())],
        "T": None if metrics.T is None else _num(metrics.T),
        "U": metrics.U,
        "icmp_obj": None if metrics.icmp_obj is None else _num(metrics.icmp_obj),
        "W": None if metrics.W is None else _num(metrics.W),
        "samples": {"stage1": metrics.samples_stage1, "stage2": metrics.samples_stage2},
    }
    if timing:
        doc["ms"] = {"stage1": metrics.ms_stage1, "stage2": metrics.ms_stage2}
    return doc
