import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from mipsplace.errors import ConfigError
from mipsplace.model import topological_order, validate_request
from mipsplace.workload import WorkloadConfig, component_depth, generate_request, generate_stream


def test_single_component():
    req = generate_request(WorkloadConfig(depth=(1, 1), components=(1, 1)), 0)
    assert len(req.components) == 1 and not req.edges


def test_deterministic():
    cfg = WorkloadConfig(seed=9)
    assert generate_request(cfg, 3) == generate_request(cfg, 3)
    assert generate_request(cfg, 3) != generate_request(cfg, 4)


def test_stream_sizes():
    assert generate_stream(WorkloadConfig(n_requests=0)) == []
    reqs = generate_stream(WorkloadConfig(n_requests=50, seed=2))
    assert [r.id for r in reqs] == list(range(50))
    assert all(validate_request(r) for r in reqs)


@pytest.mark.parametrize("seed", range(10))
def test_dags_have_requested_depth(seed):
    cfg = WorkloadConfig(seed=seed)
    for index in range(100):
        req = generate_request(cfg, index)
        n = len(req.components)
        assert topological_order(n, [(e.src, e.dst) for e in req.edges]) is not None
        assert cfg.depth[0] <= component_depth(req) <= min(cfg.depth[1], n)
        assert cfg.components[0] <= n <= cfg.components[1]


@given(st.integers(0, 10_000), st.integers(0, 100))
def test_quantities_in_range(seed, index):
    cfg = WorkloadConfig(seed=seed)
    req = generate_request(cfg, index)
    for comp in req.components:
        assert cfg.parallelism[0] <= comp.parallelism <= cfg.parallelism[1]
        demands = {req.instances[i].demand for i in req.instances_of[comp.id]}
        assert len(demands) == 1
        d = demands.pop()
        assert all(lo <= x <= hi for x, (lo, hi) in zip(d, cfg.demand_ranges))
    assert all(cfg.rate[0] <= e.rate <= cfg.rate[1] for e in req.edges)
    # weakly connected
    n = len(req.components)
    adj = {v: set() for v in range(n)}
    for e in req.edges:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    seen, stack = {0}, [0]
    while stack:
        for w in adj[stack.pop()] - seen:
            seen.add(w)
            stack.append(w)
    assert len(seen) == n
    # container sizing: biggest instance fits twice, total demand fits with one spare
    cap = np.array(req.containers[0].capacity)
    peak = np.max([i.demand for i in req.instances], axis=0)
    np.testing.assert_allclose(cap, np.maximum(2 * peak, 1))
    total = np.sum([i.demand for i in req.instances], axis=0)
    assert len(req.containers) == int(np.max(np.ceil(total / cap - 1e-9))) + 1


def test_component_count_uniform():
    cfg = WorkloadConfig(seed=123)
    counts = np.bincount([len(generate_request(cfg, i).components) for i in range(2000)], minlength=7)[3:7]
    assert chisquare(counts).pvalue > 0.05


@pytest.mark.parametrize("kwargs", [
    dict(depth=(4, 2)), dict(components=(1, 2), depth=(3, 5)), dict(parallelism=(0, 2)),
    dict(n_requests=-1), dict(container_headroom=0.5), dict(extra_edge_prob=2.0),
    dict(demand_ranges=((0, 0),)), dict(rate=(-1.0, 2.0)),
])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        WorkloadConfig(**kwargs)


def test_dict_round_trip():
    cfg = WorkloadConfig(seed=4, n_requests=3, depth=(2, 4))
    assert WorkloadConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        WorkloadConfig.from_dict({"bogus": 1})
