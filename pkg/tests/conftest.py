import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mipsplace.model import (
    AppRequest,
    ClusterState,
    Component,
    Container,
    Instance,
    Server,
    StreamEdge,
    build_request,
)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def diamond_tradeoff() -> AppRequest:
    """Four single-instance components in a diamond, three containers of size 4.

    Two containers force 6 units of cross-container traffic, three bring it
    down to 3 (found by enumerating small diamonds).
    """
    return build_request(0, [1, 1, 1, 1], [(2, 1), (3, 1), (1, 1), (2, 1)],
                         [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 3.0)], 3, (4, 4))


def best_fit_gap():
    """Two servers one hop apart; containers X=(1,1), Y=(2,2), Z=(1,1) with
    one unit of traffic X->Y and Y->Z. Best fit splits Y from both; the
    optimum keeps Y with Z."""
    req = AppRequest(
        0,
        [Component(0, 1), Component(1, 1), Component(2, 1)],
        [StreamEdge(0, 1, 1.0), StreamEdge(1, 2, 1.0)],
        [Instance(0, 0, (1, 1)), Instance(1, 1, (1, 1)), Instance(2, 2, (1, 1))],
        [Container(0, (1, 1)), Container(1, (2, 2)), Container(2, (1, 1))],
    )
    state = ClusterState([Server(0, (2, 2)), Server(1, (3, 3))], [[0, 1], [1, 0]])
    from mipsplace.model import IcmpAssignment

    return state, req, IcmpAssignment(0, {0: 0, 1: 1, 2: 2})


def small_cluster(n_servers=3, cap=(10, 10), hop=None) -> ClusterState:
    if hop is None:
        hop = [[0 if a == b else 1 + abs(a - b) for b in range(n_servers)] for a in range(n_servers)]
    return ClusterState([Server(j, cap) for j in range(n_servers)], hop)


def enumerate_icmp(req, alpha):
    """Independent oracle: every feasible instance->container tuple via itertools."""
    n, m = len(req.instances), len(req.containers)
    best = np.inf
    for place in itertools.product(range(m), repeat=n):
        loads = np.zeros((m, req.k))
        for i, c in enumerate(place):
            loads[c] += req.instances[i].demand
        if np.any(loads > np.array([c.capacity for c in req.containers]) + 1e-9):
            continue
        t = sum(rate for i1, i2, rate in req.links if place[i1] != place[i2])
        best = min(best, alpha * t + (1 - alpha) * len(set(place)))
    return best


@pytest.fixture
def diamond():
    return diamond_tradeoff()


@pytest.fixture
def fig_gap():
    return best_fit_gap()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per criterion; the lines are printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
