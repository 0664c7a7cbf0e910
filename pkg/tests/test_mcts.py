import json
import math
import os
import subprocess
import sys
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mipsplace.errors import ContractError, PlacementError
from mipsplace.mcts import (
    MctsConfig,
    SearchTree,
    back_prop,
    best_child,
    csmp_stage,
    expand,
    icmp_stage,
    next_action,
    run_stage,
    simulate,
    traverse,
    ucb1_score,
)
from mipsplace.model import IcmpAssignment, build_request, validate_icmp
from mipsplace.objectives import ObjectiveConfig, brute_force_icmp, icmp_objective
from mipsplace.workload import WorkloadConfig, generate_request
from conftest import diamond_tradeoff, small_cluster


def pair_request(cap=(4, 4)):
    return build_request(0, [1, 1], [(1, 1)] * 2, [(0, 1, 2.0)], 2, cap)


def sample_once(tree):
    """One traverse/simulate/back_prop round through the node API; returns (node, delta)."""
    node = traverse(tree.root)
    delta = simulate(node)
    if delta >= 0:
        back_prop(node, delta)
    return node, delta


class TestUcb1:
    def test_unvisited(self):
        assert ucb1_score(0.0, 0, 5, math.sqrt(2)) == -math.inf

    def test_exploitation(self):
        assert ucb1_score(10.0, 4, 8, 0.0) == 2.0

    def test_formula(self):
        # 2 - sqrt(2) * sqrt(2 ln 8 / 4), evaluated independently
        assert ucb1_score(10.0, 4, 8, math.sqrt(2)) == pytest.approx(0.557973113399117, abs=1e-12)

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            ucb1_score(1.0, -1, 2, 1.0)
        with pytest.raises(ValueError):
            ucb1_score(1.0, 1, 2, -1.0)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(max_samples_per_step=-1), dict(exploration_weight=-0.5), dict(rollout_policy="x"),
        dict(expansion_policy="x"), dict(max_attempts_factor=0), dict(exploration_weight=float("nan")),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            MctsConfig(**kwargs)


class TestTreeOperations:
    def test_fresh_root_expands(self):
        tree = SearchTree(icmp_stage(pair_request(), 1.0), MctsConfig(prior_bias=False))
        node = traverse(tree.root)
        assert node.parent.index == tree.root.index and node.visits == 0
        assert node.action not in tree.root.untried

    def test_leaf_root(self):
        req = build_request(0, [1], [(1, 1)], [], 1, (2, 2))
        tree = SearchTree(icmp_stage(req, 0.5))
        next_action(tree)
        assert tree.root.is_leaf
        assert traverse(tree.root).index == tree.root.index
        with pytest.raises(ContractError):
            next_action(tree)

    def test_back_prop_accumulates(self):
        tree = SearchTree(icmp_stage(pair_request(), 1.0), MctsConfig(prior_bias=False))
        node = traverse(tree.root)
        back_prop(node, 2.0)
        back_prop(node, 4.0)
        back_prop(node, 0.0)
        assert (node.visits, node.total_reward) == (3, 6.0)
        assert (tree.root.visits, tree.root.total_reward) == (3, 6.0)
        with pytest.raises(ValueError):
            back_prop(node, -1.0)

    def test_best_child_exploits(self):
        tree = SearchTree(icmp_stage(pair_request(), 1.0), MctsConfig(prior_bias=False))
        a, b = traverse(tree.root), traverse(tree.root)
        back_prop(a, 2.0)  # mean over N+1: 1.0
        back_prop(b, 1.5 * 2)  # 1.5
        assert best_child(tree.root, 0.0).index == a.index

    def test_single_child(self):
        req = build_request(0, [1], [(1, 1)], [], 1, (2, 2))
        tree = SearchTree(icmp_stage(req, 0.5))
        child = traverse(tree.root)
        back_prop(child, 0.5)
        assert best_child(tree.root, math.sqrt(2)).index == child.index

    def test_unvisited_child_precedes(self):
        tree = SearchTree(icmp_stage(pair_request(), 1.0), MctsConfig(prior_bias=False))
        a, b = traverse(tree.root), traverse(tree.root)
        back_prop(a, 0.0)
        assert best_child(tree.root, 1.0).index == b.index

    def test_expand_single_action(self):
        req = build_request(0, [1], [(1, 1)], [], 1, (2, 2))
        tree = SearchTree(icmp_stage(req, 0.5))
        child = expand(tree.root)
        assert child.action == (0, 0)
        with pytest.raises(ContractError):
            expand(tree.root)

    def test_scored_expansion_prefers_adjacent(self):
        stage = icmp_stage(pair_request(), 1.0)
        for seed in range(20):
            tree = SearchTree(stage, MctsConfig(prior_bias=False), seed=seed)
            first = expand(tree.root)
            item, target = first.action
            assert expand(first).action == (1 - item, target)

    def test_uniform_expansion_without_adjacency(self):
        req = build_request(0, [2], [(1, 1)], [], 2, (4, 4))
        seen = set()
        for seed in range(40):
            tree = SearchTree(icmp_stage(req, 0.5), seed=seed)
            seen.add(expand(tree.root).action)
        assert seen == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_simulate_leaf_and_invalid(self):
        req = build_request(0, [1], [(1, 1)], [], 1, (2, 2))
        tree = SearchTree(icmp_stage(req, 0.5))
        next_action(tree)
        assert simulate(tree.root) == 0.5
        stuck = build_request(0, [3], [(3, 3)], [], 2, (4, 4))
        tree = SearchTree(icmp_stage(stuck, 0.5))
        assert simulate(tree.root, "uniform") == -1.0
        assert simulate(tree.root, "greedy") == -1.0

    def test_greedy_chain_colocates(self):
        req = build_request(0, [2, 2, 2], [(1, 1)] * 3, [(0, 1, 3.0), (1, 2, 5.0)], 3, (20, 20))
        tree = SearchTree(icmp_stage(req, 1.0), seed=4)
        assert simulate(tree.root, "greedy") == 0.0

    @pytest.mark.parametrize("prior", [False, True])
    def test_statistics_invariants(self, prior):
        req = generate_request(WorkloadConfig(seed=5), 0)
        tree = SearchTree(icmp_stage(req, 0.5), MctsConfig(prior_bias=prior), seed=1)
        rewards = defaultdict(list)
        accepted = 0
        for _ in range(400):
            untried_before = bool(tree.root.untried)
            node, delta = sample_once(tree)
            if prior and untried_before:
                # an unbiased untried action exists, so no biased child may be entered
                path = node
                while path.parent is not None and path.parent.index != tree.root.index:
                    path = path.parent
                assert not path.prior
            if delta < 0:
                continue
            accepted += 1
            v = node
            while v is not None:
                rewards[v.index].append(delta)
                v = v.parent
        root = tree.root
        assert accepted > 100
        assert root.visits == accepted
        assert sum(c.visits for c in root.children) <= root.visits
        stack = [root]
        while stack:
            v = stack.pop()
            kids = v.children
            stack.extend(kids)
            assert len({c.action for c in kids}) == len(kids)
            real = v.visits - int(v.prior)
            assert real == len(rewards[v.index])
            if real:
                q = v.total_reward - (tree.stage.prior_cost if v.prior else 0.0)
                assert q / real == pytest.approx(np.mean(rewards[v.index]), rel=1e-12)
            assert v.total_reward >= 0


class TestNextAction:
    def test_single_feasible_action(self):
        req = build_request(0, [1], [(3, 3)], [], 1, (4, 4))
        tree = SearchTree(icmp_stage(req, 0.5), MctsConfig(max_samples_per_step=1))
        assert next_action(tree)[0] == (0, 0)

    def test_colocates_pair(self):
        for seed in range(10):
            res = run_stage(icmp_stage(pair_request(), 1.0), MctsConfig(max_samples_per_step=100), seed)
            assert res.mapping[0] == res.mapping[1] and res.value == 0.0

    def test_zero_samples_fail(self):
        tree = SearchTree(icmp_stage(pair_request(), 1.0), MctsConfig(max_samples_per_step=0))
        with pytest.raises(PlacementError):
            next_action(tree)

    def test_subtree_reused(self):
        req = generate_request(WorkloadConfig(seed=5), 0)
        tree = SearchTree(icmp_stage(req, 0.5), MctsConfig(max_samples_per_step=200))
        _, root = next_action(tree)
        assert root.visits > 0 and root.index == 0 and root.parent is None

    def test_infeasible_request(self):
        req = build_request(0, [3], [(3, 3)], [], 2, (4, 4))
        with pytest.raises(PlacementError):
            run_stage(icmp_stage(req, 0.5), MctsConfig(max_samples_per_step=5))


class TestRunStage:
    def test_empty(self):
        req = build_request(0, [], [], [], 1, (2, 2))
        res = run_stage(icmp_stage(req, 0.5))
        assert res.mapping == {} and res.actions == ()

    def test_one_instance(self):
        req = build_request(0, [1], [(1, 1)], [], 1, (2, 2))
        assert run_stage(icmp_stage(req, 0.5)).mapping == {0: 0}

    @settings(max_examples=25)
    @given(st.integers(0, 2000), st.sampled_from(["uniform", "greedy"]), st.booleans())
    def test_valid_and_deterministic(self, seed, rollout, prior):
        req = generate_request(WorkloadConfig(seed=seed), 0)
        cfg = MctsConfig(max_samples_per_step=30, rollout_policy=rollout, prior_bias=prior)
        try:
            a = run_stage(icmp_stage(req, 0.5), cfg, seed)
        except PlacementError:
            return
        b = run_stage(icmp_stage(req, 0.5), cfg, seed)
        assert a == b
        x = IcmpAssignment(req.id, a.mapping)
        assert validate_icmp(req, x)
        assert a.value == pytest.approx(icmp_objective(req, x, ObjectiveConfig(0.5)), abs=1e-9)
        assert all(s <= 30 for s in a.samples) and all(t <= 300 for t in a.attempts)

    def test_csmp_stage_valid(self, fig_gap):
        state, req, x = fig_gap
        res = run_stage(csmp_stage(state, req, x), MctsConfig(max_samples_per_step=200), 1)
        assert res.value == 1.0

    def test_diamond_near_optimal(self):
        req = diamond_tradeoff()
        _, opt = brute_force_icmp(req, ObjectiveConfig(0.5))
        stage = icmp_stage(req, 0.5)
        hits = sum(run_stage(stage, MctsConfig(max_samples_per_step=500), s).value <= 1.05 * opt
                   for s in range(100))
        assert hits >= 95

    def test_witness_fallback(self):
        req = generate_request(WorkloadConfig(seed=30), 0)
        cfg = MctsConfig(max_samples_per_step=2, max_attempts_factor=1, rollout_policy="uniform")
        res = run_stage(icmp_stage(req, 0.5), cfg, 30)
        assert res.fallback_steps >= 1
        assert validate_icmp(req, IcmpAssignment(req.id, res.mapping))

    def test_witness_is_cheapest_sample(self):
        req = generate_request(WorkloadConfig(seed=5), 0)
        stage = icmp_stage(req, 0.5)
        tree = SearchTree(stage, MctsConfig(max_samples_per_step=100), seed=2)
        next_action(tree)
        mapping, value = tree.witness(tree.root_index)
        st_ = stage.initial_state()
        for i, t in mapping.items():
            st_ = stage.apply(st_, (i, t))
        assert stage.reward(st_) == pytest.approx(value, abs=1e-9)
        assert mapping[tree.actions[0][0]] == tree.actions[0][1]


JIT_SCRIPT = """
import json
from mipsplace import _jit
from mipsplace.mcts import MctsConfig, csmp_stage, icmp_stage, run_stage
from mipsplace.baselines import ffd_icmp
from mipsplace.topology import ClusterConfig, build_cluster
from mipsplace.workload import WorkloadConfig, generate_request
out = {"jit": _jit.JIT_ENABLED, "runs": []}
state = build_cluster(ClusterConfig())
for s in range(3):
    req = generate_request(WorkloadConfig(seed=s), 0)
    for rollout in ("uniform", "greedy"):
        cfg = MctsConfig(max_samples_per_step=40, rollout_policy=rollout)
        try:
            r = run_stage(icmp_stage(req, 0.5), cfg, s)
            out["runs"].append([sorted(r.mapping.items()), r.value.hex(), list(r.samples)])
        except Exception as e:
            out["runs"].append(str(e))
        x = ffd_icmp(req) if s != 1 else None
        if x is not None:
            r = run_stage(csmp_stage(state, req, x), cfg, s)
            out["runs"].append([sorted(r.mapping.items()), r.value.hex()])
print(json.dumps(out))
"""


def _run_script(disable):
    env = dict(os.environ)
    env.pop("MIPSPLACE_DISABLE_JIT", None)
    if disable:
        env["MIPSPLACE_DISABLE_JIT"] = "1"
    proc = subprocess.run([sys.executable, "-c", JIT_SCRIPT], env=env, capture_output=True, text=True,
                          check=True, timeout=600)
    return json.loads(proc.stdout)


@pytest.mark.slow
def test_jit_and_fallback_agree_bit_for_bit():
    compiled, plain = _run_script(False), _run_script(True)
    assert compiled["jit"] and not plain["jit"]
    assert compiled["runs"] == plain["runs"]
