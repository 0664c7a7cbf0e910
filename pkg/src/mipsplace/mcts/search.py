"""Monte Carlo tree search with UCT over a :class:`PlacementStage`.

Rewards are costs: every selection rule takes an argmin. Each call of
:func:`next_action` runs up to ``max_samples_per_step`` accepted samples
(traverse, simulate, back-propagate), commits the exploitation-best child and
keeps that child's subtree as the next root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, PlacementError
from . import kernels as K
from .stage import PlacementStage, StageState

ROLLOUTS = {"uniform": K.ROLLOUT_UNIFORM, "greedy": K.ROLLOUT_GREEDY}
EXPANSIONS = {"uniform": K.EXPAND_UNIFORM, "scored": K.EXPAND_SCORED}

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class MctsConfig:
    max_samples_per_step: int = 500
    exploration_weight: float = math.sqrt(2.0)
    rollout_policy: str = "greedy"
    expansion_policy: str = "scored"
    prior_bias: bool = True
    prior_q: float | None = None  # None: the stage's upper cost bound
    max_attempts_factor: int = 10

    def __post_init__(self):
        if self.max_samples_per_step < 0:
            raise ValueError("max_samples_per_step must be >= 0")
        if not self.exploration_weight >= 0:
            raise ValueError("exploration_weight must be >= 0")
        if self.rollout_policy not in ROLLOUTS:
            raise ValueError(f"rollout_policy must be one of {sorted(ROLLOUTS)}")
        if self.expansion_policy not in EXPANSIONS:
            raise ValueError(f"expansion_policy must be one of {sorted(EXPANSIONS)}")
        if self.max_attempts_factor < 1:
            raise ValueError("max_attempts_factor must be >= 1")

    def replace(self, **changes) -> "MctsConfig":
        fields = {**self.__dict__, **changes}
        return MctsConfig(**fields)


def seed_state(seed: int) -> np.ndarray:
    """xorshift64 state from a 64-bit seed via one splitmix64 round (never zero)."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return np.array([z or 0x9E3779B97F4A7C15], dtype=np.uint64)


def ucb1_score(node_q: float, node_n: int, parent_n: int, omega: float) -> float:
    """Q/(N+1) - omega*sqrt(2 ln(parent_N)/N); ``-inf`` for an unvisited node."""
    if node_n < 0 or parent_n < 0 or omega < 0 or node_q < 0:
        raise ValueError("ucb1_score arguments must be nonnegative")
    if node_n == 0:
        return -math.inf
    if parent_n < 1:
        raise ValueError("parent must have been visited when the child has")
    return node_q / (node_n + 1) - omega * math.sqrt(2.0 * math.log(parent_n) / node_n)


class SearchTree:
    """Growable node arrays plus the committed prefix (root state) of one stage."""

    def __init__(self, stage: PlacementStage, cfg: MctsConfig | None = None, seed: int = 0,
                 capacity: int | None = None):
        self.stage = stage
        self.cfg = cfg or MctsConfig()
        self.rng = seed_state(seed)
        n, m = stage.n_items, stage.n_targets
        if capacity is None:
            capacity = max(1024, 4 * (n * m + 2))
        self.tree_i = np.zeros((capacity, K.NCOL), dtype=np.int64)
        self.tree_q = np.zeros(capacity)
        self.meta = np.zeros(2, dtype=np.int64)
        self.pool_a = np.zeros((max(64, 4 * (n + 1)), n), dtype=np.int32)
        self.pool_v = np.full(len(self.pool_a), np.inf)
        self.root_state = stage.initial_state()
        self.work = stage.initial_state()
        self.cand = np.zeros(max(n * m, n, 1), dtype=np.int64)
        self.mark = np.zeros((n, m), dtype=np.int8)
        self.adj = np.zeros((n, m), dtype=np.int8)
        prior_q = stage.prior_cost if self.cfg.prior_q is None else float(self.cfg.prior_q)
        self.cfg_i = np.array([
            self.cfg.max_samples_per_step,
            self.cfg.max_samples_per_step * self.cfg.max_attempts_factor,
            ROLLOUTS[self.cfg.rollout_policy],
            EXPANSIONS[self.cfg.expansion_policy],
            int(bool(self.cfg.prior_bias)),
        ], dtype=np.int64)
        self.cfg_f = np.array([self.cfg.exploration_weight, prior_q, stage.eps])
        self.root_index = K.new_node(self.tree_i, self.tree_q, self.meta, -1, -1, -1)
        self.actions: list[tuple[int, int]] = []
        self.samples: list[int] = []
        self.attempts: list[int] = []
        self.fallback_steps = 0

    # -- bookkeeping

    @property
    def n_nodes(self) -> int:
        return int(self.meta[0])

    @property
    def root(self) -> "SearchNode":
        return SearchNode(self, self.root_index)

    def node(self, index: int) -> "SearchNode":
        return SearchNode(self, index)

    def ensure_space(self, extra: int):
        need = self.n_nodes + extra
        if need <= len(self.tree_q):
            return
        cap = len(self.tree_q)
        while cap < need:
            cap *= 2
        grown_i = np.zeros((cap, K.NCOL), dtype=np.int64)
        grown_i[: self.n_nodes] = self.tree_i[: self.n_nodes]
        grown_q = np.zeros(cap)
        grown_q[: self.n_nodes] = self.tree_q[: self.n_nodes]
        self.tree_i, self.tree_q = grown_i, grown_q

    def _grow_pool(self):
        need = int(self.meta[1]) + self.stage.n_items + 1
        if need <= len(self.pool_v):
            return
        cap = 2 * len(self.pool_v)
        while cap < need:
            cap *= 2
        grown_a = np.zeros((cap, self.stage.n_items), dtype=np.int32)
        grown_a[: len(self.pool_a)] = self.pool_a
        grown_v = np.full(cap, np.inf)
        grown_v[: len(self.pool_v)] = self.pool_v
        self.pool_a, self.pool_v = grown_a, grown_v

    def witness(self, index: int) -> tuple[dict[int, int], float] | None:
        """Cheapest complete mapping sampled through node ``index``, with its cost."""
        slot = int(self.tree_i[index, K.WIT])
        if slot < 0:
            return None
        return ({i: int(t) for i, t in enumerate(self.pool_a[slot])}, float(self.pool_v[slot]))

    def state_of(self, index: int) -> StageState:
        st = self.stage.initial_state()
        K.load_state(self.tree_i, index, self.root_index, self.root_state.assign, self.root_state.load,
                     self.root_state.count, self.stage.demand, st.assign, st.load, st.count)
        return st

    def _reserve(self) -> int:
        return self.stage.n_items * self.stage.n_targets + 2

    def _ensure_init(self, index: int, st: StageState):
        if self.tree_i[index, K.FLAGS] & K.F_INIT == 0 and not self.stage.is_leaf(st):
            self.ensure_space(self._reserve())
            K.init_node(self.tree_i, self.tree_q, self.meta, index, st.assign, st.load, st.count,
                        self.stage.demand, self.stage.capacity, self.stage.adjacency,
                        self.cfg_i, self.cfg_f, self.adj)

    # -- one decision step

    def advance(self, child: int):
        """Commit ``child``'s action and re-root the tree at its subtree."""
        i, t = int(self.tree_i[child, K.ITEM]), int(self.tree_i[child, K.TARGET])
        s = self.root_state
        K.apply_action(s.assign, s.load, s.count, self.stage.demand, i, t)
        size = K.subtree_size(self.tree_i, child)
        cap = max(1024, 2 * size + 4 * self._reserve())
        out_i = np.zeros((cap, K.NCOL), dtype=np.int64)
        out_q = np.zeros(cap)
        K.extract_subtree(self.tree_i, self.tree_q, child, out_i, out_q)
        self.tree_i, self.tree_q = out_i, out_q
        self.meta[0] = size
        self.root_index = 0
        self.actions.append((i, t))


@dataclass(frozen=True)
class SearchNode:
    """View of one node of a :class:`SearchTree`."""

    tree: SearchTree = field(repr=False)
    index: int

    def _col(self, col):
        return int(self.tree.tree_i[self.index, col])

    @property
    def visits(self) -> int:
        return self._col(K.VISITS)

    @property
    def total_reward(self) -> float:
        return float(self.tree.tree_q[self.index])

    @property
    def prior(self) -> bool:
        return bool(self._col(K.PRIOR))

    @property
    def dead(self) -> bool:
        return bool(self._col(K.FLAGS) & K.F_DEAD)

    @property
    def action(self) -> tuple[int, int] | None:
        if self.index == self.tree.root_index:
            return None
        return self._col(K.ITEM), self._col(K.TARGET)

    @property
    def parent(self) -> "SearchNode | None":
        if self.index == self.tree.root_index:
            return None
        return SearchNode(self.tree, self._col(K.PARENT))

    @property
    def children(self) -> list["SearchNode"]:
        out = []
        c = self._col(K.FIRST)
        while c >= 0:
            out.append(SearchNode(self.tree, c))
            c = int(self.tree.tree_i[c, K.NEXT])
        return sorted(out, key=lambda ch: ch.action)

    @property
    def state(self) -> StageState:
        return self.tree.state_of(self.index)

    @property
    def is_leaf(self) -> bool:
        return self.tree.stage.is_leaf(self.state)

    @property
    def untried(self) -> list[tuple[int, int]]:
        st = self.state
        if self.tree.stage.is_leaf(st):
            return []
        self.tree._ensure_init(self.index, st)
        if self.dead:
            return []
        taken = {ch.action for ch in self.children}
        return [a for a in self.tree.stage.feasible_actions(st) if a not in taken]


def best_child(node: SearchNode, omega: float) -> SearchNode:
    t = node.tree
    c = K.select_child(t.tree_i, t.tree_q, node.index, float(omega), t.stage.n_targets)
    if c < 0:
        raise PlacementError("dead end: node has no live children", t.stage.to_mapping(node.state),
                             stage=t.stage.name)
    return SearchNode(t, int(c))


def expand(node: SearchNode) -> SearchNode:
    t = node.tree
    st = node.state
    t._ensure_init(node.index, st)
    if t.tree_i[node.index, K.UNTRIED] <= 0:
        raise ContractError("expand called on a node without untried actions")
    t.ensure_space(t._reserve())
    c = K.expand(t.tree_i, t.tree_q, t.meta, node.index, st.assign, st.load, st.count,
                 t.stage.demand, t.stage.capacity, t.stage.adjacency, t.cfg_i, t.cfg_f, t.rng,
                 t.cand, t.mark, t.adj)
    if c < 0:
        raise ContractError("no untried action left")
    return SearchNode(t, int(c))


def traverse(root: SearchNode) -> SearchNode:
    t = root.tree
    if root.index != t.root_index:
        raise ContractError("traverse starts from the tree root")
    t.ensure_space(t._reserve())
    w, r = t.work, t.root_state
    c = K.traverse(t.tree_i, t.tree_q, t.meta, t.root_index, r.assign, r.load, r.count,
                   w.assign, w.load, w.count, t.stage.demand, t.stage.capacity, t.stage.adjacency,
                   t.cfg_i, t.cfg_f, t.rng, t.cand, t.mark, t.adj)
    return SearchNode(t, int(c))


def simulate(node: SearchNode, policy: str | None = None) -> float:
    """Roll out from ``node``'s state; the leaf cost, or -1.0 for an invalid mapping."""
    t = node.tree
    st = node.state
    if node.dead:
        return K.INVALID
    pol = ROLLOUTS[policy or t.cfg.rollout_policy]
    s = t.stage
    return float(K.rollout(st.assign, st.load, st.count, s.demand, s.capacity, s.traffic, s.distance,
                           s.coef, s.eps, pol, t.rng, t.cand))


def back_prop(node: SearchNode, delta: float):
    if delta < 0:
        raise ValueError("only accepted (nonnegative) samples are back-propagated")
    t = node.tree
    K.back_prop(t.tree_i, t.tree_q, node.index, t.root_index, float(delta))


def next_action(tree: SearchTree) -> tuple[tuple[int, int], SearchNode]:
    """Sample from the current root, commit the best action, re-root; returns (action, new root)."""
    if tree.stage.is_leaf(tree.root_state):
        raise ContractError("root is already a complete assignment")
    if tree.cfg.max_samples_per_step <= 0:
        raise PlacementError("no samples allowed per step", tree.stage.to_mapping(tree.root_state),
                             stage=tree.stage.name)
    prog = np.zeros(2, dtype=np.int64)
    s, r, w = tree.stage, tree.root_state, tree.work
    while True:
        status = K.search_step(tree.tree_i, tree.tree_q, tree.meta, tree.root_index,
                               r.assign, r.load, r.count, w.assign, w.load, w.count,
                               s.demand, s.capacity, s.traffic, s.distance, s.adjacency, s.coef,
                               tree.cfg_i, tree.cfg_f, tree.rng, tree.cand, tree.mark, tree.adj,
                               tree.pool_a, tree.pool_v, prog)
        if status == K.STEP_NEED_SPACE:
            tree.ensure_space(len(tree.tree_q) + tree._reserve())
            tree._grow_pool()
            continue
        break
    tree.samples.append(int(prog[0]))
    tree.attempts.append(int(prog[1]))
    child = K.final_child(tree.tree_i, tree.tree_q, tree.root_index, s.n_targets)
    if child < 0:
        child = _witness_child(tree)
    if child < 0:
        raise PlacementError(f"{s.name}: no valid sample after {int(prog[1])} attempts "
                             f"at step {len(tree.actions)}", s.to_mapping(r), stage=s.name)
    tree.advance(int(child))
    return tree.actions[-1], tree.root


def _witness_child(tree: SearchTree) -> int:
    """Child on the root's witness path, created if missing; -1 without a witness.

    Used when a step yields no sampled child: the root was reached through a
    valid completion, so following it cannot dead-end.
    """
    root = tree.root_index
    slot = int(tree.tree_i[root, K.WIT])
    if slot < 0:
        return -1
    assign = tree.root_state.assign
    i = int(np.flatnonzero(assign < 0)[0])
    t = int(tree.pool_a[slot, i])
    c = int(tree.tree_i[root, K.FIRST])
    while c >= 0 and not (tree.tree_i[c, K.ITEM] == i and tree.tree_i[c, K.TARGET] == t):
        c = int(tree.tree_i[c, K.NEXT])
    if c < 0:
        tree.ensure_space(1)
        c = int(K.new_node(tree.tree_i, tree.tree_q, tree.meta, root, i, t))
    if tree.tree_i[c, K.WIT] < 0:
        tree.tree_i[c, K.WIT] = slot
    tree.fallback_steps += 1
    return c


@dataclass(frozen=True)
class StageResult:
    mapping: dict[int, int]
    value: float
    actions: tuple[tuple[int, int], ...]
    samples: tuple[int, ...]
    attempts: tuple[int, ...]
    fallback_steps: int = 0

    @property
    def accepted_samples(self) -> int:
        return sum(self.samples)


def run_stage(stage: PlacementStage, cfg: MctsConfig | None = None, seed: int = 0) -> StageResult:
    """Place every item by repeated :func:`next_action`; deterministic for a given seed."""
    tree = SearchTree(stage, cfg, seed)
    for _ in range(stage.n_items):
        next_action(tree)
    final = tree.root_state
    if not stage.satisfies_constraints(final):  # pragma: no cover - actions are feasible by construction
        raise PlacementError(f"{stage.name}: final mapping violates constraints", stage.to_mapping(final))
    return StageResult(stage.to_mapping(final), stage.reward(final), tuple(tree.actions),
                       tuple(tree.samples), tuple(tree.attempts), tree.fallback_steps)
