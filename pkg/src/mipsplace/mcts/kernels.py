"""Array kernels for the tree search and its rollouts.

Both mapping stages reduce to one weighted assignment problem: place ``n``
items onto ``m`` targets under vector capacities, minimising

    coef[0] * sum_{i,j} w[i, j] * dist[t(i), t(j)] + coef[1] * (#used targets)

Stage 1 uses dist = 1 - identity and coef = (alpha, 1 - alpha); stage 2 uses the
hop-cost matrix and coef = (1, 0).

The tree is a struct-of-arrays: ``tree_i[node]`` holds the integer columns
below, ``tree_q[node]`` the accumulated cost. Node state is never stored; it is
rebuilt by replaying actions from the step root.

Each node that received a valid sample also points (column ``WIT``) into a
pool of complete assignments: the cheapest completion sampled through it.
``meta = [nodes used, pool slots used]``.

Every function here compiles with numba or runs as plain Python depending on
``MIPSPLACE_DISABLE_JIT``; random numbers come from an explicit xorshift64
state so both paths draw the same stream.
"""

import math

import numpy as np

from .._jit import njit

# tree_i columns
PARENT = 0
ITEM = 1
TARGET = 2
FIRST = 3
NEXT = 4
VISITS = 5
PRIOR = 6
UNTRIED = 7
FLAGS = 8
WIT = 9
NCOL = 10

F_INIT = 1
F_DEAD = 2

# cfg_i layout
C_SAMPLES = 0
C_ATTEMPTS = 1
C_ROLLOUT = 2
C_EXPAND = 3
C_PRIOR = 4
# cfg_f layout
C_OMEGA = 0
C_PRIOR_Q = 1
C_EPS = 2

ROLLOUT_UNIFORM = 0
ROLLOUT_GREEDY = 1
EXPAND_UNIFORM = 0
EXPAND_SCORED = 1

STEP_DONE = 0
STEP_NEED_SPACE = 1
STEP_ROOT_DEAD = 2

INVALID = -1.0
INV_2_53 = 1.0 / 9007199254740992.0


# --------------------------------------------------------------------------- rng

@njit
def rng_next(state):
    x = state[0]
    x ^= x << np.uint64(13)
    x ^= x >> np.uint64(7)
    x ^= x << np.uint64(17)
    state[0] = x
    return x


@njit
def rng_uniform(state):
    """Uniform float in [0, 1) from the top 53 bits."""
    return float(rng_next(state) >> np.uint64(11)) * INV_2_53


@njit
def rng_below(state, n):
    k = int(rng_uniform(state) * n)
    if k >= n:
        k = n - 1
    return k


# ------------------------------------------------------------- assignment state

@njit
def fits(load, cap, demand, t, i, eps):
    for k in range(demand.shape[1]):
        if load[t, k] + demand[i, k] > cap[t, k] + eps:
            return False
    return True


@njit
def apply_action(assign, load, count, demand, i, t):
    assign[i] = t
    for k in range(demand.shape[1]):
        load[t, k] += demand[i, k]
    count[t] += 1


@njit
def placement_delta(assign, count, w, dist, coef, i, t):
    """Objective change from placing unplaced item ``i`` on target ``t``."""
    acc = 0.0
    for j in range(assign.shape[0]):
        tj = assign[j]
        if tj >= 0:
            if w[i, j] != 0.0:
                acc += w[i, j] * dist[t, tj]
            if w[j, i] != 0.0:
                acc += w[j, i] * dist[tj, t]
    delta = coef[0] * acc
    if count[t] == 0:
        delta += coef[1]
    return delta


@njit
def objective(assign, count, w, dist, coef):
    acc = 0.0
    n = assign.shape[0]
    for i in range(n):
        ti = assign[i]
        if ti < 0:
            continue
        for j in range(n):
            tj = assign[j]
            if tj >= 0 and w[i, j] != 0.0:
                acc += w[i, j] * dist[ti, tj]
    used = 0
    for t in range(count.shape[0]):
        if count[t] > 0:
            used += 1
    return coef[0] * acc + coef[1] * used


@njit
def mark_adjacent(assign, adjw, adj):
    """adj[i, t] = 1 when unplaced ``i`` shares a stream with an item already on ``t``."""
    n = assign.shape[0]
    adj[:, :] = 0
    for j in range(n):
        tj = assign[j]
        if tj < 0:
            continue
        for i in range(n):
            if assign[i] < 0 and adjw[i, j] > 0.0:
                adj[i, tj] = 1


@njit
def greedy_target(assign, load, count, demand, cap, w, dist, coef, eps, i):
    """Feasible target with minimum placement delta (smallest index on ties), or -1."""
    best_t = -1
    best = np.inf
    for t in range(cap.shape[0]):
        if fits(load, cap, demand, t, i, eps):
            d = placement_delta(assign, count, w, dist, coef, i, t)
            if d < best:
                best = d
                best_t = t
    return best_t


@njit
def rollout(assign, load, count, demand, cap, w, dist, coef, eps, policy, rng, unplaced):
    """Complete the assignment in place; return the leaf objective or INVALID."""
    n = assign.shape[0]
    m = cap.shape[0]
    k = 0
    for i in range(n):
        if assign[i] < 0:
            unplaced[k] = i
            k += 1
    while k > 0:
        if policy == ROLLOUT_GREEDY:
            idx = rng_below(rng, k)
            i = unplaced[idx]
            t = greedy_target(assign, load, count, demand, cap, w, dist, coef, eps, i)
            if t < 0:
                return INVALID
        else:
            nf = 0
            for x in range(k):
                for t in range(m):
                    if fits(load, cap, demand, t, unplaced[x], eps):
                        nf += 1
            if nf == 0:
                return INVALID
            r = rng_below(rng, nf)
            idx = -1
            t = -1
            for x in range(k):
                for tt in range(m):
                    if fits(load, cap, demand, tt, unplaced[x], eps):
                        if r == 0:
                            idx = x
                            t = tt
                        r -= 1
                if idx >= 0:
                    break
            i = unplaced[idx]
        apply_action(assign, load, count, demand, i, t)
        unplaced[idx] = unplaced[k - 1]
        k -= 1
    return objective(assign, count, w, dist, coef)


# ------------------------------------------------------------------------- tree

@njit
def new_node(tree_i, tree_q, meta, parent, i, t):
    idx = meta[0]
    meta[0] += 1
    tree_i[idx, PARENT] = parent
    tree_i[idx, ITEM] = i
    tree_i[idx, TARGET] = t
    tree_i[idx, FIRST] = -1
    tree_i[idx, NEXT] = -1
    tree_i[idx, VISITS] = 0
    tree_i[idx, PRIOR] = 0
    tree_i[idx, UNTRIED] = 0
    tree_i[idx, FLAGS] = 0
    tree_i[idx, WIT] = -1
    tree_q[idx] = 0.0
    if parent >= 0:
        tree_i[idx, NEXT] = tree_i[parent, FIRST]
        tree_i[parent, FIRST] = idx
    return idx


@njit
def load_state(tree_i, node, root, r_assign, r_load, r_count, demand, assign, load, count):
    """Rebuild ``node``'s partial assignment; returns the number of placed items."""
    assign[:] = r_assign
    load[:, :] = r_load
    count[:] = r_count
    v = node
    while v != root:
        apply_action(assign, load, count, demand, tree_i[v, ITEM], tree_i[v, TARGET])
        v = tree_i[v, PARENT]
    placed = 0
    for i in range(assign.shape[0]):
        if assign[i] >= 0:
            placed += 1
    return placed


@njit
def init_node(tree_i, tree_q, meta, node, assign, load, count, demand, cap, adjw,
              cfg_i, cfg_f, adj):
    """Count feasible actions; attach prior-biased children for unscored actions.

    A state where some unplaced item fits nowhere can never complete, so the
    node is marked dead immediately.
    """
    n = assign.shape[0]
    m = cap.shape[0]
    eps = cfg_f[C_EPS]
    nfeas = 0
    for i in range(n):
        if assign[i] >= 0:
            continue
        ci = 0
        for t in range(m):
            if fits(load, cap, demand, t, i, eps):
                ci += 1
        if ci == 0:
            tree_i[node, UNTRIED] = 0
            tree_i[node, FLAGS] |= F_INIT | F_DEAD
            return
        nfeas += ci
    untried = nfeas
    if cfg_i[C_PRIOR] != 0 and nfeas > 0:
        mark_adjacent(assign, adjw, adj)
        npos = 0
        for i in range(n):
            if assign[i] < 0:
                for t in range(m):
                    if adj[i, t] != 0 and fits(load, cap, demand, t, i, eps):
                        npos += 1
        # biasing every action would only reorder them; skip when nothing scores
        if 0 < npos < nfeas:
            for i in range(n):
                if assign[i] < 0:
                    for t in range(m):
                        if adj[i, t] == 0 and fits(load, cap, demand, t, i, eps):
                            c = new_node(tree_i, tree_q, meta, node, i, t)
                            tree_i[c, VISITS] = 1
                            tree_i[c, PRIOR] = 1
                            tree_q[c] = cfg_f[C_PRIOR_Q]
            untried = npos
    tree_i[node, UNTRIED] = untried
    tree_i[node, FLAGS] |= F_INIT


@njit
def expand(tree_i, tree_q, meta, node, assign, load, count, demand, cap, adjw,
           cfg_i, cfg_f, rng, cand, mark, adj):
    """Attach one untried action as a new child; -1 if nothing is untried."""
    n = assign.shape[0]
    m = cap.shape[0]
    eps = cfg_f[C_EPS]
    mark[:, :] = 0
    c = tree_i[node, FIRST]
    while c >= 0:
        mark[tree_i[c, ITEM], tree_i[c, TARGET]] = 1
        c = tree_i[c, NEXT]
    scored = cfg_i[C_EXPAND] == EXPAND_SCORED
    if scored:
        mark_adjacent(assign, adjw, adj)
    best = -1
    ncand = 0
    for i in range(n):
        if assign[i] >= 0:
            continue
        for t in range(m):
            if mark[i, t] != 0 or not fits(load, cap, demand, t, i, eps):
                continue
            s = 0
            if scored:
                s = adj[i, t]
            if s > best:
                best = s
                ncand = 0
            if s == best:
                cand[ncand] = i * m + t
                ncand += 1
    if ncand == 0:
        return -1
    pick = cand[rng_below(rng, ncand)]
    child = new_node(tree_i, tree_q, meta, node, pick // m, pick % m)
    tree_i[node, UNTRIED] -= 1
    return child


@njit
def ucb1(q, n, parent_n, omega):
    """Minimum-UCB1 score: Q/(N+1) - omega*sqrt(2 ln N_parent / N); -inf if unvisited."""
    if n == 0:
        return -np.inf
    ln_parent = math.log(parent_n) if parent_n > 0 else 0.0
    return q / (n + 1.0) - omega * math.sqrt(2.0 * ln_parent / n)


@njit
def select_child(tree_i, tree_q, node, omega, m):
    """Argmin UCB1 over live children, ties to the smallest action index; -1 if none."""
    parent_n = tree_i[node, VISITS]
    best = -1
    best_score = np.inf
    best_key = 0
    c = tree_i[node, FIRST]
    while c >= 0:
        if tree_i[c, FLAGS] & F_DEAD == 0:
            score = ucb1(tree_q[c], tree_i[c, VISITS], parent_n, omega)
            key = tree_i[c, ITEM] * m + tree_i[c, TARGET]
            if best < 0 or score < best_score or (score == best_score and key < best_key):
                best = c
                best_score = score
                best_key = key
        c = tree_i[c, NEXT]
    return best


@njit
def final_child(tree_i, tree_q, node, m):
    """Exploitation pick (omega = 0) among children that received real samples."""
    best = -1
    best_score = np.inf
    best_key = 0
    c = tree_i[node, FIRST]
    while c >= 0:
        real = tree_i[c, VISITS] - tree_i[c, PRIOR]
        if tree_i[c, FLAGS] & F_DEAD == 0 and real > 0:
            score = tree_q[c] / (tree_i[c, VISITS] + 1.0)
            key = tree_i[c, ITEM] * m + tree_i[c, TARGET]
            if best < 0 or score < best_score or (score == best_score and key < best_key):
                best = c
                best_score = score
                best_key = key
        c = tree_i[c, NEXT]
    return best


@njit
def traverse(tree_i, tree_q, meta, root, r_assign, r_load, r_count, assign, load, count,
             demand, cap, adjw, cfg_i, cfg_f, rng, cand, mark, adj):
    """Descend by UCB1 until a leaf, a dead node, or a node with untried actions
    (which is expanded). The work state ends as the returned node's state."""
    n = assign.shape[0]
    m = cap.shape[0]
    assign[:] = r_assign
    load[:, :] = r_load
    count[:] = r_count
    placed = 0
    for i in range(n):
        if assign[i] >= 0:
            placed += 1
    node = root
    while True:
        if placed == n:
            return node
        if tree_i[node, FLAGS] & F_INIT == 0:
            init_node(tree_i, tree_q, meta, node, assign, load, count, demand, cap, adjw,
                      cfg_i, cfg_f, adj)
        if tree_i[node, FLAGS] & F_DEAD != 0:
            return node
        if tree_i[node, UNTRIED] > 0:
            child = expand(tree_i, tree_q, meta, node, assign, load, count, demand, cap, adjw,
                           cfg_i, cfg_f, rng, cand, mark, adj)
            if child < 0:
                tree_i[node, UNTRIED] = 0
                continue
            apply_action(assign, load, count, demand, tree_i[child, ITEM], tree_i[child, TARGET])
            return child
        child = select_child(tree_i, tree_q, node, cfg_f[C_OMEGA], m)
        if child < 0:
            tree_i[node, FLAGS] |= F_DEAD
            return node
        apply_action(assign, load, count, demand, tree_i[child, ITEM], tree_i[child, TARGET])
        placed += 1
        node = child


@njit
def back_prop(tree_i, tree_q, node, root, delta):
    while True:
        tree_i[node, VISITS] += 1
        tree_q[node] += delta
        if node == root:
            break
        node = tree_i[node, PARENT]


@njit
def record_witness(tree_i, node, root, assign, value, pool_a, pool_v, meta):
    """Keep ``assign`` as the witness of every node on the path whose witness is worse."""
    while True:
        slot = tree_i[node, WIT]
        if slot < 0:
            slot = meta[1]
            meta[1] += 1
            tree_i[node, WIT] = slot
            pool_v[slot] = np.inf
        if value < pool_v[slot]:
            pool_v[slot] = value
            for i in range(assign.shape[0]):
                pool_a[slot, i] = assign[i]
        if node == root:
            break
        node = tree_i[node, PARENT]


@njit
def search_step(tree_i, tree_q, meta, root, r_assign, r_load, r_count, assign, load, count,
                demand, cap, w, dist, adjw, coef, cfg_i, cfg_f, rng, cand, mark, adj,
                pool_a, pool_v, prog):
    """Sampling rounds for one decision step; resumable via ``prog = [accepted, attempts]``.

    Returns STEP_NEED_SPACE when the node arrays may overflow during the next
    round, so the caller can grow them and call again.
    """
    n = assign.shape[0]
    m = cap.shape[0]
    reserve = n * m + 2
    capacity = tree_i.shape[0]
    pool_cap = pool_v.shape[0]
    t = prog[0]
    attempts = prog[1]
    status = STEP_DONE
    while t < cfg_i[C_SAMPLES] and attempts < cfg_i[C_ATTEMPTS]:
        if meta[0] + reserve > capacity or meta[1] + n + 1 > pool_cap:
            status = STEP_NEED_SPACE
            break
        attempts += 1
        node = traverse(tree_i, tree_q, meta, root, r_assign, r_load, r_count, assign, load, count,
                        demand, cap, adjw, cfg_i, cfg_f, rng, cand, mark, adj)
        if tree_i[root, FLAGS] & F_DEAD != 0:
            status = STEP_ROOT_DEAD
            break
        if tree_i[node, FLAGS] & F_DEAD != 0:
            continue
        delta = rollout(assign, load, count, demand, cap, w, dist, coef, cfg_f[C_EPS],
                        cfg_i[C_ROLLOUT], rng, cand)
        if delta >= 0.0:
            back_prop(tree_i, tree_q, node, root, delta)
            record_witness(tree_i, node, root, assign, delta, pool_a, pool_v, meta)
            t += 1
    prog[0] = t
    prog[1] = attempts
    return status


@njit
def subtree_size(tree_i, root):
    size = 0
    stack = np.empty(tree_i.shape[0], dtype=np.int64)
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        v = stack[top]
        size += 1
        c = tree_i[v, FIRST]
        while c >= 0:
            stack[top] = c
            top += 1
            c = tree_i[c, NEXT]
    return size


@njit
def extract_subtree(tree_i, tree_q, root, out_i, out_q):
    """Copy the subtree under ``root`` into fresh arrays (root becomes node 0)."""
    total = tree_i.shape[0]
    new_id = np.full(total, -1, dtype=np.int64)
    order = np.empty(total, dtype=np.int64)
    order[0] = root
    new_id[root] = 0
    head = 0
    tail = 1
    while head < tail:
        v = order[head]
        head += 1
        c = tree_i[v, FIRST]
        while c >= 0:
            new_id[c] = tail
            order[tail] = c
            tail += 1
            c = tree_i[c, NEXT]
    for p in range(tail):
        v = order[p]
        for col in range(NCOL):
            out_i[p, col] = tree_i[v, col]
        out_q[p] = tree_q[v]
        par = tree_i[v, PARENT]
        out_i[p, PARENT] = -1 if p == 0 else new_id[par]
        f = tree_i[v, FIRST]
        out_i[p, FIRST] = new_id[f] if f >= 0 else -1
        nx = tree_i[v, NEXT]
        out_i[p, NEXT] = new_id[nx] if (nx >= 0 and p > 0) else -1
    return tail
