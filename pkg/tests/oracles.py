"""Independent reference computations used only by the tests."""

import itertools

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


def kernel_by_enumeration(mdp):
    """Viable states via every deterministic stationary policy's closed loop.

    x is viable iff some policy keeps the trajectory from x out of X_C at
    t = 1..n (after n steps a deterministic closed loop has entered its cycle).
    """
    n = mdp.n_states
    succ = mdp.successor
    fail = mdp.failure_mask
    choices = np.array(list(itertools.product(*[range(k) for k in mdp.n_actions])), dtype=np.int64)
    nxt = succ[np.arange(n)[None, :], choices]  # (P, n)
    pos = np.broadcast_to(np.arange(n), nxt.shape).copy()
    hit = np.zeros(nxt.shape, dtype=bool)
    rows = np.arange(len(choices))[:, None]
    for _ in range(n):
        pos = nxt[rows, pos]
        hit |= fail[pos]
    return (~hit).any(axis=0)


def kernel_by_cycles(mdp):
    """Viable states via graph structure: reach a cycle avoiding X_C.

    A non-failure state is viable iff it can reach a cycle of the
    non-failure subgraph; a failure state is viable iff it has a successor
    that is a viable non-failure state.
    """
    n = mdp.n_states
    fail = mdp.failure_mask
    edges = {(x, y) for x, i in mdp.pairs() for y in [mdp.next_state[x][i]] if not fail[x] and not fail[y]}
    if edges:
        src, dst = zip(*edges)
        adj = csr_matrix((np.ones(len(edges)), (src, dst)), shape=(n, n))
        _, labels = connected_components(adj, directed=True, connection="strong")
    else:
        labels = np.arange(n)
    sizes = np.bincount(labels, minlength=n)
    on_cycle = np.array([not fail[x] and (sizes[labels[x]] > 1 or (x, x) in edges) for x in range(n)])
    good = on_cycle.copy()
    changed = True
    while changed:
        changed = False
        for x, y in edges:
            if good[y] and not good[x]:
                good[x] = True
                changed = True
    viable = good.copy()
    for x in np.flatnonzero(fail):
        viable[x] = any(good[y] for y in mdp.next_state[x])
    return viable


def monte_carlo_return(mdp, policy, start, episodes, horizon, seed):
    """Mean and standard error of truncated discounted returns."""
    rng = np.random.default_rng(seed)
    cum = np.cumsum(policy.probs, axis=1)
    x = np.full(episodes, start)
    total = np.zeros(episodes)
    disc = 1.0
    for _ in range(horizon):
        u = rng.random(episodes)
        a = np.minimum((u[:, None] >= cum[x]).sum(axis=1), mdp.n_actions[x] - 1)
        total += disc * mdp.reward_table[x, a]
        x = mdp.successor[x, a]
        disc *= mdp.discount
    return total.mean(), total.std(ddof=1) / np.sqrt(episodes)


def absorption_success(mdp, policy, epsilon, start, horizon):
    """Exact P[no failure visit in t = 1..horizon] by matrix powers."""
    n = mdp.n_states
    probs = (1 - epsilon) * policy.probs + epsilon * mdp.valid / mdp.n_actions[:, None]
    P = np.zeros((n, n))
    for x, i in mdp.pairs():
        P[x, mdp.next_state[x][i]] += probs[x, i]
    alive = np.zeros(n)
    alive[start] = 1.0
    safe = ~mdp.failure_mask
    for _ in range(horizon):
        alive = (alive @ P) * safe
    return alive.sum()
