"""Viability kernel, viable/critical sets and dynamic indicators."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import Mdp

INDICATOR_CHECK_LIMIT = 10_000


@dataclass(frozen=True)
class ViabilityDecomposition:
    """Kernel and pair sets, as boolean masks.

    ``viable_states`` has shape (n,); the pair masks have the padded (n, A)
    shape of the MDP and are False on missing action slots.
    """

    viable_states: np.ndarray
    viable_pairs: np.ndarray
    critical_pairs: np.ndarray
    unviable_pairs: np.ndarray

    def n_viable_actions(self) -> np.ndarray:
        """Number of viable actions per state (the safety measure)."""
        return self.viable_pairs.sum(axis=1)


def viability_kernel(mdp: Mdp) -> ViabilityDecomposition:
    """Backward elimination: keep x iff some action leads to a kept, non-failure state."""
    succ = mdp.successor
    valid = mdp.valid
    safe_target = ~mdp.failure_mask
    kept = np.ones(mdp.n_states, dtype=bool)
    # each pass removes at least one state or stops
    for _ in range(mdp.n_states + 1):
        ok_pairs = valid & safe_target[succ] & kept[succ]
        new_kept = kept & ok_pairs.any(axis=1)
        if np.array_equal(new_kept, kept):
            break
        kept = new_kept
    viable_pairs = valid & kept[:, None] & kept[succ] & safe_target[succ]
    unviable = valid & ~viable_pairs
    critical = unviable & kept[:, None]
    return ViabilityDecomposition(kept, viable_pairs, critical, unviable)


def default_indicator(mdp: Mdp) -> np.ndarray:
    """c(x, a) = 1 if f(x, a) is a failure state, else 0."""
    return np.where(mdp.valid & mdp.failure_mask[mdp.successor], 1.0, 0.0)


def is_dynamic_indicator(
    mdp: Mdp, c: np.ndarray, decomposition: ViabilityDecomposition
) -> tuple[bool, Optional[list[tuple[int, int]]]]:
    """Check the trajectory characterization of dynamic indicators.

    The table must vanish on the viable set, and every trajectory from the
    kernel that visits the failure set (at some t >= 1) must accrue positive
    cost no later than the first step at which it leaves the failure set.

    Returns ``(ok, witness)``; on failure the witness is a list of
    ``(state, action)`` index pairs: a single viable pair with positive cost,
    or a zero-cost trajectory prefix ending with the offending step.  For a
    zero-cost cycle inside the failure set, the prefix ends when the cycle
    closes.
    """
    size = mdp.n_states * mdp.max_actions
    if size > INDICATOR_CHECK_LIMIT:
        raise ValueError(
            f"indicator check limited to |X|*max|A| <= {INDICATOR_CHECK_LIMIT}, got {size}"
        )
    c = np.asarray(c, dtype=float)
    valid = mdp.valid
    if np.any(c[valid] < 0):
        x, i = np.argwhere((c < 0) & valid)[0]
        return False, [(int(x), int(i))]
    positive_viable = decomposition.viable_pairs & (c > 0)
    if positive_viable.any():
        x, i = np.argwhere(positive_viable)[0]
        return False, [(int(x), int(i))]

    succ = mdp.successor
    fail = mdp.failure_mask
    zero = valid & (c == 0)

    # Search zero-cost trajectory prefixes over nodes (state, phase): phase 0
    # before the first failure visit at t >= 1, phase 1 while inside X_C after it.
    parent: dict[tuple[int, int], Optional[tuple[tuple[int, int], int]]] = {}
    queue = deque()
    for x in np.flatnonzero(decomposition.viable_states):
        parent[(int(x), 0)] = None
        queue.append((int(x), 0))

    def path_to(node):
        steps = []
        while parent[node] is not None:
            prev, i = parent[node]
            steps.append((prev[0], i))
            node = prev
        return steps[::-1]

    while queue:
        node = queue.popleft()
        y, phase = node
        for i in np.flatnonzero(zero[y]):
            z = int(succ[y, i])
            if phase == 1 and not fail[z]:
                # left the failure set without any cost
                return False, path_to(node) + [(y, int(i))]
            nxt = (z, 1 if (phase == 1 or fail[z]) else 0)
            if nxt not in parent:
                parent[nxt] = (node, int(i))
                queue.append(nxt)

    # a zero-cost cycle inside X_C lets the trajectory stay there forever at no cost
    inside = [node for node in parent if node[1] == 1]
    inside_set = set(inside)

    def neighbors(node):
        y = node[0]
        return [(int(succ[y, i]), 1) for i in np.flatnonzero(zero[y]) if (int(succ[y, i]), 1) in inside_set]

    cycle = _find_cycle(inside, neighbors)
    if cycle is not None:
        path = path_to(cycle[0])
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            i = next(int(i) for i in np.flatnonzero(zero[a[0]]) if int(succ[a[0], i]) == b[0])
            path.append((a[0], i))
        return False, path
    return True, None


def _find_cycle(nodes, neighbors):
    color = {n: 0 for n in nodes}
    for root in nodes:
        if color[root]:
            continue
        stack = [(root, iter(neighbors(root)))]
        path = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                path.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):]
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(neighbors(nxt))))
                path.append(nxt)
    return None
