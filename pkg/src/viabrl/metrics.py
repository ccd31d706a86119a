"""Safety certificates, penalty constants and robustness comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .mdp import (
    Mdp,
    SolveConfig,
    StochasticPolicy,
    min_risk,
    policy_evaluate_entropy,
    evaluate_policy,
)
from .solver import (
    DEFAULT_TIE_TOLERANCE,
    ModePolicy,
    mode_policy,
    soft_state_values,
    soft_value_iteration,
    solve_max_entropy,
    solve_penalized,
)
from .viability import ViabilityDecomposition


@dataclass(frozen=True)
class PenaltyConstants:
    v1: float
    u1: float
    u2: float
    u3: float  # +inf when there is no critical pair


@dataclass(frozen=True)
class RobustnessOrder:
    relation: str  # "less", "greater", "equal" or "incomparable"
    witness_state: Optional[int] = None


def delta_safety(policy: StochasticPolicy, decomposition: ViabilityDecomposition) -> float:
    """Largest probability put on a single critical pair (0 without critical pairs)."""
    crit = decomposition.critical_pairs
    if not crit.any():
        return 0.0
    return float(policy.probs[crit].max())


def critical_mass(policy: StochasticPolicy, decomposition: ViabilityDecomposition) -> float:
    """Largest per-state total mass on critical actions; a diagnostic only."""
    crit = decomposition.critical_pairs
    if not crit.any():
        return 0.0
    return float(np.where(crit, policy.probs, 0.0).sum(axis=1).max())


def is_mode_safe(mdp: Mdp, mode: ModePolicy, decomposition: ViabilityDecomposition) -> bool:
    """True iff every argmax action at every viable state stays in Q_V."""
    at_viable = mode.argmax_set[decomposition.viable_states]
    return bool(np.all(~at_viable | decomposition.viable_pairs[decomposition.viable_states]))


def lemma2_constants(
    mdp: Mdp,
    decomposition: ViabilityDecomposition,
    indicator: np.ndarray,
    cfg: SolveConfig = SolveConfig(),
) -> PenaltyConstants:
    """Bounds on penalized soft Q-values: viable pairs stay above v1, critical
    pairs stay below u1 + alpha*u2 - p*u3."""
    gamma = mdp.discount
    r = mdp.reward_table[mdp.valid]
    u1 = float(r.max()) / (1 - gamma)
    v1 = float(r.min()) / (1 - gamma)
    k = int(mdp.max_actions)
    u2 = k * math.log(k) / (1 - gamma)
    crit = decomposition.critical_pairs
    if not crit.any():
        return PenaltyConstants(v1, u1, u2, math.inf)
    risk = min_risk(mdp, indicator, cfg)
    c = np.asarray(indicator, dtype=float)
    u3 = float(np.min(c[crit] + gamma * risk[mdp.successor[crit]]))
    return PenaltyConstants(v1, u1, u2, u3)


def sufficient_penalty(constants: PenaltyConstants, alpha: float, delta: float) -> float:
    """Penalty above which the penalized softmax policy is delta-safe."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if math.isinf(constants.u3):
        return 0.0
    if not constants.u3 > 0:
        raise ValueError(f"u3 must be positive, got {constants.u3}")
    u1, v1, u2, u3 = constants.u1, constants.v1, constants.u2, constants.u3
    return (u1 - v1) / u3 + alpha * (u2 - math.log(delta)) / u3


def _mode_safe_at(mdp, alpha, penalty, indicator, decomposition, cfg, tie_tolerance) -> bool:
    _, pi = solve_penalized(mdp, alpha, penalty, indicator, cfg)
    return is_mode_safe(mdp, mode_policy(pi, tie_tolerance), decomposition)


def minimum_safe_penalty(
    mdp: Mdp,
    alpha: float,
    indicator: np.ndarray,
    decomposition: ViabilityDecomposition,
    cfg: SolveConfig = SolveConfig(),
    p_max: float = 1e4,
    width: float = 1e-3,
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> float:
    """Smallest penalty (to within ``width``) whose penalized mode is safe.

    Brackets by doubling from ``width`` and then bisects, assuming mode
    safety is monotone in the penalty.  The result is re-checked at twice its
    value; a failed re-check raises ``RuntimeError``.
    """
    safe = lambda p: _mode_safe_at(mdp, alpha, p, indicator, decomposition, cfg, tie_tolerance)  # noqa: E731
    if not safe(p_max):
        raise RuntimeError(f"mode is not safe at p_max={p_max}")
    lo, hi = 0.0, width
    while not safe(hi):
        lo, hi = hi, 2 * hi
        if hi >= p_max:
            hi = p_max
            break
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if safe(mid):
            hi = mid
        else:
            lo = mid
    if not safe(2 * hi):
        raise RuntimeError(f"mode safety is not monotone: safe at {hi}, unsafe at {2 * hi}")
    return hi


def s_robustness_compare(
    mdp: Mdp,
    p1: StochasticPolicy,
    p2: StochasticPolicy,
    decomposition: ViabilityDecomposition,
    cfg: SolveConfig = SolveConfig(),
    tol: float = 1e-9,
) -> RobustnessOrder:
    """Pointwise comparison of discounted cumulative entropy on the kernel."""
    viable = decomposition.viable_states
    for policy in (p1, p2):
        leak = np.where(decomposition.critical_pairs, policy.probs, 0.0).max(axis=1)
        bad = np.flatnonzero(viable & (leak > tol))
        if bad.size:
            return RobustnessOrder("incomparable", int(bad[0]))
    s1 = policy_evaluate_entropy(mdp, p1, cfg)[viable]
    s2 = policy_evaluate_entropy(mdp, p2, cfg)[viable]
    idx = np.flatnonzero(viable)
    diff = s1 - s2
    if np.all(np.abs(diff) <= tol):
        return RobustnessOrder("equal")
    if np.all(diff <= tol):
        return RobustnessOrder("less")
    if np.all(diff >= -tol):
        return RobustnessOrder("greater")
    return RobustnessOrder("incomparable", int(idx[np.argmax(diff)]))


def offpolicy_entropy_measure(
    mdp: Mdp,
    policy: StochasticPolicy,
    decomposition: ViabilityDecomposition,
    cfg: SolveConfig = SolveConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted sum of ln(number of viable actions) along ``policy``.

    Returns ``(values, flagged)``; ``flagged`` marks states without viable
    actions, where the log count is taken as 0.
    """
    count = decomposition.n_viable_actions()
    flagged = count == 0
    log_count = np.log(np.where(flagged, 1, count))
    pair = np.repeat(log_count[:, None], mdp.max_actions, axis=1)
    return evaluate_policy(mdp, policy, pair, cfg, "safety-measure evaluation"), flagged


def best_safe_entropy_through(
    mdp: Mdp,
    decomposition: ViabilityDecomposition,
    state: int,
    action: int,
    cfg: SolveConfig = SolveConfig(),
) -> float:
    """Best safe discounted entropy from ``state`` when its action is pinned to ``action``."""
    if not decomposition.viable_pairs[state, action]:
        raise ValueError("pinned action must be viable")
    mask = decomposition.viable_pairs.copy()
    mask[state] = False
    mask[state, action] = True
    zero = np.zeros((mdp.n_states, mdp.max_actions))
    qf = soft_value_iteration(mdp, zero, 1.0, mask, cfg)
    return float(soft_state_values(qf.values, mask, 1.0)[state])


def theorem1_gap(
    mdp: Mdp,
    decomposition: ViabilityDecomposition,
    alphas: Sequence[float],
    cfg: SolveConfig = SolveConfig(),
) -> list[tuple[float, float]]:
    """max over Q_V of |Q_alpha / alpha - Q_ent| for each temperature.

    Q_alpha / alpha is solved directly as the fixed point of the scaled
    operator (reward r / alpha at unit temperature), so both sides are held
    to the same residual tolerance.
    """
    alphas = list(alphas)
    if any(a <= 0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be positive and strictly increasing")
    q_ent, _ = solve_max_entropy(mdp, decomposition, cfg)
    mask = decomposition.viable_pairs
    out = []
    for alpha in alphas:
        scaled = soft_value_iteration(mdp, mdp.reward_table / alpha, 1.0, mask, cfg)
        gap = float(np.max(np.abs(scaled.values[mask] - q_ent.values[mask])))
        out.append((float(alpha), gap))
    return out
