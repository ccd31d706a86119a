"""Soft value iteration and policy extraction.

Covers the unconstrained, viability-constrained, penalized and
maximum-entropy objectives.  All of them share one synchronous sweep:

    q(x, a) = r~(x, a) + gamma * alpha * log sum_{b allowed at x'} exp(q(x', b) / alpha)

with ``x' = f(x, a)``; ``alpha = 0`` switches to the hard max.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .mdp import ConvergenceError, Mdp, SolveConfig, StochasticPolicy
from .viability import ViabilityDecomposition

DEFAULT_TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class QFunction:
    """Soft Q-values on the allowed pairs; ``-inf`` elsewhere."""

    values: np.ndarray
    alpha: float
    mask: Optional[np.ndarray] = None
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class ModePolicy:
    argmax_set: np.ndarray  # bool (n, A)

    def as_policy(self) -> StochasticPolicy:
        counts = self.argmax_set.sum(axis=1, keepdims=True)
        return StochasticPolicy(self.argmax_set / counts)


def _allowed(mdp: Mdp, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return mdp.valid
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != mdp.valid.shape:
        raise ValueError(f"mask shape {mask.shape} does not match mdp {mdp.valid.shape}")
    return mask & mdp.valid


def soft_state_values(q: np.ndarray, allowed: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * logsumexp(q / alpha) per state over allowed actions (max if alpha == 0).

    States without allowed actions get ``-inf``.
    """
    has_any = allowed.any(axis=1)
    if alpha == 0:
        v = np.max(np.where(allowed, q, -np.inf), axis=1)
    else:
        z = np.where(allowed, q / alpha, -np.inf)
        z[~has_any] = 0.0
        v = alpha * logsumexp(z, axis=1)
    v[~has_any] = -np.inf
    return v


def bellman_residual(mdp: Mdp, qf: QFunction, effective_reward: np.ndarray) -> float:
    """Sup-norm distance between ``qf`` and one more application of its operator."""
    allowed = _allowed(mdp, qf.mask)
    v = soft_state_values(qf.values, allowed, qf.alpha)
    q_next = np.asarray(effective_reward, dtype=float) + mdp.discount * v[mdp.successor]
    return float(np.max(np.abs(q_next[allowed] - qf.values[allowed]), initial=0.0))


def soft_value_iteration(
    mdp: Mdp,
    effective_reward: np.ndarray,
    alpha: float,
    mask: Optional[np.ndarray] = None,
    cfg: SolveConfig = SolveConfig(),
) -> QFunction:
    """Synchronous soft value iteration from q = 0.

    Raises ``ValueError`` if an allowed pair leads to a state without allowed
    actions, and :class:`ConvergenceError` if the residual stays above
    ``cfg.tolerance``.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    allowed = _allowed(mdp, mask)
    succ = mdp.successor
    dead = allowed & ~allowed.any(axis=1)[succ]
    if dead.any():
        x, i = np.argwhere(dead)[0]
        raise ValueError(
            f"pair ({mdp.states[x]!r}, {mdp.actions[x][i]!r}) leads to "
            f"{mdp.states[succ[x, i]]!r}, which has no allowed actions"
        )
    r = np.where(allowed, np.asarray(effective_reward, dtype=float), 0.0)
    gamma = mdp.discount
    q = np.where(allowed, 0.0, -np.inf)
    residual = np.inf
    for it in range(1, cfg.max_iterations + 1):
        v = soft_state_values(q, allowed, alpha)
        q_new = np.where(allowed, r + gamma * v[succ], -np.inf)
        residual = float(np.max(np.abs(q_new[allowed] - q[allowed]), initial=0.0))
        q = q_new
        if residual <= cfg.tolerance:
            return QFunction(q, alpha, None if mask is None else allowed, residual, it)
    raise ConvergenceError("soft value iteration", residual, cfg.max_iterations)


def softmax_policy(qf: QFunction, alpha: Optional[float] = None) -> StochasticPolicy:
    """Boltzmann policy exp(q / alpha), shift-stabilized per state."""
    alpha = qf.alpha if alpha is None else alpha
    if not alpha > 0:
        raise ValueError(f"softmax needs alpha > 0, got {alpha}")
    q = qf.values
    finite = np.isfinite(q)
    z = np.where(finite, q / alpha, -np.inf)
    top = np.max(z, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.where(finite, np.exp(z - top), 0.0)
    total = w.sum(axis=1, keepdims=True)
    # rows without any allowed action stay at zero mass
    probs = np.divide(w, total, out=np.zeros_like(w), where=total > 0)
    return StochasticPolicy(probs)


def mode_policy(policy: StochasticPolicy, tie_tolerance: float = DEFAULT_TIE_TOLERANCE) -> ModePolicy:
    p = policy.probs
    top = p.max(axis=1, keepdims=True)
    return ModePolicy((p > 0) & (p >= top * (1.0 - tie_tolerance)))


def solve_constrained(
    mdp: Mdp, decomposition: ViabilityDecomposition, alpha: float, cfg: SolveConfig = SolveConfig()
) -> tuple[QFunction, StochasticPolicy]:
    """Entropy-regularized optimum over safe policies (soft VI restricted to Q_V)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if not decomposition.viable_states.any():
        raise ValueError("no viable policy: the viability kernel is empty")
    qf = soft_value_iteration(mdp, mdp.reward_table, alpha, decomposition.viable_pairs, cfg)
    return qf, _complete(mdp, softmax_policy(qf))


def solve_penalized(
    mdp: Mdp, alpha: float, penalty: float, indicator: np.ndarray, cfg: SolveConfig = SolveConfig()
) -> tuple[QFunction, StochasticPolicy]:
    """Soft VI over all actions with reward r - penalty * c."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if penalty < 0:
        raise ValueError(f"penalty must be >= 0, got {penalty}")
    reward = mdp.reward_table - penalty * np.asarray(indicator, dtype=float)
    qf = soft_value_iteration(mdp, reward, alpha, None, cfg)
    return qf, softmax_policy(qf)


def solve_max_entropy(
    mdp: Mdp, decomposition: ViabilityDecomposition, cfg: SolveConfig = SolveConfig()
) -> tuple[QFunction, StochasticPolicy]:
    """Maximum-entropy safe policy: zero reward, unit temperature, restricted to Q_V."""
    if not decomposition.viable_states.any():
        raise ValueError("no viable policy: the viability kernel is empty")
    zero = np.zeros((mdp.n_states, mdp.max_actions))
    qf = soft_value_iteration(mdp, zero, 1.0, decomposition.viable_pairs, cfg)
    return qf, _complete(mdp, softmax_policy(qf))


def _complete(mdp: Mdp, policy: StochasticPolicy) -> StochasticPolicy:
    """Uniform mass at states outside the mask, where the objective is undefined."""
    p = policy.probs
    empty = p.sum(axis=1) == 0
    if not empty.any():
        return policy
    uniform = StochasticPolicy.uniform(mdp).probs
    return StochasticPolicy(np.where(empty[:, None], uniform, p))
