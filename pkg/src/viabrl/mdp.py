"""Finite deterministic MDPs, policy containers and exact policy evaluation.

Tables over state-action pairs are stored as padded ``(n_states, max_actions)``
arrays; slots beyond ``len(actions[x])`` are never read by any routine and are
filled with a neutral value (0 for masses/costs, ``-inf`` for Q-values).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np


class ConvergenceError(RuntimeError):
    """A fixed-point iteration did not reach its tolerance."""

    def __init__(self, what: str, residual: float, iterations: int):
        super().__init__(
            f"{what} did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolveConfig:
    tolerance: float = 1e-5
    max_iterations: int = 1000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class Mdp:
    """Finite MDP with deterministic dynamics.

    ``next_state[x][i]`` and ``rewards[x][i]`` describe the i-th action of
    state ``x``.  States and actions are addressed by position; ``states`` and
    ``actions`` hold their labels.  Construction does not validate; call
    :func:`validate_mdp` on untrusted input.

    ``start``, ``coords`` and ``grid_shape`` are auxiliary annotations used by
    rollouts and grid metrics; they do not take part in equality.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    next_state: tuple[tuple[int, ...], ...]
    rewards: tuple[tuple[float, ...], ...]
    failure: frozenset[int]
    discount: float
    terminal_failure: bool = False
    start: int = field(default=0, compare=False)
    coords: Optional[tuple[tuple[float, ...], ...]] = field(default=None, compare=False)
    grid_shape: Optional[tuple[int, int]] = field(default=None, compare=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @cached_property
    def max_actions(self) -> int:
        return max(len(a) for a in self.next_state)

    @cached_property
    def n_actions(self) -> np.ndarray:
        return np.array([len(a) for a in self.next_state], dtype=np.int64)

    @cached_property
    def valid(self) -> np.ndarray:
        """Boolean (n, A) mask of existing actions."""
        return np.arange(self.max_actions)[None, :] < self.n_actions[:, None]

    @cached_property
    def successor(self) -> np.ndarray:
        """(n, A) successor indices; padding slots point at the acting state."""
        out = np.repeat(np.arange(self.n_states)[:, None], self.max_actions, axis=1)
        for x, succ in enumerate(self.next_state):
            out[x, : len(succ)] = succ
        out.setflags(write=False)
        return out

    @cached_property
    def reward_table(self) -> np.ndarray:
        out = np.zeros((self.n_states, self.max_actions))
        for x, rew in enumerate(self.rewards):
            out[x, : len(rew)] = rew
        out.setflags(write=False)
        return out

    @cached_property
    def failure_mask(self) -> np.ndarray:
        out = np.zeros(self.n_states, dtype=bool)
        out[list(self.failure)] = True
        out.setflags(write=False)
        return out

    def state_index(self, label: str) -> int:
        return self.states.index(label)

    def action_index(self, x: int, label: str) -> int:
        return self.actions[x].index(label)

    def pairs(self):
        """Iterate ``(x, i)`` over all available state-action pairs in declared order."""
        for x, acts in enumerate(self.next_state):
            for i in range(len(acts)):
                yield x, i


def same_structure(a: Mdp, b: Mdp) -> bool:
    """Equality up to action labels, which the explicit file format does not carry."""
    return (
        a.states == b.states
        and a.next_state == b.next_state
        and a.rewards == b.rewards
        and a.failure == b.failure
        and a.discount == b.discount
        and a.terminal_failure == b.terminal_failure
    )


def validate_mdp(mdp: Mdp) -> list[str]:
    """Return a list of invariant violations; empty means well-formed."""
    problems = []
    n = len(mdp.states)
    if not 0 < mdp.discount < 1:
        problems.append(f"discount {mdp.discount} not in (0, 1)")
    if not (len(mdp.actions) == len(mdp.next_state) == len(mdp.rewards) == n):
        problems.append(
            f"per-state tables have lengths actions={len(mdp.actions)}, "
            f"next_state={len(mdp.next_state)}, rewards={len(mdp.rewards)} for {n} states"
        )
        return problems
    if len(set(mdp.states)) != n:
        problems.append("duplicate state identifiers")
    for x in range(n):
        label = mdp.states[x]
        if not mdp.next_state[x]:
            problems.append(f"state {label!r} has no actions")
            continue
        if not len(mdp.actions[x]) == len(mdp.next_state[x]) == len(mdp.rewards[x]):
            problems.append(f"state {label!r}: action, transition and reward counts differ")
            continue
        for i, (y, rew) in enumerate(zip(mdp.next_state[x], mdp.rewards[x])):
            if not (isinstance(y, (int, np.integer)) and 0 <= y < n):
                problems.append(
                    f"transition ({label!r}, {mdp.actions[x][i]!r}) -> {y!r} out of range"
                )
            if not np.isfinite(rew):
                problems.append(f"reward ({label!r}, {mdp.actions[x][i]!r}) is not finite")
    for y in mdp.failure:
        if not 0 <= y < n:
            problems.append(f"failure state index {y} out of range")
    if mdp.terminal_failure:
        for y in sorted(mdp.failure):
            if not 0 <= y < n:
                continue
            if not (
                len(mdp.next_state[y]) == 1
                and mdp.next_state[y][0] == y
                and mdp.rewards[y][0] == 0
            ):
                problems.append(
                    f"terminal failure state {mdp.states[y]!r} is not a single zero-reward self-loop"
                )
    if not 0 <= mdp.start < max(n, 1):
        problems.append(f"start index {mdp.start} out of range")
    return problems


@dataclass(frozen=True)
class StochasticPolicy:
    """Per-state action probabilities as a padded (n, A) array."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def check(self, mdp: Mdp, atol: float = 1e-12) -> None:
        p = self.probs
        if p.shape != (mdp.n_states, mdp.max_actions):
            raise ValueError(f"policy shape {p.shape} does not match mdp {(mdp.n_states, mdp.max_actions)}")
        if np.any(p[mdp.valid] < 0) or np.any(p[~mdp.valid] != 0):
            raise ValueError("policy has negative mass or mass on missing actions")
        err = np.abs(p.sum(axis=1) - 1.0)
        if np.any(err > atol):
            x = int(np.argmax(err))
            raise ValueError(f"policy masses at state {mdp.states[x]!r} sum to {p[x].sum()!r}")

    @classmethod
    def uniform(cls, mdp: Mdp, allowed: Optional[np.ndarray] = None) -> "StochasticPolicy":
        allowed = mdp.valid if allowed is None else (allowed & mdp.valid)
        counts = allowed.sum(axis=1, keepdims=True)
        # states without allowed actions fall back to all of their actions
        allowed = np.where(counts > 0, allowed, mdp.valid)
        counts = allowed.sum(axis=1, keepdims=True)
        return cls(allowed / counts)

    @classmethod
    def deterministic(cls, mdp: Mdp, choice: Sequence[int]) -> "StochasticPolicy":
        p = np.zeros((mdp.n_states, mdp.max_actions))
        p[np.arange(mdp.n_states), np.asarray(choice)] = 1.0
        return cls(p)


def policy_entropy(policy: StochasticPolicy) -> np.ndarray:
    """Per-state entropy, with 0 ln 0 = 0."""
    p = policy.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=1)


def evaluate_policy(mdp: Mdp, policy: StochasticPolicy, pair_reward: np.ndarray,
              cfg: SolveConfig, what: str) -> np.ndarray:
    """Iterate v <- sum_a pi(a|x) (c(x,a) + gamma v(f(x,a))) to a sup-norm residual."""
    p = policy.probs
    gamma = mdp.discount
    succ = mdp.successor
    expected_reward = (p * pair_reward).sum(axis=1)
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, cfg.max_iterations + 1):
        v_new = expected_reward + gamma * (p * v[succ]).sum(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= cfg.tolerance:
            return v
    raise ConvergenceError(what, residual, cfg.max_iterations)


def policy_evaluate_return(mdp: Mdp, policy: StochasticPolicy, cfg: SolveConfig = SolveConfig()) -> np.ndarray:
    """Expected discounted return of ``policy`` from every state."""
    return evaluate_policy(mdp, policy, mdp.reward_table, cfg, "return evaluation")


def policy_evaluate_entropy(mdp: Mdp, policy: StochasticPolicy, cfg: SolveConfig = SolveConfig()) -> np.ndarray:
    """Expected discounted cumulative entropy of ``policy`` from every state."""
    h = policy_entropy(policy)
    pair = np.repeat(h[:, None], mdp.max_actions, axis=1)
    return evaluate_policy(mdp, policy, pair, cfg, "entropy evaluation")


def _check_indicator(mdp: Mdp, indicator: np.ndarray) -> np.ndarray:
    c = np.asarray(indicator, dtype=float)
    if c.shape != (mdp.n_states, mdp.max_actions):
        raise ValueError(f"indicator shape {c.shape} does not match mdp")
    if np.any(c[mdp.valid] < 0):
        x, i = np.argwhere((c < 0) & mdp.valid)[0]
        raise ValueError(
            f"indicator is negative at ({mdp.states[x]!r}, {mdp.actions[x][i]!r})"
        )
    return np.where(mdp.valid, c, 0.0)


def policy_evaluate_risk(mdp: Mdp, policy: StochasticPolicy, indicator: np.ndarray,
                         cfg: SolveConfig = SolveConfig()) -> np.ndarray:
    """Expected discounted sum of the indicator cost along ``policy``."""
    c = _check_indicator(mdp, indicator)
    return evaluate_policy(mdp, policy, c, cfg, "risk evaluation")


def min_risk(mdp: Mdp, indicator: np.ndarray, cfg: SolveConfig = SolveConfig()) -> np.ndarray:
    """Minimum discounted risk over all policies, by min-value iteration."""
    c = _check_indicator(mdp, indicator)
    c = np.where(mdp.valid, c, np.inf)
    succ = mdp.successor
    gamma = mdp.discount
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for _ in range(cfg.max_iterations):
        v_new = np.min(c + gamma * v[succ], axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= cfg.tolerance:
            return v
    raise ConvergenceError("min-risk iteration", residual, cfg.max_iterations)
