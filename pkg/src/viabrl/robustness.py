"""Monte-Carlo evaluation of policies under action-replacement noise.

With probability ``epsilon`` the executed action is replaced by one drawn
uniformly from the acting state's available actions.

Each episode draws its random numbers from its own generator seeded by
``(seed, episode_index)``, so outcomes do not depend on the order or
batching of episodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .mdp import Mdp, StochasticPolicy


@dataclass(frozen=True)
class NoiseModel:
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class RolloutConfig:
    episodes: int = 100
    horizon: int = 200
    seed: int = 0
    start_state: Optional[int] = None  # None: the MDP's designated start

    def __post_init__(self):
        if self.episodes < 1 or self.horizon < 1:
            raise ValueError("episodes and horizon must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # horizon + 1 visited states, starting state first
    actions: np.ndarray  # horizon executed actions
    total_return: float
    success: bool


@dataclass(frozen=True)
class RobustnessReport:
    success_rate: float
    wilson_interval: tuple[float, float]
    mean_return: float
    mean_min_distance: Optional[float]
    episodes: int


def _draws(seed: int, episodes: Sequence[int], horizon: int) -> np.ndarray:
    return np.stack(
        [np.random.default_rng([seed, int(e)]).random((horizon, 3)) for e in episodes]
    )


def _simulate(mdp: Mdp, policy: StochasticPolicy, noise: NoiseModel, cfg: RolloutConfig,
              episodes: Sequence[int]):
    start = mdp.start if cfg.start_state is None else cfg.start_state
    if not 0 <= start < mdp.n_states:
        raise ValueError(f"start state {start} out of range")
    u = _draws(cfg.seed, episodes, cfg.horizon)
    cum = np.cumsum(policy.probs, axis=1)
    n_act = mdp.n_actions
    succ = mdp.successor
    rew = mdp.reward_table
    m = len(episodes)
    states = np.empty((m, cfg.horizon + 1), dtype=np.int64)
    actions = np.empty((m, cfg.horizon), dtype=np.int64)
    states[:, 0] = start
    returns = np.zeros(m)
    x = states[:, 0]
    for t in range(cfg.horizon):
        k = n_act[x]
        a = np.minimum((u[:, t, 0:1] >= cum[x]).sum(axis=1), k - 1)
        replace = u[:, t, 1] < noise.epsilon
        a = np.where(replace, np.minimum((u[:, t, 2] * k).astype(np.int64), k - 1), a)
        returns += rew[x, a]
        x = succ[x, a]
        actions[:, t] = a
        states[:, t + 1] = x
    success = ~mdp.failure_mask[states[:, 1:]].any(axis=1)
    return states, actions, returns, success


def rollout(mdp: Mdp, policy: StochasticPolicy, noise: NoiseModel, cfg: RolloutConfig,
            episode_index: int) -> Trajectory:
    """Simulate one episode; success means no failure state at t >= 1."""
    states, actions, returns, success = _simulate(mdp, policy, noise, cfg, [episode_index])
    return Trajectory(states[0], actions[0], float(returns[0]), bool(success[0]))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _cliff_distance(mdp: Mdp) -> np.ndarray:
    if mdp.grid_shape is None or mdp.coords is None:
        raise ValueError("distance to the constraint is only defined on grid environments")
    coords = np.asarray(mdp.coords)
    fail = coords[sorted(mdp.failure)]
    if fail.size == 0:
        return np.full(mdp.n_states, np.inf)
    return np.abs(coords[:, None, :] - fail[None, :, :]).sum(axis=2).min(axis=1)


def min_distance_to_constraint(trajectory, mdp: Mdp) -> int:
    """Smallest Manhattan distance from any visited cell to a failure cell."""
    states = trajectory.states if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    return int(_cliff_distance(mdp)[states].min())


def stationary_angle(trajectory: Trajectory, mdp: Mdp, last: int = 50) -> float:
    """Mean |first coordinate| over the last ``last`` visited states (pendulum lean)."""
    if mdp.coords is None:
        raise ValueError("mdp carries no state coordinates")
    theta = np.asarray(mdp.coords)[trajectory.states[-last:], 0]
    return float(np.mean(np.abs(theta)))


def success_rate(mdp: Mdp, policy: StochasticPolicy, noise: NoiseModel,
                 cfg: RolloutConfig) -> RobustnessReport:
    """Aggregate ``cfg.episodes`` independent rollouts."""
    episodes = range(cfg.episodes)
    states, _, returns, success = _simulate(mdp, policy, noise, cfg, episodes)
    wins = int(success.sum())
    distance = None
    if mdp.grid_shape is not None:
        distance = float(_cliff_distance(mdp)[states].min(axis=1).mean())
    return RobustnessReport(
        success_rate=wins / cfg.episodes,
        wilson_interval=wilson_interval(wins, cfg.episodes),
        mean_return=float(returns.mean()),
        mean_min_distance=distance,
        episodes=cfg.episodes,
    )
