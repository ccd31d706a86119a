import math

import numpy as np
import pytest

from conftest import chain
from oracles import absorption_success
from viabrl.environments import GridSpec, build_fenced_cliff, build_pendulum, build_unconstrained_cliff
from viabrl.mdp import StochasticPolicy
from viabrl.robustness import (
    NoiseModel,
    RolloutConfig,
    min_distance_to_constraint,
    rollout,
    stationary_angle,
    success_rate,
    wilson_interval,
)
from viabrl.solver import mode_policy, solve_constrained, solve_penalized
from viabrl.viability import viability_kernel


@pytest.fixture(scope="module")
def cliff_mode():
    m, c = build_unconstrained_cliff()
    _, pi = solve_penalized(m, 1.0, 20.0, c)
    return m, mode_policy(pi).as_policy()


def test_config_validation():
    with pytest.raises(ValueError):
        NoiseModel(1.5)
    with pytest.raises(ValueError):
        RolloutConfig(episodes=0)


def test_safe_mode_without_noise_always_succeeds(cliff_mode):
    m, mode = cliff_mode
    rep = success_rate(m, mode, NoiseModel(0.0), RolloutConfig(100, 50, 7))
    assert rep.success_rate == 1.0
    lo, hi = rep.wilson_interval
    assert 0.96 <= lo and hi == 1.0


def test_single_noisy_step_on_chain():
    m = chain()
    stay = StochasticPolicy.deterministic(m, [0, 0])
    rep = success_rate(m, stay, NoiseModel(1.0), RolloutConfig(100, 1, 3))
    lo, hi = rep.wilson_interval
    assert lo <= 0.5 <= hi
    assert lo <= rep.success_rate <= hi


def test_wilson_interval_against_closed_form():
    k, n, z = 37, 120, 1.959963984540054
    phat = k / n
    centre = (phat + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(centre - half, abs=1e-12)
    assert hi == pytest.approx(centre + half, abs=1e-12)


def test_corridor_success_matches_absorption_chain():
    spec = GridSpec(("S.T", "CCC"), fenced=False)
    m, c = build_unconstrained_cliff(spec)
    _, pi = solve_penalized(m, 1.0, 20.0, c)
    mode = mode_policy(pi).as_policy()
    start = m.state_index("r0c0")
    assert mode.probs[start, m.action_index(start, "right")] == 1.0
    cfg = RolloutConfig(20_000, 12, 0, start)
    rep = success_rate(m, mode, NoiseModel(0.3), cfg)
    exact = absorption_success(m, mode, 0.3, start, 12)
    lo, hi = rep.wilson_interval
    assert lo <= exact <= hi
    assert 0.3 < exact < 0.95


def test_reports_are_reproducible(cliff_mode):
    m, mode = cliff_mode
    cfg = RolloutConfig(200, 60, 123)
    assert success_rate(m, mode, NoiseModel(0.3), cfg) == success_rate(m, mode, NoiseModel(0.3), cfg)
    other = success_rate(m, mode, NoiseModel(0.3), RolloutConfig(200, 60, 124))
    assert other != success_rate(m, mode, NoiseModel(0.3), cfg)


def test_episode_order_does_not_matter(cliff_mode):
    m, mode = cliff_mode
    cfg = RolloutConfig(50, 60, 5)
    noise = NoiseModel(0.4)
    order = np.random.default_rng(0).permutation(50)
    forward = [rollout(m, mode, noise, cfg, i) for i in range(50)]
    shuffled = {int(i): rollout(m, mode, noise, cfg, int(i)) for i in order}
    for i, tr in enumerate(forward):
        assert np.array_equal(tr.states, shuffled[i].states) and tr.success == shuffled[i].success
    batch = success_rate(m, mode, noise, cfg)
    assert batch.success_rate == sum(t.success for t in forward) / 50


def test_rollout_records_path(cliff_mode):
    m, mode = cliff_mode
    tr = rollout(m, mode, NoiseModel(0.0), RolloutConfig(1, 30, 0), 0)
    assert len(tr.states) == 31 and len(tr.actions) == 30
    assert tr.states[0] == m.start and tr.success
    rewards = [m.rewards[x][a] for x, a in zip(tr.states[:-1], tr.actions)]
    assert tr.total_return == pytest.approx(sum(rewards))


def test_success_degrades_with_noise(cliff_mode):
    m, mode = cliff_mode
    cfg = RolloutConfig(1000, 100, 2)
    reports = [success_rate(m, mode, NoiseModel(e / 10), cfg) for e in range(10)]
    violations = 0
    for prev, cur in zip(reports, reports[1:]):
        if cur.success_rate > prev.success_rate:
            violations += 1
            assert cur.wilson_interval[0] <= prev.wilson_interval[1]
    assert violations <= 1


def test_distance_metric_examples():
    m = build_fenced_cliff()
    assert min_distance_to_constraint([m.state_index("r3c2")], m) == 0
    # the corner is 3 rows above the cliff and 2 columns left of it
    assert min_distance_to_constraint([m.state_index("r0c0")] * 5, m) == 5
    assert min_distance_to_constraint([m.state_index("r0c2")] * 5, m) == 3
    cliff, c = build_unconstrained_cliff()
    walk_in = StochasticPolicy.deterministic(cliff, [cliff.action_index(x, "right") for x in range(cliff.n_states)])
    tr = rollout(cliff, walk_in, NoiseModel(0.0), RolloutConfig(1, 5, 0), 0)
    assert not tr.success and min_distance_to_constraint(tr, cliff) == 0


def test_distance_metric_needs_grid():
    with pytest.raises(ValueError, match="grid"):
        min_distance_to_constraint([0], chain())


def test_fenced_modes_distance_grows_with_temperature():
    m = build_fenced_cliff()
    d = viability_kernel(m)
    out = []
    for alpha in (0.5, 4.0, 16.0):
        _, pi = solve_constrained(m, d, alpha)
        tr = rollout(m, mode_policy(pi).as_policy(), NoiseModel(0.0), RolloutConfig(1, 40, 0), 0)
        out.append(min_distance_to_constraint(tr, m))
    assert out == sorted(out) and out[-1] > out[0]


def test_fenced_noise_never_fails():
    m = build_fenced_cliff()
    _, pi = solve_constrained(m, viability_kernel(m), 0.5)
    rep = success_rate(m, mode_policy(pi).as_policy(), NoiseModel(0.3), RolloutConfig(200, 100, 0))
    assert rep.success_rate == 1.0


def test_stationary_angle_of_upright_hold():
    m, _ = build_pendulum()
    hold = StochasticPolicy.deterministic(m, [2] * m.n_states)  # zero torque
    tr = rollout(m, hold, NoiseModel(0.0), RolloutConfig(1, 200, 0), 0)
    assert stationary_angle(tr, m) == 0.0 and tr.success
