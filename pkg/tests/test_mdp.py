import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import chain, loop, random_mdp, random_policy, three_chain
from oracles import monte_carlo_return
from viabrl.mdp import (
    ConvergenceError,
    Mdp,
    SolveConfig,
    StochasticPolicy,
    min_risk,
    policy_evaluate_entropy,
    policy_evaluate_return,
    policy_evaluate_risk,
    validate_mdp,
)
from viabrl.viability import default_indicator

TIGHT = SolveConfig(1e-12, 5000)


def test_solve_config_rejects_bad_values():
    with pytest.raises(ValueError):
        SolveConfig(0.0, 10)
    with pytest.raises(ValueError):
        SolveConfig(1e-5, 0)


def test_validate_well_formed_chain():
    assert validate_mdp(chain()) == []


def test_validate_empty_action_set_names_state():
    bad = Mdp(("A", "B"), (("go",), ()), ((1,), ()), ((0.0,), ()), frozenset(), 0.9)
    problems = validate_mdp(bad)
    assert len(problems) == 1 and "'B'" in problems[0]


def test_validate_out_of_range_transition_names_pair():
    bad = Mdp(("A",), (("go",),), ((3,),), ((0.0,),), frozenset(), 0.9)
    problems = validate_mdp(bad)
    assert len(problems) == 1 and "'A'" in problems[0] and "'go'" in problems[0]


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
def test_validate_discount(gamma):
    assert any("discount" in p for p in validate_mdp(chain(gamma=gamma)))


def test_validate_terminal_failure_shape():
    assert validate_mdp(chain(terminal=True)) == []
    bad = chain(r_b=1.0, terminal=True)
    assert any("self-loop" in p for p in validate_mdp(bad))


def test_policy_check():
    m = chain()
    StochasticPolicy.uniform(m).check(m)
    with pytest.raises(ValueError):
        StochasticPolicy(np.array([[0.6, 0.6], [1.0, 0.0]])).check(m)
    with pytest.raises(ValueError):
        StochasticPolicy(np.array([[0.5, 0.5], [0.5, 0.5]])).check(m)


def test_policy_is_immutable():
    pi = StochasticPolicy.uniform(chain())
    with pytest.raises(ValueError):
        pi.probs[0, 0] = 1.0


def test_constant_reward_return():
    m = loop(3, reward=-1.0)
    v = policy_evaluate_return(m, StochasticPolicy.uniform(m), TIGHT)
    assert v[0] == pytest.approx(-20.0, abs=1e-9)


def test_zero_reward_return():
    m = chain()
    assert np.all(policy_evaluate_return(m, StochasticPolicy.uniform(m)) == 0)


def test_single_reward_then_zeros():
    m = chain(r_go=1.0)
    v = policy_evaluate_return(m, StochasticPolicy.deterministic(m, [1, 0]), TIGHT)
    assert v[0] == pytest.approx(1.0, abs=1e-12)


def test_entropy_of_uniform_loop():
    m = loop(4)
    s = policy_evaluate_entropy(m, StochasticPolicy.uniform(m), TIGHT)
    assert s[0] == pytest.approx(math.log(4) / 0.05, abs=1e-9)
    assert s[0] == pytest.approx(27.7259, abs=1e-4)


def test_entropy_of_half_go_chain():
    m = chain()
    pi = StochasticPolicy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    s = policy_evaluate_entropy(m, pi, TIGHT)
    assert s[0] == pytest.approx(math.log(2) / (1 - 0.95 * 0.5), abs=1e-9)
    assert s[0] == pytest.approx(1.3203, abs=1e-4)


def test_risk_examples():
    m = chain()
    c = default_indicator(m)
    go = StochasticPolicy.deterministic(m, [1, 0])
    assert policy_evaluate_risk(m, go, c, TIGHT)[0] == pytest.approx(20.0, abs=1e-9)
    mix = StochasticPolicy(np.array([[0.9, 0.1], [1.0, 0.0]]))
    expected = 0.1 * 20 / (1 - 0.9 * 0.95)
    assert policy_evaluate_risk(m, mix, c, TIGHT)[0] == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(13.7931, abs=1e-4)
    stay = StochasticPolicy.deterministic(m, [0, 0])
    assert policy_evaluate_risk(m, stay, c, TIGHT)[0] == 0.0


def test_negative_indicator_rejected():
    m = chain()
    c = default_indicator(m)
    c[0, 0] = -1.0
    with pytest.raises(ValueError, match="negative"):
        policy_evaluate_risk(m, StochasticPolicy.uniform(m), c)


def test_min_risk_examples():
    m = chain()
    r = min_risk(m, default_indicator(m), TIGHT)
    assert r[0] == 0.0
    assert r[1] == pytest.approx(20.0, abs=1e-9)
    m3 = three_chain()
    r3 = min_risk(m3, default_indicator(m3), TIGHT)
    assert r3[1] == pytest.approx(1 + 0.95 * 20, abs=1e-9)


def test_non_convergence_reports_residual():
    m = loop(2, reward=1.0)
    with pytest.raises(ConvergenceError) as info:
        policy_evaluate_return(m, StochasticPolicy.uniform(m), SolveConfig(1e-9, 3))
    assert info.value.iterations == 3 and info.value.residual > 1e-9


@given(st.integers(0, 2**32 - 1))
def test_deterministic_policies_have_zero_entropy(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng)
    choice = [int(rng.integers(k)) for k in m.n_actions]
    assert np.all(policy_evaluate_entropy(m, StochasticPolicy.deterministic(m, choice)) == 0)


@given(st.integers(0, 2**32 - 1))
def test_min_risk_lower_bounds_policy_risk(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng)
    c = default_indicator(m)
    lower = min_risk(m, c, TIGHT)
    for _ in range(3):
        risk = policy_evaluate_risk(m, random_policy(rng, m), c, TIGHT)
        assert np.all(lower <= risk + 1e-9)


@given(st.integers(0, 2**32 - 1))
def test_zero_indicator_gives_zero_risk(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng)
    zero = np.zeros((m.n_states, m.max_actions))
    assert np.all(policy_evaluate_risk(m, random_policy(rng, m), zero) == 0)


@pytest.mark.parametrize("seed", range(4))
def test_return_matches_monte_carlo(seed):
    rng = np.random.default_rng(1000 + seed)
    m = random_mdp(rng, max_states=6, max_actions=3)
    pi = random_policy(rng, m)
    v = policy_evaluate_return(m, pi, TIGHT)
    start = int(rng.integers(m.n_states))
    mean, se = monte_carlo_return(m, pi, start, 100_000, 500, seed)
    assert abs(mean - v[start]) <= 3 * se + 1e-9
