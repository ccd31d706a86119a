import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from viabrl.mdp import Mdp

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def chain(r_go=0.0, r_b=0.0, gamma=0.95, terminal=False):
    """A --stay--> A, A --go--> B, B absorbing failure."""
    return Mdp(
        states=("A", "B"),
        actions=(("stay", "go"), ("stay",)),
        next_state=((0, 1), (1,)),
        rewards=((0.0, r_go), (r_b,)),
        failure=frozenset({1}),
        discount=gamma,
        terminal_failure=terminal,
    )


def three_chain(gamma=0.95):
    """A -> B -> C with B forced forward and C an absorbing failure."""
    return Mdp(
        states=("A", "B", "C"),
        actions=(("stay", "go"), ("go",), ("stay",)),
        next_state=((0, 1), (2,), (2,)),
        rewards=((0.0, 0.0), (0.0,), (0.0,)),
        failure=frozenset({2}),
        discount=gamma,
    )


def loop(k, reward=0.0, gamma=0.95):
    """One state with ``k`` self-loop actions."""
    return Mdp(
        states=("s",),
        actions=(tuple(f"a{i}" for i in range(k)),),
        next_state=((0,) * k,),
        rewards=((reward,) * k,),
        failure=frozenset(),
        discount=gamma,
    )


def random_mdp(rng, max_states=8, max_actions=3, p_fail=0.3, gamma=None):
    n = int(rng.integers(1, max_states + 1))
    counts = rng.integers(1, max_actions + 1, size=n)
    next_state = tuple(tuple(int(y) for y in rng.integers(0, n, size=k)) for k in counts)
    rewards = tuple(tuple(float(v) for v in rng.normal(size=k)) for k in counts)
    failure = frozenset(int(x) for x in np.flatnonzero(rng.random(n) < p_fail))
    return Mdp(
        states=tuple(f"x{i}" for i in range(n)),
        actions=tuple(tuple(f"a{i}" for i in range(k)) for k in counts),
        next_state=next_state,
        rewards=rewards,
        failure=failure,
        discount=float(rng.uniform(0.5, 0.95)) if gamma is None else gamma,
    )


def random_policy(rng, mdp):
    w = rng.random((mdp.n_states, mdp.max_actions)) * mdp.valid
    w[mdp.valid] += 1e-3
    from viabrl.mdp import StochasticPolicy

    return StochasticPolicy(w / w.sum(axis=1, keepdims=True))


@pytest.fixture
def chain_mdp():
    return chain()


_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
