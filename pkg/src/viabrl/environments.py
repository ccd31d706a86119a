"""Benchmark MDP builders and the ``viab-env v1`` text format."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import Mdp
from .viability import default_indicator

MOVES = {"up": (-1, 0), "right": (0, 1), "down": (1, 0), "left": (0, -1)}
CELL_KINDS = {".": "free", "C": "cliff", "T": "target", "S": "start"}

DEFAULT_CLIFF_LAYOUT = (
    "......T",
    "......T",
    "......T",
    "S.CCC.T",
)


class EnvFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class GridSpec:
    layout: tuple[str, ...] = DEFAULT_CLIFF_LAYOUT
    fenced: bool = True
    step_reward: float = -1.0
    gamma: float = 0.95

    @property
    def rows(self) -> int:
        return len(self.layout)

    @property
    def cols(self) -> int:
        return len(self.layout[0]) if self.layout else 0

    def kind(self, r: int, c: int) -> str:
        return CELL_KINDS[self.layout[r][c]]

    def cells(self, kind: str) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols) if self.kind(r, c) == kind]

    def validate(self) -> None:
        if not self.layout:
            raise ValueError("grid has no rows")
        for r, row in enumerate(self.layout):
            if len(row) != self.cols:
                raise ValueError(f"grid row {r} has length {len(row)}, expected {self.cols}")
            for ch in row:
                if ch not in CELL_KINDS:
                    raise ValueError(f"grid row {r}: unknown cell character {ch!r}")
        if len(self.cells("start")) != 1:
            raise ValueError("grid needs exactly one start cell")
        if not self.cells("target"):
            raise ValueError("grid needs at least one target cell")
        if not self.cells("cliff"):
            raise ValueError("cliff grid needs at least one cliff cell")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma {self.gamma} not in (0, 1)")

    def transposed(self) -> "GridSpec":
        cols = ["".join(row[c] for row in self.layout) for c in range(self.cols)]
        return GridSpec(tuple(cols), self.fenced, self.step_reward, self.gamma)


def _build_grid(spec: GridSpec) -> Mdp:
    spec.validate()
    rows, cols = spec.rows, spec.cols
    index = lambda r, c: r * cols + c  # noqa: E731
    states, actions, nxt, rewards, coords = [], [], [], [], []
    for r in range(rows):
        for c in range(cols):
            states.append(f"r{r}c{c}")
            coords.append((float(r), float(c)))
            kind = spec.kind(r, c)
            acts, succ, rew = [], [], []
            for name, (dr, dc) in MOVES.items():
                if kind in ("target", "cliff"):
                    acts.append(name)
                    succ.append(index(r, c))
                    rew.append(0.0)
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < rows and 0 <= cc < cols):
                    rr, cc = r, c
                if spec.fenced and spec.kind(rr, cc) == "cliff":
                    continue
                acts.append(name)
                succ.append(index(rr, cc))
                rew.append(float(spec.step_reward))
            actions.append(tuple(acts))
            nxt.append(tuple(succ))
            rewards.append(tuple(rew))
    (sr, sc), = spec.cells("start")
    return Mdp(
        states=tuple(states),
        actions=tuple(actions),
        next_state=tuple(nxt),
        rewards=tuple(rewards),
        failure=frozenset(index(r, c) for r, c in spec.cells("cliff")),
        discount=float(spec.gamma),
        terminal_failure=False,
        start=index(sr, sc),
        coords=tuple(coords),
        grid_shape=(rows, cols),
    )


def build_fenced_cliff(spec: GridSpec = GridSpec()) -> Mdp:
    """Cliff grid where actions into the cliff are removed from the action sets."""
    if not spec.fenced:
        raise ValueError("build_fenced_cliff needs a spec with fenced=True")
    return _build_grid(spec)


def build_unconstrained_cliff(spec: GridSpec = GridSpec(fenced=False)) -> tuple[Mdp, np.ndarray]:
    """Cliff grid whose cliff cells can be entered and are absorbing."""
    if spec.fenced:
        raise ValueError("build_unconstrained_cliff needs a spec with fenced=False")
    mdp = _build_grid(spec)
    return mdp, default_indicator(mdp)


@dataclass(frozen=True)
class PendulumSpec:
    theta_bins: int = 41
    omega_bins: int = 41
    theta_range: float = math.radians(100.0)
    omega_range: float = 8.0
    torques: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    dt: float = 0.05
    gravity: float = 10.0
    mass: float = 1.0
    length: float = 1.0
    target_angle: float = math.radians(40.0)
    failure_angle: float = math.radians(90.0)
    penalty: float = 90.0
    gamma: float = 0.99

    def validate(self) -> None:
        if self.theta_bins < 2 or self.omega_bins < 2:
            raise ValueError("pendulum grid needs at least 2 bins per axis")
        if not 0 < self.failure_angle <= self.theta_range:
            raise ValueError("failure_angle must lie in (0, theta_range]")
        if not self.torques:
            raise ValueError("torque set is empty")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma {self.gamma} not in (0, 1)")

    def theta_grid(self) -> np.ndarray:
        return np.linspace(-self.theta_range, self.theta_range, self.theta_bins)

    def omega_grid(self) -> np.ndarray:
        return np.linspace(-self.omega_range, self.omega_range, self.omega_bins)


def build_pendulum(spec: PendulumSpec = PendulumSpec()) -> tuple[Mdp, np.ndarray]:
    """Discretized inverted pendulum with a terminal failure sink.

    The angle is measured from upright.  One semi-implicit Euler step per
    action, then nearest-cell snapping (angular velocity clipped to range).
    Every cell with ``|theta| >= failure_angle`` is merged into the sink.
    """
    spec.validate()
    thetas, omegas = spec.theta_grid(), spec.omega_grid()
    d_theta = thetas[1] - thetas[0]
    d_omega = omegas[1] - omegas[0]
    # small slack so on-grid angles equal to the failure angle count as failed
    failed_bin = np.abs(thetas) >= spec.failure_angle - 1e-9 * d_theta
    live = [(i, j) for i in range(spec.theta_bins) if not failed_bin[i] for j in range(spec.omega_bins)]
    index = {cell: k for k, cell in enumerate(live)}
    sink = len(live)
    g, m, l = spec.gravity, spec.mass, spec.length
    names = tuple(f"tau={t:g}" for t in spec.torques)

    states, actions, nxt, rewards, coords = [], [], [], [], []
    cost = []
    for i, j in live:
        theta, omega = thetas[i], omegas[j]
        states.append(f"th{i}_om{j}")
        coords.append((float(theta), float(omega)))
        reward = -float((theta - spec.target_angle) ** 2)
        succ, c = [], []
        for tau in spec.torques:
            acc = 3.0 * g / (2.0 * l) * math.sin(theta) + 3.0 * tau / (m * l * l)
            w = min(max(omega + acc * spec.dt, -spec.omega_range), spec.omega_range)
            th = theta + w * spec.dt
            ti = int(np.rint((min(max(th, -spec.theta_range), spec.theta_range) + spec.theta_range) / d_theta))
            wj = int(np.rint((w + spec.omega_range) / d_omega))
            if abs(th) >= spec.failure_angle or failed_bin[ti]:
                succ.append(sink)
                c.append(1.0)
            else:
                succ.append(index[(ti, wj)])
                c.append(0.0)
        actions.append(names)
        nxt.append(tuple(succ))
        rewards.append((reward,) * len(spec.torques))
        cost.append(c)
    states.append("fail")
    coords.append((math.nan, math.nan))
    actions.append(("stay",))
    nxt.append((sink,))
    rewards.append((0.0,))
    cost.append([0.0])

    start = index[(int(np.argmin(np.abs(thetas))), int(np.argmin(np.abs(omegas))))]
    mdp = Mdp(
        states=tuple(states),
        actions=tuple(actions),
        next_state=tuple(nxt),
        rewards=tuple(rewards),
        failure=frozenset({sink}),
        discount=float(spec.gamma),
        terminal_failure=True,
        start=start,
        coords=tuple(coords),
    )
    indicator = np.zeros((mdp.n_states, mdp.max_actions))
    for x, row in enumerate(cost):
        indicator[x, : len(row)] = row
    return mdp, indicator


def build_counterexample(gamma: float = 0.95) -> Mdp:
    """Five-state graph separating on-policy entropy from the off-policy safety measure."""
    labels = ("S1", "S2", "S3", "S4", "F")
    s1, s2, s3, s4, f = range(5)
    nxt = ((s2, s3, s1), (s2, s2, s4), (s3, s4, s4), (s4, f, f), (f, f, f))
    return Mdp(
        states=labels,
        actions=(("a0", "a1", "a2"),) * 5,
        next_state=nxt,
        rewards=((0.0, 0.0, 0.0),) * 5,
        failure=frozenset({f}),
        discount=gamma,
    )


# --- text format -------------------------------------------------------------

_HEADER = re.compile(r"viab-env v1 (grid|explicit)")
_GRID_LINE = re.compile(r"rows=(\d+) cols=(\d+) fenced=(true|false) step_reward=(\S+) gamma=(\S+)")
_EXPLICIT_LINE = re.compile(r"states=(\d+) gamma=(\S+)")
_STATE_LINE = re.compile(r"state (\S+) failure=([01])")
_ACTION_LINE = re.compile(r"action (\S+) -> (\S+)(?: indicator (\S+))?")


def _float(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise EnvFormatError(f"{what}: {token!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise EnvFormatError(f"{what}: {token!r} is not finite", lineno)
    return value


def load_environment(text: str) -> tuple[Mdp, Optional[np.ndarray]]:
    """Parse a ``viab-env v1`` document.

    Grid documents return the default indicator for unfenced grids and
    ``None`` for fenced ones; explicit documents return the listed indicator
    values, or ``None`` when no action carries one.
    """
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EnvFormatError("empty environment file", 1)
    m = _HEADER.fullmatch(lines[0])
    if not m:
        raise EnvFormatError(f"bad header {lines[0]!r}", 1)
    if m.group(1) == "grid":
        return _load_grid(lines)
    return _load_explicit(lines)


def _load_grid(lines: list[str]) -> tuple[Mdp, Optional[np.ndarray]]:
    if len(lines) < 2:
        raise EnvFormatError("missing grid parameters line", 2)
    m = _GRID_LINE.fullmatch(lines[1])
    if not m:
        raise EnvFormatError(f"bad grid parameters {lines[1]!r}", 2)
    rows, cols = int(m.group(1)), int(m.group(2))
    fenced = m.group(3) == "true"
    step_reward = _float(m.group(4), 2, "step_reward")
    gamma = _float(m.group(5), 2, "gamma")
    body = lines[2:]
    if len(body) != rows:
        raise EnvFormatError(f"expected {rows} grid rows, found {len(body)}", 3 + min(len(body), rows))
    for r, row in enumerate(body):
        if len(row) != cols:
            raise EnvFormatError(f"grid row {r} has length {len(row)}, expected {cols}", 3 + r)
        bad = [ch for ch in row if ch not in CELL_KINDS]
        if bad:
            raise EnvFormatError(f"grid row {r}: unknown cell character {bad[0]!r}", 3 + r)
    spec = GridSpec(tuple(body), fenced, step_reward, gamma)
    try:
        if fenced:
            return build_fenced_cliff(spec), None
        return build_unconstrained_cliff(spec)
    except ValueError as err:
        raise EnvFormatError(str(err)) from None


def _load_explicit(lines: list[str]) -> tuple[Mdp, Optional[np.ndarray]]:
    if len(lines) < 2:
        raise EnvFormatError("missing states line", 2)
    m = _EXPLICIT_LINE.fullmatch(lines[1])
    if not m:
        raise EnvFormatError(f"bad states line {lines[1]!r}", 2)
    n = int(m.group(1))
    gamma = _float(m.group(2), 2, "gamma")
    blocks: list[tuple[str, bool, list]] = []
    for lineno, line in enumerate(lines[2:], start=3):
        sm = _STATE_LINE.fullmatch(line)
        if sm:
            blocks.append((sm.group(1), sm.group(2) == "1", []))
            continue
        am = _ACTION_LINE.fullmatch(line)
        if am:
            if not blocks:
                raise EnvFormatError("action before any state", lineno)
            reward = _float(am.group(1), lineno, "reward")
            ind = None if am.group(3) is None else _float(am.group(3), lineno, "indicator")
            blocks[-1][2].append((reward, am.group(2), ind, lineno))
            continue
        raise EnvFormatError(f"unrecognized line {line!r}", lineno)
    if len(blocks) != n:
        raise EnvFormatError(f"header declares {n} states, found {len(blocks)}")
    ids = [b[0] for b in blocks]
    if len(set(ids)) != n:
        raise EnvFormatError("duplicate state identifiers")
    pos = {label: k for k, label in enumerate(ids)}
    has_ind = {a[2] is not None for b in blocks for a in b[2]}
    if len(has_ind) > 1:
        raise EnvFormatError("indicator values must be given for all actions or none")
    nxt, rewards, actions, indicator_rows = [], [], [], []
    for label, _, acts in blocks:
        if not acts:
            raise EnvFormatError(f"state {label!r} has no actions")
        succ = []
        for reward, target, _, lineno in acts:
            if target not in pos:
                raise EnvFormatError(f"unknown target state {target!r}", lineno)
            succ.append(pos[target])
        nxt.append(tuple(succ))
        rewards.append(tuple(a[0] for a in acts))
        actions.append(tuple(f"a{i}" for i in range(len(acts))))
        indicator_rows.append([a[2] for a in acts])
    failure = frozenset(k for k, b in enumerate(blocks) if b[1])
    terminal = bool(failure) and all(
        nxt[y] == (y,) and rewards[y] == (0.0,) for y in failure
    )
    mdp = Mdp(tuple(ids), tuple(actions), tuple(nxt), tuple(rewards), failure, gamma, terminal)
    indicator = None
    if has_ind == {True}:
        indicator = np.zeros((mdp.n_states, mdp.max_actions))
        for x, row in enumerate(indicator_rows):
            indicator[x, : len(row)] = row
    return mdp, indicator


def save_grid(spec: GridSpec) -> str:
    spec.validate()
    head = (
        f"viab-env v1 grid\nrows={spec.rows} cols={spec.cols} "
        f"fenced={'true' if spec.fenced else 'false'} "
        f"step_reward={float(spec.step_reward)!r} gamma={float(spec.gamma)!r}\n"
    )
    return head + "".join(row + "\n" for row in spec.layout)


def save_environment(mdp: Mdp, indicator: Optional[np.ndarray] = None) -> str:
    """Serialize any MDP in the explicit format (see :func:`save_grid` for grids)."""
    out = ["viab-env v1 explicit", f"states={mdp.n_states} gamma={float(mdp.discount)!r}"]
    for x in range(mdp.n_states):
        out.append(f"state {mdp.states[x]} failure={int(x in mdp.failure)}")
        for i, (y, r) in enumerate(zip(mdp.next_state[x], mdp.rewards[x])):
            line = f"action {float(r)!r} -> {mdp.states[y]}"
            if indicator is not None:
                line += f" indicator {float(indicator[x, i])!r}"
            out.append(line)
    return "\n".join(out) + "\n"

