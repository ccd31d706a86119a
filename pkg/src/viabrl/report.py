"""Parameter sweeps, CSV/TSV tables and SVG policy maps."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .environments import MOVES, load_environment
from .mdp import Mdp, SolveConfig, StochasticPolicy, policy_evaluate_entropy, policy_evaluate_return
from .metrics import delta_safety, is_mode_safe
from .robustness import NoiseModel, RolloutConfig, success_rate
from .solver import mode_policy, solve_penalized
from .viability import default_indicator, viability_kernel

SWEEP_COLUMNS = (
    "alpha", "p", "epsilon", "delta_safety", "mode_safe", "return_mode",
    "entropy_return", "success_rate", "wilson_lo", "wilson_hi", "status",
)


def fmt(x: float) -> str:
    """17 significant digits: parses back to the same double."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SweepGrid:
    mdp: Mdp
    indicator: np.ndarray
    alphas: Sequence[float]
    penalties: Sequence[float]
    epsilons: Sequence[float]
    rollout: RolloutConfig = RolloutConfig()
    solve: SolveConfig = SolveConfig()

    def __post_init__(self):
        for name in ("alphas", "penalties", "epsilons"):
            values = list(getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if any(a <= 0 for a in self.alphas):
            raise ValueError("alphas must be > 0")
        if any(p < 0 for p in self.penalties):
            raise ValueError("penalties must be >= 0")
        if any(not 0 <= e <= 1 for e in self.epsilons):
            raise ValueError("epsilons must lie in [0, 1]")


@dataclass
class SweepReport:
    rows: list[dict] = field(default_factory=list)
    policies: dict = field(default_factory=dict)  # (alpha, p) -> StochasticPolicy

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()


def load_sweep_config(path: Path, seed: int) -> SweepGrid:
    """Read a JSON sweep description; ``env`` is resolved relative to the file."""
    path = Path(path)
    conf = json.loads(path.read_text())
    unknown = set(conf) - {"env", "alphas", "penalties", "epsilons", "episodes",
                           "horizon", "start", "tolerance", "max_iterations"}
    if unknown:
        raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
    env_path = (path.parent / conf["env"]).resolve()
    mdp, indicator = load_environment(env_path.read_text())
    if indicator is None:
        indicator = default_indicator(mdp)
    start = conf.get("start")
    if isinstance(start, str):
        start = mdp.state_index(start)
    return SweepGrid(
        mdp=mdp,
        indicator=indicator,
        alphas=[float(a) for a in conf["alphas"]],
        penalties=[float(p) for p in conf["penalties"]],
        epsilons=[float(e) for e in conf["epsilons"]],
        rollout=RolloutConfig(int(conf.get("episodes", 100)), int(conf.get("horizon", 200)), seed, start),
        solve=SolveConfig(float(conf.get("tolerance", 1e-5)), int(conf.get("max_iterations", 1000))),
    )


def run_sweep(grid: SweepGrid) -> SweepReport:
    """Solve every (alpha, p) cell and evaluate its mode under every epsilon.

    A failing cell is reported through the ``status`` column.
    """
    mdp = grid.mdp
    decomposition = viability_kernel(mdp)
    start = mdp.start if grid.rollout.start_state is None else grid.rollout.start_state
    report = SweepReport()
    for alpha in grid.alphas:
        for p in grid.penalties:
            base = {"alpha": fmt(alpha), "p": fmt(p)}
            try:
                _, pi = solve_penalized(mdp, alpha, p, grid.indicator, grid.solve)
                mode = mode_policy(pi)
                mode_pi = mode.as_policy()
                cell = {
                    "delta_safety": fmt(delta_safety(pi, decomposition)),
                    "mode_safe": "true" if is_mode_safe(mdp, mode, decomposition) else "false",
                    "return_mode": fmt(policy_evaluate_return(mdp, mode_pi, grid.solve)[start]),
                    "entropy_return": fmt(policy_evaluate_entropy(mdp, pi, grid.solve)[start]),
                }
            except (ValueError, RuntimeError) as err:
                for eps in grid.epsilons:
                    row = dict.fromkeys(SWEEP_COLUMNS, "")
                    row.update(base, epsilon=fmt(eps), status=f"error: {err}")
                    report.rows.append(row)
                continue
            report.policies[(alpha, p)] = pi
            for eps in grid.epsilons:
                rep = success_rate(mdp, mode_pi, NoiseModel(eps), grid.rollout)
                row = dict(base, epsilon=fmt(eps), **cell)
                row.update(
                    success_rate=fmt(rep.success_rate),
                    wilson_lo=fmt(rep.wilson_interval[0]),
                    wilson_hi=fmt(rep.wilson_interval[1]),
                    status="ok",
                )
                report.rows.append(row)
    return report


# --- pair tables ---------------------------------------------------------------

def write_pair_table(mdp: Mdp, table: np.ndarray) -> str:
    lines = ["state\taction\tvalue"]
    for x, i in mdp.pairs():
        lines.append(f"{x}\t{i}\t{fmt(table[x, i])}")
    return "\n".join(lines) + "\n"


def read_pair_table(mdp: Mdp, text: str) -> np.ndarray:
    lines = text.rstrip("\n").split("\n")
    if lines[0] != "state\taction\tvalue":
        raise ValueError(f"bad table header {lines[0]!r}")
    table = np.zeros((mdp.n_states, mdp.max_actions))
    seen = np.zeros_like(mdp.valid)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        x, i, v = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= x < mdp.n_states and 0 <= i < mdp.n_actions[x]):
            raise ValueError(f"line {lineno}: no pair ({x}, {i}) in this environment")
        table[x, i] = v
        seen[x, i] = True
    missing = mdp.valid & ~seen
    if missing.any():
        x, i = np.argwhere(missing)[0]
        raise ValueError(f"table misses pair ({x}, {i})")
    return table


# --- SVG ---------------------------------------------------------------------

_VIRIDIS = np.array([
    (68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37),
], dtype=float)


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    k = min(int(t), len(_VIRIDIS) - 2)
    rgb = _VIRIDIS[k] + (t - k) * (_VIRIDIS[k + 1] - _VIRIDIS[k])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in rgb)


def expected_displacement(mdp: Mdp, policy: StochasticPolicy) -> np.ndarray:
    """Mean (row, col) move direction per state, from the nominal action headings."""
    out = np.zeros((mdp.n_states, 2))
    for x, i in mdp.pairs():
        move = MOVES.get(mdp.actions[x][i])
        if move is not None:
            out[x] += policy.probs[x, i] * np.asarray(move, dtype=float)
    return out


def render_policy_map(mdp: Mdp, policy: StochasticPolicy, values: Optional[np.ndarray] = None,
                      cell: int = 48) -> str:
    """SVG heatmap of ``values`` with one expected-move arrow per cell."""
    if mdp.grid_shape is None:
        raise ValueError("policy maps are only defined on grid environments")
    rows, cols = mdp.grid_shape
    disp = expected_displacement(mdp, policy)
    vals = np.zeros(mdp.n_states) if values is None else np.asarray(values, dtype=float)
    shown = [x for x in range(mdp.n_states) if x not in mdp.failure]
    lo = min(vals[shown]) if shown else 0.0
    hi = max(vals[shown]) if shown else 1.0
    span = hi - lo if hi > lo else 1.0
    w, h = cols * cell, rows * cell
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        "<defs>",
        '<marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">',
        '<path d="M0,0 L6,3 L0,6 z" fill="#1f3fbf"/>',
        "</marker>",
        "</defs>",
    ]
    for x in range(mdp.n_states):
        r, c = divmod(x, cols)
        fill = "#b03030" if x in mdp.failure else _color((vals[x] - lo) / span)
        out.append(
            f'<rect x="{c * cell}" y="{r * cell}" width="{cell}" height="{cell}" '
            f'fill="{fill}" stroke="#ffffff" stroke-width="1">'
            f"<title>{escape(mdp.states[x])}: {fmt(vals[x])}</title></rect>"
        )
    half = cell / 2
    for x in shown:
        r, c = divmod(x, cols)
        dr, dc = disp[x]
        if np.hypot(dr, dc) < 1e-9:
            continue
        cx, cy = c * cell + half, r * cell + half
        ex, ey = cx + 0.8 * half * dc, cy + 0.8 * half * dr
        out.append(
            f'<line x1="{cx:.3f}" y1="{cy:.3f}" x2="{ex:.3f}" y2="{ey:.3f}" '
            'stroke="#1f3fbf" stroke-width="2" marker-end="url(#head)"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
