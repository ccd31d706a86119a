"""Command-line entry point: ``viabrl <command> ...``.

Exit status is 0 on success, 1 on a domain error (bad environment, solver
failure, ...) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .environments import load_environment
from .mdp import (
    SolveConfig,
    StochasticPolicy,
    policy_entropy,
    policy_evaluate_return,
    validate_mdp,
)
from .report import (
    fmt,
    load_sweep_config,
    read_pair_table,
    render_policy_map,
    run_sweep,
    write_pair_table,
)
from .robustness import NoiseModel, RolloutConfig, success_rate
from .solver import mode_policy, solve_constrained, solve_penalized
from .viability import (
    INDICATOR_CHECK_LIMIT,
    default_indicator,
    is_dynamic_indicator,
    viability_kernel,
)


class DomainError(Exception):
    pass


def _load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DomainError(f"cannot read {path}: {err.strerror}") from err
    mdp, indicator = load_environment(text)
    problems = validate_mdp(mdp)
    if problems:
        raise DomainError("invalid environment: " + "; ".join(problems))
    return mdp, indicator


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _read_policy(mdp, path) -> StochasticPolicy:
    table = read_pair_table(mdp, Path(path).read_text(encoding="utf-8"))
    policy = StochasticPolicy(table)
    policy.check(mdp, atol=1e-9)
    return policy


def cmd_solve(args) -> int:
    mdp, indicator = _load(args.env)
    if args.gamma is not None:
        mdp = dataclasses.replace(mdp, discount=args.gamma)
    cfg = SolveConfig(args.tol, args.max_iters)
    if args.constrained:
        if args.penalty is not None:
            raise DomainError("--penalty has no effect with --constrained")
        qf, pi = solve_constrained(mdp, viability_kernel(mdp), args.alpha, cfg)
    else:
        if indicator is None:
            indicator = default_indicator(mdp)
        qf, pi = solve_penalized(mdp, args.alpha, args.penalty or 0.0, indicator, cfg)
    _write(args.out, write_pair_table(mdp, qf.values))
    if args.policy_out:
        _write(args.policy_out, write_pair_table(mdp, pi.probs))
    print(f"iterations\t{qf.iterations}")
    print(f"residual\t{fmt(qf.residual)}")
    return 0


def cmd_kernel(args) -> int:
    mdp, _ = _load(args.env)
    dec = viability_kernel(mdp)
    lines = [
        f"viable_states\t{int(dec.viable_states.sum())}",
        f"critical_pairs\t{int(dec.critical_pairs.sum())}",
    ]
    if mdp.grid_shape is not None:
        rows, cols = mdp.grid_shape
        lines.append("mask")
        for r in range(rows):
            lines.append("".join("1" if dec.viable_states[r * cols + c] else "0" for c in range(cols)))
    else:
        lines.append("viable")
        lines.extend(mdp.states[x] for x in np.flatnonzero(dec.viable_states))
    lines.append("critical")
    lines.extend(
        f"{mdp.states[x]}\t{mdp.actions[x][i]}" for x, i in np.argwhere(dec.critical_pairs)
    )
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_rollout(args) -> int:
    mdp, _ = _load(args.env)
    policy = _read_policy(mdp, args.policy)
    if args.mode:
        policy = mode_policy(policy).as_policy()
    cfg = RolloutConfig(args.episodes, args.horizon, args.seed)
    rep = success_rate(mdp, policy, NoiseModel(args.epsilon), cfg)
    print(f"episodes\t{rep.episodes}")
    print(f"success_rate\t{fmt(rep.success_rate)}")
    print(f"wilson_lo\t{fmt(rep.wilson_interval[0])}")
    print(f"wilson_hi\t{fmt(rep.wilson_interval[1])}")
    print(f"mean_return\t{fmt(rep.mean_return)}")
    if rep.mean_min_distance is not None:
        print(f"mean_min_distance\t{fmt(rep.mean_min_distance)}")
    return 0


def cmd_sweep(args) -> int:
    try:
        grid = load_sweep_config(args.config, args.seed)
    except OSError as err:
        raise DomainError(f"cannot read sweep inputs: {err}") from err
    except (KeyError, TypeError) as err:
        raise DomainError(f"malformed sweep config: {err!r}") from err
    report = run_sweep(grid)
    _write(args.out, report.to_csv())
    if args.svg:
        if grid.mdp.grid_shape is None:
            raise DomainError("--svg needs a grid environment")
        out_dir = Path(args.svg)
        out_dir.mkdir(parents=True, exist_ok=True)
        for (alpha, p), pi in report.policies.items():
            svg = render_policy_map(grid.mdp, pi, policy_entropy(pi))
            _write(out_dir / f"policy_alpha{fmt(alpha)}_p{fmt(p)}.svg", svg)
    failed = sum(row["status"] != "ok" for row in report.rows)
    print(f"rows\t{len(report.rows)}")
    print(f"failed\t{failed}")
    return 0


def cmd_render(args) -> int:
    mdp, _ = _load(args.env)
    policy = _read_policy(mdp, args.policy)
    if args.values == "entropy":
        values = policy_entropy(policy)
    else:
        values = policy_evaluate_return(mdp, policy, SolveConfig())
    _write(args.out, render_policy_map(mdp, policy, values))
    return 0


def cmd_validate(args) -> int:
    try:
        text = Path(args.env).read_text(encoding="utf-8")
    except OSError as err:
        raise DomainError(f"cannot read {args.env}: {err.strerror}") from err
    mdp, indicator = load_environment(text)
    problems = validate_mdp(mdp)
    if not problems and indicator is not None:
        if mdp.n_states * mdp.max_actions <= INDICATOR_CHECK_LIMIT:
            ok, witness = is_dynamic_indicator(mdp, indicator, viability_kernel(mdp))
            if not ok:
                path = " ".join(f"({mdp.states[x]},{mdp.actions[x][i]})" for x, i in witness)
                problems.append(f"indicator is not a dynamic indicator; witness {path}")
        else:
            print("indicator check skipped: environment exceeds the size guard")
    for line in problems:
        print(line)
    if problems:
        return 1
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viabrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="soft value iteration, writes Q as TSV")
    p.add_argument("--env", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--penalty", type=float)
    p.add_argument("--constrained", action="store_true")
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--policy-out", help="also write the softmax policy as TSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("kernel", help="viability kernel summary")
    p.add_argument("--env", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("rollout", help="noisy Monte-Carlo evaluation of a policy file")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", action="store_true", help="evaluate the mode of the policy")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("sweep", help="(alpha, p, epsilon) grid to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="directory for per-cell policy maps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="SVG policy map")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--values", choices=("entropy", "return"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="check an environment file")
    p.add_argument("--env", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)  # exits with status 2 on usage errors
    try:
        return args.func(args)
    except (DomainError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
