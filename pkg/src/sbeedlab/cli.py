"""Command-line interface.

Exit codes: 0 when the command's checks pass, 1 when a bound or identity
check fails, 2 for usage, configuration, or IO problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import sample_dataset
from .errors import IoError, SbeedlabError
from .experiments import (
    Q_CLASS_STREAM,
    stream_seed,
    build_q_perturbation_classes,
    load_config,
    resolve_classes,
    resolve_mdp,
    resolve_mu,
    run_lambda_sweep,
    run_rate_experiment,
    run_seed,
)
from .mdp import SoftParams, hard_value_iteration, performance
from .solvers import msbo_solve, sbeed_solve
from .suite import run_all
from .verify import suboptimality_check


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbeedlab",
        description="Batch-RL minimax solvers and bound verification on tabular MDPs.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="override config seed")
    common.add_argument("--out", default=None, help="override config output_dir")
    common.add_argument(
        "--force", action="store_true", help="overwrite existing report files"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "run the smoothed minimax solve on one sampled dataset"),
        ("sbeed", "alias of solve"),
        ("msbo", "run the hard-max baseline solve on one sampled dataset"),
        ("verify", "run the identity and bound check suites"),
        ("rate", "residual decay across the config's n grid"),
        ("lambda-sweep", "exact regularization-bias sweep"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _write_result(payload: dict, out_dir, force: bool) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "result.json"
    if target.exists() and not force:
        raise IoError(f"{target} already exists; pass --force to overwrite")
    target.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _cmd_solve(args, config, out_dir) -> int:
    lam = SoftParams(config.lam)
    mdp = resolve_mdp(config)
    mu = resolve_mu(config, mdp, lam)
    classes = resolve_classes(config, mdp, lam)
    n = config.n_grid[-1]
    seed = run_seed(config.seed, 0, n)
    data = sample_dataset(mdp, mu, n, seed)
    result = sbeed_solve(data, classes, lam)
    report = suboptimality_check(mdp, lam, mu, classes, result)
    payload = {
        **result.to_json(),
        "schema_version": 1,
        "suboptimality": report.suboptimality,
        "residual_norm": report.residual_norm,
        "c2": report.concentrability,
        "bound_rhs": report.rhs,
        "bound_holds": report.holds,
    }
    if out_dir is not None:
        _write_result(payload, out_dir, args.force)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    print(
        f"solve: n={n} objective={result.objective_value:.6e} "
        f"suboptimality={report.suboptimality:.6e} rhs={report.rhs:.6e} "
        f"bound {'holds' if report.holds else 'VIOLATED'}"
    )
    return 0 if report.holds else 1


def _cmd_msbo(args, config, out_dir) -> int:
    mdp = resolve_mdp(config)
    lam = SoftParams(config.lam)
    mu = resolve_mu(config, mdp, lam)
    q_class, f_class = build_q_perturbation_classes(
        mdp, config.class_spec, stream_seed(config.seed, Q_CLASS_STREAM)
    )
    n = config.n_grid[-1]
    seed = run_seed(config.seed, 0, n)
    data = sample_dataset(mdp, mu, n, seed)
    _, pi_greedy, value = msbo_solve(data, q_class, f_class)
    _, pi_hard = hard_value_iteration(mdp)
    payload = {
        "schema_version": 1,
        "objective_value": value,
        "suboptimality": performance(mdp, pi_hard) - performance(mdp, pi_greedy),
        "n": n,
        "seed": seed,
    }
    if out_dir is not None:
        _write_result(payload, out_dir, args.force)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    print(
        f"msbo: n={n} objective={value:.6e} suboptimality={payload['suboptimality']:.6e}"
    )
    return 0


def _cmd_verify(args, config, out_dir) -> int:
    results = run_all(seed=config.seed)
    name_w = max(len(r.name) for r in results)
    print(f"{'check'.ljust(name_w)}  {'worst':>12}  {'threshold':>12}  status")
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name.ljust(name_w)}  {r.worst:>12.4e}  {r.threshold:>12.4e}  {status}")
        if not r.passed:
            print(f"  -> {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results)} checks: {len(results) - failed} passed, {failed} failed")
    return 0 if failed == 0 else 1


def _cmd_rate(args, config, out_dir) -> int:
    _, summary = run_rate_experiment(config, out_dir=out_dir, force=args.force)
    slope = summary["slope"]
    slope_text = "n/a" if slope is None else f"{slope:.4f}"
    print(
        f"rate: rows={summary['rows']} slope={slope_text} "
        f"bounds {'hold' if summary['bounds_hold'] else 'VIOLATED'}"
    )
    return 0 if summary["bounds_hold"] else 1


def _cmd_sweep(args, config, out_dir) -> int:
    _, summary = run_lambda_sweep(config, out_dir=out_dir, force=args.force)
    print(
        f"lambda-sweep: rows={summary['rows']} max_excess={summary['max_excess']:.3e} "
        f"bias bound {'holds' if summary['all_within_bound'] else 'VIOLATED'}"
    )
    return 0 if summary["all_within_bound"] else 1


_COMMANDS = {
    "solve": _cmd_solve,
    "sbeed": _cmd_solve,
    "msbo": _cmd_msbo,
    "verify": _cmd_verify,
    "rate": _cmd_rate,
    "lambda-sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(
                config, seed=args.seed, raw={**config.raw, "seed": args.seed}
            )
        out_dir = args.out if args.out is not None else config.output_dir
        return _COMMANDS[args.command](args, config, out_dir)
    except SbeedlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
