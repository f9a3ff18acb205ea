"""Config-driven experiments: statistical-rate runs, regularization sweeps,
and deterministic CSV/JSON report emission.

Reproducibility contract: (config, seed) determines every output byte.
Per-run dataset seeds derive from SeedSequence((seed, rep, n)); the MDP and
class builders draw from fixed side streams of the same root. Reports avoid
wall-clock or environment-dependent fields for the same reason.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classes import (
    ClassSpec,
    FunctionClasses,
    build_perturbation_classes,
    concentrability,
    helper_realizability_error,
    occupancy_distribution,
    realizability_error,
    uniform_distribution,
    validate_distribution,
    weighted_norm,
)
from .data import sample_dataset
from .errors import IoError, SbeedlabError, ValidationError
from .mdp import (
    FiniteMdp,
    SoftParams,
    consistency_operator,
    hard_value_iteration,
    load_mdp,
    performance,
    random_mdp,
    soft_value_iteration,
)
from .solvers import sbeed_solve
from .verify import theorem_bound

SCHEMA_VERSION = 1
RATE_COLUMNS = (
    "n", "rep", "seed", "suboptimality", "residual_norm", "objective", "c2", "rhs_total",
)
SWEEP_COLUMNS = (
    "lambda", "j_star", "j_soft", "bias_observed", "bias_bound", "within_bound",
)
# Side-stream indices under the root seed; per-run seeds use (seed, rep, n).
MDP_STREAM = 0
CLASS_STREAM = 1
Q_CLASS_STREAM = 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description loaded from a JSON file."""

    mdp_source: dict
    lam: float
    mu: dict
    class_spec: ClassSpec
    n_grid: tuple[int, ...]
    repetitions: int
    delta: float
    seed: int
    output_dir: str | None = None
    lambda_grid: tuple[float, ...] | None = None
    raw: dict = field(repr=False, default_factory=dict)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; see README for the schema."""
    path = Path(path)
    if not path.is_file():
        raise IoError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IoError(f"config is not valid JSON: {exc}") from None

    for key in ("mdp", "lambda", "class_spec", "n_grid", "repetitions", "delta", "seed"):
        _require(key in raw, f"config missing required key {key!r}")

    mdp_source = raw["mdp"]
    _require(isinstance(mdp_source, dict), "mdp must be an object")
    kind = mdp_source.get("kind")
    if kind == "file":
        _require("path" in mdp_source, "mdp of kind 'file' needs a path")
        mdp_path = path.parent / mdp_source["path"]
        if not mdp_path.is_file():
            raise IoError(f"referenced mdp file not found: {mdp_path}")
        # Resolve relative to the config file, not the interpreter's cwd.
        mdp_source = {**mdp_source, "path": str(mdp_path)}
    elif kind == "random":
        for k in ("n_states", "n_actions", "discount"):
            _require(k in mdp_source, f"random mdp needs {k!r}")
    else:
        raise ValidationError(f"mdp kind must be 'file' or 'random', got {kind!r}")

    lam = float(raw["lambda"])
    _require(lam > 0.0 and math.isfinite(lam), "lambda must be positive and finite")

    mu = raw.get("mu", {"kind": "uniform"})
    _require(isinstance(mu, dict), "mu must be an object")
    _require(
        mu.get("kind") in ("uniform", "occupancy", "table"),
        f"mu kind must be uniform, occupancy, or table, got {mu.get('kind')!r}",
    )
    if mu["kind"] == "table":
        _require("values" in mu, "mu of kind 'table' needs values")

    cs = raw["class_spec"]
    _require(isinstance(cs, dict), "class_spec must be an object")
    for k in ("n_values", "n_policies", "n_helpers"):
        _require(k in cs and int(cs[k]) >= 1, f"class_spec needs {k} >= 1")
    class_spec = ClassSpec(
        n_values=int(cs["n_values"]),
        n_policies=int(cs["n_policies"]),
        n_helpers=int(cs["n_helpers"]),
        scale=float(cs.get("scale", 0.5)),
        realizable=bool(cs.get("realizable", True)),
        helper_complete=bool(cs.get("helper_complete", False)),
    )
    _require(class_spec.scale > 0.0, "class_spec.scale must be positive")

    n_grid = tuple(int(n) for n in raw["n_grid"])
    _require(len(n_grid) >= 1 and n_grid[0] >= 1, "n_grid needs positive sizes")
    _require(
        all(a < b for a, b in zip(n_grid, n_grid[1:])),
        "n_grid must be strictly increasing",
    )

    repetitions = int(raw["repetitions"])
    _require(repetitions >= 1, "repetitions must be >= 1")
    delta = float(raw["delta"])
    _require(0.0 < delta < 1.0, "delta must lie in (0, 1)")
    seed = int(raw["seed"])

    lambda_grid = None
    if "lambda_grid" in raw:
        lambda_grid = tuple(float(v) for v in raw["lambda_grid"])
        _require(
            len(lambda_grid) >= 1 and all(v > 0.0 for v in lambda_grid),
            "lambda_grid must be positive",
        )

    return ExperimentConfig(
        mdp_source=mdp_source,
        lam=lam,
        mu=mu,
        class_spec=class_spec,
        n_grid=n_grid,
        repetitions=repetitions,
        delta=delta,
        seed=seed,
        output_dir=raw.get("output_dir"),
        lambda_grid=lambda_grid,
        raw=raw,
    )


def stream_seed(root: int, stream: int) -> int:
    return int(np.random.SeedSequence((root, stream)).generate_state(1)[0])


def run_seed(root: int, rep: int, n: int) -> int:
    """Dataset seed for repetition rep at sample size n."""
    return int(np.random.SeedSequence((root, rep, n)).generate_state(1)[0])


def resolve_mdp(config: ExperimentConfig) -> FiniteMdp:
    src = config.mdp_source
    if src["kind"] == "file":
        return load_mdp(Path(src["path"]))
    return random_mdp(
        int(src["n_states"]),
        int(src["n_actions"]),
        float(src["discount"]),
        r_max=float(src.get("r_max", 1.0)),
        seed=src.get("seed", (config.seed, MDP_STREAM)),
    )


def resolve_mu(config: ExperimentConfig, mdp: FiniteMdp, lam: SoftParams) -> np.ndarray:
    kind = config.mu["kind"]
    if kind == "uniform":
        return uniform_distribution(mdp)
    if kind == "occupancy":
        _, pi_soft = soft_value_iteration(mdp, lam)
        return occupancy_distribution(mdp, pi_soft)
    mu = validate_distribution(np.asarray(config.mu["values"], dtype=np.float64))
    if mu.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(
            f"mu table shape {mu.shape} != {(mdp.n_states, mdp.n_actions)}"
        )
    return mu


def resolve_classes(
    config: ExperimentConfig, mdp: FiniteMdp, lam: SoftParams
) -> FunctionClasses:
    return build_perturbation_classes(
        mdp, lam, config.class_spec, stream_seed(config.seed, CLASS_STREAM)
    )


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(
    records: list[dict],
    columns: tuple[str, ...],
    summary: dict,
    config_raw: dict,
    output_dir,
    force: bool = False,
) -> list[Path]:
    """Write runs.csv, summary.json, and config.echo.json into output_dir.

    Refuses on empty records, and refuses to overwrite existing report files
    unless force is set. Callers pass records already sorted.
    """
    if not records:
        raise IoError("refusing to emit a report with no run records")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "runs.csv", out / "summary.json", out / "config.echo.json"]
    existing = [p.name for p in paths if p.exists()]
    if existing and not force:
        raise IoError(
            f"report files already exist in {out} ({', '.join(existing)}); "
            "pass force to overwrite"
        )
    lines = [",".join(columns)]
    lines += [",".join(_cell(record[c]) for c in columns) for record in records]
    paths[0].write_text("\n".join(lines) + "\n")
    paths[1].write_text(
        json.dumps({**summary, "schema_version": SCHEMA_VERSION}, sort_keys=True, indent=2)
        + "\n"
    )
    paths[2].write_text(
        json.dumps(
            {"schema_version": SCHEMA_VERSION, "config": config_raw},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    return paths


def run_rate_experiment(
    config: ExperimentConfig, out_dir=None, force: bool = False
) -> tuple[list[dict], dict]:
    """Solve across the n grid and repetitions; report residual decay.

    Requires a realizable, helper-complete class spec so the approximation
    gaps vanish and the residual norm isolates the statistical error. Emits
    reports when out_dir is given; on a mid-run error, partial records are
    flushed before the error propagates.
    """
    if not (config.class_spec.realizable and config.class_spec.helper_complete):
        raise ValidationError(
            "rate experiment needs class_spec.realizable and helper_complete"
        )
    lam = SoftParams(config.lam)
    mdp = resolve_mdp(config)
    mu = resolve_mu(config, mdp, lam)
    classes = resolve_classes(config, mdp, lam)
    _, pi_soft = soft_value_iteration(mdp, lam)
    _, pi_hard = hard_value_iteration(mdp)
    j_star = performance(mdp, pi_hard)
    c2 = concentrability(classes, pi_soft, mu, mdp)
    eps_vp, _ = realizability_error(classes, mu, mdp, lam)
    eps_gvp = helper_realizability_error(classes, mu, mdp, lam)

    records: list[dict] = []
    try:
        for n in config.n_grid:
            rhs_total = theorem_bound(
                c2, eps_vp, eps_gvp, n, config.delta,
                classes.n_values, classes.n_policies, classes.n_helpers,
                config.lam, mdp.discount, mdp.r_max, mdp.n_actions,
            ).rhs_total
            for rep in range(config.repetitions):
                seed = run_seed(config.seed, rep, n)
                data = sample_dataset(mdp, mu, n, seed)
                result = sbeed_solve(data, classes, lam)
                cop = consistency_operator(mdp, result.v_hat, result.pi_hat, lam)
                records.append(
                    {
                        "n": n,
                        "rep": rep,
                        "seed": seed,
                        "suboptimality": j_star - performance(mdp, result.pi_hat),
                        "residual_norm": weighted_norm(
                            result.v_hat[:, None] - cop, mu
                        ),
                        "objective": float(result.objective_value),
                        "c2": c2,
                        "rhs_total": rhs_total,
                    }
                )
    except Exception:
        if records and out_dir is not None:
            records.sort(key=lambda r: (r["n"], r["rep"]))
            try:
                emit_report(
                    records, RATE_COLUMNS,
                    {"kind": "rate", "aborted": True, "rows": len(records)},
                    config.raw, out_dir, force,
                )
            except SbeedlabError:
                pass
        raise

    records.sort(key=lambda r: (r["n"], r["rep"]))
    mean_residuals = {
        n: float(np.mean([r["residual_norm"] for r in records if r["n"] == n]))
        for n in config.n_grid
    }
    slope = None
    if len(config.n_grid) >= 2 and all(m > 0.0 for m in mean_residuals.values()):
        slope = float(
            np.polyfit(
                np.log(np.asarray(config.n_grid, dtype=np.float64)),
                np.log(np.asarray([mean_residuals[n] for n in config.n_grid])),
                1,
            )[0]
        )
    bounds_hold = all(r["suboptimality"] <= r["rhs_total"] for r in records)
    summary = {
        "kind": "rate",
        "aborted": False,
        "rows": len(records),
        "slope": slope,
        "bounds_hold": bounds_hold,
        "c2": c2,
        "eps_vp": eps_vp,
        "eps_gvp": eps_gvp,
        "j_star": j_star,
        "lambda": config.lam,
        "delta": config.delta,
        "seed": config.seed,
        "n_grid": list(config.n_grid),
        "repetitions": config.repetitions,
        "mean_residuals": {str(n): v for n, v in mean_residuals.items()},
    }
    if out_dir is not None:
        emit_report(records, RATE_COLUMNS, summary, config.raw, out_dir, force)
    return records, summary


def run_lambda_sweep(
    config: ExperimentConfig,
    lambda_grid=None,
    out_dir=None,
    force: bool = False,
) -> tuple[list[dict], dict]:
    """Exact regularization-bias sweep, no sampling involved.

    For each lambda: solve the soft problem, execute its policy in the
    unregularized objective, and compare the performance loss against the
    lambda ln|A| / (1 - gamma) ceiling (1e-10 numerical slack).
    """
    if lambda_grid is None:
        lambda_grid = config.lambda_grid
    if lambda_grid is None:
        lambda_grid = tuple(float(v) for v in np.logspace(-3.0, 0.0, 10))
    if not lambda_grid or any(v <= 0.0 for v in lambda_grid):
        raise ValidationError("lambda grid must be non-empty and positive")

    mdp = resolve_mdp(config)
    _, pi_hard = hard_value_iteration(mdp)
    j_star = performance(mdp, pi_hard)
    log_a = math.log(mdp.n_actions)

    records = []
    for lam_value in sorted(float(v) for v in lambda_grid):
        _, pi_soft = soft_value_iteration(mdp, SoftParams(lam_value))
        j_soft = performance(mdp, pi_soft)
        observed = j_star - j_soft
        bound = lam_value * log_a / (1.0 - mdp.discount)
        records.append(
            {
                "lambda": lam_value,
                "j_star": j_star,
                "j_soft": j_soft,
                "bias_observed": observed,
                "bias_bound": bound,
                "within_bound": bool(observed <= bound + 1e-10),
            }
        )
    all_within = all(r["within_bound"] for r in records)
    summary = {
        "kind": "lambda-sweep",
        "rows": len(records),
        "all_within_bound": all_within,
        "max_excess": max(r["bias_observed"] - r["bias_bound"] for r in records),
        "j_star": j_star,
        "seed": config.seed,
    }
    if out_dir is not None:
        emit_report(records, SWEEP_COLUMNS, summary, config.raw, out_dir, force)
    return records, summary


def build_q_perturbation_classes(
    mdp: FiniteMdp, spec: ClassSpec, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Action-value and test-function classes around the hard optimum.

    Mirrors the soft-class builder: Gaussian perturbations of the optimal
    action values, clipped to [0, r_max/(1-gamma)] for the Q class and to
    twice that for the test class; spec.realizable inserts the exact tables.
    """
    values, _ = hard_value_iteration(mdp)
    q_star = mdp.reward + mdp.discount * (mdp.transition @ values)
    q_max = mdp.r_max / (1.0 - mdp.discount)
    q_stream, f_stream = np.random.SeedSequence(seed).spawn(2)

    def perturbed(stream, count: int, exact: np.ndarray, ceiling: float) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(stream))
        members = []
        if spec.realizable:
            members.append(exact.copy())
        while len(members) < count:
            noise = rng.normal(0.0, spec.scale, size=exact.shape)
            members.append(np.clip(exact + noise, 0.0, ceiling))
        return np.stack(members[:count])

    q_class = perturbed(q_stream, spec.n_values, q_star, q_max)
    f_class = perturbed(f_stream, spec.n_helpers, q_star, 2.0 * q_max)
    return q_class, f_class
