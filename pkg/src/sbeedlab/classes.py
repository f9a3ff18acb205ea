"""Finite function classes and structural quantities of the batch problem.

The minimax solvers search over three explicit finite collections: candidate
state-value functions, candidate stochastic policies, and candidate helper
functions on state-action pairs. This module builds such collections by
perturbing the exact soft solution, measures how well they can represent the
temporal-consistency target (the two realizability gaps), and computes the
distribution-shift coefficient between visitation measures and the data
distribution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ClassConstraintViolation,
    InfeasibleSpec,
    NegativeEntry,
    NonStochasticRow,
    ShapeMismatch,
    ZeroSupport,
)
from .mdp import (
    FiniteMdp,
    SoftParams,
    consistency_operator,
    occupancy_measure,
    soft_value_iteration,
    v_lambda_max,
)

PROB_TOL = 1e-12
# Relative slack when checking stored members against their analytic ceilings.
MEMBER_TOL = 1e-9
# Per-member geometric decay of the perturbation scale. Successive members sit
# at finer resolutions, so selection experiments see candidates at every noise
# level instead of one cliff between the exact member and the rest.
SCALE_DECAY = 0.6
# Exact members are solved tighter than the library default so their own
# consistency residual (gamma * tol) stays below 1e-12 in every report column.
EXACT_MEMBER_TOL = 1e-12


@dataclass(frozen=True)
class ClassSpec:
    """Recipe for perturbation-built classes.

    scale is the standard deviation of the Gaussian noise (value space for
    value members, logit space for policy members); the k-th perturbed member
    of each class uses scale * SCALE_DECAY**k. realizable inserts the exact
    soft solution as member 0; helper_complete closes the helper class over
    every (value, policy) pair.
    """

    n_values: int
    n_policies: int
    n_helpers: int
    scale: float = 0.5
    realizable: bool = True
    helper_complete: bool = False


@dataclass(frozen=True)
class FunctionClasses:
    """Stacked members: values (m_v, S), policies (m_p, S, A), helpers (m_g, S, A)."""

    values: np.ndarray
    policies: np.ndarray
    helpers: np.ndarray
    v_lambda_max: float
    lam: float
    seed: int | None = None
    spec: ClassSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))
        object.__setattr__(self, "policies", np.array(self.policies, dtype=np.float64))
        object.__setattr__(self, "helpers", np.array(self.helpers, dtype=np.float64))

    @property
    def n_values(self) -> int:
        return self.values.shape[0]

    @property
    def n_policies(self) -> int:
        return self.policies.shape[0]

    @property
    def n_helpers(self) -> int:
        return self.helpers.shape[0]


def validate_classes(classes: FunctionClasses, mdp: FiniteMdp) -> FunctionClasses:
    """Check member ranges, row normalization and the stored value ceiling."""
    n_states, n_actions = mdp.n_states, mdp.n_actions
    v, p, g = classes.values, classes.policies, classes.helpers
    if v.ndim != 2 or v.shape[1] != n_states:
        raise ShapeMismatch(f"value members must be (m, {n_states}), got {v.shape}")
    if p.ndim != 3 or p.shape[1:] != (n_states, n_actions):
        raise ShapeMismatch(f"policy members must be (m, {n_states}, {n_actions}), got {p.shape}")
    if g.ndim != 3 or g.shape[1:] != (n_states, n_actions):
        raise ShapeMismatch(f"helper members must be (m, {n_states}, {n_actions}), got {g.shape}")
    if min(v.shape[0], p.shape[0], g.shape[0]) < 1:
        raise ClassConstraintViolation("every class needs at least one member")
    vmax = (mdp.r_max + classes.lam * np.log(n_actions)) / (1.0 - mdp.discount)
    if not np.isclose(classes.v_lambda_max, vmax, rtol=1e-12, atol=0.0):
        raise ClassConstraintViolation(
            f"stored ceiling {classes.v_lambda_max!r} != (r_max + lam ln|A|)/(1-gamma) = {vmax!r}"
        )
    slack = MEMBER_TOL * max(1.0, vmax)
    if np.any(v < -slack) or np.any(v > vmax + slack):
        raise ClassConstraintViolation("value member outside [0, v_lambda_max]")
    if np.any(g < -slack) or np.any(g > 2.0 * vmax + slack):
        raise ClassConstraintViolation("helper member outside [0, 2 v_lambda_max]")
    if np.any(p <= 0.0):
        raise ClassConstraintViolation("policy member has a nonpositive entry")
    if np.any(np.abs(p.sum(axis=2) - 1.0) > PROB_TOL):
        raise NonStochasticRow("policy member row does not sum to 1")
    log_cap = classes.v_lambda_max / classes.lam
    worst = float(np.max(np.abs(np.log(p))))
    if worst > log_cap * (1.0 + MEMBER_TOL):
        raise ClassConstraintViolation(
            f"policy member log magnitude {worst} exceeds cap {log_cap}"
        )
    return classes


def uniform_distribution(mdp: FiniteMdp) -> np.ndarray:
    """Uniform data distribution over state-action pairs."""
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / (mdp.n_states * mdp.n_actions))


def occupancy_distribution(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    """Data distribution equal to a policy's discounted visitation."""
    return occupancy_measure(mdp, policy).mass


def validate_distribution(mu: np.ndarray, full_support: bool = False) -> np.ndarray:
    """Check a state-action distribution; optionally require full support."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 2:
        raise ShapeMismatch(f"distribution must be a 2-d table, got shape {mu.shape}")
    if np.any(mu < 0.0):
        raise NegativeEntry("distribution has a negative cell")
    if abs(mu.sum() - 1.0) > PROB_TOL:
        raise NonStochasticRow(f"distribution sums to {mu.sum()!r}")
    if full_support and np.any(mu <= 0.0):
        s, a = np.argwhere(mu <= 0.0)[0]
        raise ZeroSupport(f"mu({s},{a}) = 0 where full support is required")
    return mu


def weighted_norm(table: np.ndarray, mu: np.ndarray) -> float:
    """Root of the mu-weighted mean square, sqrt(sum mu * f^2)."""
    table = np.asarray(table, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if table.shape != mu.shape:
        raise ShapeMismatch(f"table shape {table.shape} != weights shape {mu.shape}")
    return float(np.sqrt(np.sum(mu * table * table)))


def concentrability(
    classes: FunctionClasses,
    pi_star: np.ndarray,
    mu: np.ndarray,
    mdp: FiniteMdp,
) -> float:
    """Worst chi-square-style visitation-to-data ratio over the policy class.

    max over pi in the class (plus pi_star) of sum_{s,a} d_pi(s,a)^2 / mu(s,a).
    Always >= 1 by Cauchy-Schwarz; requires mu to have full support.
    """
    mu = validate_distribution(mu, full_support=True)
    if mu.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeMismatch(f"mu shape {mu.shape} != {(mdp.n_states, mdp.n_actions)}")
    worst = -np.inf
    candidates = list(classes.policies) + [np.asarray(pi_star, dtype=np.float64)]
    for policy in candidates:
        mass = occupancy_measure(mdp, policy).mass
        worst = max(worst, float(np.sum(mass * mass / mu)))
    return worst


def _consistency_tables(
    classes: FunctionClasses, mdp: FiniteMdp, lam: SoftParams
) -> tuple[np.ndarray, np.ndarray]:
    """Precompute R + gamma P V per value member and ln pi per policy member."""
    exp_next = np.einsum("saz,vz->vsa", mdp.transition, classes.values)
    value_part = mdp.reward[None, :, :] + mdp.discount * exp_next
    log_pi = np.log(classes.policies)
    return value_part, log_pi


def realizability_error(
    classes: FunctionClasses, mu: np.ndarray, mdp: FiniteMdp, lam: SoftParams
) -> tuple[float, tuple[int, int]]:
    """Best achievable squared consistency residual over the class pairs.

    Returns (min over (V, pi) of ||V - C_pi V||^2 weighted by mu, argmin pair);
    ties break toward the lexicographically smallest index pair.
    """
    mu = validate_distribution(mu)
    value_part, log_pi = _consistency_tables(classes, mdp, lam)
    best = np.inf
    best_pair = (0, 0)
    for i in range(classes.n_values):
        broadcast = classes.values[i][:, None]
        for j in range(classes.n_policies):
            resid = broadcast - (value_part[i] - lam.lam * log_pi[j])
            err = float(np.sum(mu * resid * resid))
            if err < best:
                best = err
                best_pair = (i, j)
    return best, best_pair


def helper_realizability_error(
    classes: FunctionClasses, mu: np.ndarray, mdp: FiniteMdp, lam: SoftParams
) -> float:
    """Worst-case helper regression gap over the class pairs.

    max over (V, pi) of min over g of ||g - C_pi V||^2 weighted by mu.
    Zero whenever the helper class contains every consistency image.
    """
    mu = validate_distribution(mu)
    value_part, log_pi = _consistency_tables(classes, mdp, lam)
    worst = 0.0
    for i in range(classes.n_values):
        for j in range(classes.n_policies):
            target = value_part[i] - lam.lam * log_pi[j]
            diffs = classes.helpers - target[None, :, :]
            best = float(np.min(np.sum(mu[None, :, :] * diffs * diffs, axis=(1, 2))))
            worst = max(worst, best)
    return worst


def build_perturbation_classes(
    mdp: FiniteMdp, lam: SoftParams, spec: ClassSpec, seed: int
) -> FunctionClasses:
    """Gaussian-perturbation classes around the exact soft solution.

    Value members perturb the optimal values in value space (clipped to
    [0, v_max]); policy members perturb the optimal log-policy in logit space,
    then mix with the uniform policy just enough to keep every entry at least
    exp(-v_max / lambda); helper members are consistency images (the full
    closure when helper_complete) or perturbations of the optimal one. The
    k-th perturbed member of each class draws its noise at standard deviation
    spec.scale * SCALE_DECAY**k, so the classes form a ladder of candidates
    from coarse to near-exact. Deterministic in (mdp, lambda, spec, seed).
    """
    if min(spec.n_values, spec.n_policies, spec.n_helpers) < 1:
        raise InfeasibleSpec("class sizes must all be >= 1")
    if not np.isfinite(spec.scale) or spec.scale < 0.0:
        raise InfeasibleSpec(f"perturbation scale must be finite and >= 0, got {spec.scale}")

    vmax = v_lambda_max(mdp, lam)
    v_opt, pi_opt = soft_value_iteration(mdp, lam, tol=EXACT_MEMBER_TOL)
    ss_values, ss_policies, ss_helpers = np.random.SeedSequence(seed).spawn(3)
    rng_v = np.random.Generator(np.random.Philox(ss_values))
    rng_p = np.random.Generator(np.random.Philox(ss_policies))
    rng_g = np.random.Generator(np.random.Philox(ss_helpers))

    values = []
    if spec.realizable:
        values.append(v_opt.copy())
    while len(values) < spec.n_values:
        step = spec.scale * SCALE_DECAY ** (len(values) - int(spec.realizable))
        noise = step * rng_v.standard_normal(mdp.n_states)
        values.append(np.clip(v_opt + noise, 0.0, vmax))
    values = np.stack(values)

    # Mixing weight that pins min pi(a|s) >= exp(-vmax/lam); always <= 1.
    floor = np.exp(-vmax / lam.lam)
    beta = mdp.n_actions * floor
    log_pi_opt = np.log(pi_opt)
    policies = []
    if spec.realizable:
        policies.append(pi_opt.copy())
    while len(policies) < spec.n_policies:
        step = spec.scale * SCALE_DECAY ** (len(policies) - int(spec.realizable))
        logits = log_pi_opt + step * rng_p.standard_normal((mdp.n_states, mdp.n_actions))
        shifted = logits - logits.max(axis=1, keepdims=True)
        raw = np.exp(shifted)
        raw /= raw.sum(axis=1, keepdims=True)
        policies.append((1.0 - beta) * raw + beta / mdp.n_actions)
    policies = np.stack(policies)

    base = consistency_operator(mdp, v_opt, pi_opt, lam)
    helpers = []
    if spec.helper_complete:
        for i in range(len(values)):
            for j in range(len(policies)):
                helpers.append(consistency_operator(mdp, values[i], policies[j], lam))
    elif spec.realizable:
        helpers.append(base.copy())
    n_seeded = len(helpers)
    while len(helpers) < spec.n_helpers:
        step = spec.scale * SCALE_DECAY ** (len(helpers) - n_seeded)
        noise = step * rng_g.standard_normal((mdp.n_states, mdp.n_actions))
        helpers.append(np.clip(base + noise, 0.0, 2.0 * vmax))
    helpers = np.stack(helpers)

    classes = FunctionClasses(
        values=values,
        policies=policies,
        helpers=helpers,
        v_lambda_max=vmax,
        lam=lam.lam,
        seed=seed,
        spec=spec,
    )
    return validate_classes(classes, mdp)


def mu_digest(mu: np.ndarray) -> str:
    """Short stable identifier for an explicit data distribution."""
    return "mu-" + hashlib.sha1(np.ascontiguousarray(mu).tobytes()).hexdigest()[:12]


def classes_to_json(classes: FunctionClasses) -> dict:
    obj = {
        "value_class": classes.values.tolist(),
        "policy_class": classes.policies.tolist(),
        "helper_class": classes.helpers.tolist(),
        "lambda": classes.lam,
        "v_lambda_max": classes.v_lambda_max,
        "seed": classes.seed,
        "spec": asdict(classes.spec) if classes.spec is not None else None,
    }
    return obj


def classes_from_json(obj: dict) -> FunctionClasses:
    spec = ClassSpec(**obj["spec"]) if obj.get("spec") is not None else None
    return FunctionClasses(
        values=np.asarray(obj["value_class"], dtype=np.float64),
        policies=np.asarray(obj["policy_class"], dtype=np.float64),
        helpers=np.asarray(obj["helper_class"], dtype=np.float64),
        v_lambda_max=float(obj["v_lambda_max"]),
        lam=float(obj["lambda"]),
        seed=obj.get("seed"),
        spec=spec,
    )


def save_classes(classes: FunctionClasses, path) -> None:
    with open(path, "w") as fh:
        json.dump(classes_to_json(classes), fh, sort_keys=True)


def load_classes(path) -> FunctionClasses:
    with open(path) as fh:
        return classes_from_json(json.load(fh))
