"""Numerical verification of the identities and finite-sample bounds.

The checks in this module fall in three groups.

Exact identities, verified by dense linear algebra at machine precision:
the telescoping decomposition of the evaluation gap through the discounted
visitation measure, and the conditional-variance split of the expected
squared consistency loss (the double-sampling bias term).

Statistical facts, verified by Monte Carlo at four standard errors: the
range, mean and variance properties of the three per-transition excess-risk
variables built from a fitted helper (X), the best population helper (Y)
and the value residual (Z).

The assembled performance bound. Writing H = 2 sqrt(C2) / (1 - gamma),
V for the value ceiling, imath = V^2 ln(|values||policies||helpers|/delta'),
jmath = V^2 ln(|values||policies|/delta'), delta' = delta/4 (four
concentration events), and root(a, b, c) = a + sqrt(a^2 + 2(b + c^2)) for
the quadratic-inequality solution, the squared-residual ceiling B for the
selected pair is assembled with explicit Bernstein constants (range 8 V^2
gives additive terms 16/(3n); variance ceilings 32 V^2 (E[X] + 2 eps_g),
16 V^2 eps_g and 16 V^2 E[Z] give the 64, 32 and 32 factors):

    ex    = root(64 i/n, 128 i eps_g / n, 16 i/(3n))        bound on E[X]
    x     = ex + sqrt(64 i (ex + 2 eps_g)/n) + 16 i/(3n)    fit deviation
    y     = eps_g + sqrt(32 i eps_g / n) + 16 i/(3n)        target deviation
    zbar  = eps_v + sqrt(32 j eps_v / n) + 16 j/(3n)        best-pair sum
    zhat  = zbar + 2 (x + y)                                 selected-pair sum
    B     = root(32 j/n, 0, zhat + 16 j/(3n))               E[Z] ceiling

and the reported bound is bias + H sqrt(B) with bias = lambda ln|A|/(1-gamma).
For reporting, sqrt(B) is split into a pure statistical slice (B at eps = 0,
exactly proportional to 1/sqrt(n)), an approximation slice (B at n = inf,
equal to sqrt(2) (eps_v + 2 eps_g)), and a nonnegative cross remainder; the
reported total bias + approx + cross + stat never falls below bias + H sqrt(B),
so it remains a valid upper bound on the suboptimality of the solved policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .classes import (
    FunctionClasses,
    concentrability,
    helper_realizability_error,
    validate_distribution,
    weighted_norm,
)
from .data import Dataset
from .errors import (
    EnsembleTooSmall,
    InvalidDelta,
    LambdaTooLarge,
    NegativeInput,
    PolicyNotInClass,
    ZeroProbabilityAction,
)
from .mdp import (
    FiniteMdp,
    SoftParams,
    consistency_operator,
    hard_value_iteration,
    occupancy_measure,
    performance,
    soft_value_iteration,
)
from .solvers import SolveResult, fit_helper


def telescoping_residual(
    mdp: FiniteMdp, values: np.ndarray, policy: np.ndarray, lam: SoftParams
) -> float:
    """Absolute gap in the evaluation decomposition of an arbitrary V:

    <d0, V> - J(pi)  vs  E over the visitation of (V(s) - C_pi V(s,a)),
    scaled by 1/(1-gamma). Exact for every (V, pi) pair; the entropy term
    uses the 0*ln(0) = 0 convention so deterministic policies are allowed.
    """
    values = np.asarray(values, dtype=np.float64)
    policy = np.asarray(policy, dtype=np.float64)
    lhs = float(mdp.init_dist @ values) - performance(mdp, policy, lam.lam)
    occ = occupancy_measure(mdp, policy)
    value_part = values[:, None] - mdp.reward - mdp.discount * (mdp.transition @ values)
    gap = float(
        np.sum(occ.mass * value_part)
        + lam.lam * float(occ.state_mass @ xlogy(policy, policy).sum(axis=1))
    )
    return abs(lhs - gap / (1.0 - mdp.discount))


def conditional_variance_identity(
    mdp: FiniteMdp,
    mu: np.ndarray,
    values: np.ndarray,
    policy: np.ndarray,
    lam: SoftParams,
) -> tuple[float, float, float]:
    """Split of the expected squared empirical consistency loss.

    Returns (lhs, rhs, gap) where lhs is the exact expectation of the loss
    under one sampled next state, and rhs is the squared consistency
    residual plus gamma^2 times the mean conditional variance of V(s').
    """
    values = np.asarray(values, dtype=np.float64)
    mu = validate_distribution(mu)
    cop = consistency_operator(mdp, values, policy, lam)  # checks pi > 0
    base = values[:, None] - mdp.reward + lam.lam * np.log(policy)  # (S, A)
    resid = base[:, :, None] - mdp.discount * values[None, None, :]  # (S, A, S')
    lhs = float(np.sum(mu[:, :, None] * mdp.transition * resid * resid))
    broadcast_resid = values[:, None] - cop
    mean_next = mdp.transition @ values
    var_next = mdp.transition @ (values * values) - mean_next * mean_next
    rhs = float(
        np.sum(mu * broadcast_resid * broadcast_resid)
        + mdp.discount**2 * np.sum(mu * var_next)
    )
    return lhs, rhs, abs(lhs - rhs)


@dataclass(frozen=True)
class SuboptimalityReport:
    """One evaluation of the policy performance bound on a solved instance."""

    suboptimality: float
    bias_term: float
    concentrability: float
    residual_norm: float
    rhs: float
    holds: bool


def suboptimality_check(
    mdp: FiniteMdp,
    lam: SoftParams,
    mu: np.ndarray,
    classes: FunctionClasses,
    result: SolveResult,
    slack: float = 1e-9,
) -> SuboptimalityReport:
    """Check J(pi_opt) - J(pi_hat) against bias + H * residual norm.

    H = 2 sqrt(C2)/(1 - gamma) with C2 the distribution-shift coefficient
    over the policy class plus the soft-optimal policy; the bias is
    lambda ln|A| / (1 - gamma). All quantities come from exact solves.
    """
    member_match = np.all(classes.policies == result.pi_hat[None, :, :], axis=(1, 2))
    if not bool(member_match.any()):
        raise PolicyNotInClass("solution policy is not a member of the policy class")
    _, pi_soft = soft_value_iteration(mdp, lam)
    _, pi_hard = hard_value_iteration(mdp)
    j_star = performance(mdp, pi_hard, 0.0)
    j_hat = performance(mdp, result.pi_hat, 0.0)
    c2 = concentrability(classes, pi_soft, mu, mdp)
    cop = consistency_operator(mdp, result.v_hat, result.pi_hat, lam)
    residual_norm = weighted_norm(result.v_hat[:, None] - cop, mu)
    bias = lam.lam * math.log(mdp.n_actions) / (1.0 - mdp.discount)
    rhs = bias + 2.0 * math.sqrt(c2) / (1.0 - mdp.discount) * residual_norm
    sub = j_star - j_hat
    return SuboptimalityReport(
        suboptimality=sub,
        bias_term=bias,
        concentrability=c2,
        residual_norm=residual_norm,
        rhs=rhs,
        holds=bool(sub <= rhs + slack),
    )


@dataclass(frozen=True)
class ExcessRiskStats:
    """Pooled moments of the three per-transition excess-risk variables.

    X compares the fitted helper against the best population helper on
    held-out transitions, Y compares the best population helper against the
    consistency image, Z compares the broadcast value function against the
    consistency image. bounds_checked records the individual range, mean and
    variance checks.
    """

    x_mean: float
    x_min: float
    x_max: float
    x_var: float
    y_mean: float
    y_var: float
    z_mean: float
    z_var: float
    n_samples: int
    v_lambda_max: float
    eps_gvp: float
    y_mean_expected: float
    z_mean_expected: float
    bounds_checked: dict = field(repr=False)

    @property
    def all_passed(self) -> bool:
        return all(self.bounds_checked.values())


def _variance_se(samples: np.ndarray, var: float) -> float:
    centered = samples - samples.mean()
    fourth = float(np.mean(centered**4))
    return math.sqrt(max(fourth - var * var, 0.0) / len(samples))


def excess_risk_stats(
    datasets: list[Dataset],
    classes: FunctionClasses,
    values: np.ndarray,
    policy: np.ndarray,
    lam: SoftParams,
    mdp: FiniteMdp,
    mu: np.ndarray,
) -> ExcessRiskStats:
    """Monte-Carlo verification of the excess-risk variable properties.

    Fits the helper on each dataset and evaluates its X samples on the next
    dataset in the ensemble (cyclically), so the pooled X mean estimates the
    population excess risk of the fit, which must be nonnegative. Y and Z
    involve no fitted functions and pool over all transitions directly.
    Requires at least 500 datasets.
    """
    m = len(datasets)
    if m < 500:
        raise EnsembleTooSmall(f"need at least 500 datasets, got {m}")
    values = np.asarray(values, dtype=np.float64)
    policy = np.asarray(policy, dtype=np.float64)
    mu = validate_distribution(mu)
    vmax = classes.v_lambda_max
    range_cap = 8.0 * vmax * vmax
    cop = consistency_operator(mdp, values, policy, lam)

    # Best population helper for this (V, pi), lowest index on ties.
    gaps = np.sum(
        mu[None, :, :] * (classes.helpers - cop[None, :, :]) ** 2, axis=(1, 2)
    )
    gbar_idx = int(np.argmin(gaps))
    gbar = classes.helpers[gbar_idx]
    y_expected = float(gaps[gbar_idx])
    z_expected = weighted_norm(values[:, None] - cop, mu) ** 2
    eps_gvp = helper_realizability_error(classes, mu, mdp, lam)

    if np.any(policy <= 0.0):
        raise ZeroProbabilityAction("policy must be strictly positive")
    log_pi = np.log(policy)

    fitted = []
    targets = []
    gbar_sq = []
    y_parts = []
    z_parts = []
    for ds in datasets:
        t = (
            ds.rewards
            + ds.discount * values[ds.next_states]
            - lam.lam * log_pi[ds.states, ds.actions]
        )
        targets.append(t)
        gbar_res = gbar[ds.states, ds.actions] - t
        cop_res = cop[ds.states, ds.actions] - t
        val_res = values[ds.states] - t
        gbar_sq.append(gbar_res * gbar_res)
        y_parts.append(gbar_res * gbar_res - cop_res * cop_res)
        z_parts.append(val_res * val_res - cop_res * cop_res)
        fitted.append(fit_helper(ds, values, policy, classes, lam)[0])

    x_parts = []
    for j in range(m):
        k = (j + 1) % m
        ds = datasets[k]
        fit_res = fitted[j][ds.states, ds.actions] - targets[k]
        x_parts.append(fit_res * fit_res - gbar_sq[k])

    x = np.concatenate(x_parts)
    y = np.concatenate(y_parts)
    z = np.concatenate(z_parts)
    n_samples = len(x)

    x_mean, x_var = float(x.mean()), float(x.var(ddof=1))
    y_mean, y_var = float(y.mean()), float(y.var(ddof=1))
    z_mean, z_var = float(z.mean()), float(z.var(ddof=1))
    se_x = math.sqrt(x_var / n_samples)
    se_y = math.sqrt(y_var / len(y))
    se_z = math.sqrt(z_var / len(z))

    checks = {
        "x_range": bool(np.max(np.abs(x)) <= range_cap),
        "y_range": bool(np.max(np.abs(y)) <= range_cap),
        "z_range": bool(np.max(np.abs(z)) <= range_cap),
        "x_mean_nonnegative": bool(x_mean >= -4.0 * se_x),
        "y_mean_consistent": bool(abs(y_mean - y_expected) <= 4.0 * se_y),
        "z_mean_consistent": bool(abs(z_mean - z_expected) <= 4.0 * se_z),
        "x_variance": bool(
            x_var
            <= 32.0 * vmax * vmax * (max(x_mean, 0.0) + 2.0 * eps_gvp)
            + 4.0 * (_variance_se(x, x_var) + 32.0 * vmax * vmax * se_x)
        ),
        "y_variance": bool(
            y_var <= 16.0 * vmax * vmax * eps_gvp + 4.0 * _variance_se(y, y_var)
        ),
        "z_variance": bool(
            z_var
            <= 16.0 * vmax * vmax * max(z_mean, 0.0)
            + 4.0 * (_variance_se(z, z_var) + 16.0 * vmax * vmax * se_z)
        ),
    }
    return ExcessRiskStats(
        x_mean=x_mean,
        x_min=float(x.min()),
        x_max=float(x.max()),
        x_var=x_var,
        y_mean=y_mean,
        y_var=y_var,
        z_mean=z_mean,
        z_var=z_var,
        n_samples=n_samples,
        v_lambda_max=vmax,
        eps_gvp=eps_gvp,
        y_mean_expected=y_expected,
        z_mean_expected=z_expected,
        bounds_checked=checks,
    )


def quadratic_inequality_root(a: float, b: float, c: float) -> float:
    """Largest x allowed by 0 <= x <= sqrt(a x + b) + c, namely
    a + sqrt(a^2 + 2(b + c^2)). All arguments must be nonnegative."""
    if a < 0.0 or b < 0.0 or c < 0.0:
        raise NegativeInput(f"coefficients must be nonnegative, got {(a, b, c)}")
    return a + math.sqrt(a * a + 2.0 * (b + c * c))


@dataclass(frozen=True)
class BoundReport:
    """Assembled performance bound with every intermediate quantity."""

    c2: float
    eps_vp: float
    eps_gvp: float
    imath: float
    jmath: float
    delta: float
    delta_prime: float
    n: float
    bias_term: float
    approx_term: float
    cross_term: float
    stat_term: float
    rhs_total: float

    def to_json(self) -> dict:
        return {
            "c2": self.c2,
            "eps_vp": self.eps_vp,
            "eps_gvp": self.eps_gvp,
            "imath": self.imath,
            "jmath": self.jmath,
            "delta": self.delta,
            "delta_prime": self.delta_prime,
            "n": self.n,
            "bias_term": self.bias_term,
            "approx_term": self.approx_term,
            "cross_term": self.cross_term,
            "stat_term": self.stat_term,
            "rhs_total": self.rhs_total,
        }


def _residual_sq_ceiling(
    eps_vp: float, eps_gvp: float, n: float, imath: float, jmath: float
) -> float:
    """Explicit-constant ceiling on the selected pair's squared residual."""
    add_i = 16.0 * imath / (3.0 * n)
    add_j = 16.0 * jmath / (3.0 * n)
    ex = quadratic_inequality_root(64.0 * imath / n, 128.0 * imath * eps_gvp / n, add_i)
    x_term = ex + math.sqrt(64.0 * imath * (ex + 2.0 * eps_gvp) / n) + add_i
    y_term = eps_gvp + math.sqrt(32.0 * imath * eps_gvp / n) + add_i
    z_bar = eps_vp + math.sqrt(32.0 * jmath * eps_vp / n) + add_j
    z_hat = z_bar + 2.0 * (x_term + y_term)
    return quadratic_inequality_root(32.0 * jmath / n, 0.0, z_hat + add_j)


def theorem_bound(
    c2: float,
    eps_vp: float,
    eps_gvp: float,
    n: int,
    delta: float,
    n_values: int,
    n_policies: int,
    n_helpers: int,
    lam: float,
    gamma: float,
    r_max: float,
    n_actions: int,
) -> BoundReport:
    """High-probability suboptimality bound with explicit constants.

    See the module docstring for the assembled chain. The reported total is
    bias + approx + cross + stat, nonnegative termwise, monotone decreasing
    in n and monotone increasing in each eps, in c2 and in the class sizes,
    and never below the nested chain value bias + H sqrt(B).
    """
    if not (0.0 < delta < 1.0):
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if min(eps_vp, eps_gvp) < 0.0:
        raise NegativeInput("realizability gaps must be nonnegative")
    if n < 1:
        raise NegativeInput(f"need n >= 1, got {n}")
    if c2 < 1.0:
        raise NegativeInput(f"distribution-shift coefficient must be >= 1, got {c2}")
    if min(n_values, n_policies, n_helpers) < 1:
        raise NegativeInput("class sizes must be >= 1")
    if lam <= 0.0 or not (0.0 <= gamma < 1.0) or r_max < 0.0 or n_actions < 1:
        raise NegativeInput("invalid problem constants")

    delta_prime = delta / 4.0
    vmax = (r_max + lam * math.log(n_actions)) / (1.0 - gamma)
    vsq = vmax * vmax
    imath = vsq * math.log(n_values * n_policies * n_helpers / delta_prime)
    jmath = vsq * math.log(n_values * n_policies / delta_prime)
    horizon = 2.0 * math.sqrt(c2) / (1.0 - gamma)
    bias = lam * math.log(n_actions) / (1.0 - gamma)

    stat = horizon * math.sqrt(_residual_sq_ceiling(0.0, 0.0, n, imath, jmath))
    approx = horizon * math.sqrt(
        _residual_sq_ceiling(eps_vp, eps_gvp, math.inf, imath, jmath)
    )
    full = horizon * math.sqrt(_residual_sq_ceiling(eps_vp, eps_gvp, n, imath, jmath))
    cross = max(0.0, full - stat - approx)
    return BoundReport(
        c2=c2,
        eps_vp=eps_vp,
        eps_gvp=eps_gvp,
        imath=imath,
        jmath=jmath,
        delta=delta,
        delta_prime=delta_prime,
        n=float(n),
        bias_term=bias,
        approx_term=approx,
        cross_term=cross,
        stat_term=stat,
        rhs_total=bias + approx + cross + stat,
    )


def sample_complexity(
    epsilon: float,
    delta: float,
    c2: float,
    n_values: int,
    n_policies: int,
    n_helpers: int,
    lam: float,
    gamma: float,
    r_max: float,
    n_actions: int,
) -> int:
    """Smallest n whose bound (at zero realizability gaps) meets epsilon.

    Requires lambda <= (1 - gamma) epsilon / (2 ln|A|) so the bias consumes
    at most half the budget; inverts the bound by doubling then bisection.
    """
    if epsilon <= 0.0 or not np.isfinite(epsilon):
        raise NegativeInput(f"epsilon must be positive and finite, got {epsilon}")
    log_a = math.log(n_actions)
    if log_a > 0.0 and lam > (1.0 - gamma) * epsilon / (2.0 * log_a):
        raise LambdaTooLarge(
            f"lam = {lam} exceeds (1-gamma) eps / (2 ln|A|) = "
            f"{(1.0 - gamma) * epsilon / (2.0 * log_a)}"
        )

    def rhs(n: int) -> float:
        return theorem_bound(
            c2, 0.0, 0.0, n, delta, n_values, n_policies, n_helpers,
            lam, gamma, r_max, n_actions,
        ).rhs_total

    n = 1
    while rhs(n) > epsilon:
        n *= 2
    if n == 1:
        return 1
    lo, hi = n // 2, n  # rhs(lo) > epsilon >= rhs(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rhs(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return hi
