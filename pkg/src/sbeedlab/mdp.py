"""Tabular MDPs with entropy-regularized objectives and exact solvers.

A finite MDP is a dense transition tensor P[s, a, s'], a reward table
R[s, a] in [0, r_max], a discount in [0, 1) and an initial distribution.
The entropy-regularized objective subtracts lambda * ln pi(a|s) from the
reward along trajectories; its optimal value function is the fixed point of
the log-sum-exp backup and the optimal policy is the matching softmax.

Everything here is exact dense linear algebra: policy evaluation and
occupancy measures come from single linear solves, the two value iterations
run to a sup-norm tolerance. Policy evaluation uses the 0*ln(0) = 0
convention for the entropy term, so deterministic policies evaluate exactly
like unregularized ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .errors import (
    DiscountOutOfRange,
    MaxIterExceeded,
    NegativeEntry,
    NegativeInput,
    NonStochasticRow,
    RewardOutOfRange,
    ShapeMismatch,
    SingularSystem,
    ZeroProbabilityAction,
)

PROB_TOL = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6


@dataclass(frozen=True)
class FiniteMdp:
    """Dense tabular MDP. Immutable after `validate_mdp`."""

    transition: np.ndarray  # (S, A, S), rows over the last axis are stochastic
    reward: np.ndarray      # (S, A), entries in [0, r_max]
    discount: float
    init_dist: np.ndarray   # (S,)
    r_max: float

    def __post_init__(self):
        object.__setattr__(self, "transition", np.array(self.transition, dtype=np.float64))
        object.__setattr__(self, "reward", np.array(self.reward, dtype=np.float64))
        object.__setattr__(self, "init_dist", np.array(self.init_dist, dtype=np.float64))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class SoftParams:
    """Strictly positive regularization strength. lambda = 0 is rejected;
    use `performance(..., 0.0)` or `hard_value_iteration` for the
    unregularized problem."""

    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        if not np.isfinite(self.lam) or self.lam <= 0.0:
            raise ValueError(f"regularization must be finite and > 0, got {self.lam}")


@dataclass(frozen=True)
class OccupancyMeasure:
    """Normalized discounted state-action visitation, mass[s, a]."""

    mass: np.ndarray

    @property
    def state_mass(self) -> np.ndarray:
        return self.mass.sum(axis=1)


def validate_mdp(mdp: FiniteMdp) -> FiniteMdp:
    """Check every structural invariant, raising on the first violation.

    On success the underlying arrays are frozen (read-only) and the same
    instance is returned, safe to share across threads.
    """
    p, r, d0 = mdp.transition, mdp.reward, mdp.init_dist
    if p.ndim != 3 or p.shape[0] != p.shape[2]:
        raise ShapeMismatch(f"transition must be (S, A, S), got {p.shape}")
    n_states, n_actions = p.shape[0], p.shape[1]
    if n_states < 1 or n_actions < 1:
        raise ShapeMismatch("need at least one state and one action")
    if r.shape != (n_states, n_actions):
        raise ShapeMismatch(f"reward shape {r.shape} != {(n_states, n_actions)}")
    if d0.shape != (n_states,):
        raise ShapeMismatch(f"init_dist shape {d0.shape} != {(n_states,)}")
    if np.any(p < 0.0):
        s, a, s2 = np.argwhere(p < 0.0)[0]
        raise NegativeEntry(f"transition[{s},{a},{s2}] = {p[s, a, s2]} < 0")
    row_sums = p.sum(axis=2)
    bad = np.abs(row_sums - 1.0) > PROB_TOL
    if np.any(bad):
        s, a = np.argwhere(bad)[0]
        raise NonStochasticRow(f"transition row ({s},{a}) sums to {row_sums[s, a]!r}")
    if not np.isfinite(mdp.r_max) or mdp.r_max < 0.0:
        raise RewardOutOfRange(f"r_max must be finite and >= 0, got {mdp.r_max}")
    if np.any(r < 0.0) or np.any(r > mdp.r_max):
        s, a = np.argwhere((r < 0.0) | (r > mdp.r_max))[0]
        raise RewardOutOfRange(f"reward[{s},{a}] = {r[s, a]} outside [0, {mdp.r_max}]")
    if np.any(d0 < 0.0):
        s = int(np.argwhere(d0 < 0.0)[0][0])
        raise NegativeEntry(f"init_dist[{s}] = {d0[s]} < 0")
    if abs(d0.sum() - 1.0) > PROB_TOL:
        raise NonStochasticRow(f"init_dist sums to {d0.sum()!r}")
    if not (0.0 <= mdp.discount < 1.0):
        raise DiscountOutOfRange(f"discount must lie in [0, 1), got {mdp.discount}")
    for arr in (p, r, d0):
        arr.setflags(write=False)
    return mdp


def v_lambda_max(mdp: FiniteMdp, lam: SoftParams) -> float:
    """Sup-norm ceiling (r_max + lambda ln|A|) / (1 - gamma) on soft values."""
    return (mdp.r_max + lam.lam * np.log(mdp.n_actions)) / (1.0 - mdp.discount)


def _check_policy_shape(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeMismatch(
            f"policy shape {policy.shape} != {(mdp.n_states, mdp.n_actions)}"
        )
    return policy


def _check_values_shape(mdp: FiniteMdp, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (mdp.n_states,):
        raise ShapeMismatch(f"values shape {values.shape} != {(mdp.n_states,)}")
    return values


def _policy_kernel(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    """State-to-state kernel P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)."""
    return np.einsum("sa,saz->sz", policy, mdp.transition)


def _evaluate(mdp: FiniteMdp, policy: np.ndarray, lam_value: float) -> np.ndarray:
    """Solve V = r_pi + gamma P_pi V where r_pi folds in the entropy bonus."""
    policy = _check_policy_shape(mdp, policy)
    # 0*ln(0) = 0: zero-probability actions contribute nothing.
    r_pi = (policy * mdp.reward).sum(axis=1) - lam_value * xlogy(policy, policy).sum(axis=1)
    p_pi = _policy_kernel(mdp, policy)
    lhs = np.eye(mdp.n_states) - mdp.discount * p_pi
    try:
        return np.linalg.solve(lhs, r_pi)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - gamma < 1 keeps lhs regular
        raise SingularSystem(str(exc)) from exc


def soft_policy_value(mdp: FiniteMdp, policy: np.ndarray, lam: SoftParams) -> np.ndarray:
    """Entropy-regularized state values of a stationary policy.

    Returns the unique solution of
    V(s) = sum_a pi(a|s) (R(s,a) + gamma E[V(s')] - lambda ln pi(a|s)).
    """
    return _evaluate(mdp, policy, lam.lam)


def performance(mdp: FiniteMdp, policy: np.ndarray, lam_value: float = 0.0) -> float:
    """Expected discounted return from the initial distribution.

    lam_value = 0 gives the plain objective; lam_value > 0 adds the entropy
    bonus along trajectories.
    """
    if lam_value < 0.0 or not np.isfinite(lam_value):
        raise NegativeInput(f"lam_value must be finite and >= 0, got {lam_value}")
    return float(mdp.init_dist @ _evaluate(mdp, policy, lam_value))


def occupancy_measure(mdp: FiniteMdp, policy: np.ndarray) -> OccupancyMeasure:
    """Normalized discounted visitation d(s, a) of a stationary policy.

    Solves the flow system d = (1-gamma) d0 + gamma P_pi^T d for the state
    marginal, then splits by the policy.
    """
    policy = _check_policy_shape(mdp, policy)
    p_pi = _policy_kernel(mdp, policy)
    lhs = np.eye(mdp.n_states) - mdp.discount * p_pi.T
    try:
        state_mass = np.linalg.solve(lhs, (1.0 - mdp.discount) * mdp.init_dist)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularSystem(str(exc)) from exc
    return OccupancyMeasure(mass=state_mass[:, None] * policy)


def consistency_operator(
    mdp: FiniteMdp, values: np.ndarray, policy: np.ndarray, lam: SoftParams
) -> np.ndarray:
    """Table (s, a) -> R(s,a) + gamma E[V(s')] - lambda ln pi(a|s).

    Defined on every cell, so the policy must be strictly positive.
    """
    values = _check_values_shape(mdp, values)
    policy = _check_policy_shape(mdp, policy)
    if np.any(policy <= 0.0):
        s, a = np.argwhere(policy <= 0.0)[0]
        raise ZeroProbabilityAction(f"pi({a}|{s}) = {policy[s, a]} is not positive")
    return mdp.reward + mdp.discount * (mdp.transition @ values) - lam.lam * np.log(policy)


def soft_backup(
    mdp: FiniteMdp, values: np.ndarray, lam: SoftParams
) -> tuple[np.ndarray, np.ndarray]:
    """One log-sum-exp backup. Returns the new values and the softmax policy."""
    values = _check_values_shape(mdp, values)
    scaled = (mdp.reward + mdp.discount * (mdp.transition @ values)) / lam.lam
    return lam.lam * logsumexp(scaled, axis=1), softmax(scaled, axis=1)


def soft_value_iteration(
    mdp: FiniteMdp,
    lam: SoftParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Iterate the log-sum-exp backup from zero until the sup-norm step <= tol.

    Returns (values, policy). The pair satisfies the temporal-consistency
    equation to within tol * (1 + gamma) / (1 - gamma) in sup norm, and the
    policy obeys max |ln pi| <= v_lambda_max / lambda by construction.
    """
    values = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        new_values, policy = soft_backup(mdp, values, lam)
        step = float(np.max(np.abs(new_values - values)))
        values = new_values
        if step <= tol:
            # Iterates live in [0, v_max] exactly; clip floating-point spill.
            np.clip(values, 0.0, v_lambda_max(mdp, lam), out=values)
            return values, policy
    raise MaxIterExceeded(f"no convergence to tol={tol} within {max_iter} sweeps")


def hard_value_iteration(
    mdp: FiniteMdp,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Unregularized value iteration with a deterministic greedy policy.

    Ties in the greedy argmax break toward the lowest action index. The
    returned values are within tol * gamma / (1 - gamma) of optimal in
    sup norm.
    """
    values = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = mdp.reward + mdp.discount * (mdp.transition @ values)
        new_values = q.max(axis=1)
        step = float(np.max(np.abs(new_values - values)))
        values = new_values
        if step <= tol:
            greedy = np.argmax(q, axis=1)
            policy = np.zeros((mdp.n_states, mdp.n_actions))
            policy[np.arange(mdp.n_states), greedy] = 1.0
            return values, policy
    raise MaxIterExceeded(f"no convergence to tol={tol} within {max_iter} sweeps")


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) keyed through SeedSequence."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def random_mdp(
    n_states: int,
    n_actions: int,
    discount: float,
    r_max: float = 1.0,
    seed: int = 0,
) -> FiniteMdp:
    """Dense random MDP: Dirichlet(1) rows, uniform rewards in [0, r_max]."""
    rng = make_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    reward = rng.uniform(0.0, r_max, size=(n_states, n_actions))
    init_dist = rng.dirichlet(np.ones(n_states))
    return validate_mdp(
        FiniteMdp(
            transition=transition,
            reward=reward,
            discount=discount,
            init_dist=init_dist,
            r_max=r_max,
        )
    )


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    """Strictly positive random policy, Dirichlet(1) rows."""
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def mdp_to_json(mdp: FiniteMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "discount": mdp.discount,
        "init_dist": mdp.init_dist.tolist(),
        "r_max": mdp.r_max,
    }


def mdp_from_json(obj: dict) -> FiniteMdp:
    mdp = FiniteMdp(
        transition=np.asarray(obj["transition"], dtype=np.float64),
        reward=np.asarray(obj["reward"], dtype=np.float64),
        discount=obj["discount"],
        init_dist=np.asarray(obj["init_dist"], dtype=np.float64),
        r_max=obj["r_max"],
    )
    validate_mdp(mdp)
    if mdp.n_states != obj["n_states"] or mdp.n_actions != obj["n_actions"]:
        raise ShapeMismatch(
            f"declared sizes ({obj['n_states']}, {obj['n_actions']}) do not match "
            f"tables ({mdp.n_states}, {mdp.n_actions})"
        )
    return mdp


def save_mdp(mdp: FiniteMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_json(mdp), fh, indent=2, sort_keys=True)


def load_mdp(path) -> FiniteMdp:
    with open(path) as fh:
        return mdp_from_json(json.load(fh))
