"""Batch transition data and the two empirical squared losses.

Datasets are drawn i.i.d.: a state-action pair from the data distribution,
the reward read off the table, the next state from the transition row. The
generator is counter-based (Philox) so a (seed, distribution) pair pins every
byte of the sample. Losses are plain means of squared residuals over the
transitions; numpy's pairwise reduction makes them bit-stable for a fixed
dataset regardless of how callers batch the evaluation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .classes import mu_digest, validate_distribution
from .errors import IoError, NegativeInput, ShapeMismatch, ZeroProbabilityAction
from .mdp import FiniteMdp, SoftParams, make_rng

RNG_ALGORITHM = "philox4x64"


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


@dataclass(frozen=True)
class Dataset:
    """Column arrays of n i.i.d. transitions plus provenance metadata."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    seed: int
    mu_id: str
    discount: float
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int64))
        object.__setattr__(self, "actions", np.asarray(self.actions, dtype=np.int64))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64))
        object.__setattr__(self, "next_states", np.asarray(self.next_states, dtype=np.int64))
        n = len(self.states)
        if not (len(self.actions) == len(self.rewards) == len(self.next_states) == n):
            raise ShapeMismatch("transition columns have unequal lengths")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def transitions(self) -> Iterator[Transition]:
        for s, a, r, s2 in zip(self.states, self.actions, self.rewards, self.next_states):
            yield Transition(int(s), int(a), float(r), int(s2))


def sample_dataset(
    mdp: FiniteMdp,
    mu: np.ndarray,
    n: int,
    seed: int,
    mu_id: str | None = None,
) -> Dataset:
    """Draw n transitions i.i.d. from (mu, P). Identical seeds reproduce bytes."""
    if n < 1:
        raise NegativeInput(f"need n >= 1 transitions, got {n}")
    mu = validate_distribution(mu)
    if mu.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeMismatch(f"mu shape {mu.shape} != {(mdp.n_states, mdp.n_actions)}")
    rng = make_rng(seed)
    flat = rng.choice(mu.size, size=n, p=mu.ravel())
    states = flat // mdp.n_actions
    actions = flat % mdp.n_actions
    rewards = mdp.reward[states, actions]
    cdf = mdp.transition[states, actions].cumsum(axis=1)
    u = rng.random(n)
    next_states = np.minimum((cdf < u[:, None]).sum(axis=1), mdp.n_states - 1)
    return Dataset(
        states=states,
        actions=actions,
        rewards=rewards,
        next_states=next_states,
        seed=int(seed),
        mu_id=mu_id if mu_id is not None else mu_digest(mu),
        discount=mdp.discount,
    )


def _log_policy_at(data: Dataset, policy: np.ndarray) -> np.ndarray:
    probs = np.asarray(policy, dtype=np.float64)[data.states, data.actions]
    if np.any(probs <= 0.0):
        i = int(np.argwhere(probs <= 0.0)[0][0])
        raise ZeroProbabilityAction(
            f"pi({data.actions[i]}|{data.states[i]}) = 0 at transition {i}"
        )
    return np.log(probs)


def empirical_consistency_loss(
    data: Dataset, values: np.ndarray, policy: np.ndarray, lam: SoftParams
) -> float:
    """Mean squared consistency residual of the value function itself:
    mean over transitions of (V(s) - r - gamma V(s') + lambda ln pi(a|s))^2.
    """
    values = np.asarray(values, dtype=np.float64)
    resid = (
        values[data.states]
        - data.rewards
        - data.discount * values[data.next_states]
        + lam.lam * _log_policy_at(data, policy)
    )
    return float(np.mean(resid * resid))


def empirical_regression_loss(
    data: Dataset,
    helper: np.ndarray,
    values: np.ndarray,
    policy: np.ndarray,
    lam: SoftParams,
) -> float:
    """Mean squared residual of a helper against the same regression target:
    mean over transitions of (g(s,a) - r - gamma V(s') + lambda ln pi(a|s))^2.
    """
    helper = np.asarray(helper, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    resid = (
        helper[data.states, data.actions]
        - data.rewards
        - data.discount * values[data.next_states]
        + lam.lam * _log_policy_at(data, policy)
    )
    return float(np.mean(resid * resid))


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def save_dataset(data: Dataset, path) -> None:
    """Write transitions as CSV (s,a,r,s_next) plus a JSON metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "a", "r", "s_next"])
        for s, a, r, s2 in zip(data.states, data.actions, data.rewards, data.next_states):
            writer.writerow([int(s), int(a), repr(float(r)), int(s2)])
    meta = {
        "seed": data.seed,
        "n": data.n,
        "mu_id": data.mu_id,
        "rng_algorithm": data.rng_algorithm,
        "discount": data.discount,
    }
    with open(_sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with open(_sidecar_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise IoError(f"missing dataset sidecar: {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"invalid dataset sidecar {_sidecar_path(path)}: {exc}") from exc
    states, actions, rewards, next_states = [], [], [], []
    try:
        fh = open(path, newline="")
    except FileNotFoundError as exc:
        raise IoError(f"missing dataset file: {exc.filename}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["s", "a", "r", "s_next"]:
            raise ShapeMismatch(f"unexpected CSV header {header}")
        for row in reader:
            states.append(int(row[0]))
            actions.append(int(row[1]))
            rewards.append(float(row[2]))
            next_states.append(int(row[3]))
    data = Dataset(
        states=np.array(states, dtype=np.int64),
        actions=np.array(actions, dtype=np.int64),
        rewards=np.array(rewards, dtype=np.float64),
        next_states=np.array(next_states, dtype=np.int64),
        seed=int(meta["seed"]),
        mu_id=meta["mu_id"],
        discount=float(meta["discount"]),
        rng_algorithm=meta["rng_algorithm"],
    )
    if data.n != meta["n"]:
        raise ShapeMismatch(f"sidecar says n={meta['n']}, CSV has {data.n} rows")
    return data
