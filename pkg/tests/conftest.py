"""Shared hand-built MDPs and small helpers for the test suite."""

import numpy as np
import pytest

from sbeedlab import FiniteMdp, validate_mdp


@pytest.fixture
def single_action_mdp():
    # One state, one action, unit reward: V = 1 / (1 - gamma) = 2.
    return validate_mdp(
        FiniteMdp(
            transition=np.ones((1, 1, 1)),
            reward=np.ones((1, 1)),
            discount=0.5,
            init_dist=np.ones(1),
            r_max=1.0,
        )
    )


@pytest.fixture
def two_arm_mdp():
    # One state, rewards (0, 1): soft optimum has the 2 ln(1+e) closed form.
    return validate_mdp(
        FiniteMdp(
            transition=np.ones((1, 2, 1)),
            reward=np.array([[0.0, 1.0]]),
            discount=0.5,
            init_dist=np.ones(1),
            r_max=1.0,
        )
    )


@pytest.fixture
def zero_reward_two_arm():
    # Entropy-only objective: J = lam ln 2 / (1 - gamma) for the uniform policy.
    return validate_mdp(
        FiniteMdp(
            transition=np.ones((1, 2, 1)),
            reward=np.zeros((1, 2)),
            discount=0.5,
            init_dist=np.ones(1),
            r_max=1.0,
        )
    )


@pytest.fixture
def chain_mdp():
    # s0 feeds s1 deterministically, s1 absorbs; visitation splits 1/2, 1/2
    # at gamma = 0.5 regardless of the policy.
    transition = np.zeros((2, 2, 2))
    transition[0, :, 1] = 1.0
    transition[1, :, 1] = 1.0
    reward = np.array([[0.25, 0.75], [0.5, 1.0]])
    return validate_mdp(
        FiniteMdp(
            transition=transition,
            reward=reward,
            discount=0.5,
            init_dist=np.array([1.0, 0.0]),
            r_max=1.0,
        )
    )


def deterministic_mdp(n_states, n_actions, discount, seed):
    """Random rewards, one-hot transition rows: zero next-state variance."""
    rng = np.random.default_rng(seed)
    transition = np.zeros((n_states, n_actions, n_states))
    targets = rng.integers(0, n_states, size=(n_states, n_actions))
    for s in range(n_states):
        for a in range(n_actions):
            transition[s, a, targets[s, a]] = 1.0
    reward = rng.random((n_states, n_actions))
    init = rng.random(n_states)
    init /= init.sum()
    return validate_mdp(
        FiniteMdp(
            transition=transition,
            reward=reward,
            discount=discount,
            init_dist=init,
            r_max=1.0,
        )
    )
