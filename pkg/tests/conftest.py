import numpy as np
import pytest

from renewal_rl.envs import TabularMDP, Transition, garnet_generate
from renewal_rl.mdp_core import GibbsTabular, PolicyParams


def gibbs(mdp, theta=None, lo=-30.0, hi=30.0, temperature=1.0):
    fam = GibbsTabular(mdp.n_states, mdp.n_actions, temperature)
    theta = np.zeros(fam.dim) if theta is None else np.asarray(theta, dtype=float)
    return PolicyParams(theta, fam, lo, hi)


def two_state_loop():
    """s0 -> s1 -> s0 deterministically, rewards (1, 2) under either action."""
    P = np.zeros((1, 2, 2))
    P[0, 0, 1] = P[0, 1, 0] = 1.0
    return TabularMDP(P, np.array([[1.0], [2.0]]))


def gate_mdp():
    """Two states; action 1 in state 0 pays 1, everything else pays 0. Both actions mix states."""
    P = np.full((2, 2, 2), 0.5)
    r = np.array([[0.0, 1.0], [0.0, 0.0]])
    return TabularMDP(P, r)


class QuadraticBandit:
    """One-step cycles whose reward is ``-(a - 5)**2 + noise`` for order size ``a``.

    Paired with a base-stock policy at state 0 the action equals theta, so the
    performance is ``-(theta - 5)**2 / (1 - gamma)`` with its maximum at 5.
    """

    post_decision = False
    start_state = 0.0
    noise = 0.1

    def reset(self):
        return 0.0

    def begin(self, rng=None):
        return 0.0

    def step(self, state, action, rng):
        return Transition(0.0, -(action - 5.0) ** 2 + self.noise * rng.standard_normal())

    @staticmethod
    def distance(s, t):
        return abs(s - t)


@pytest.fixture
def small_garnet():
    return garnet_generate(4, 2, 3, reward_prob=0.5, seed=11)


@pytest.fixture
def garnet20():
    return garnet_generate(20, 5, 10, 0.05, (10.0, 100.0), seed=0)
