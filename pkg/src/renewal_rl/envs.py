"""Experiment environments: tabular MDPs (GARNET), event-triggered
communication over an erasure channel, and base-stock inventory control.

Every environment exposes the same small surface:

* ``start_state`` / ``reset()`` -- the designated start state (for
  post-decision models, the post-decision start state).
* ``begin(rng)`` -- the first pre-decision state of a trajectory.
* ``step(state, action, rng)`` -- a :class:`Transition`.
* ``post_decision`` -- whether renewals are detected on the post-decision state.
* ``distance(s, t)`` -- state metric used by approximate renewal.

Costs are returned as negative rewards so a single maximizing learner serves
all models. Environments never hold mutable state; randomness comes only from
the ``rng`` passed in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .mdp_core import InvalidStateError, sample_from_cdf


class Transition(NamedTuple):
    next_state: object
    reward: float
    post_state: object = None


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with ``P[a, s, s']`` and state-action rewards ``r[s, a]``."""

    P: np.ndarray
    r: np.ndarray
    start_state: int = 0
    branching: Optional[int] = None
    seed: Optional[int] = None

    post_decision = False

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError(f"P must have shape (A, S, S), got {P.shape}")
        if r.shape != (P.shape[1], P.shape[0]):
            raise ValueError(f"r must have shape (S, A) = {(P.shape[1], P.shape[0])}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("every row of every P(a) must be a probability vector")
        if not 0 <= self.start_state < P.shape[1]:
            raise ValueError("start state out of range")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)

    @property
    def n_states(self) -> int:
        return self.P.shape[1]

    @property
    def n_actions(self) -> int:
        return self.P.shape[0]

    @cached_property
    def cdf(self) -> np.ndarray:
        """Cumulative transition rows, pinned to 1.0 from the last successor on."""
        c = np.cumsum(self.P, axis=2)
        for a in range(self.n_actions):
            for s in range(self.n_states):
                last = np.flatnonzero(self.P[a, s])[-1]
                c[a, s, last:] = 1.0
        return c

    def reset(self) -> int:
        return self.start_state

    def begin(self, rng=None) -> int:
        return self.start_state

    def step(self, state, action, rng) -> Transition:
        s, a = int(state), int(action)
        if not 0 <= s < self.n_states:
            raise InvalidStateError(f"state {s} out of range")
        nxt = sample_from_cdf(self.cdf[a, s], rng.random())
        return Transition(nxt, float(self.r[s, a]))

    @staticmethod
    def distance(s, t) -> float:
        return 0.0 if s == t else 1.0

    def to_text(self) -> str:
        """Flat text: header ``n_states n_actions branching seed`` then P and r."""
        fmt = lambda x: format(float(x), ".17g")
        lines = [f"{self.n_states} {self.n_actions} "
                 f"{self.branching if self.branching is not None else -1} "
                 f"{self.seed if self.seed is not None else -1}"]
        for a in range(self.n_actions):
            for s in range(self.n_states):
                lines.append(" ".join(fmt(x) for x in self.P[a, s]))
        for s in range(self.n_states):
            lines.append(" ".join(fmt(x) for x in self.r[s]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, start_state: int = 0) -> "TabularMDP":
        rows = [ln.split() for ln in text.strip().splitlines()]
        n_s, n_a, branching, seed = (int(x) for x in rows[0])
        p_rows, r_rows = rows[1:1 + n_a * n_s], rows[1 + n_a * n_s:]
        if (len(p_rows) != n_a * n_s or len(r_rows) != n_s
                or any(len(row) != n_s for row in p_rows)
                or any(len(row) != n_a for row in r_rows)):
            raise ValueError("malformed tabular MDP text")
        P = np.array(p_rows, dtype=float).reshape(n_a, n_s, n_s)
        r = np.array(r_rows, dtype=float)
        return cls(P, r, start_state=start_state,
                   branching=None if branching < 0 else branching,
                   seed=None if seed < 0 else seed)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path, start_state: int = 0) -> "TabularMDP":
        with open(path) as fh:
            return cls.from_text(fh.read(), start_state=start_state)


def garnet_generate(n_states, n_actions, branching, reward_prob=0.05,
                    reward_range=(10.0, 100.0), rng=None, seed=None) -> TabularMDP:
    """Random GARNET instance; state 0 is the start state.

    Each row gets ``branching`` distinct successors drawn without replacement,
    with Unif[0,1] masses normalized to one. Each state-action pair carries a
    Unif(reward_range) reward with probability ``reward_prob``, else zero.
    """
    if not 1 <= branching <= n_states:
        raise ValueError(f"branching must lie in [1, {n_states}], got {branching}")
    if not 0.0 <= reward_prob <= 1.0:
        raise ValueError("reward_prob must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng(seed)
    P = np.zeros((n_actions, n_states, n_states))
    for a in range(n_actions):
        for s in range(n_states):
            succ = rng.choice(n_states, size=branching, replace=False)
            w = rng.uniform(0.0, 1.0, size=branching)
            while np.any(w <= 0.0):
                w = rng.uniform(0.0, 1.0, size=branching)
            P[a, s, succ] = w / w.sum()
    # renormalize so rows sum to 1 within 1e-12 despite rounding
    P /= P.sum(axis=2, keepdims=True)
    lo, hi = reward_range
    has_reward = rng.random((n_states, n_actions)) < reward_prob
    r = np.where(has_reward, rng.uniform(lo, hi, size=(n_states, n_actions)), 0.0)
    return TabularMDP(P, r, start_state=0, branching=branching, seed=seed)


@dataclass(frozen=True)
class EventTriggerModel:
    """AR(1) estimation error with event-triggered transmissions.

    Pre-decision state: error before the transmit decision. Post-decision state:
    error after it (zero on a successful transmission). Renewals happen when the
    post-decision error returns to zero.
    """

    alpha: float = 1.0
    lambda_comm: float = 500.0
    p_d: float = 0.0
    discount: float = 0.9
    start_state: float = 0.0

    post_decision = True

    def __post_init__(self):
        if not 0.0 <= self.p_d <= 1.0:
            raise ValueError("erasure probability must lie in [0, 1]")
        if self.lambda_comm < 0:
            raise ValueError("communication cost must be nonnegative")

    def reset(self) -> float:
        return self.start_state

    def begin(self, rng) -> float:
        return self.alpha * self.start_state + rng.standard_normal()

    def step(self, state, action, rng) -> Transition:
        post, nxt, reward = event_step(state, action, self, rng)
        return Transition(nxt, reward, post)

    @staticmethod
    def distance(s, t) -> float:
        return abs(s - t)


def event_step(pre_state, action, model: EventTriggerModel, rng):
    """One step of the event-trigger model: ``(post_state, next_pre_state, reward)``.

    The erasure coin is drawn every step, used or not, so runs at different
    thresholds stay on common random numbers.
    """
    post = pre_state
    u = rng.random()
    if action == 1 and u >= model.p_d:
        post = 0.0
    nxt = model.alpha * post + rng.standard_normal()
    reward = -(model.lambda_comm * action + post * post)
    return post, nxt, reward


@dataclass(frozen=True)
class InventoryModel:
    """Single-item inventory with exponential demand and normalized cost.

    Per-step reward is ``-C(next_state)``; the start state is ``s0``.
    """

    a_p: float = 1.5
    a_h: float = 1.0
    a_b: float = 1.0
    demand_rate: float = 0.025
    discount: float = 0.9
    state_clip: tuple = (-100.0, 100.0)
    start_state: float = 1.0

    post_decision = False

    def __post_init__(self):
        if min(self.a_p, self.a_h, self.a_b) <= 0:
            raise ValueError("cost coefficients must be positive")
        if self.demand_rate <= 0:
            raise ValueError("demand rate must be positive")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    def cost(self, s):
        """Normalized per-step cost C(s); works elementwise on arrays."""
        g = self.discount
        s = np.asarray(s, dtype=float)
        c = self.a_p * s * (1 - g) / g + np.where(s >= 0, self.a_h * s, -self.a_b * s)
        return c if c.ndim else float(c)

    @property
    def lipschitz(self) -> float:
        """Slope of C on the nonnegative half-line."""
        return self.a_h + self.a_p * (1 - self.discount) / self.discount

    def reset(self) -> float:
        return self.start_state

    def begin(self, rng=None) -> float:
        return self.start_state

    def step(self, state, action, rng) -> Transition:
        nxt, reward = inventory_step(state, action, self, rng)
        return Transition(nxt, reward, state + action)

    @staticmethod
    def distance(s, t) -> float:
        return abs(s - t)


def exponential_demand(u, rate):
    """Inverse-CDF draw of Exp(rate) from a uniform ``u`` in [0, 1)."""
    return -math.log1p(-u) / rate


def inventory_step(state, action, model: InventoryModel, rng):
    if action < 0:
        raise ValueError(f"order quantity must be nonnegative, got {action}")
    demand = exponential_demand(rng.random(), model.demand_rate)
    lo, hi = model.state_clip
    nxt = min(max(state + action - demand, lo), hi)
    return nxt, -model.cost(nxt)


def inventory_expected_cost(theta, model: InventoryModel) -> float:
    """E[C(theta - D)] for D ~ Exp(rate), by adaptive quadrature."""
    lam = model.demand_rate
    f = lambda d: model.cost(theta - d) * lam * math.exp(-lam * d)
    if theta > 0:
        a, _ = integrate.quad(f, 0.0, theta, epsabs=1e-10, epsrel=1e-12, limit=200)
        b, _ = integrate.quad(f, theta, np.inf, epsabs=1e-10, epsrel=1e-12, limit=200)
        return a + b
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-10, epsrel=1e-12, limit=200)
    return val


def inventory_value(theta, model: InventoryModel, s0=None) -> float:
    """Discounted cost of the base-stock policy ``theta`` from ``s0 <= theta``:
    ``C(s0) + gamma / (1 - gamma) * E[C(theta - D)]``.
    """
    s0 = model.start_state if s0 is None else s0
    if s0 > theta:
        raise ValueError(f"closed form needs s0 <= theta (s0={s0}, theta={theta})")
    g = model.discount
    return model.cost(s0) + g / (1 - g) * inventory_expected_cost(theta, model)


def inventory_optimal_threshold(model: InventoryModel) -> float:
    g = model.discount
    denom = model.a_h + model.a_p * (1 - g) / g
    if denom <= 0:
        raise ValueError("a_h + a_p (1 - gamma) / gamma must be positive")
    ratio = (model.a_h + model.a_b) / denom
    if ratio <= 0:
        raise ValueError("nonpositive log argument")
    return math.log(ratio) / model.demand_rate
