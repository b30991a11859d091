"""Exact oracles and comparison learners.

* value iteration and exact policy evaluation for tabular models,
* cycle reward/time of a Gibbs policy from an absorbing-chain construction,
* stationary average reward from the leading left eigenvector,
* a tabular actor-critic with TD(lambda) critic,
* Monte Carlo rollouts and grid search over scalar thresholds,
* a quadrature evaluation of event-trigger thresholds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from . import _kernels
from .envs import EventTriggerModel, InventoryModel, TabularMDP
from .mdp_core import (BaseStock, GibbsTabular, PolicyParams, Threshold,
                       UnsupportedFamilyError, make_rng, policy_table, sample_action)
from .rmc import IterationRecord, RmcRunResult


@dataclass(frozen=True)
class ValueSolution:
    V: np.ndarray
    greedy_policy: np.ndarray
    J_star: float
    iterations: int
    residual: float


def q_values(mdp: TabularMDP, V, gamma) -> np.ndarray:
    """``Q[s, a] = r[s, a] + gamma * sum_s' P[a, s, s'] V[s']``."""
    return mdp.r + gamma * np.einsum("ast,t->sa", mdp.P, V)


def value_iteration(mdp: TabularMDP, gamma: float, tol: float = 1e-10,
                    max_iter: int = 100_000) -> ValueSolution:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    V = np.zeros(mdp.n_states)
    for it in range(1, max_iter + 1):
        V_new = q_values(mdp, V, gamma).max(axis=1)
        diff = np.abs(V_new - V).max()
        V = V_new
        if diff <= tol:
            break
    Q = q_values(mdp, V, gamma)
    residual = float(np.abs(Q.max(axis=1) - V).max())
    return ValueSolution(V, Q.argmax(axis=1), float(V[mdp.start_state]), it, residual)


@dataclass(frozen=True)
class PolicyValue:
    """Exact quantities of a fixed tabular policy.

    ``R``/``T`` are expected discounted cycle reward and time between visits
    to the start state, ``T_bar`` the expected discount at the first return.
    Gradients are central finite differences and only filled on request.
    """

    J: float
    V: np.ndarray
    R: float
    T: float
    T_bar: float
    grad_J: Optional[np.ndarray] = None
    grad_R: Optional[np.ndarray] = None
    grad_T: Optional[np.ndarray] = None

    @property
    def H(self) -> np.ndarray:
        return self.T * self.grad_R - self.R * self.grad_T


def _markov_chain(mdp: TabularMDP, probs):
    P_pi = np.einsum("sa,ast->st", probs, mdp.P)
    r_pi = (probs * mdp.r).sum(axis=1)
    return P_pi, r_pi


def _cycle_quantities(P_pi, r_pi, s0, gamma):
    n = P_pi.shape[0]
    Q = P_pi.copy()
    Q[:, s0] = 0.0
    A = np.eye(n) - gamma * Q
    x = np.linalg.solve(A, r_pi)
    y = np.linalg.solve(A, np.ones(n))
    z = np.linalg.solve(A, gamma * P_pi[:, s0])
    return x[s0], y[s0], z[s0]


def _exact(mdp, probs, gamma):
    P_pi, r_pi = _markov_chain(mdp, probs)
    V = np.linalg.solve(np.eye(mdp.n_states) - gamma * P_pi, r_pi)
    R, T, T_bar = _cycle_quantities(P_pi, r_pi, mdp.start_state, gamma)
    return V, R, T, T_bar


def exact_policy_value(mdp: TabularMDP, policy: PolicyParams, gamma: float,
                       gradients: bool = False, h: float = 1e-5) -> PolicyValue:
    """Performance and cycle statistics of a Gibbs policy by linear solves."""
    if not isinstance(policy.family, GibbsTabular):
        raise UnsupportedFamilyError("exact evaluation needs a tabular Gibbs policy")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1); the system is singular at gamma = 1")
    V, R, T, T_bar = _exact(mdp, policy_table(policy), gamma)
    out = dict(J=float(V[mdp.start_state]), V=V, R=float(R), T=float(T), T_bar=float(T_bar))
    if gradients:
        fam = policy.family
        gJ, gR, gT = (np.zeros(policy.dim) for _ in range(3))
        for i in range(policy.dim):
            vals = []
            for sgn in (1.0, -1.0):
                th = policy.theta.copy()
                th[i] += sgn * h
                p = PolicyParams(th, fam)
                Vh, Rh, Th, _ = _exact(mdp, policy_table(p), gamma)
                vals.append((Vh[mdp.start_state], Rh, Th))
            (J1, R1, T1), (J2, R2, T2) = vals
            gJ[i] = (J1 - J2) / (2 * h)
            gR[i] = (R1 - R2) / (2 * h)
            gT[i] = (T1 - T2) / (2 * h)
        out.update(grad_J=gJ, grad_R=gR, grad_T=gT)
    return PolicyValue(**out)


def stationary_distribution(P_pi) -> np.ndarray:
    w, vl = np.linalg.eig(P_pi.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    mu = np.real(vl[:, k])
    return mu / mu.sum()


def average_reward(mdp: TabularMDP, policy: PolicyParams) -> float:
    """Long-run average reward of a Gibbs policy on an ergodic chain."""
    P_pi, r_pi = _markov_chain(mdp, policy_table(policy))
    return float(stationary_distribution(P_pi) @ r_pi)


def average_cycle_quantities(mdp: TabularMDP, policy: PolicyParams) -> tuple:
    """Expected undiscounted cycle reward and cycle length."""
    P_pi, r_pi = _markov_chain(mdp, policy_table(policy))
    R, T, _ = _cycle_quantities(P_pi, r_pi, mdp.start_state, 1.0)
    return float(R), float(T)


def greedy_gibbs(mdp: TabularMDP, actions, magnitude: float = 30.0) -> PolicyParams:
    """Gibbs parameters that (nearly) deterministically play ``actions``."""
    theta = np.zeros((mdp.n_states, mdp.n_actions))
    theta[np.arange(mdp.n_states), actions] = magnitude
    return PolicyParams(theta.ravel(), GibbsTabular(mdp.n_states, mdp.n_actions),
                        -magnitude, magnitude)


def discounted_returns(env, policy: PolicyParams, horizon: int, reps: int, gamma: float,
                       rng, use_kernel: bool = True) -> np.ndarray:
    """Truncated discounted returns of ``reps`` rollouts from the start state."""
    if horizon < 1 or reps < 1:
        raise ValueError("horizon and reps must be at least 1")
    fam = policy.family
    theta = policy.theta
    if use_kernel:
        if isinstance(env, TabularMDP) and isinstance(fam, GibbsTabular):
            cdf_pi = np.cumsum(policy_table(policy), axis=1)
            return _kernels.tabular_returns(env.cdf, env.r, cdf_pi, int(env.start_state),
                                            gamma, horizon, reps, rng)
        if isinstance(env, EventTriggerModel) and isinstance(fam, Threshold):
            return _kernels.event_returns(env.alpha, env.lambda_comm, env.p_d,
                                          float(theta[0]), float(env.start_state),
                                          gamma, horizon, reps, rng)
        if isinstance(env, InventoryModel) and isinstance(fam, BaseStock):
            lo, hi = env.state_clip
            return _kernels.inventory_returns(env.a_p, env.a_h, env.a_b, env.demand_rate,
                                              env.discount, lo, hi, float(theta[0]),
                                              float(env.start_state), gamma, horizon,
                                              reps, rng)
    out = np.zeros(reps)
    for i in range(reps):
        state = env.begin(rng)
        disc = 1.0
        for _ in range(horizon):
            tr = env.step(state, sample_action(policy, state, rng), rng)
            out[i] += disc * tr.reward
            disc *= gamma
            state = tr.next_state
    return out


@dataclass(frozen=True)
class GridSearchResult:
    theta_best: float
    thetas: np.ndarray
    J: np.ndarray
    stderr: np.ndarray

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.J))


def horizon_for(gamma: float, tail: float = 1e-6) -> int:
    """Smallest horizon with ``gamma**horizon < tail``."""
    return int(math.floor(math.log(tail) / math.log(gamma))) + 1


def grid_search_threshold(env, theta_grid, horizon: int, reps: int, rng,
                          gamma: Optional[float] = None) -> GridSearchResult:
    """Monte Carlo search for the best scalar threshold.

    Every grid point reuses the same random stream (common random numbers), so
    differences between neighbouring points are far less noisy than the
    per-point standard errors suggest. ``J`` is in reward units; the best point
    maximizes reward, i.e. minimizes cost.
    """
    if isinstance(env, EventTriggerModel):
        family, lo, hi = Threshold(), 0.0, np.inf
    elif isinstance(env, InventoryModel):
        family, lo, hi = BaseStock(), env.state_clip[0], env.state_clip[1]
    else:
        raise TypeError(f"no threshold family for {type(env).__name__}")
    gamma = env.discount if gamma is None else gamma
    thetas = np.asarray(theta_grid, dtype=float).reshape(-1)
    seed = int(rng.integers(2 ** 63))
    J = np.zeros(thetas.size)
    se = np.zeros(thetas.size)
    for i, th in enumerate(thetas):
        pol = PolicyParams([th], family, lo, hi)
        ret = discounted_returns(env, pol, horizon, reps, gamma, make_rng(seed))
        J[i] = ret.mean()
        se[i] = ret.std(ddof=1) / math.sqrt(reps) if reps > 1 else math.nan
    best = int(np.argmax(J))
    return GridSearchResult(float(thetas[best]), thetas, J, se)


def event_trigger_value(theta: float, model: EventTriggerModel, n_nodes: int = 200,
                        width: Optional[float] = None) -> float:
    """Discounted reward of threshold ``theta`` by Nystrom quadrature.

    Writes ``V(e)`` for the pre-decision error and ``g(x) = E V(alpha x + W)``;
    the value is ``g(s0)``. The integral equation is solved on Gauss-Legendre
    nodes, split at ``+-theta`` where ``V`` jumps, over ``[-width, width]``
    (default ``theta + 12 + 30 p_d``, past which the normal tail is negligible).
    """
    if theta < 0:
        raise ValueError("threshold must be nonnegative")
    a, gamma, p_d = model.alpha, model.discount, model.p_d
    M = width if width is not None else theta + 12.0 + 30.0 * p_d
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    cuts = [-M, -theta, theta, M] if 0 < theta < M else [-M, M]
    xs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            xs.append((hi - lo) / 2 * xg + (hi + lo) / 2)
            ws.append((hi - lo) / 2 * wg)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    K = w[None, :] * norm.pdf(x[None, :] - a * x[:, None])
    k0 = w * norm.pdf(x)
    inside = np.abs(x) < theta
    A = np.eye(x.size)
    b = np.empty(x.size)
    A[inside] -= gamma * K[inside]
    b[inside] = x[inside] ** 2
    out = ~inside
    A[out] -= p_d * gamma * K[out] + (1 - p_d) * gamma * k0[None, :]
    b[out] = model.lambda_comm + p_d * x[out] ** 2
    V = np.linalg.solve(A, b)
    k_s0 = w * norm.pdf(x - a * model.start_state)
    return -float(k_s0 @ V)


@dataclass(frozen=True)
class ActorCriticConfig:
    lam: float = 0.0
    gamma: float = 0.9
    alpha: float = 0.05
    critic_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    budget: int = 100_000
    record_every: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def sarsa_lambda_run(mdp: TabularMDP, policy0: PolicyParams, config: ActorCriticConfig,
                     seed: int = 0, evaluator=None) -> RmcRunResult:
    """Actor-critic with eligibility traces for the critic.

    Records hold the critic's estimate of the start-state value as ``J_hat``;
    ``R_hat``/``T_hat`` are NaN since no cycles are formed.
    """
    if not isinstance(policy0.family, GibbsTabular):
        raise UnsupportedFamilyError("actor-critic baseline needs a Gibbs policy")
    fam = policy0.family
    V, theta, steps, thetas, v0 = _kernels.actor_critic(
        mdp.cdf, mdp.r, policy0.theta.copy(), policy0.lo, policy0.hi,
        float(fam.temperature), int(mdp.start_state), config.gamma, config.lam,
        config.critic_lr, config.alpha, config.beta1, config.beta2, config.epsilon,
        int(config.budget), int(config.record_every), make_rng(seed, 2))
    result = RmcRunResult(final_theta=theta, samples=int(config.budget),
                          iterations=int(config.budget), critic=V)
    for k in range(steps.size):
        J_eval = float(evaluator(thetas[k])) if evaluator is not None else math.nan
        result.records.append(IterationRecord(int(steps[k]) - 1, int(steps[k]), thetas[k],
                                              math.nan, math.nan, float(v0[k]), J_eval))
    return result
