"""Renewal Monte Carlo: projected stochastic approximation on the H statistic.

Two drivers share one loop shape. Per iteration they estimate cycle reward and
cycle time at the current parameters, estimate H (likelihood ratio or
simultaneous perturbation), take an optimizer step along H and project back
onto the parameter box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .gradest import GradientEstimate, NORMAL, h_from_lr, h_from_sp, spsa_perturb
from .mdp_core import PolicyParams, UnsupportedFamilyError, make_rng, project
from .renewal import (DEFAULT_MAX_STEPS, DISCOUNTED, TruncationError, collect_batch,
                      performance, renewal_predicate_ball, renewal_predicate_exact)

__all__ = [
    "OptimizerState", "adam_update", "sgd_update", "RmcConfig", "IterationRecord",
    "RmcRunResult", "rmc_run_lr", "rmc_run_sp", "approx_bound",
    "renewal_predicate_exact", "renewal_predicate_ball",
]


@dataclass(frozen=True)
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, dim, **hyper) -> "OptimizerState":
        return cls(np.zeros(dim), np.zeros(dim), 0, **hyper)


def adam_update(state: OptimizerState, h) -> tuple:
    """Bias-corrected Adam step in the ascent direction of ``h``."""
    h = np.asarray(h, dtype=float)
    if h.shape != state.m.shape:
        raise ValueError(f"gradient shape {h.shape} != moment shape {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * h
    v = state.beta2 * state.v + (1 - state.beta2) * h * h
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    step = state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return replace(state, m=m, v=v, step=t), step


def sgd_update(state: OptimizerState, h) -> tuple:
    """Robbins-Monro step ``alpha / (1 + m) * h``."""
    h = np.asarray(h, dtype=float)
    rate = state.alpha / (1 + state.step)
    return replace(state, step=state.step + 1), rate * h


@dataclass(frozen=True)
class RmcConfig:
    n_cycles: int = 5
    gamma: float = 0.9
    mode: str = DISCOUNTED
    budget: int = 1_000_000
    max_iterations: Optional[int] = None
    biased: bool = False
    shared_run: bool = False
    c: Optional[float] = None
    perturbation: str = NORMAL
    optimizer: str = "adam"
    alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rho: float = 0.0
    max_steps: int = DEFAULT_MAX_STEPS
    record_every: int = 1
    eval_every: int = 0

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be at least 1")
        if self.optimizer not in ("adam", "plain_sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    samples: int
    theta: np.ndarray
    R_hat: float
    T_hat: float
    J_hat: float
    J_eval: float = math.nan


@dataclass
class RmcRunResult:
    records: List[IterationRecord] = field(default_factory=list)
    final_theta: Optional[np.ndarray] = None
    samples: int = 0
    iterations: int = 0
    critic: Optional[np.ndarray] = None


def _optimizer(config: RmcConfig, dim):
    state = OptimizerState.zeros(dim, alpha=config.alpha, beta1=config.beta1,
                                 beta2=config.beta2, epsilon=config.epsilon)
    update = adam_update if config.optimizer == "adam" else sgd_update
    return state, update


def _run(env, policy0: PolicyParams, config: RmcConfig, seed: int, estimate_h,
         evaluator: Optional[Callable] = None) -> RmcRunResult:
    opt_state, update = _optimizer(config, policy0.dim)
    theta = policy0.theta.copy()
    state = env.begin(make_rng(seed, 0))
    result = RmcRunResult()
    m = 0
    while result.samples < config.budget and (
            config.max_iterations is None or m < config.max_iterations):
        policy = policy0.with_theta(theta)
        for attempt in range(2):
            rng = make_rng(seed, 1, m, attempt)
            try:
                h, R_hat, T_hat, used, state = estimate_h(env, policy, config, rng, state)
                break
            except TruncationError as exc:
                partial = exc.partial
                if partial is not None:
                    result.samples += partial.samples
                if attempt == 1:
                    raise TruncationError(
                        f"iteration {m}: {exc} (after one retry)", partial=result) from None
                state = env.begin(rng)
        result.samples += used
        J_hat = performance(R_hat, T_hat, config.gamma, config.mode)
        last = result.samples >= config.budget or (
            config.max_iterations is not None and m + 1 >= config.max_iterations)
        if m % config.record_every == 0 or last:
            J_eval = math.nan
            if evaluator is not None and config.eval_every and (
                    m % config.eval_every == 0 or last):
                J_eval = float(evaluator(theta))
            result.records.append(IterationRecord(
                m, result.samples, theta.copy(), R_hat, T_hat, J_hat, J_eval))
        opt_state, step = update(opt_state, h)
        theta = project(theta + step, policy0.lo, policy0.hi)
        m += 1
    result.final_theta = theta
    result.iterations = m
    return result


def _lr_estimate(env, policy, config, rng, state):
    grad_mode = "biased" if config.biased else "unbiased"
    kw = dict(mode=config.mode, rho=config.rho, max_steps=config.max_steps)
    if config.shared_run:
        b = collect_batch(env, policy, config.n_cycles, config.gamma, rng, state=state,
                          grad=grad_mode, **kw)
        b1 = b2 = b
        used = b.samples
    else:
        b1 = collect_batch(env, policy, config.n_cycles, config.gamma, rng, state=state, **kw)
        b2 = collect_batch(env, policy, config.n_cycles, config.gamma, rng,
                           state=b1.end_state, grad=grad_mode, **kw)
        used = b1.samples + b2.samples
    R_hat, T_hat = b1.estimate()
    grad = GradientEstimate(b2.grad_R.mean(axis=0), b2.grad_T.mean(axis=0), config.n_cycles)
    return h_from_lr(R_hat, T_hat, grad), R_hat, T_hat, used, b2.end_state


def _sp_estimate(env, policy, config, rng, state):
    kw = dict(mode=config.mode, rho=config.rho, max_steps=config.max_steps)
    b1 = collect_batch(env, policy, config.n_cycles, config.gamma, rng, state=state, **kw)
    R_hat, T_hat = b1.estimate()
    pert, theta_p = spsa_perturb(policy.theta, config.c, config.perturbation, rng,
                                 policy.lo, policy.hi)
    b2 = collect_batch(env, policy.with_theta(theta_p), config.n_cycles, config.gamma,
                       rng, state=b1.end_state, **kw)
    R_p, T_p = b2.estimate()
    h = h_from_sp(R_hat, T_hat, R_p, T_p, pert)
    return h, R_hat, T_hat, b1.samples + b2.samples, b2.end_state


def rmc_run_lr(env, policy0: PolicyParams, config: RmcConfig, seed: int = 0,
               evaluator: Optional[Callable] = None) -> RmcRunResult:
    """Renewal Monte Carlo with likelihood-ratio gradients.

    ``config.shared_run`` estimates (R, T) and their gradients from one batch
    instead of two independent ones; ``config.biased`` restarts discounting at
    each score term.
    """
    if not policy0.differentiable:
        raise UnsupportedFamilyError(
            f"{type(policy0.family).__name__} policy is not differentiable; use rmc_run_sp")
    return _run(env, policy0, config, seed, _lr_estimate, evaluator)


def rmc_run_sp(env, policy0: PolicyParams, config: RmcConfig, seed: int = 0,
               evaluator: Optional[Callable] = None) -> RmcRunResult:
    """Renewal Monte Carlo with one-sided simultaneous-perturbation gradients."""
    if config.c is None or config.c <= 0:
        raise ValueError("simultaneous perturbation needs c > 0")
    return _run(env, policy0, config, seed, _sp_estimate, evaluator)


def approx_bound(lipschitz, rho, gamma, T_bar=None, T_rho=None) -> float:
    """Performance gap bound for renewals declared inside a rho-ball.

    With cycle statistics ``T_bar = E[gamma**tau]`` and ``T_rho`` the bound is
    ``L * T_bar * rho / ((1 - gamma) * T_rho)``; otherwise the looser
    ``gamma * L * rho / (1 - gamma)``.
    """
    if lipschitz < 0 or rho < 0:
        raise ValueError("Lipschitz constant and rho must be nonnegative")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if (T_bar is None) != (T_rho is None):
        raise ValueError("give both T_bar and T_rho or neither")
    if T_bar is None:
        return gamma * lipschitz * rho / (1 - gamma)
    if T_bar > gamma or T_bar < 0 or T_rho < 1:
        raise ValueError("need 0 <= T_bar <= gamma and T_rho >= 1")
    return lipschitz * T_bar * rho / ((1 - gamma) * T_rho)
