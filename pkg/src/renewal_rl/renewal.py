"""Regenerative cycles and renewal-reward statistics.

Discounting is cycle-relative: the ``k``-th step of a cycle is weighted by
``gamma**k`` regardless of when the cycle started. This equals the
``gamma**(t - tau)`` rescaling of absolute-time sums and never overflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional

import numpy as np

from . import _kernels
from .envs import EventTriggerModel, InventoryModel, TabularMDP
from .mdp_core import (BaseStock, GibbsTabular, PolicyParams, ScoredStep,
                       Threshold, UnsupportedFamilyError, policy_table,
                       sample_action, step_score)

DISCOUNTED = "discounted"
AVERAGE = "average"
DEFAULT_MAX_STEPS = 100_000


class TruncationError(RuntimeError):
    """No renewal within ``max_steps``; carries what was collected so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def renewal_predicate_exact(state, s0) -> bool:
    return state == s0


def renewal_predicate_ball(state, s0, rho, distance) -> bool:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return distance(state, s0) <= rho


def make_renewal(env, rho: float = 0.0) -> Callable[[object], bool]:
    """Renewal test for ``env``: equality with its start state, or the rho-ball."""
    if rho == 0:
        return partial(_exact, s0=env.start_state)
    return partial(renewal_predicate_ball, s0=env.start_state, rho=rho,
                   distance=env.distance)


def _exact(state, s0):
    return renewal_predicate_exact(state, s0)


@dataclass
class RegenerativeCycle:
    steps: List[ScoredStep]
    next_state: object = None
    mode: str = DISCOUNTED
    differentiable: bool = True

    def __len__(self):
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([st.reward for st in self.steps], dtype=float)

    @property
    def scores(self) -> np.ndarray:
        return np.array([st.score for st in self.steps], dtype=float)


@dataclass(frozen=True)
class CycleStats:
    R: float
    T: float
    length: int


def collect_cycle(env, policy: PolicyParams, renewal, max_steps: int, rng,
                  state=None) -> RegenerativeCycle:
    """Roll ``env`` forward under ``policy`` until ``renewal`` fires.

    ``state`` is the pre-decision state the cycle starts from; ``None`` starts a
    fresh trajectory via ``env.begin``. Standard models test the state reached
    after each step; post-decision models test the post-decision state of the
    step just taken, so the cycle ends with the step that re-entered it.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if state is None:
        state = env.begin(rng)
    steps = []
    for _ in range(max_steps):
        action = sample_action(policy, state, rng)
        tr = env.step(state, action, rng)
        steps.append(ScoredStep(state, action, tr.reward,
                                step_score(policy, state, action)))
        state = tr.next_state
        probe = tr.post_state if env.post_decision else tr.next_state
        if renewal(probe):
            return RegenerativeCycle(steps, next_state=state,
                                     differentiable=policy.differentiable)
    raise TruncationError(f"no renewal within {max_steps} steps",
                          partial=RegenerativeCycle(steps, next_state=state,
                                                    differentiable=policy.differentiable))


def cycle_stats(cycle: RegenerativeCycle, gamma: float, mode: str = DISCOUNTED) -> CycleStats:
    if len(cycle) == 0:
        raise ValueError("empty cycle")
    if mode == AVERAGE:
        return CycleStats(float(np.sum(cycle.rewards)), float(len(cycle)), len(cycle))
    if not 0.0 < gamma < 1.0:
        raise ValueError("discounted mode needs gamma in (0, 1)")
    R = T = 0.0
    disc = 1.0
    for st in cycle.steps:
        R += disc * st.reward
        T += disc
        disc *= gamma
    return CycleStats(R, T, len(cycle))


def estimate_RT(stats) -> tuple:
    """Sample means of cycle rewards and cycle times."""
    stats = list(stats)
    if not stats:
        raise ValueError("need at least one cycle")
    return (float(np.mean([c.R for c in stats])), float(np.mean([c.T for c in stats])))


def performance(R_hat, T_hat, gamma, mode: str = DISCOUNTED) -> float:
    if T_hat <= 0:
        raise ValueError("expected cycle time must be positive")
    if mode == AVERAGE:
        return R_hat / T_hat
    return R_hat / ((1.0 - gamma) * T_hat)


def suffix_stats(cycle: RegenerativeCycle, sigma: int, gamma: float,
                 biased: bool = False) -> tuple:
    """Reward and time accumulated from within-cycle index ``sigma`` to the end.

    Unbiased weights are ``gamma**k`` (cycle-relative); the biased variant
    restarts discounting at ``sigma`` with weights ``gamma**(k - sigma)``.
    """
    L = len(cycle)
    if not 0 <= sigma < L:
        raise ValueError(f"sigma={sigma} outside [0, {L})")
    R = T = 0.0
    disc = 1.0 if biased else gamma ** sigma
    for st in cycle.steps[sigma:]:
        R += disc * st.reward
        T += disc
        disc *= gamma
    return R, T


def cycle_score_sums(cycle: RegenerativeCycle, gamma: float, biased: bool = False):
    """``sum_sigma R_sigma * score_sigma`` and the time analogue for one cycle.

    Suffix sums are built by a backward recursion (O(L)).
    """
    r = cycle.rewards
    scores = cycle.scores
    L = len(r)
    R_suf = np.empty(L)
    T_suf = np.empty(L)
    if biased:
        accR = accT = 0.0
        for k in range(L - 1, -1, -1):
            accR = r[k] + gamma * accR
            accT = 1.0 + gamma * accT
            R_suf[k], T_suf[k] = accR, accT
    else:
        w = gamma ** np.arange(L)
        R_suf = np.cumsum((w * r)[::-1])[::-1]
        T_suf = np.cumsum(w[::-1])[::-1]
    return R_suf @ scores, T_suf @ scores


@dataclass
class Batch:
    """Per-cycle statistics for a batch of consecutive cycles."""

    R: np.ndarray
    T: np.ndarray
    L: np.ndarray
    end_state: object
    grad_R: Optional[np.ndarray] = None
    grad_T: Optional[np.ndarray] = None
    cycles: Optional[list] = field(default=None, repr=False)

    @property
    def samples(self) -> int:
        return int(self.L.sum())

    def stats(self) -> List[CycleStats]:
        return [CycleStats(float(r), float(t), int(l)) for r, t, l in zip(self.R, self.T, self.L)]

    def estimate(self) -> tuple:
        return float(self.R.mean()), float(self.T.mean())


_GRAD_MODES = {None: _kernels.NO_GRAD, "unbiased": _kernels.UNBIASED,
               "biased": _kernels.BIASED}


def collect_batch(env, policy: PolicyParams, n_cycles: int, gamma: float, rng, *,
                  state=None, mode: str = DISCOUNTED, rho: float = 0.0,
                  grad: Optional[str] = None, max_steps: int = DEFAULT_MAX_STEPS,
                  use_kernel: bool = True, keep_cycles: bool = False) -> Batch:
    """Collect ``n_cycles`` consecutive regenerative cycles.

    ``grad`` in {None, "unbiased", "biased"} additionally returns each cycle's
    likelihood-ratio sums. Built-in environments run through compiled kernels;
    anything else (or ``use_kernel=False``) goes through :func:`collect_cycle`.
    Raises :class:`TruncationError` when a cycle exceeds ``max_steps``.
    """
    if n_cycles < 1:
        raise ValueError("need at least one cycle")
    if mode not in (DISCOUNTED, AVERAGE):
        raise ValueError(f"unknown mode {mode!r}")
    if grad not in _GRAD_MODES:
        raise ValueError(f"unknown gradient mode {grad!r}")
    if grad is not None and not policy.differentiable:
        raise UnsupportedFamilyError(
            f"{type(policy.family).__name__} policy has no likelihood-ratio gradient")
    g = 1.0 if mode == AVERAGE else gamma
    if mode == DISCOUNTED and not 0.0 < gamma < 1.0:
        raise ValueError("discounted mode needs gamma in (0, 1)")
    if state is None:
        state = env.begin(rng)
    if use_kernel and not keep_cycles:
        out = _kernel_batch(env, policy, n_cycles, g, rng, state, rho, grad, max_steps)
        if out is not None:
            return out
    return _reference_batch(env, policy, n_cycles, g, rng, state, mode, rho, grad,
                            max_steps, keep_cycles)


def _reference_batch(env, policy, n_cycles, g, rng, state, mode, rho, grad,
                     max_steps, keep_cycles):
    renewal = make_renewal(env, rho)
    R, T, L, gR, gT, cycles = [], [], [], [], [], []
    for _ in range(n_cycles):
        try:
            cyc = collect_cycle(env, policy, renewal, max_steps, rng, state=state)
        except TruncationError as exc:
            raise TruncationError(str(exc), partial=_partial(R, T, L, exc.partial)) from None
        state = cyc.next_state
        R_n = T_n = 0.0
        disc = 1.0
        for st in cyc.steps:
            R_n += disc * st.reward
            T_n += disc
            disc *= g
        R.append(R_n)
        T.append(T_n)
        L.append(len(cyc))
        if grad is not None:
            a, b = cycle_score_sums(cyc, g, biased=(grad == "biased"))
            gR.append(a)
            gT.append(b)
        if keep_cycles:
            cyc.mode = mode
            cycles.append(cyc)
    return Batch(np.array(R), np.array(T), np.array(L, dtype=np.int64), state,
                 np.array(gR) if grad else None, np.array(gT) if grad else None,
                 cycles if keep_cycles else None)


def _partial(R, T, L, cycle):
    return Batch(np.array(R), np.array(T), np.array(L, dtype=np.int64),
                 None if cycle is None else cycle.next_state,
                 cycles=None if cycle is None else [cycle])


def _kernel_batch(env, policy, n_cycles, g, rng, state, rho, grad, max_steps):
    fam = policy.family
    theta = policy.theta
    if isinstance(env, TabularMDP) and isinstance(fam, GibbsTabular) and rho == 0:
        if (fam.n_states, fam.n_actions) != (env.n_states, env.n_actions):
            raise ValueError("policy shape does not match the MDP")
        probs = policy_table(policy)
        cdf_pi = np.cumsum(probs, axis=1)
        R, T, L, gR, gT, end, done = _kernels.tabular_batch(
            env.cdf, env.r, cdf_pi, probs, float(fam.temperature), int(state),
            int(env.start_state), g, n_cycles, max_steps, _GRAD_MODES[grad], rng)
        end = int(end)
    elif isinstance(env, EventTriggerModel) and isinstance(fam, Threshold) and rho == 0:
        R, T, L, end, done = _kernels.event_batch(
            env.alpha, env.lambda_comm, env.p_d, float(theta[0]), float(state),
            float(env.start_state), g, n_cycles, max_steps, rng)
        gR = gT = None
    elif isinstance(env, InventoryModel) and isinstance(fam, BaseStock):
        lo, hi = env.state_clip
        R, T, L, end, done = _kernels.inventory_batch(
            env.a_p, env.a_h, env.a_b, env.demand_rate, env.discount, lo, hi,
            float(theta[0]), float(state), float(env.start_state), float(rho), g,
            n_cycles, max_steps, rng)
        gR = gT = None
    else:
        return None
    if done < n_cycles:
        raise TruncationError(
            f"no renewal within {max_steps} steps (cycle {done})",
            partial=Batch(R[:done], T[:done], L[:done], end))
    if grad is None:
        gR = gT = None
    return Batch(R, T, L, end, gR, gT)
