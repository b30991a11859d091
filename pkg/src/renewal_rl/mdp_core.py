"""Policy families, action sampling, score functions and parameter projection.

Parameter vectors are flat ``numpy`` arrays. A tabular Gibbs policy over
``n_states x n_actions`` stores ``theta[s * n_actions + a]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class InvalidStateError(ValueError):
    """State is outside the domain of a policy family."""


class UnsupportedFamilyError(TypeError):
    """Operation needs a differentiable policy family."""


@dataclass(frozen=True)
class GibbsTabular:
    n_states: int
    n_actions: int
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("need at least one state and one action")

    @property
    def dim(self) -> int:
        return self.n_states * self.n_actions


@dataclass(frozen=True)
class Threshold:
    """Transmit (action 1) iff ``|state| >= theta``."""

    @property
    def dim(self) -> int:
        return 1


@dataclass(frozen=True)
class BaseStock:
    """Order up to ``theta``: action ``max(theta - state, 0)``."""

    @property
    def dim(self) -> int:
        return 1


Family = Union[GibbsTabular, Threshold, BaseStock]


def _as_bounds(bound, dim):
    b = np.asarray(bound, dtype=float)
    if b.ndim == 0:
        b = np.full(dim, float(b))
    if b.shape != (dim,):
        raise ValueError(f"bounds have shape {b.shape}, expected ({dim},)")
    return b


@dataclass(frozen=True)
class PolicyParams:
    """Parameter vector, its policy family and a closed box of feasible values."""

    theta: np.ndarray
    family: Family
    lo: np.ndarray = field(default=None)
    hi: np.ndarray = field(default=None)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.shape != (self.family.dim,):
            raise ValueError(
                f"theta has dimension {theta.size}, family needs {self.family.dim}")
        lo = _as_bounds(-np.inf if self.lo is None else self.lo, theta.size)
        hi = _as_bounds(np.inf if self.hi is None else self.hi, theta.size)
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if np.any(theta < lo) or np.any(theta > hi):
            raise ValueError("theta lies outside its bounds; project it first")

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def differentiable(self) -> bool:
        return isinstance(self.family, GibbsTabular)

    def with_theta(self, theta) -> "PolicyParams":
        """Same family and bounds, new parameters (projected onto the box)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise ValueError(f"theta has shape {theta.shape}, expected {self.theta.shape}")
        theta = np.minimum(np.maximum(theta, self.lo), self.hi)
        theta.flags.writeable = False
        out = object.__new__(PolicyParams)
        # bounds are already validated and theta is in the box after projection
        for name, val in (("theta", theta), ("family", self.family), ("lo", self.lo),
                          ("hi", self.hi)):
            object.__setattr__(out, name, val)
        return out


def project(theta, lo, hi) -> np.ndarray:
    """Coordinate-wise clamp of ``theta`` onto ``[lo, hi]``."""
    theta = np.asarray(theta, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), theta.shape) \
        if np.ndim(lo) == 0 else np.asarray(lo, dtype=float)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), theta.shape) \
        if np.ndim(hi) == 0 else np.asarray(hi, dtype=float)
    if lo.shape != theta.shape or hi.shape != theta.shape:
        raise ValueError(
            f"dimension mismatch: theta {theta.shape}, bounds {lo.shape}/{hi.shape}")
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return np.minimum(np.maximum(theta, lo), hi)


def gibbs_probs(row, temperature=1.0) -> np.ndarray:
    """Softmax along the last axis. Max-shifted for stability."""
    z = np.asarray(row, dtype=float) / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def policy_table(policy: PolicyParams) -> np.ndarray:
    """All action probabilities of a tabular Gibbs policy, shape (S, A)."""
    fam = policy.family
    if not isinstance(fam, GibbsTabular):
        raise UnsupportedFamilyError(f"{type(fam).__name__} has no probability table")
    return gibbs_probs(policy.theta.reshape(fam.n_states, fam.n_actions), fam.temperature)


def _check_tabular_state(fam, state):
    if isinstance(state, (bool, np.bool_)) or int(state) != state:
        raise InvalidStateError(f"tabular state must be an integer index, got {state!r}")
    s = int(state)
    if not 0 <= s < fam.n_states:
        raise InvalidStateError(f"state {s} outside [0, {fam.n_states})")
    return s


def sample_from_cdf(cdf, u) -> int:
    """Smallest index whose cumulative mass exceeds ``u``.

    The fast simulation kernels use the same rule so both paths agree bit for bit.
    """
    i = int(np.searchsorted(cdf, u, side="right"))
    return min(i, len(cdf) - 1)


def sample_action(policy: PolicyParams, state, rng: np.random.Generator):
    fam = policy.family
    if isinstance(fam, GibbsTabular):
        s = _check_tabular_state(fam, state)
        row = policy.theta[s * fam.n_actions:(s + 1) * fam.n_actions]
        cdf = np.cumsum(gibbs_probs(row, fam.temperature))
        return sample_from_cdf(cdf, rng.random())
    if isinstance(fam, Threshold):
        return int(abs(state) >= policy.theta[0])
    if isinstance(fam, BaseStock):
        return max(policy.theta[0] - state, 0.0)
    raise UnsupportedFamilyError(type(fam).__name__)


def score(policy: PolicyParams, state, action) -> np.ndarray:
    """Gradient of ``log pi_theta(action | state)`` with respect to theta."""
    fam = policy.family
    if not isinstance(fam, GibbsTabular):
        raise UnsupportedFamilyError(
            f"{type(fam).__name__} policy is not differentiable in theta")
    s = _check_tabular_state(fam, state)
    a = int(action)
    if not 0 <= a < fam.n_actions:
        raise InvalidStateError(f"action {a} outside [0, {fam.n_actions})")
    row = policy.theta[s * fam.n_actions:(s + 1) * fam.n_actions]
    g = -gibbs_probs(row, fam.temperature)
    g[a] += 1.0
    out = np.zeros(policy.dim)
    out[s * fam.n_actions:(s + 1) * fam.n_actions] = g / fam.temperature
    return out


def step_score(policy: PolicyParams, state, action) -> np.ndarray:
    """Score for trajectory recording; zero for deterministic families."""
    if policy.differentiable:
        return score(policy, state, action)
    return np.zeros(policy.dim)


def log_prob(policy: PolicyParams, state, action) -> float:
    fam = policy.family
    if not isinstance(fam, GibbsTabular):
        raise UnsupportedFamilyError(type(fam).__name__)
    s = _check_tabular_state(fam, state)
    row = policy.theta[s * fam.n_actions:(s + 1) * fam.n_actions] / fam.temperature
    m = row.max()
    return float(row[int(action)] - m - np.log(np.exp(row - m).sum()))


@dataclass(frozen=True)
class ScoredStep:
    state: object
    action: object
    reward: float
    score: np.ndarray


def make_rng(seed, *key) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *key)``.

    Streams for different keys are statistically independent and the mapping
    is stable across platforms and call order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
