"""Gradient estimators for cycle reward/time and the H statistic they feed.

``H = T * grad R - R * grad T`` has the sign of the performance gradient, so
ascending along it climbs performance without dividing by noisy estimates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp_core import UnsupportedFamilyError, project
from .renewal import cycle_score_sums

RADEMACHER = "rademacher"
NORMAL = "normal"


@dataclass(frozen=True)
class GradientEstimate:
    grad_R: np.ndarray
    grad_T: np.ndarray
    n_cycles: int


@dataclass(frozen=True)
class Perturbation:
    delta: np.ndarray
    c: float
    distribution: str = NORMAL

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("perturbation size c must be positive")


def lr_gradient(cycles, gamma, biased: bool = False) -> GradientEstimate:
    """Likelihood-ratio estimates of grad R and grad T averaged over ``cycles``.

    Cycles recorded under a deterministic policy carry zero scores and are
    rejected.
    """
    cycles = list(cycles)
    if not cycles:
        raise ValueError("need at least one cycle")
    if not all(cyc.differentiable for cyc in cycles):
        raise UnsupportedFamilyError(
            "cycles come from a non-differentiable policy; use simultaneous perturbation")
    gR = gT = None
    for cyc in cycles:
        a, b = cycle_score_sums(cyc, gamma, biased=biased)
        gR = a if gR is None else gR + a
        gT = b if gT is None else gT + b
    n = len(cycles)
    return GradientEstimate(gR / n, gT / n, n)


def h_from_lr(R_hat, T_hat, grad: GradientEstimate) -> np.ndarray:
    return T_hat * np.asarray(grad.grad_R) - R_hat * np.asarray(grad.grad_T)


def draw_delta(dim, distribution, rng) -> np.ndarray:
    if distribution == RADEMACHER:
        return np.where(rng.random(dim) < 0.5, -1.0, 1.0)
    if distribution == NORMAL:
        return rng.standard_normal(dim)
    raise ValueError(f"unknown perturbation distribution {distribution!r}")


def spsa_perturb(theta, c, distribution, rng, lo=-np.inf, hi=np.inf):
    """Draw a perturbation direction; return it with ``project(theta + c * delta)``."""
    if c <= 0:
        raise ValueError("perturbation size c must be positive")
    theta = np.asarray(theta, dtype=float)
    delta = draw_delta(theta.size, distribution, rng)
    return Perturbation(delta, float(c), distribution), project(theta + c * delta, lo, hi)


def h_from_sp(R_hat, T_hat, R_pert, T_pert, perturbation: Perturbation) -> np.ndarray:
    """One-sided simultaneous-perturbation estimate of H.

    The two batches must be independent for the estimate to be unbiased.
    """
    return perturbation.delta * (T_hat * R_pert - R_hat * T_pert) / perturbation.c
