"""Randomized-smoothing prediction and certification.

The smoothed classifier takes a majority vote of the base network over M
Gaussian perturbations.  A single M-sample estimate serves both top-class
selection and the lower confidence bound; with the runner-up probability
bounded by 1 - p_a_lower the certified radius collapses to
sigma_p * phi_inv(p_a_lower).

Noise comes from numpy's seeded PCG64 generator so the attack phase can
replay the exact vote computation bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.special import betaincinv
from scipy.stats import binom

from . import _kernels
from .errors import DomainError
from .models import ReluNetwork, _check_input

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class SmoothingConfig:
    sigma_p: float
    m_samples: int
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma_p > 0.0 and np.isfinite(self.sigma_p)):
            raise DomainError(f"sigma_p must be positive, got {self.sigma_p}")
        if self.m_samples < 2:
            raise DomainError(f"m_samples must be >= 2, got {self.m_samples}")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must be in (0,1), got {self.alpha}")


@dataclass(frozen=True)
class SmoothCertificate:
    """Certified output: radius is None when the bound cannot clear 1/2."""

    label: int
    p_a_lower: float
    radius: float | None

    def __post_init__(self):
        if self.radius is not None and not (self.p_a_lower > 0.5):
            raise DomainError("radius requires p_a_lower > 1/2")


def phi_inv(p: float) -> float:
    """Standard normal quantile (relative error well under 1e-9)."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile argument must lie in (0,1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided exact binomial lower confidence bound at level 1 - alpha."""
    k, n = int(k), int(n)
    if n < 1 or not (0 <= k <= n) or not (0.0 < alpha < 1.0):
        raise DomainError(f"bad Clopper-Pearson arguments k={k} n={n} alpha={alpha}")
    if k == 0:
        return 0.0
    if k == n:
        return alpha ** (1.0 / n)
    return float(betaincinv(k, n - k + 1, alpha))


def _draw_noise(dim: int, cfg: SmoothingConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return rng.standard_normal((cfg.m_samples, dim)) * cfg.sigma_p


def _votes(net: ReluNetwork, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
    flatw, flatb, woff, boff, dims = net.packed()
    return _kernels.vote_counts(x, noise, flatw, flatb, woff, boff, dims)


def _top_and_runner(counts: np.ndarray) -> tuple:
    top = int(_kernels._argmax(counts.astype(np.float64)))
    runner = 0 if top != 0 else 1
    for k in range(counts.shape[0]):
        if k != top and counts[k] > counts[runner]:
            runner = k
    return top, runner


def abstain_pvalue(k_top: int, k_runner: int) -> float:
    """Two-sided p-value for top vs runner counts being a fair coin."""
    n = k_top + k_runner
    if n == 0:
        return 1.0
    lo = min(k_top, n - k_top)
    return min(1.0, 2.0 * float(binom.cdf(lo, n, 0.5)))


def smooth_predict(net: ReluNetwork, x, cfg: SmoothingConfig):
    """Majority-vote label, or None when the vote margin is not significant."""
    x = _check_input(x, net.input_dim)
    counts = _votes(net, x, _draw_noise(net.input_dim, cfg))
    top, runner = _top_and_runner(counts)
    if abstain_pvalue(int(counts[top]), int(counts[runner])) > cfg.alpha:
        return None
    return top


def smooth_certify(net: ReluNetwork, x, cfg: SmoothingConfig) -> SmoothCertificate:
    x = _check_input(x, net.input_dim)
    counts = _votes(net, x, _draw_noise(net.input_dim, cfg))
    top, _ = _top_and_runner(counts)
    p_lo = clopper_pearson_lower(int(counts[top]), cfg.m_samples, cfg.alpha)
    if p_lo <= 0.5:
        return SmoothCertificate(label=top, p_a_lower=p_lo, radius=None)
    return SmoothCertificate(label=top, p_a_lower=p_lo, radius=cfg.sigma_p * phi_inv(p_lo))
