"""Elementary log-densities and cdfs shared by likelihoods and priors.

Out-of-support arguments return ``-inf`` log-densities instead of raising,
so samplers reject such proposals without special casing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ParameterError(ValueError):
    """Raised for invalid distribution parameters (e.g. a non-positive scale)."""


def _check_scale(sigma):
    if np.any(np.asarray(sigma) <= 0):
        raise ParameterError(f"scale must be positive, got {sigma!r}")


# ---------------------------------------------------------------------------
# Normal
# ---------------------------------------------------------------------------

def normal_logpdf(x, mu=0.0, sigma=1.0):
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI


def normal_cdf(x, mu=0.0, sigma=1.0):
    """Normal cdf through ``erfc``, accurate in both tails."""
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return 0.5 * special.erfc(-z / math.sqrt(2.0))


def normal_logsf(x, mu=0.0, sigma=1.0):
    """log(1 - cdf) without cancellation for large arguments."""
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return special.log_ndtr(-z)


def normal_quantile(p, mu=0.0, sigma=1.0):
    _check_scale(sigma)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ParameterError("quantile probability must lie in (0, 1)")
    return mu + sigma * special.ndtri(p)


# ---------------------------------------------------------------------------
# Smallest extreme value (Gumbel for minima)
# ---------------------------------------------------------------------------

def sev_logpdf(x, mu=0.0, sigma=1.0):
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return -np.log(sigma) + z - np.exp(z)


def sev_cdf(x, mu=0.0, sigma=1.0):
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return -np.expm1(-np.exp(z))


def sev_logsf(x, mu=0.0, sigma=1.0):
    _check_scale(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return -np.exp(z)


def sev_quantile(p, mu=0.0, sigma=1.0):
    """Inverse of :func:`sev_cdf`: ``mu + sigma * log(-log(1 - p))``."""
    _check_scale(sigma)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ParameterError("quantile probability must lie in (0, 1)")
    return mu + sigma * np.log(-np.log1p(-p))


# ---------------------------------------------------------------------------
# Prior families
# ---------------------------------------------------------------------------

def invgamma_logpdf(x, a, b):
    """Inverse-gamma log-density with shape ``a`` and scale ``b``; -inf for x <= 0."""
    if a <= 0 or b <= 0:
        raise ParameterError(f"inverse-gamma needs a > 0 and b > 0, got a={a}, b={b}")
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * math.log(b) - special.gammaln(a) - (a + 1.0) * np.log(x) - b / x
    return np.where(x > 0, out, -np.inf)


def uniform_logpdf(x, lo, hi):
    if not lo < hi:
        raise ParameterError(f"uniform needs lo < hi, got ({lo}, {hi})")
    x = np.asarray(x, dtype=float)
    return np.where((x >= lo) & (x <= hi), -math.log(hi - lo), -np.inf)


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        _check_scale(self.sigma)

    def logpdf(self, x):
        return normal_logpdf(x, self.mu, self.sigma)

    def cdf(self, x):
        return normal_cdf(x, self.mu, self.sigma)

    def quantile(self, p):
        return normal_quantile(p, self.mu, self.sigma)


@dataclass(frozen=True)
class SEV:
    mu: float
    sigma: float

    def __post_init__(self):
        _check_scale(self.sigma)

    def logpdf(self, x):
        return sev_logpdf(x, self.mu, self.sigma)

    def cdf(self, x):
        return sev_cdf(x, self.mu, self.sigma)

    def quantile(self, p):
        return sev_quantile(p, self.mu, self.sigma)


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ParameterError("inverse-gamma shape and scale must be positive")

    def logpdf(self, x):
        return invgamma_logpdf(x, self.shape, self.scale)


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError("uniform interval needs lo < hi")

    def logpdf(self, x):
        return uniform_logpdf(x, self.lo, self.hi)


# ---------------------------------------------------------------------------
# Kernel density estimation
# ---------------------------------------------------------------------------

def silverman_bandwidth(samples):
    """Normal-reference bandwidth ``1.06 * min(sd, iqr/1.34) * n**-0.2``."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("bandwidth needs at least two samples")
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if not spread > 0:
        raise ValueError("degenerate sample: zero spread")
    return 1.06 * spread * n ** -0.2


def kde_density(samples, grid, bandwidth=None):
    """Gaussian-kernel density estimate of ``samples`` evaluated on ``grid``."""
    x = np.asarray(samples, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty_like(g)
    # chunked to bound memory for long chains
    step = max(1, 2_000_000 // max(x.size, 1))
    for i in range(0, g.size, step):
        z = (g[i:i + step, None] - x[None, :]) / h
        out[i:i + step] = np.exp(-0.5 * z * z).sum(axis=1)
    return out / (x.size * h * math.sqrt(2.0 * math.pi))


def kde_grid(samples, num=512, bandwidth=None):
    """Evenly spaced grid spanning the sample range padded by 3 bandwidths."""
    x = np.asarray(samples, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    return np.linspace(x.min() - 3 * h, x.max() + 3 * h, num)
