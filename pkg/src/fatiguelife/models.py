"""Stress-life models for censored fatigue data.

Seven model kinds share the mean curve ``mu = A1 + A2 * log10(S_eq - A3)``
for log10 cycles, with ``S_eq = S_max * (1 - R)**q``:

========  =====================================  ==========================
kind      parameters                             life law (log10 N)
========  =====================================  ==========================
LogFit    A1, A2, A3, q, tau                     least squares, no censoring
Ia        A1, A2, A3, q, tau                     normal, constant sd
Ib        A1, A2, A3, q, B1, B2                  normal, sd = 10**(B1 + B2 log10 S_eq)
IIa       A1, A2, mu_f, sigma_f, q, tau          normal, log10 A3 ~ normal
IIb       A1, A2, mu_f, sigma_f, q, tau          sev, log10 A3 ~ sev
IIc       A1, A2, mu_f, sigma_f, q, B1, B2       as IIa with varying sd
IId       A1, A2, mu_f, sigma_f, q, B1, B2       as IIb with varying sd
========  =====================================  ==========================

Failures contribute the density of N, ``f(log10 n) / (n ln 10)``; run-outs
contribute the survival probability at the recorded cycle count.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import distributions as dist
from ._backend import kernels
from .dataset import FatigueDataset, FatigueRecord
from .numerics import QuadratureError

LN10 = math.log(10.0)


class ModelKind(enum.Enum):
    LogFit = 0
    Ia = 1
    Ib = 2
    IIa = 3
    IIb = 4
    IIc = 5
    IId = 6

    @property
    def code(self):
        return self.value

    @property
    def param_names(self):
        return _PARAM_NAMES[self]

    @property
    def n_params(self):
        return len(_PARAM_NAMES[self])

    @property
    def random_limit(self):
        return self.value >= 3

    @property
    def sev(self):
        return self in (ModelKind.IIb, ModelKind.IId)

    @property
    def q_index(self):
        return 4 if self.random_limit else 3

    @property
    def positive_params(self):
        """Indices constrained to be strictly positive."""
        return tuple(i for i, n in enumerate(self.param_names) if n in ("tau", "sigma_f"))

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for kind in cls:
            if kind.name.lower() == key.lower():
                return kind
        raise ValueError(f"unknown model kind {value!r}; choose from "
                         f"{', '.join(k.name for k in cls)}")

    def __str__(self):
        return self.name


_PARAM_NAMES = {
    ModelKind.LogFit: ("A1", "A2", "A3", "q", "tau"),
    ModelKind.Ia: ("A1", "A2", "A3", "q", "tau"),
    ModelKind.Ib: ("A1", "A2", "A3", "q", "B1", "B2"),
    ModelKind.IIa: ("A1", "A2", "mu_f", "sigma_f", "q", "tau"),
    ModelKind.IIb: ("A1", "A2", "mu_f", "sigma_f", "q", "tau"),
    ModelKind.IIc: ("A1", "A2", "mu_f", "sigma_f", "q", "B1", "B2"),
    ModelKind.IId: ("A1", "A2", "mu_f", "sigma_f", "q", "B1", "B2"),
}

COMPARABLE_KINDS = (ModelKind.Ia, ModelKind.Ib, ModelKind.IIa, ModelKind.IIb,
                    ModelKind.IIc, ModelKind.IId)


class UndefinedRegion(ValueError):
    """Equivalent stress at or below the fatigue limit: the mean curve is undefined."""


class QuantileBeyondHorizon(ValueError):
    """Requested life quantile exceeds the probability of ever failing."""


@dataclass(frozen=True)
class ParamVector:
    kind: ModelKind
    values: tuple

    def __post_init__(self):
        kind = ModelKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        vals = tuple(float(v) for v in self.values)
        if len(vals) != kind.n_params:
            raise ValueError(f"{kind} takes {kind.n_params} parameters "
                             f"{kind.param_names}, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_mapping(cls, kind, mapping):
        kind = ModelKind.parse(kind)
        missing = [n for n in kind.param_names if n not in mapping]
        if missing:
            raise ValueError(f"missing parameters for {kind}: {missing}")
        extra = [n for n in mapping if n not in kind.param_names]
        if extra:
            raise ValueError(f"unknown parameters for {kind}: {extra}")
        return cls(kind, [mapping[n] for n in kind.param_names])

    def __getitem__(self, name):
        return self.values[self.kind.param_names.index(name)]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    def as_dict(self):
        return dict(zip(self.kind.param_names, self.values))

    @property
    def valid(self):
        return all(self.values[i] > 0 for i in self.kind.positive_params)


@dataclass
class QuantileCurve:
    p: float
    s_eq: np.ndarray
    cycles: np.ndarray

    @property
    def points(self):
        return list(zip(self.s_eq.tolist(), self.cycles.tolist()))


def as_array(kind, params):
    kind = ModelKind.parse(kind)
    theta = np.asarray(params, dtype=float).ravel()
    if theta.size != kind.n_params:
        raise ValueError(f"{kind} takes {kind.n_params} parameters, got {theta.size}")
    return theta


# ---------------------------------------------------------------------------
# Mean and standard deviation of log10 life
# ---------------------------------------------------------------------------

def mean_log_life(kind, params, s_eq, fatigue_limit=None):
    """``A1 + A2 log10(S_eq - A3)``.

    For random fatigue-limit kinds the mean is conditional on the fatigue
    limit, which must be passed as ``fatigue_limit``.
    Raises :class:`UndefinedRegion` when ``S_eq <= A3``.
    """
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    if kind.random_limit:
        if fatigue_limit is None:
            raise ValueError(f"{kind} needs the conditioning fatigue limit")
        a3 = fatigue_limit
    else:
        a3 = theta[2]
    s_eq = np.asarray(s_eq, dtype=float)
    if np.any(s_eq <= a3):
        raise UndefinedRegion(f"equivalent stress must exceed the fatigue limit {a3}")
    out = theta[0] + theta[1] * np.log10(s_eq - a3)
    return float(out) if out.ndim == 0 else out


def sd_log_life(kind, params, s_eq):
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    s_eq = np.asarray(s_eq, dtype=float)
    if np.any(s_eq <= 0):
        raise ValueError("equivalent stress must be positive")
    names = kind.param_names
    if "tau" in names:
        out = np.full_like(s_eq, theta[names.index("tau")])
    else:
        b1 = theta[names.index("B1")]
        b2 = theta[names.index("B2")]
        out = 10.0 ** (b1 + b2 * np.log10(s_eq))
    return float(out) if out.ndim == 0 else out


def equivalent_stress(kind, params, dataset):
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    return dataset.equivalent_stress(theta[kind.q_index])


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------

def pointwise_loglik(kind, params, dataset):
    """Per-record log-likelihood contributions, in dataset order."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LogFit:
        raise ValueError("the logarithmic fit has no censored likelihood")
    theta = as_array(kind, params)
    s_eq = dataset.equivalent_stress(theta[kind.q_index])
    return kernels.loglik_terms(kind.code, theta, s_eq, dataset.log10_cycles,
                                dataset.failed.astype(np.uint8))


def loglik_fatigue_limit(kind, params, dataset):
    """Censored log-likelihood of the fixed fatigue-limit models Ia and Ib.

    Records with ``S_eq <= A3`` are impossible failures (-inf) or
    non-significant run-outs (contribution 0).
    """
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.Ia, ModelKind.Ib):
        raise ValueError(f"{kind} is not a fixed fatigue-limit model")
    return float(np.sum(pointwise_loglik(kind, params, dataset)))


def loglik_random_fatigue_limit(kind, params, dataset):
    kind = ModelKind.parse(kind)
    if not kind.random_limit:
        raise ValueError(f"{kind} is not a random fatigue-limit model")
    return float(np.sum(pointwise_loglik(kind, params, dataset)))


def loglik(kind, params, dataset):
    terms = pointwise_loglik(kind, params, dataset)
    total = float(np.sum(terms))
    return total if not math.isnan(total) else -math.inf


# ---------------------------------------------------------------------------
# Marginal law of log10 N for random fatigue-limit kinds
# ---------------------------------------------------------------------------

def _marginal(kind, params, s_eq, u, what):
    kind = ModelKind.parse(kind)
    if not kind.random_limit:
        raise ValueError(f"{kind} has a fixed fatigue limit; no marginalisation needed")
    theta = as_array(kind, params)
    s_arr, u_arr = np.broadcast_arrays(np.asarray(s_eq, dtype=float),
                                       np.asarray(u, dtype=float))
    if np.any(s_arr <= 0):
        raise ValueError("equivalent stress must be positive")
    shape = s_arr.shape
    vals, errs, status = kernels.marginal(kind.code, theta, s_arr.ravel(), u_arr.ravel(), what)
    if np.any(status):
        i = int(np.argmax(status))
        raise QuadratureError(
            f"quadrature did not converge for {kind} at s_eq={s_arr.ravel()[i]}, "
            f"u={u_arr.ravel()[i]}", float(vals[i]), float(errs[i]), 0)
    if what != kernels.PDF:
        vals = np.clip(vals, 0.0, 1.0)  # summation can overshoot by an ulp
    vals = vals.reshape(shape)
    return float(vals) if vals.ndim == 0 else vals


def marginal_pdf_log_life(kind, params, s_eq, u):
    """Density of log10 N at ``u`` after integrating out the fatigue limit."""
    return _marginal(kind, params, s_eq, u, kernels.PDF)


def marginal_cdf_log_life(kind, params, s_eq, u):
    """``P(log10 N <= u)``; bounded by ``P(A3 < S_eq)``."""
    return _marginal(kind, params, s_eq, u, kernels.CDF)


def marginal_sf_log_life(kind, params, s_eq, u):
    return _marginal(kind, params, s_eq, u, kernels.SF)


def fatigue_limit_law(kind, params):
    """Distribution of log10(A3) (normal or sev) for a random fatigue-limit kind."""
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    return (dist.SEV if kind.sev else dist.Normal)(theta[2], theta[3])


def failure_probability(kind, params, s_eq):
    """``P(A3 < S_eq)``: the largest attainable marginal cdf value."""
    law = fatigue_limit_law(kind, params)
    return law.cdf(np.log10(np.asarray(s_eq, dtype=float)))


def fatigue_limit_mean(kind, params):
    """``E[A3] = E[10**X]`` in closed form (moment generating function of X)."""
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    muf, sf = theta[2], theta[3]
    t = sf * LN10
    if kind.sev:
        # E[exp(t Z)] = Gamma(1 + t) for a standard sev Z
        return 10.0 ** muf * math.gamma(1.0 + t)
    return 10.0 ** muf * math.exp(0.5 * t * t)


# ---------------------------------------------------------------------------
# Life quantiles
# ---------------------------------------------------------------------------

def _std_quantile(p, sev):
    return math.log(-math.log1p(-p)) if sev else float(dist.normal_quantile(p))


def life_quantile(kind, params, s_eq, p, tol=1e-12):
    """Cycles ``N`` with ``P(life <= N) = p`` at equivalent stress ``s_eq``.

    Closed form for fixed fatigue-limit kinds; for random fatigue-limit kinds
    a vectorised bisection on the marginal cdf of log10 N.  Raises
    :class:`QuantileBeyondHorizon` when ``p`` is not attainable.
    """
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    s = np.atleast_1d(np.asarray(s_eq, dtype=float))
    scalar = np.ndim(s_eq) == 0
    if not kind.random_limit:
        mu = mean_log_life(kind, theta, s)
        out = 10.0 ** (mu + _std_quantile(p, False) * sd_log_life(kind, theta, s))
        return float(out[0]) if scalar else out

    reach = failure_probability(kind, theta, s)
    if np.any(p >= reach):
        bad = s[np.argmax(p >= reach)]
        raise QuantileBeyondHorizon(
            f"p={p} is not attainable at s_eq={bad}: P(failure) = {float(np.max(reach[p >= reach]))}")
    sig = sd_log_life(kind, theta, s)
    lo = theta[0] + theta[1] * np.log10(s) - 10.0 * sig
    lo = np.minimum(lo, theta[0] - 10.0 * sig)
    hi = np.full_like(s, 20.0)
    for _ in range(200):
        f_hi = marginal_cdf_log_life(kind, theta, s, hi) - p
        if np.all(f_hi > 0):
            break
        hi = np.where(f_hi > 0, hi, lo + 2.0 * (hi - lo))
    else:
        raise QuantileBeyondHorizon("no bracketing upper bound found")
    for _ in range(200):
        f_lo = marginal_cdf_log_life(kind, theta, s, lo) - p
        if np.all(f_lo < 0):
            break
        lo = np.where(f_lo < 0, lo, lo - (hi - lo))
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        below = marginal_cdf_log_life(kind, theta, s, mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 10.0 ** (0.5 * (lo + hi))
    return float(out[0]) if scalar else out


def quantile_curve(kind, params, s_eq_grid, p):
    s = np.sort(np.asarray(s_eq_grid, dtype=float))
    return QuantileCurve(p, s, np.asarray(life_quantile(kind, params, s, p)))


# ---------------------------------------------------------------------------
# Logarithmic (least-squares) fit objective
# ---------------------------------------------------------------------------

LOGFIT_N_FITTED = 4


def logfit_objective(params, dataset):
    """Standard error of log10 life about the mean curve, divided by ``n - 4``.

    Every record counts as a failure.  ``params`` holds ``(A1, A2, A3, q)``;
    a trailing ``tau`` entry is ignored.
    """
    a1, a2, a3, q = np.asarray(params, dtype=float)[:4]
    s_eq = dataset.equivalent_stress(q)
    if np.any(s_eq <= a3):
        return math.inf
    resid = dataset.log10_cycles - (a1 + a2 * np.log10(s_eq - a3))
    dof = len(dataset) - LOGFIT_N_FITTED
    if dof <= 0:
        raise ValueError("logarithmic fit needs more than 4 records")
    return math.sqrt(float(resid @ resid) / dof)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate(kind, params, design, censor_at, rng=None):
    """Draw one censored record per ``(s_max, R)`` pair in ``design``.

    Fixed fatigue-limit kinds use ``A3`` from ``params``; random kinds draw
    a fatigue limit per specimen.  Specimens whose equivalent stress does not
    exceed their fatigue limit, and lives beyond ``censor_at``, become
    run-outs at ``censor_at``.
    """
    kind = ModelKind.parse(kind)
    theta = as_array(kind, params)
    if censor_at < 1:
        raise ValueError("censor_at must be >= 1")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    design = [(float(s), float(r)) for s, r in design]
    s_max = np.array([d[0] for d in design])
    ratio = np.array([d[1] for d in design])
    s_eq = s_max * (1.0 - ratio) ** theta[kind.q_index]
    n = len(design)
    sig = sd_log_life(kind, theta, s_eq)
    if kind.random_limit:
        z = rng.standard_normal(n) if not kind.sev else np.log(rng.standard_exponential(n))
        a3 = 10.0 ** (theta[2] + theta[3] * z)
    else:
        a3 = np.full(n, theta[2])
    eps = rng.standard_normal(n)
    if kind.sev:
        eps = np.log(rng.standard_exponential(n))
    log_cap = math.log10(censor_at)
    records = []
    for i in range(n):
        if s_eq[i] <= a3[i]:
            records.append(FatigueRecord(s_max[i], ratio[i], int(censor_at), True))
            continue
        u = theta[0] + theta[1] * math.log10(s_eq[i] - a3[i]) + sig[i] * eps[i]
        if u >= log_cap:
            records.append(FatigueRecord(s_max[i], ratio[i], int(censor_at), True))
        else:
            cycles = max(1, int(round(10.0 ** u)))
            records.append(FatigueRecord(s_max[i], ratio[i], cycles, False))
    return FatigueDataset(records)
