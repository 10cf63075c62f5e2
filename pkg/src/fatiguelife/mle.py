"""Maximum likelihood fitting, profile likelihood for A3, stratified bootstrap."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import models
from .dataset import FatigueDataset
from .models import ModelKind, ParamVector
from .numerics import (HessianError, OptimizationError, fd_hessian, minimize,
                       multistart_minimize)

CHI2_1_95 = float(stats.chi2.ppf(0.95, 1))

# jitter scale per parameter name for multi-start (internal coordinates:
# tau and sigma_f on the log scale)
_JITTER = {"A1": 0.3, "A2": 0.15, "A3": 1.0, "q": 0.03, "tau": 0.15, "B1": 0.3,
           "B2": 0.15, "mu_f": 0.01, "sigma_f": 0.2}


class FitError(RuntimeError):
    pass


@dataclass
class FitResult:
    kind: ModelKind
    params: ParamVector
    loglik: float
    converged: bool
    start_points_used: int
    message: str = ""
    diagnostics: list = field(default_factory=list, repr=False)

    @property
    def n_params(self):
        return self.kind.n_params

    def as_dict(self):
        return {"kind": self.kind.name, "params": self.params.as_dict(),
                "loglik": self.loglik, "converged": self.converged,
                "start_points_used": self.start_points_used}


@dataclass
class LogFitResult:
    params: ParamVector
    e_std: float
    include_runouts: bool


@dataclass
class ProfileCurve:
    a3_grid: np.ndarray
    ratio: np.ndarray
    ci: tuple
    alpha: float
    loglik_mle: float
    nuisance: np.ndarray = field(repr=False, default=None)


@dataclass
class BootstrapEnsemble:
    kind: ModelKind
    original: FitResult
    replicates: list
    failures: list
    seed: int

    @property
    def params(self):
        """``(M_ok, P)`` matrix of replicate estimates."""
        return np.array([r.params.values for r in self.replicates])

    def param_intervals(self, level=0.95):
        a = 100 * (1 - level) / 2
        lo, hi = np.percentile(self.params, [a, 100 - a], axis=0)
        return {n: (float(l), float(h)) for n, l, h in zip(self.kind.param_names, lo, hi)}

    def standard_errors(self):
        return dict(zip(self.kind.param_names, np.std(self.params, axis=0, ddof=1)))

    def quantile_bands(self, s_eq_grid, ps=(0.05, 0.5, 0.95), level=0.95):
        """Pointwise percentile envelopes of replicate life-quantile curves.

        Returns rows ``(s_eq, p, lo, median, hi)``; NaN where fewer than half
        of the replicates define the quantile.
        """
        s = np.sort(np.asarray(s_eq_grid, dtype=float))
        a = 100 * (1 - level) / 2
        rows = []
        for p in ps:
            curves = np.array([_safe_quantiles(self.kind, r.params.values, s, p)
                               for r in self.replicates])
            logc = np.log10(curves)
            for j, sj in enumerate(s):
                col = logc[:, j]
                col = col[np.isfinite(col)]
                if col.size < 0.5 * len(self.replicates):
                    rows.append((sj, p, math.nan, math.nan, math.nan))
                    continue
                lo, med, hi = 10.0 ** np.percentile(col, [a, 50.0, 100 - a])
                rows.append((sj, p, lo, med, hi))
        return rows


def _safe_quantiles(kind, theta, s, p):
    """Life quantiles on a grid, NaN where undefined or unattainable."""
    theta = np.asarray(theta, dtype=float)
    out = np.full(s.shape, math.nan)
    if kind.random_limit:
        ok = models.failure_probability(kind, theta, s) > p * (1 + 1e-9)
    else:
        ok = s > theta[2]
    if np.any(ok):
        out[ok] = models.life_quantile(kind, theta, s[ok], p)
    return out


# ---------------------------------------------------------------------------
# Reparameterisation
# ---------------------------------------------------------------------------

def to_internal(kind, theta):
    z = np.array(theta, dtype=float)
    for i in kind.positive_params:
        z[i] = math.log(z[i])
    return z


def to_natural(kind, z):
    theta = np.array(z, dtype=float)
    for i in kind.positive_params:
        theta[i] = math.exp(theta[i])
    return theta


def _negloglik(kind, dataset):
    def f(z):
        try:
            theta = to_natural(kind, z)
        except OverflowError:
            return math.inf
        val = models.loglik(kind, theta, dataset)
        return -val if math.isfinite(val) else math.inf
    return f


# ---------------------------------------------------------------------------
# Starting values
# ---------------------------------------------------------------------------

def _curve_ls(s_eq, u, a3):
    """Least-squares (A1, A2, residual sd) of u on log10(s_eq - a3)."""
    x = np.log10(s_eq - a3)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, u, rcond=None)
    resid = u - X @ coef
    return coef[0], coef[1], math.sqrt(float(resid @ resid) / max(len(u) - 2, 1))


def default_init(kind, dataset, q=0.5):
    """Heuristic starting point from a least-squares curve through the failures.

    ``A3`` is scanned on a grid below the smallest failing equivalent stress;
    the best-fitting value seeds both the fixed limit and ``mu_f``.
    """
    kind = ModelKind.parse(kind)
    fail = dataset.failed
    if fail.sum() < 3:
        raise FitError("need at least three failures for a starting point")
    s = dataset.equivalent_stress(q)[fail]
    u = dataset.log10_cycles[fail]
    grid = np.linspace(0.0, 0.98, 50) * s.min()
    best = min((_curve_ls(s, u, a3) + (a3,) for a3 in grid), key=lambda t: t[2])
    a1, a2, sd, a3 = best
    sd = max(sd, 1e-2)
    if kind in (ModelKind.Ia, ModelKind.LogFit):
        return ParamVector(kind, (a1, a2, a3, q, sd))
    # other kinds start from a quick Ia fit when one is available
    try:
        ia = fit_mle(ModelKind.Ia, dataset, (a1, a2, a3, q, sd), n_starts=1).params
        a1, a2, a3, q, sd = ia.values
        if a3 > 0:
            s = dataset.equivalent_stress(q)[fail]
    except FitError:
        pass
    if kind is ModelKind.Ib:
        theta = (a1, a2, a3, q, math.log10(sd), 0.0)
    else:
        muf = math.log10(max(a3, 0.5 * s.min()))
        head = (a1, a2, muf, 0.05, q)
        theta = head + ((sd,) if "tau" in kind.param_names else (math.log10(sd), 0.0))
    return ParamVector(kind, theta)


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------

def fit_mle(kind, dataset, init=None, n_starts=5, seed=0, options=None):
    """Maximise the censored log-likelihood of ``kind`` on ``dataset``.

    Positive parameters are optimised on the log scale.  ``n_starts - 1``
    jittered copies of ``init`` (default :func:`default_init`) are tried as
    well; the best finite optimum wins.
    """
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LogFit:
        raise ValueError("use fit_logfit for the least-squares logarithmic fit")
    if init is None:
        init = default_init(kind, dataset)
    theta0 = np.asarray(init, dtype=float) if not isinstance(init, ParamVector) \
        else np.array(init.values)
    if not ParamVector(kind, theta0).valid:
        raise FitError(f"initial point is not valid for {kind}: {theta0.tolist()}")
    f = _negloglik(kind, dataset)
    z0 = to_internal(kind, theta0)
    if not math.isfinite(f(z0)):
        raise FitError(f"log-likelihood of {kind} is not finite at the start {theta0.tolist()}")
    scales = np.array([_JITTER[n] for n in kind.param_names])
    rng = np.random.default_rng(seed)
    try:
        best, results = multistart_minimize(f, z0, scales, n_starts=n_starts, rng=rng,
                                            options=options)
    except OptimizationError as exc:
        raise FitError(f"{kind}: {exc}") from None
    diag = [r.message if not isinstance(r, Exception) else f"failed: {r}" for r in results]
    ok = [r for r in results if not isinstance(r, Exception)]
    if not any(r.converged for r in ok):
        raise FitError(f"{kind}: no start converged; " + " | ".join(diag))
    theta = to_natural(kind, best.argmin)
    return FitResult(kind, ParamVector(kind, theta), -best.fmin, best.converged,
                     n_starts, best.message, diag)


def refit_from(fit, dataset, options=None):
    """Single-start refit of ``fit.kind`` on ``dataset`` starting at ``fit``."""
    return fit_mle(fit.kind, dataset, fit.params, n_starts=1, options=options)


def observed_information(fit, dataset, h_rel=None):
    """Finite-difference Hessian of the negative log-likelihood at the fit."""
    theta = np.array(fit.params.values)
    return fd_hessian(lambda t: -models.loglik(fit.kind, t, dataset), theta, h_rel)


def standard_errors(fit, dataset):
    """Wald standard errors from the observed information (NaN if singular)."""
    try:
        H = observed_information(fit, dataset)
        cov = np.linalg.inv(H)
        se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    except (HessianError, np.linalg.LinAlgError):
        se = np.full(fit.kind.n_params, math.nan)
    return dict(zip(fit.kind.param_names, se))


def fit_logfit(dataset, include_runouts=True, init=None):
    """Least-squares logarithmic curve treating every record as a failure."""
    data = dataset if include_runouts else dataset.subset(np.flatnonzero(dataset.failed))
    if init is None:
        init = default_init(ModelKind.LogFit, data).values[:4]
    x0 = np.asarray(init, dtype=float)[:4]
    best = None
    for x in (x0, x0 + np.array([1.0, -0.5, -5.0, 0.0]), x0 + np.array([-1.0, 0.5, 2.0, 0.0])):
        if not math.isfinite(models.logfit_objective(x, data)):
            continue
        r = minimize(lambda t: models.logfit_objective(t, data), x)
        if best is None or r.fmin < best.fmin:
            best = r
    if best is None:
        raise FitError("no feasible start for the logarithmic fit")
    params = ParamVector(ModelKind.LogFit, tuple(best.argmin) + (best.fmin,))
    return LogFitResult(params, float(best.fmin), include_runouts)


# ---------------------------------------------------------------------------
# Profile likelihood for A3
# ---------------------------------------------------------------------------

def _profile_objective(kind, dataset, a3):
    f = _negloglik(kind, dataset)

    def g(y):
        return f(np.insert(y, 2, a3))
    return g


def profile_loglik_at(kind, dataset, a3, start):
    """Maximised log-likelihood with ``A3`` held at ``a3``.

    ``start`` is a full natural-scale parameter vector whose A3 entry is
    ignored.  Returns ``(loglik, nuisance_natural)``.
    """
    kind = ModelKind.parse(kind)
    z = to_internal(kind, np.asarray(start, dtype=float))
    y0 = np.delete(z, 2)
    g = _profile_objective(kind, dataset, a3)
    if not math.isfinite(g(y0)):
        # move the curve so every failure sits above the fixed limit
        shifted = _feasible_start(kind, dataset, a3, start)
        if shifted is None:
            return -math.inf, None
        y0 = np.delete(to_internal(kind, shifted), 2)
    r = minimize(g, y0)
    full = to_natural(kind, np.insert(r.argmin, 2, a3))
    return -r.fmin, np.delete(full, 2)


def _feasible_start(kind, dataset, a3, start):
    theta = np.array(start, dtype=float)
    theta[2] = a3
    for q in np.linspace(theta[3], 0.0, 6):
        theta[3] = q
        s = dataset.equivalent_stress(q)
        fail = dataset.failed
        if np.all(s[fail] > a3):
            a1, a2, sd = _curve_ls(s[fail], dataset.log10_cycles[fail], a3)
            theta[0], theta[1] = a1, a2
            if kind is ModelKind.Ia:
                theta[4] = max(sd, 1e-2)
            else:
                theta[4], theta[5] = math.log10(max(sd, 1e-2)), 0.0
            if math.isfinite(models.loglik(kind, theta, dataset)):
                return theta
    return None


def default_profile_grid(fit, dataset, n=80):
    """``n`` points over ``[A3 - 4 SE, A3 + 2 SE]`` with the MLE as a node."""
    se = standard_errors(fit, dataset)["A3"]
    a3 = fit.params["A3"]
    if not (math.isfinite(se) and se > 0):
        se = max(0.05 * abs(a3), 0.5)
    n_left = round((n - 1) * 4 / 6)
    left = np.linspace(a3 - 4 * se, a3, n_left + 1)
    right = np.linspace(a3, a3 + 2 * se, n - n_left)
    return np.concatenate([left, right[1:]])


def profile_a3(kind, dataset, mle, grid=None, alpha=0.05):
    """Profile likelihood ratio ``R(A3)`` and the chi-square interval for A3.

    Grid points are optimised outward from the MLE, each warm-started from
    its inner neighbour.  Interval endpoints are linear interpolations of
    ``-2 ln R`` across the cutoff; an endpoint is NaN when the cutoff is not
    crossed inside the grid.
    """
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.Ia, ModelKind.Ib):
        raise ValueError(f"profile_a3 needs a fixed fatigue-limit model, got {kind}")
    grid = default_profile_grid(mle, dataset) if grid is None else np.sort(np.asarray(grid, float))
    a3_hat = mle.params["A3"]
    if not grid[0] <= a3_hat <= grid[-1]:
        raise ValueError(f"grid [{grid[0]}, {grid[-1]}] does not bracket the MLE A3 = {a3_hat}")
    theta_hat = np.array(mle.params.values)
    ll = np.full(grid.size, -math.inf)
    nuis = np.full((grid.size, kind.n_params - 1), math.nan)
    right = np.flatnonzero(grid >= a3_hat)
    left = np.flatnonzero(grid < a3_hat)[::-1]
    for order in (right, left):
        start = theta_hat.copy()
        for i in order:
            val, y = profile_loglik_at(kind, dataset, grid[i], start)
            ll[i] = val
            if y is not None:
                nuis[i] = y
                start = np.insert(y, 2, grid[i])
    loglik_mle = max(mle.loglik, float(np.max(ll)))
    with np.errstate(over="ignore"):
        ratio = np.exp(ll - loglik_mle)
    cut = float(stats.chi2.ppf(1 - alpha, 1))
    ci = _interval(grid, -2.0 * (ll - loglik_mle), cut, a3_hat)
    return ProfileCurve(grid, ratio, ci, alpha, loglik_mle, nuis)


def _interval(grid, dev, cut, center):
    lo = hi = math.nan
    inside = dev <= cut
    i0 = int(np.argmin(np.abs(grid - center)))
    i = i0
    while i > 0 and inside[i - 1]:
        i -= 1
    if i > 0:
        lo = _cross(grid[i - 1], grid[i], dev[i - 1], dev[i], cut)
    j = i0
    while j < grid.size - 1 and inside[j + 1]:
        j += 1
    if j < grid.size - 1:
        hi = _cross(grid[j], grid[j + 1], dev[j], dev[j + 1], cut)
    return (lo, hi)


def _cross(x0, x1, d0, d1, cut):
    # an infeasible neighbour puts the endpoint at the last feasible grid point
    if not math.isfinite(d0):
        return x1
    if not math.isfinite(d1):
        return x0
    return x0 + (cut - d0) * (x1 - x0) / (d1 - d0)


# ---------------------------------------------------------------------------
# Stratified bootstrap
# ---------------------------------------------------------------------------

def resample_stratified(dataset, rng):
    """Draw ``|stratum|`` records with replacement inside every stratum."""
    idx = []
    for stratum in dataset.strata:
        idx.extend(np.asarray(stratum)[rng.integers(0, len(stratum), len(stratum))].tolist())
    return dataset.subset(idx)


def bootstrap(kind, dataset, M=200, seed=0, original=None, workers=1, options=None):
    """Stratified bootstrap of the MLE.

    Replicate ``k`` draws from ``SeedSequence(seed).spawn(M)[k]``, so its
    resample does not depend on evaluation order.  Each replicate starts at
    the original MLE and falls back to a multi-start fit if that fails.
    Raises :class:`FitError` if more than 10% of replicates fail.
    """
    kind = ModelKind.parse(kind)
    if M < 2:
        raise ValueError("bootstrap needs M >= 2")
    if original is None:
        original = fit_mle(kind, dataset)
    children = np.random.SeedSequence(seed).spawn(M)

    def one(k):
        rng = np.random.default_rng(children[k])
        data = resample_stratified(dataset, rng)
        try:
            return k, fit_mle(kind, data, original.params, n_starts=1, options=options)
        except (FitError, OptimizationError):
            pass
        try:
            return k, fit_mle(kind, data, original.params, n_starts=5, seed=k, options=options)
        except (FitError, OptimizationError) as exc:
            return k, exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(M)))
    else:
        results = [one(k) for k in range(M)]
    results.sort(key=lambda t: t[0])
    reps = [r for _, r in results if isinstance(r, FitResult)]
    fails = [(k, str(r)) for k, r in results if not isinstance(r, FitResult)]
    if len(fails) > 0.1 * M:
        raise FitError(f"{len(fails)} of {M} bootstrap fits failed; first: {fails[0][1]}")
    return BootstrapEnsemble(kind, original, reps, fails, seed)
