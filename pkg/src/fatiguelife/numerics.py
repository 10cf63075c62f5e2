"""Shared numerical kernels: adaptive quadrature, minimization, Hessians, roots."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

EPS = np.finfo(float).eps

# Gauss-Kronrod 7-15 abscissae on [-1, 1] (non-negative half, descending) and weights.
GK15_NODES = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
GK15_KRONROD_WEIGHTS = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
# Gauss weights for the odd-indexed Kronrod nodes (0.949.., 0.741.., 0.405.., 0).
GK15_GAUSS_WEIGHTS = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-point layout: x = [-n0..-n6, 0, n6..n0]
_X15 = np.concatenate([-GK15_NODES[:-1], [0.0], GK15_NODES[-2::-1]])
_WK15 = np.concatenate([GK15_KRONROD_WEIGHTS[:-1], GK15_KRONROD_WEIGHTS[-1:],
                        GK15_KRONROD_WEIGHTS[-2::-1]])
_WG15 = np.zeros(15)
for _k, _w in zip((1, 3, 5), GK15_GAUSS_WEIGHTS[:3]):
    _WG15[_k] = _w
    _WG15[14 - _k] = _w
_WG15[7] = GK15_GAUSS_WEIGHTS[3]


class QuadratureError(RuntimeError):
    """Subdivision budget exhausted before reaching the requested tolerance."""

    def __init__(self, message, value, abs_error, subdivisions):
        super().__init__(message)
        self.value = value
        self.abs_error = abs_error
        self.subdivisions = subdivisions


class OptimizationError(RuntimeError):
    pass


class HessianError(ArithmeticError):
    pass


class RootFindingError(ValueError):
    pass


@dataclass
class QuadratureResult:
    value: float
    abs_error_estimate: float
    subdivisions: int


@dataclass
class OptimResult:
    argmin: np.ndarray
    fmin: float
    converged: bool
    iterations: int
    message: str = ""
    nfev: int = 0
    history: list = field(default_factory=list, repr=False)


def gk15_panel(fvals, lo, hi):
    """Kronrod estimate and QUADPACK-style error bound from 15 node values."""
    half = 0.5 * (hi - lo)
    resk = float(np.dot(_WK15, fvals))
    resg = float(np.dot(_WG15, fvals))
    resabs = float(np.dot(_WK15, np.abs(fvals)))
    mean = 0.5 * resk
    resasc = float(np.dot(_WK15, np.abs(fvals - mean)))
    value = resk * half
    err = abs((resk - resg) * half)
    resasc *= abs(half)
    resabs *= abs(half)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    if resabs > np.finfo(float).tiny / (50.0 * EPS):
        err = max(50.0 * EPS * resabs, err)
    return value, err


def adaptive_quad(f, lo, hi, rel_tol=1e-10, abs_tol=1e-12, max_subdivisions=2000,
                  vectorized=False):
    """Globally adaptive Gauss-Kronrod (7-15) quadrature of ``f`` over ``[lo, hi]``.

    The panel with the largest error estimate is bisected first until the
    summed error satisfies ``max(abs_tol, rel_tol * |value|)``.  The rule never
    evaluates the endpoints, so an integrable singularity at ``hi`` is fine.

    ``f`` takes a scalar, or a 1-D array of nodes when ``vectorized`` is true.
    Raises :class:`QuadratureError` (carrying the best estimate) when the
    subdivision budget runs out.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")

    def panel(a, b):
        x = 0.5 * (a + b) + 0.5 * (b - a) * _X15
        # on tiny panels rounding can land a node on an endpoint
        x = np.clip(x, np.nextafter(a, b), np.nextafter(b, a))
        if vectorized:
            fx = np.asarray(f(x), dtype=float)
        else:
            fx = np.array([f(xi) for xi in x], dtype=float)
        if not np.all(np.isfinite(fx)):
            raise QuadratureError(f"non-finite integrand on [{a}, {b}]", math.nan, math.inf, 0)
        return gk15_panel(fx, a, b)

    v, e = panel(lo, hi)
    heap = [(-e, lo, hi, v)]
    total, errsum = v, e
    n = 1
    while errsum > max(abs_tol, rel_tol * abs(total)):
        if n >= max_subdivisions:
            raise QuadratureError(
                f"subdivision budget {max_subdivisions} exhausted "
                f"(value={total!r}, error={errsum!r})", total, errsum, n)
        neg_e, a, b, v = heapq.heappop(heap)
        m = 0.5 * (a + b)
        v1, e1 = panel(a, m)
        v2, e2 = panel(m, b)
        heapq.heappush(heap, (-e1, a, m, v1))
        heapq.heappush(heap, (-e2, m, b, v2))
        n += 1
        # re-summation avoids drift from repeated add/subtract
        total = math.fsum(item[3] for item in heap)
        errsum = math.fsum(-item[0] for item in heap)
    return QuadratureResult(total, errsum, n)


def minimize(f, x0, options=None):
    """Nelder-Mead polish followed by BFGS with finite-difference gradients.

    Non-finite objective values during the search count as +inf, so the
    simplex contracts away from them and BFGS line searches backtrack.
    The returned ``fmin`` is never larger than ``f(x0)``.

    Options: ``maxiter`` (simplex iterations, default 4000 * dim),
    ``xatol``/``fatol`` for the simplex, ``gtol`` for BFGS, ``bfgs`` (bool).
    """
    opts = {"xatol": 1e-5, "fatol": 1e-7, "gtol": 1e-6, "bfgs": True}
    opts.update(options or {})
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    f0 = f(x0)
    if not np.isfinite(f0):
        raise OptimizationError(f"objective is not finite at the start point {x0.tolist()}")
    nfev = [1]

    def safe(x):
        nfev[0] += 1
        val = f(x)
        return float(val) if np.isfinite(val) else math.inf

    maxiter = opts.get("maxiter", 4000 * x0.size)
    nm = optimize.minimize(safe, x0, method="Nelder-Mead",
                           options={"xatol": opts["xatol"], "fatol": opts["fatol"],
                                    "maxiter": maxiter, "maxfev": 2 * maxiter,
                                    "adaptive": x0.size > 3})
    best_x, best_f = np.array(nm.x, dtype=float), float(nm.fun)
    converged = bool(nm.success)
    message = f"simplex: {nm.message}"
    iterations = int(nm.nit)
    if opts["bfgs"] and np.isfinite(best_f):
        try:
            with np.errstate(invalid="ignore", over="ignore"):
                qn = optimize.minimize(safe, best_x, method="BFGS", jac="3-point",
                                       options={"gtol": opts["gtol"], "maxiter": 200 * x0.size})
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            message += f"; quasi-newton aborted: {exc}"
        else:
            iterations += int(qn.nit)
            if np.isfinite(qn.fun) and qn.fun <= best_f:
                best_x, best_f = np.array(qn.x, dtype=float), float(qn.fun)
                if qn.success:
                    converged = True
                    message += "; quasi-newton: gradient norm below gtol"
                else:
                    message += f"; quasi-newton: {qn.message}"
            else:
                message += "; quasi-newton step rejected"
    if not best_f < f0:
        best_x, best_f = x0.copy(), float(f0)
    return OptimResult(best_x, best_f, converged, iterations, message, nfev[0])


def multistart_minimize(f, x0, scales, n_starts=5, rng=None, options=None):
    """Run :func:`minimize` from ``x0`` and ``n_starts - 1`` jittered copies.

    Best ``fmin`` wins; results within 1e-9 are broken by the smaller
    parameter norm.  Starts whose objective is non-finite are skipped.
    Returns ``(best, all_results)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x0 = np.asarray(x0, dtype=float)
    scales = np.broadcast_to(np.asarray(scales, dtype=float), x0.shape)
    starts = [x0] + [x0 + scales * rng.standard_normal(x0.size) for _ in range(n_starts - 1)]
    results = []
    for s in starts:
        try:
            results.append(minimize(f, s, options))
        except OptimizationError as exc:
            results.append(exc)
    ok = [r for r in results if isinstance(r, OptimResult)]
    if not ok:
        raise OptimizationError("all starts failed: " + "; ".join(str(r) for r in results))
    fbest = min(r.fmin for r in ok)
    tied = [r for r in ok if r.fmin - fbest < 1e-9]
    best = min(tied, key=lambda r: float(np.linalg.norm(r.argmin)))
    return best, results


def fd_hessian(f, x, h_rel=None):
    """Central-difference Hessian, symmetrized as ``(H + H.T) / 2``.

    Step per coordinate is ``h_rel * (1 + |x_i|)``; ``h_rel`` defaults to the
    cube root of machine epsilon.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h_rel = EPS ** (1.0 / 3.0) if h_rel is None else h_rel
    h = h_rel * (1.0 + np.abs(x))
    p = x.size
    H = np.empty((p, p))

    def ev(dx, i, j):
        val = f(x + dx)
        if not np.isfinite(val):
            raise HessianError(f"non-finite objective in stencil for coordinates ({i}, {j})")
        return float(val)

    f0 = ev(np.zeros(p), 0, 0)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[i, i] = (ev(ei, i, i) - 2.0 * f0 + ev(-ei, i, i)) / (h[i] * h[i])
        for j in range(i):
            ej = np.zeros(p)
            ej[j] = h[j]
            H[i, j] = (ev(ei + ej, i, j) - ev(ei - ej, i, j)
                       - ev(-ei + ej, i, j) + ev(-ei - ej, i, j)) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def bisect(f, lo, hi, tol=1e-12, maxiter=500):
    """Root of ``f`` in a sign-changing bracket ``[lo, hi]``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise RootFindingError(f"no sign change on [{lo}, {hi}]: f={flo!r}, {fhi!r}")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid in (lo, hi):
            return mid
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def log_sum_exp(values, axis=None):
    """``log(sum(exp(values)))`` with max-shift stabilisation; tolerates -inf."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    out = np.where(np.isneginf(m), -np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
