"""Pure-numpy likelihood kernels; the fallback for the compiled ``_kernels``.

Both backends expose the same functions and follow the same algorithm:

* fatigue-limit kinds (Ia, Ib, LogFit) have closed-form per-record terms;
* random fatigue-limit kinds (IIa-IId) marginalise the fatigue limit with a
  globally adaptive Gauss-Kronrod 7-15 rule.  The integral over ``w = A3`` on
  ``(0, s_eq)`` is taken in ``x = log10(w)`` (so ``l(w) dw`` becomes the
  normal or sev density of ``x``), truncated on the left where less than
  1e-30 of the fatigue-limit mass remains.  Initial panels are split along
  the fatigue-limit law and where the conditional mean crosses
  ``u + c * sigma``, so the narrow conditional peak is never missed.

All functions take equivalent stresses (``s_eq``) and log10 cycles (``u``);
parameter vectors are in the kind's canonical order.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

LOGFIT, IA, IB, IIA, IIB, IIC, IID = range(7)
PDF, CDF, SF = 0, 1, 2
BREAK_OFFSETS = (-5.0, -1.5, 0.0, 1.5, 5.0)
LAW_OFFSETS = (-6.0, -2.0, 0.0, 2.0, 4.0, 8.0)
LOG_TAIL = math.log(1e-30)
NORMAL_TAIL = float(special.ndtri(1e-30))
LN10 = math.log(10.0)
LOG_LN10 = math.log(LN10)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_XK = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.array([
    0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.129484966168869693270611432679082, 0.0,
])
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


def is_random_limit(kind):
    return kind >= IIA


def _is_sev(kind):
    return kind in (IIB, IID)


def _sigma(kind, theta, s_eq):
    if kind in (LOGFIT, IA):
        return np.full_like(s_eq, theta[4])
    if kind == IB:
        return 10.0 ** (theta[4] + theta[5] * np.log10(s_eq))
    if kind in (IIA, IIB):
        return np.full_like(s_eq, theta[5])
    return 10.0 ** (theta[5] + theta[6] * np.log10(s_eq))


# --- fatigue-limit kinds -----------------------------------------------------

def _terms_fixed_limit(kind, theta, s_eq, u, failed):
    a1, a2, a3 = theta[0], theta[1], theta[2]
    out = np.empty_like(s_eq)
    sig = _sigma(kind, theta, s_eq)
    if kind in (LOGFIT, IA) and not theta[4] > 0:
        out.fill(-np.inf)
        return out
    above = s_eq > a3
    out[~above & failed] = -np.inf
    out[~above & ~failed] = 0.0
    idx = np.nonzero(above)[0]
    if idx.size:
        mu = a1 + a2 * np.log10(s_eq[idx] - a3)
        z = (u[idx] - mu) / sig[idx]
        f = failed[idx]
        val = np.where(
            f,
            -0.5 * z * z - np.log(sig[idx]) - LOG_SQRT_2PI - (u[idx] * LN10 + LOG_LN10),
            special.log_ndtr(-z),
        )
        out[idx] = val
    return out


# --- random fatigue-limit kinds ------------------------------------------------

def _x_cdf_logsf(sev, x, muf, sf):
    z = (x - muf) / sf
    if sev:
        with np.errstate(over="ignore"):  # exp(z) = inf gives cdf 1, log sf -inf
            ez = np.exp(z)
        return -np.expm1(-ez), -ez
    return special.ndtr(z), special.log_ndtr(-z)


def _x_lower(sev, muf, sf, x_hi):
    """Left truncation of the log10(A3) integral: drops < 1e-30 of its mass."""
    z_lo = LOG_TAIL if sev else NORMAL_TAIL
    return min(muf + sf * z_lo, x_hi - 40.0 * sf)


def _integrand(kind, what, theta, sig, s, u, x):
    """Density of log10(A3) times the conditional pdf/cdf/sf of log10 N at ``x``."""
    sev = _is_sev(kind)
    a1, a2, muf, sf = theta[0], theta[1], theta[2], theta[3]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        zx = (x - muf) / sf
        if sev:
            dens = np.exp(zx - np.exp(zx)) / sf
        else:
            dens = np.exp(-0.5 * zx * zx - LOG_SQRT_2PI) / sf
        d = s - 10.0 ** x
        mu = a1 + a2 * np.log10(d)
        if a2 < 0:
            mu = np.where(d > 0, mu, np.inf)
        elif a2 > 0:
            mu = np.where(d > 0, mu, -np.inf)
        else:
            mu = np.full_like(d, a1)
        z = (u - mu) / sig
        if sev:
            ez = np.exp(z)
            if what == PDF:
                val = np.exp(z - ez) / sig
            elif what == CDF:
                val = -np.expm1(-ez)
            else:
                val = np.exp(-ez)
        else:
            if what == PDF:
                val = np.exp(-0.5 * z * z - LOG_SQRT_2PI) / sig
            elif what == CDF:
                val = special.ndtr(z)
            else:
                val = special.ndtr(-z)
        val = val * dens
    return np.where(np.isnan(val), 0.0, val)


def _breakpoints(kind, theta, s, u, sig, x_lo, x_hi):
    """Sorted interior split points in x = log10(w) for one record."""
    a1, a2, muf, sf = theta[0], theta[1], theta[2], theta[3]
    pts = [muf + c * sf for c in LAW_OFFSETS]
    if a2 != 0.0:
        for c in BREAK_OFFSETS:
            w = s - 10.0 ** ((u - c * sig - a1) / a2)
            if 0.0 < w < s:
                pts.append(math.log10(w))
    return sorted(set(x for x in pts if x_lo < x < x_hi))


def _gk_batch(fvals, lo, hi):
    half = 0.5 * (hi - lo)
    resk = fvals @ _WK
    resg = fvals @ _WG
    resabs = np.abs(fvals) @ _WK
    resasc = np.abs(fvals - 0.5 * resk[:, None]) @ _WK
    val = resk * half
    err = np.abs((resk - resg) * half)
    resasc = resasc * np.abs(half)
    resabs = resabs * np.abs(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0.0) & (err != 0.0), scaled, err)
    err = np.where(resabs > _TINY / (50.0 * _EPS), np.maximum(50.0 * _EPS * resabs, err), err)
    return val, err


def marginal(kind, theta, s_eq, u, what, rel_tol=1e-10, abs_tol=1e-300, max_sub=2000):
    """Batched marginal pdf / cdf / sf of log10 N for random fatigue-limit kinds.

    Returns ``(values, abs_errors, status)`` where ``status`` is 1 for
    integrals that exhausted ``max_sub`` panels before reaching tolerance.
    """
    theta = np.asarray(theta, dtype=float)
    s_eq = np.ascontiguousarray(s_eq, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    n = s_eq.size
    values = np.zeros(n)
    errors = np.zeros(n)
    status = np.zeros(n, dtype=np.int8)
    sev = _is_sev(kind)
    muf, sf = theta[2], theta[3]
    sig = _sigma(kind, theta, s_eq)
    if not (sf > 0 and np.all(sig > 0)):
        values.fill(np.nan)
        return values, errors, status
    with np.errstate(divide="ignore"):
        _, logsf_x = _x_cdf_logsf(sev, np.log10(s_eq), muf, sf)
    if what == SF:
        values[:] = np.exp(logsf_x)

    rows_init, lo_init, hi_init = [], [], []
    for i in range(n):
        x_hi = math.log10(s_eq[i])
        x_lo = _x_lower(sev, muf, sf, x_hi)
        edges = [x_lo] + _breakpoints(kind, theta, s_eq[i], u[i], sig[i], x_lo, x_hi) + [x_hi]
        for a, b in zip(edges[:-1], edges[1:]):
            rows_init.append(i)
            lo_init.append(a)
            hi_init.append(b)
    if not rows_init:
        return values, errors, status

    # flat panel store; per-row bookkeeping through index arrays
    p_row = np.array(rows_init, dtype=np.intp)
    p_lo = np.array(lo_init)
    p_hi = np.array(hi_init)

    def evaluate(rows, lo, hi):
        nodes = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * _XK[None, :]
        f = _integrand(kind, what, theta, sig[rows, None], s_eq[rows, None], u[rows, None], nodes)
        return _gk_batch(f, lo, hi)

    p_val, p_err = evaluate(p_row, p_lo, p_hi)
    count = np.bincount(p_row, minlength=n)
    while True:
        tot = np.bincount(p_row, weights=p_val, minlength=n)
        es = np.bincount(p_row, weights=p_err, minlength=n)
        need = (es > np.maximum(abs_tol, rel_tol * np.abs(tot))) & (count > 0)
        exhausted = need & (count >= max_sub)
        status[exhausted] = 1
        need &= ~exhausted
        if not need.any():
            break
        # worst panel per active row
        order = np.lexsort((-p_err, p_row))
        first = np.ones(order.size, dtype=bool)
        first[1:] = p_row[order][1:] != p_row[order][:-1]
        worst = order[first]
        worst = worst[need[p_row[worst]]]
        rows = p_row[worst]
        a, b = p_lo[worst], p_hi[worst]
        m = 0.5 * (a + b)
        lv, le = evaluate(rows, a, m)
        rv, re = evaluate(rows, m, b)
        p_hi[worst] = m
        p_val[worst] = lv
        p_err[worst] = le
        p_row = np.concatenate([p_row, rows])
        p_lo = np.concatenate([p_lo, m])
        p_hi = np.concatenate([p_hi, b])
        p_val = np.concatenate([p_val, rv])
        p_err = np.concatenate([p_err, re])
        count[rows] += 1
    integral = np.bincount(p_row, weights=p_val, minlength=n)
    errors[:] = np.bincount(p_row, weights=p_err, minlength=n)
    values += integral
    return values, errors, status


def loglik_terms(kind, theta, s_eq, u, failed, rel_tol=1e-10, max_sub=2000):
    """Per-record log-likelihood contributions (density of N for failures)."""
    theta = np.asarray(theta, dtype=float)
    s_eq = np.ascontiguousarray(s_eq, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    failed = np.asarray(failed, dtype=bool)
    if kind < IIA:
        return _terms_fixed_limit(kind, theta, s_eq, u, failed)
    out = np.empty(s_eq.size)
    for what, mask in ((PDF, failed), (SF, ~failed)):
        idx = np.nonzero(mask)[0]
        if not idx.size:
            continue
        vals, _, _ = marginal(kind, theta, s_eq[idx], u[idx], what, rel_tol, 1e-300, max_sub)
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.log(vals)
        if what == PDF:
            logv = logv - (u[idx] * LN10 + LOG_LN10)
        out[idx] = np.where(np.isnan(logv), -np.inf, logv)
    return out
