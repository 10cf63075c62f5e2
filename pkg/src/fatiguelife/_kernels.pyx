# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernels; same interface and algorithm as ``_kernels_py``."""
import numpy as np

from libc.math cimport log, log10, exp, expm1, log1p, pow, fabs, INFINITY, NAN, isnan
from libc.stdlib cimport malloc, free
from scipy.special.cython_special cimport ndtri, log_ndtr, ndtr

LOGFIT, IA, IB, IIA, IIB, IIC, IID = range(7)
PDF, CDF, SF = 0, 1, 2
BREAK_OFFSETS = (-5.0, -1.5, 0.0, 1.5, 5.0)
LAW_OFFSETS = (-6.0, -2.0, 0.0, 2.0, 4.0, 8.0)

cdef double LN10 = 2.302585092994045684017991454684364
cdef double LOG_LN10 = log(LN10)
cdef double LOG_SQRT_2PI = 0.918938533204672741780329736405618
cdef double EPS = 2.220446049250313e-16
cdef double TINY = 2.2250738585072014e-308
cdef double[5] OFFSETS = [-5.0, -1.5, 0.0, 1.5, 5.0]
cdef double[6] LAW = [-6.0, -2.0, 0.0, 2.0, 4.0, 8.0]
cdef double LOG_TAIL = log(1e-30)
cdef double NORMAL_TAIL = ndtri(1e-30)

cdef double[15] XK = [
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329]
cdef double[15] WK = [
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970]
cdef double[15] WG = [
    0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.129484966168869693270611432679082, 0.0]


cdef struct Law:
    int sev
    int what
    double a1, a2, muf, sf, sig, s, u


def is_random_limit(kind):
    return kind >= 3


cdef inline double sigma_at(int kind, const double[::1] th, double s) noexcept nogil:
    if kind == 0 or kind == 1:
        return th[4]
    if kind == 2:
        return pow(10.0, th[4] + th[5] * log10(s))
    if kind == 3 or kind == 4:
        return th[5]
    return pow(10.0, th[5] + th[6] * log10(s))


cdef inline double x_logsf(int sev, double x, double muf, double sf) noexcept nogil:
    cdef double z = (x - muf) / sf
    if sev:
        return -exp(z)
    return log_ndtr(-z)


cdef inline double integrand(Law* L, double x) noexcept nogil:
    cdef double zx = (x - L.muf) / L.sf
    cdef double dens, d, mu, z, ez, val
    if L.sev:
        dens = exp(zx - exp(zx)) / L.sf
    else:
        dens = exp(-0.5 * zx * zx - LOG_SQRT_2PI) / L.sf
    d = L.s - pow(10.0, x)
    if d > 0:
        mu = L.a1 + L.a2 * log10(d)
    elif L.a2 < 0:
        mu = INFINITY
    elif L.a2 > 0:
        mu = -INFINITY
    else:
        mu = L.a1
    z = (L.u - mu) / L.sig
    if L.sev:
        ez = exp(z)
        if L.what == 0:
            val = exp(z - ez) / L.sig
        elif L.what == 1:
            val = -expm1(-ez)
        else:
            val = exp(-ez)
    else:
        if L.what == 0:
            val = exp(-0.5 * z * z - LOG_SQRT_2PI) / L.sig
        elif L.what == 1:
            val = ndtr(z)
        else:
            val = ndtr(-z)
    val *= dens
    if isnan(val):
        return 0.0
    return val


cdef inline int insert_edge(double* edges, int ne, double x) noexcept nogil:
    """Insert ``x`` into the sorted interior of ``edges[0..ne-1]``; returns new count."""
    cdef int j = ne, k
    while j > 1 and edges[j - 1] > x:
        j -= 1
    if edges[j - 1] == x:
        return ne
    k = ne
    while k > j:
        edges[k] = edges[k - 1]
        k -= 1
    edges[j] = x
    return ne + 1


cdef inline void gk15(Law* L, double a, double b, double* value, double* error) noexcept nogil:
    cdef double half = 0.5 * (b - a)
    cdef double centre = 0.5 * (a + b)
    cdef double[15] f
    cdef double resk = 0.0, resg = 0.0, resabs = 0.0, resasc = 0.0, mean, err
    cdef int k
    for k in range(15):
        f[k] = integrand(L, centre + half * XK[k])
        resk += WK[k] * f[k]
        resg += WG[k] * f[k]
        resabs += WK[k] * fabs(f[k])
    mean = 0.5 * resk
    for k in range(15):
        resasc += WK[k] * fabs(f[k] - mean)
    err = fabs((resk - resg) * half)
    resasc *= fabs(half)
    resabs *= fabs(half)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, pow(200.0 * err / resasc, 1.5))
    if resabs > TINY / (50.0 * EPS):
        err = max(50.0 * EPS * resabs, err)
    value[0] = resk * half
    error[0] = err


cdef int integrate(Law* L, double x_lo, double x_hi, double rel_tol, double abs_tol,
                   int max_sub, double* lo, double* hi, double* val, double* err,
                   double* out_value, double* out_error) noexcept nogil:
    """Adaptive GK15 over (x_lo, x_hi) with peak-aware initial panels; returns status."""
    cdef double[16] edges
    cdef int ne = 1, i, count, worst
    cdef double w, x, tot, es, m, lv, le, rv, re
    edges[0] = x_lo
    for i in range(6):
        x = L.muf + LAW[i] * L.sf
        if x_lo < x < x_hi:
            ne = insert_edge(edges, ne, x)
    if L.a2 != 0.0:
        for i in range(5):
            w = L.s - pow(10.0, (L.u - OFFSETS[i] * L.sig - L.a1) / L.a2)
            if 0.0 < w < L.s:
                x = log10(w)
                if x_lo < x < x_hi:
                    ne = insert_edge(edges, ne, x)
    edges[ne] = x_hi
    count = 0
    for i in range(ne):
        lo[count] = edges[i]
        hi[count] = edges[i + 1]
        gk15(L, lo[count], hi[count], &val[count], &err[count])
        count += 1
    while True:
        tot = 0.0
        es = 0.0
        worst = 0
        for i in range(count):
            tot += val[i]
            es += err[i]
            if err[i] > err[worst]:
                worst = i
        if es <= max(abs_tol, rel_tol * fabs(tot)):
            out_value[0] = tot
            out_error[0] = es
            return 0
        if count >= max_sub:
            out_value[0] = tot
            out_error[0] = es
            return 1
        m = 0.5 * (lo[worst] + hi[worst])
        gk15(L, lo[worst], m, &lv, &le)
        gk15(L, m, hi[worst], &rv, &re)
        lo[count] = m
        hi[count] = hi[worst]
        val[count] = rv
        err[count] = re
        hi[worst] = m
        val[worst] = lv
        err[worst] = le
        count += 1


cdef int marginal_one(int kind, const double[::1] th, double s, double u, int what,
                      double rel_tol, double abs_tol, int max_sub,
                      double* lo, double* hi, double* val, double* err,
                      double* value, double* error) noexcept nogil:
    cdef Law L
    cdef double x_hi, x_lo, logsf_x, integral = 0.0, ierr = 0.0
    cdef int status = 0
    L.sev = 1 if (kind == 4 or kind == 6) else 0
    L.what = what
    L.a1 = th[0]
    L.a2 = th[1]
    L.muf = th[2]
    L.sf = th[3]
    L.sig = sigma_at(kind, th, s)
    L.s = s
    L.u = u
    if not (L.sf > 0 and L.sig > 0):
        value[0] = NAN
        error[0] = 0.0
        return 0
    x_hi = log10(s)
    x_lo = min(L.muf + L.sf * (LOG_TAIL if L.sev else NORMAL_TAIL), x_hi - 40.0 * L.sf)
    status = integrate(&L, x_lo, x_hi, rel_tol, abs_tol, max_sub, lo, hi, val, err,
                       &integral, &ierr)
    if what == 2:
        logsf_x = x_logsf(L.sev, log10(s), L.muf, L.sf)
        integral += exp(logsf_x)
    value[0] = integral
    error[0] = ierr
    return status


def marginal(int kind, theta, s_eq, u, int what, double rel_tol=1e-10,
             double abs_tol=1e-300, int max_sub=2000):
    """Batched marginal pdf / cdf / sf of log10 N; returns ``(values, errors, status)``."""
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_eq, dtype=np.float64)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], i
    values = np.empty(n)
    errors = np.empty(n)
    status = np.zeros(n, dtype=np.int8)
    cdef double[::1] vv = values
    cdef double[::1] ee = errors
    cdef signed char[::1] st = status
    cdef double* buf = <double*> malloc(4 * max_sub * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                st[i] = marginal_one(kind, th, s[i], uu[i], what, rel_tol, abs_tol, max_sub,
                                     buf, buf + max_sub, buf + 2 * max_sub, buf + 3 * max_sub,
                                     &vv[i], &ee[i])
    finally:
        free(buf)
    return values, errors, status


cdef double fixed_limit_term(int kind, const double[::1] th, double s, double u, int failed) noexcept nogil:
    cdef double sig, mu, z
    if (kind == 0 or kind == 1) and not th[4] > 0:
        return -INFINITY
    if not s > th[2]:
        return -INFINITY if failed else 0.0
    sig = sigma_at(kind, th, s)
    mu = th[0] + th[1] * log10(s - th[2])
    z = (u - mu) / sig
    if failed:
        return -0.5 * z * z - log(sig) - LOG_SQRT_2PI - (u * LN10 + LOG_LN10)
    return log_ndtr(-z)


def loglik_terms(int kind, theta, s_eq, u, failed, double rel_tol=1e-10, int max_sub=2000):
    """Per-record log-likelihood contributions (density of N for failures)."""
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_eq, dtype=np.float64)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const unsigned char[::1] fl = np.ascontiguousarray(failed, dtype=np.uint8)
    cdef Py_ssize_t n = s.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double value, error
    cdef double* buf
    if kind < 3:
        with nogil:
            for i in range(n):
                o[i] = fixed_limit_term(kind, th, s[i], uu[i], fl[i])
        return out
    buf = <double*> malloc(4 * max_sub * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                marginal_one(kind, th, s[i], uu[i], 0 if fl[i] else 2, rel_tol, 1e-300, max_sub,
                             buf, buf + max_sub, buf + 2 * max_sub, buf + 3 * max_sub,
                             &value, &error)
                if isnan(value) or value <= 0.0:
                    o[i] = -INFINITY
                elif fl[i]:
                    o[i] = log(value) - (uu[i] * LN10 + LOG_LN10)
                else:
                    o[i] = log(value)
    finally:
        free(buf)
    return out
