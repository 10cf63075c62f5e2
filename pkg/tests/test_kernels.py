"""Likelihood kernels: compiled vs fallback agreement and independent oracles."""
import math

import mpmath as mp
import numpy as np
import pytest

from fatiguelife import _backend, _kernels_py
from fatiguelife.models import ModelKind

from conftest import PARAMS

try:
    from fatiguelife import _kernels
except ImportError:  # extension not built
    _kernels = None

II_KINDS = [ModelKind.IIa, ModelKind.IIb, ModelKind.IIc, ModelKind.IId]


def test_backend_selected():
    assert _backend.NAME in ("cython", "python")


def _inputs(n=60, seed=0):
    rng = np.random.default_rng(seed)
    s = rng.uniform(30.0, 90.0, n)
    u = rng.uniform(3.5, 7.5, n)
    failed = (rng.random(n) > 0.2).astype(np.uint8)
    return s, u, failed


@pytest.mark.skipif(_kernels is None, reason="compiled extension not built")
@pytest.mark.parametrize("kind", list(PARAMS))
def test_backends_agree_on_loglik_terms(kind):
    s, u, failed = _inputs()
    theta = np.array(PARAMS[kind])
    a = _kernels.loglik_terms(kind.code, theta, s, u, failed)
    b = _kernels_py.loglik_terms(kind.code, theta, s, u, failed)
    same = a == b
    with np.errstate(invalid="ignore"):
        assert np.all(same | (np.abs(a - b) <= 1e-11 * (1 + np.abs(b))))


@pytest.mark.skipif(_kernels is None, reason="compiled extension not built")
@pytest.mark.parametrize("kind", II_KINDS)
@pytest.mark.parametrize("what", [0, 1, 2])
def test_backends_agree_on_marginals(kind, what):
    s, u, _ = _inputs(40, 1)
    theta = np.array(PARAMS[kind])
    a, _, sa = _kernels.marginal(kind.code, theta, s, u, what)
    b, _, sb = _kernels_py.marginal(kind.code, theta, s, u, what)
    assert not sa.any() and not sb.any()
    assert np.allclose(a, b, rtol=1e-10, atol=1e-300)


def _mp_reference(kind, theta, s, u, what):
    """Marginal pdf/cdf/sf by mpmath quadrature over w = A3 on (0, s)."""
    mp.mp.dps = 30
    sev = kind in (ModelKind.IIb, ModelKind.IId)
    a1, a2, muf, sf, q = (mp.mpf(x) for x in theta[:5])
    if len(theta) == 6:
        sig = mp.mpf(theta[5])
    else:
        sig = mp.power(10, theta[5] + theta[6] * mp.log10(s))
    s, u = mp.mpf(s), mp.mpf(u)

    def law_pdf(z):
        return mp.exp(z - mp.exp(z)) if sev else mp.npdf(z)

    def law_cdf(z):
        return 1 - mp.exp(-mp.exp(z)) if sev else mp.ncdf(z)

    def lw(w):
        return law_pdf((mp.log10(w) - muf) / sf) / (sf * w * mp.log(10))

    def h(w):
        z = (u - (a1 + a2 * mp.log10(s - w))) / sig
        if what == 0:
            return law_pdf(z) / sig
        return law_cdf(z) if what == 1 else 1 - law_cdf(z)

    pts = [mp.mpf("1e-6"), 10 ** (muf - 6 * sf), 10 ** muf, 10 ** (muf + 3 * sf)]
    pts += [s - mp.power(10, (u - c * sig - a1) / a2) for c in (-4, 0, 4)]
    pts = sorted(p for p in pts if 0 < p < s) + [s]
    val = mp.quad(lambda w: h(w) * lw(w), pts, maxdegree=10)
    if what == 2:
        val += 1 - law_cdf((mp.log10(s) - muf) / sf)
    return float(val)


@pytest.mark.parametrize("kind", II_KINDS)
@pytest.mark.parametrize("s,u", [(50.0, 5.0), (42.0, 6.3), (70.0, 4.4)])
def test_marginals_match_mpmath(kind, s, u):
    theta = np.array(PARAMS[kind])
    for what in (0, 1, 2):
        v, _, st = _backend.kernels.marginal(kind.code, theta, np.array([s]), np.array([u]), what)
        ref = _mp_reference(kind, theta, s, u, what)
        assert st[0] == 0
        assert v[0] == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_fixed_limit_terms_closed_form():
    theta = np.array(PARAMS[ModelKind.Ia])
    s = np.array([45.04, 45.04, 30.0, 30.0])
    mu = 7.38 - 2.01 * math.log10(45.04 - 35.04)
    u = np.array([mu, mu, 5.0, 5.0])
    failed = np.array([1, 0, 1, 0], dtype=np.uint8)
    out = _backend.kernels.loglik_terms(1, theta, s, u, failed)
    tau = theta[4]
    expect0 = -0.5 * math.log(2 * math.pi) - math.log(tau) - (u[0] * math.log(10)
                                                              + math.log(math.log(10)))
    assert out[0] == pytest.approx(expect0, abs=1e-12)
    assert out[1] == pytest.approx(math.log(0.5), abs=1e-14)
    assert out[2] == -math.inf and out[3] == 0.0
