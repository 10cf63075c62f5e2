"""Exit criteria; each test records one pass/fail line shown after the run."""
import math
import os

import numpy as np
import pytest
from scipy import stats

from fatiguelife import bayes, compare, mle, models, numerics
from fatiguelife import distributions as dist
from fatiguelife.models import ModelKind as K

from conftest import IA, IB, IIB, PARAMS, design, record_criterion

pytestmark = pytest.mark.acceptance

DATASET_ABSENT = "SKIP (dataset absent; set FATIGUELIFE_DATA)"


def _dataset_or_record(request, number):
    try:
        return request.getfixturevalue("reference_data")
    except pytest.skip.Exception:
        record_criterion(number, DATASET_ABSENT, "")
        raise


# ---------------------------------------------------------------------------
# 1. information criteria arithmetic
# ---------------------------------------------------------------------------

CLASSICAL_TABLE = {  # loglik, AIC, BIC, AICc
    K.Ia: (-950.16, 1910.3, 1922.5, 1911.1), K.Ib: (-920.51, 1853.0, 1867.7, 1854.1),
    K.IIa: (-913.42, 1838.8, 1853.5, 1839.9), K.IIb: (-907.31, 1826.6, 1841.3, 1827.7),
    K.IIc: (-908.15, 1830.3, 1847.4, 1831.8), K.IId: (-906.73, 1827.5, 1844.6, 1828.9),
}


def test_criterion_1_information_criteria():
    worst = 0.0
    for kind, (ll, *expected) in CLASSICAL_TABLE.items():
        got = compare.aic_bic_aicc(ll, kind.n_params, 85)
        worst = max(worst, max(abs(g - e) for g, e in zip(got, expected)))
    record_criterion(1, worst <= 0.05, f"max |AIC/BIC/AICc - table| = {worst:.3f} (tol 0.05)")
    assert worst <= 0.05


# ---------------------------------------------------------------------------
# 2, 3, 7, 10. dataset-conditional reproduction
# ---------------------------------------------------------------------------

def test_criterion_2_mle_reproduction(request):
    data = _dataset_or_record(request, 2)
    assert len(data) == 85 and data.n_runouts == 12
    msgs, ok = [], True
    fits = {k: mle.fit_mle(k, data) for k in (K.Ia, K.Ib, K.IIb, K.IId)}
    tol = np.array([0.02, 0.02, 0.02, 0.005, 0.02])
    d = np.abs(fits[K.Ia].params.values - np.array(IA))
    ok &= bool(np.all(d <= tol))
    msgs.append(f"Ia params max dev {d.max():.4f}")
    d = np.abs(fits[K.IIb].params.values - np.array(IIB))
    ok &= bool(np.all(d <= np.array([0.02, 0.02, 0.02, 0.02, 0.005, 0.02])))
    msgs.append(f"IIb params max dev {d.max():.4f}")
    for k, ref in ((K.Ia, -950.16), (K.Ib, -920.51), (K.IIb, -907.31), (K.IId, -906.73)):
        dev = abs(fits[k].loglik - ref)
        ok &= dev <= 0.05
        msgs.append(f"{k.name} loglik {fits[k].loglik:.2f}")
    record_criterion(2, ok, "; ".join(msgs))
    assert ok


def test_criterion_3_profile_intervals(request):
    data = _dataset_or_record(request, 3)
    ok, msgs = True, []
    for kind, ref in ((K.Ia, (32.45, 36.28)), (K.Ib, (34.36, 36.88))):
        fit = mle.fit_mle(kind, data)
        ci = mle.profile_a3(kind, data, fit).ci
        dev = max(abs(ci[0] - ref[0]), abs(ci[1] - ref[1]))
        ok &= dev <= 0.15
        msgs.append(f"{kind.name} CI ({ci[0]:.2f}, {ci[1]:.2f})")
    record_criterion(3, ok, "; ".join(msgs) + " (tol 0.15)")
    assert ok


BAYES_TABLE = {  # laplace, laplace_metropolis, lppd, DIC, WAIC, elpd
    K.Ia: (-963.07, -963.16, -949.56, 1909.6, 1911.3, -955.42),
    K.Ib: (-940.18, -937.06, -920.51, 1851.8, 1853.1, -927.07),
    K.IIb: (-932.55, -923.68, -907.85, 1826.5, 1825.9, -913.80),
}


def test_criterion_7_bayesian_tables(request):
    data = _dataset_or_record(request, 7)
    full = os.environ.get("FATIGUELIFE_FULL_CHAIN") == "1"
    cfg = compare.ReportConfig(criteria=compare.BAYESIAN, seed=1,
                               sampler_scale=1 if full else 10)
    rep = compare.build_report([K.Ia, K.Ib, K.IIb], data, "1", cfg)
    ok = all(rep.rankings[c] == ["IIb", "Ib", "Ia"] for c in compare.BAYESIAN)
    msg = "ranking IIb > Ib > Ia on every criterion" if ok else f"rankings {rep.rankings}"
    if full:
        dev = max(abs(rep.scores[k][c] - ref)
                  for k, row in BAYES_TABLE.items() for c, ref in zip(compare.BAYESIAN, row))
        ok &= dev <= 1.5
        msg += f"; max |value - table| = {dev:.2f} (tol 1.5)"
    else:
        msg += "; 10x shortened chain, values not compared"
    record_criterion(7, ok, msg)
    assert ok


def test_criterion_10_variance_endpoints(request):
    # At the reference Ib values the curve is checked without data; with the
    # dataset the check uses the refitted parameters.
    try:
        data = request.getfixturevalue("reference_data")
        theta, source = mle.fit_mle(K.Ib, data).params.values, "fitted"
    except pytest.skip.Exception:
        theta, source = np.array(IB), "reference (dataset absent, refit not run)"
    near = models.sd_log_life(K.Ib, theta, theta[2] + 0.01)
    far = models.sd_log_life(K.Ib, theta, 100.0)
    ok = abs(near - 1.11) <= 0.02 and abs(far - 0.059) <= 0.02
    record_criterion(10, ok, f"sigma({theta[2] + 0.01:.2f}) = {near:.3f}, "
                             f"sigma(100) = {far:.4f} at {source} Ib parameters")
    assert ok


# ---------------------------------------------------------------------------
# 4. quadrature and marginal consistency
# ---------------------------------------------------------------------------

def test_criterion_4_quadrature():
    checks = []
    for deg in range(0, 9):
        val = numerics.adaptive_quad(lambda x, d=deg: x ** d, -1.0, 2.0).value
        checks.append(abs(val - (2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1)))
    val = numerics.adaptive_quad(math.sin, 0.0, math.pi).value
    checks.append(abs(val - 2.0))
    # lognormal mass over (0, inf) via the log transform
    val = numerics.adaptive_quad(
        lambda t: stats.lognorm.pdf(math.exp(t), 0.7, scale=math.exp(0.3)) * math.exp(t),
        -12, 12).value
    checks.append(abs(val - 1.0))
    quad_err = max(checks)

    rng = np.random.default_rng(44)
    worst = 0.0
    h = 1e-3
    for kind in (K.IIa, K.IIb, K.IIc, K.IId):
        theta = PARAMS[kind]
        s = rng.uniform(45.0, 90.0, 20)
        for si in s:
            u = rng.uniform(4.0, 7.0)
            cdf = lambda x: models.marginal_cdf_log_life(kind, theta, si, x)
            deriv = (-cdf(u + 2 * h) + 8 * cdf(u + h) - 8 * cdf(u - h) + cdf(u - 2 * h)) / (12 * h)
            worst = max(worst, abs(deriv - models.marginal_pdf_log_life(kind, theta, si, u)))
    ok = quad_err <= 1e-10 and worst <= 1e-6
    record_criterion(4, ok, f"quadrature max err {quad_err:.1e} (tol 1e-10); "
                            f"|d cdf/du - pdf| max {worst:.1e} over 80 points (tol 1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 5. sampler calibration
# ---------------------------------------------------------------------------

def test_criterion_5_sampler_calibration():
    mean = np.array([1.0, -2.0])
    cov = np.array([[1.0, 0.8], [0.8, 2.0]])
    P = np.linalg.inv(cov)

    def target(t):
        d = t - mean
        return -0.5 * (d[0] * (P[0, 0] * d[0] + P[0, 1] * d[1]) + d[1] * (P[1, 0] * d[0] + P[1, 1] * d[1]))

    args = (target, [0.0, 0.0], [1.2, 1.6], 2000 + 20_000 * 10, 2000, 10, 123)
    draws, _, rate = bayes.metropolis(*args)
    again, _, _ = bayes.metropolis(*args)
    # Monte Carlo SE of the mean by batch means over 50 batches
    batches = draws.reshape(50, -1, 2).mean(axis=1)
    mcse = batches.std(axis=0, ddof=1) / math.sqrt(50)
    z = np.abs(draws.mean(axis=0) - mean) / mcse
    rel = np.abs(np.cov(draws, rowvar=False) - cov) / np.abs(cov)
    ok = (draws.shape == (20_000, 2) and bool(np.all(z <= 3)) and bool(np.all(rel <= 0.10))
          and np.array_equal(draws, again))
    record_criterion(5, ok, f"mean |z| max {z.max():.2f} (tol 3), cov rel err max {rel.max():.3f} "
                            f"(tol 0.10), acceptance {rate:.2f}, bit-exact rerun "
                            f"{np.array_equal(draws, again)}")
    assert ok


# ---------------------------------------------------------------------------
# 6. Laplace exactness
# ---------------------------------------------------------------------------

def test_criterion_6_laplace_exactness():
    # y = 0 observed, y | theta ~ N(theta, 1), theta ~ N(0, 1): ln p(y) = -ln(4 pi) / 2
    exact = -0.5 * math.log(4 * math.pi)

    def target(t):
        th = float(np.atleast_1d(t)[0])
        return float(dist.normal_logpdf(0.0, th, 1.0) + dist.normal_logpdf(th, 0.0, 1.0))

    lap, _ = bayes.laplace_from_target(target, [0.7])
    draws, trace, _ = bayes.metropolis(lambda t: target(t), [0.0], [1.0],
                                       1000 + 40_000 * 5, 1000, 5, 8)
    lm = bayes.laplace_metropolis_from_draws(draws, trace)
    ok = abs(lap - exact) <= 1e-6 and abs(lm - exact) <= 0.02
    record_criterion(6, ok, f"Laplace err {abs(lap - exact):.1e} (tol 1e-6), "
                            f"Laplace-Metropolis err {abs(lm - exact):.4f} (tol 0.02)")
    assert ok


# ---------------------------------------------------------------------------
# 8. synthetic recovery and interval coverage
# ---------------------------------------------------------------------------

IA_BOOT, IIB_BOOT, COVERAGE_REPS = 100, 30, 100


def _recovery(kind, truth, data, M, n_starts, seed):
    fit = mle.fit_mle(kind, data, n_starts=n_starts, seed=seed)
    ens = mle.bootstrap(kind, data, M=M, seed=seed, original=fit)
    se = ens.standard_errors()
    z = {n: abs(fit.params[n] - t) / se[n] for n, t in zip(kind.param_names, truth)}
    return z


def test_criterion_8_synthetic_recovery():
    ia = models.simulate(K.Ia, IA, design(400, 81, 34.0, 85.0), 1e7, rng=82)
    z_ia = _recovery(K.Ia, IA, ia, IA_BOOT, 5, 1)
    iib = models.simulate(K.IIb, IIB, design(400, 83), 1e7, rng=84)
    z_iib = _recovery(K.IIb, IIB, iib, IIB_BOOT, 2, 2)

    cutoff = math.exp(-0.5 * mle.CHI2_1_95)
    covered = 0
    for r in range(COVERAGE_REPS):
        d = models.simulate(K.Ia, IA, design(400, 1000 + r, 34.0, 85.0), 1e7, rng=2000 + r)
        fit = mle.fit_mle(K.Ia, d, n_starts=2, seed=r)
        ll, _ = mle.profile_loglik_at(K.Ia, d, IA[2], fit.params.values)
        covered += math.exp(min(ll - fit.loglik, 0.0)) >= cutoff
    zmax_ia, zmax_iib = max(z_ia.values()), max(z_iib.values())
    ok = zmax_ia <= 3 and zmax_iib <= 3 and covered >= 0.9 * COVERAGE_REPS
    record_criterion(8, ok, f"Ia censored {ia.n_runouts / 400:.0%}, max |err|/SE {zmax_ia:.2f} "
                            f"(M={IA_BOOT}); IIb max |err|/SE {zmax_iib:.2f} (M={IIB_BOOT}); "
                            f"profile coverage {covered}/{COVERAGE_REPS} (need >= "
                            f"{int(0.9 * COVERAGE_REPS)})")
    assert ok


# ---------------------------------------------------------------------------
# 9. invariants and properties
# ---------------------------------------------------------------------------

def test_criterion_9_properties(ia_data):
    checks = {}
    s = np.linspace(36, 120, 40)
    checks["quantile monotone in stress"] = bool(np.all(np.diff(
        models.life_quantile(K.Ia, IA, s, 0.5)) < 0))
    u = np.linspace(3, 9, 40)
    checks["marginal cdf monotone"] = bool(np.all(np.diff(
        models.marginal_cdf_log_life(K.IIb, IIB, 60.0, u)) >= -1e-14))
    w = np.geomspace(1e-3, 1e3, 50)
    sev = dist.sev_cdf(np.log(w), 0.4, 0.6)
    weib = stats.weibull_min.cdf(w, 1 / 0.6, scale=math.exp(0.4))
    checks["sev/Weibull equivalence 1e-12"] = bool(np.max(np.abs(sev - weib)) <= 1e-12)

    sc = bayes.load_scenario("Ia", "1")
    cfg = bayes.SamplerConfig.for_scenario(sc, total_iterations=3000, burn_in=1000, thin=2,
                                           seed=6)
    chain = bayes.run_mh(K.Ia, sc, ia_data, cfg)
    terms = compare.pointwise_matrix(chain, K.Ia, ia_data)
    checks["p_WAIC >= 0"] = compare.waic(chain, K.Ia, ia_data, terms)[1] >= 0
    lp = compare.lppd(chain, K.Ia, ia_data, terms)
    checks["lppd >= elpd"] = lp >= compare.kfold_elpd(K.Ia, sc, ia_data, 5, cfg, seed=6)

    boot = mle.resample_stratified(ia_data, np.random.default_rng(3))
    checks["stratum sizes preserved"] = sorted(map(len, boot.strata)) == \
        sorted(map(len, ia_data.strata))
    x = np.random.default_rng(4).normal(size=30) * 50
    checks["log_sum_exp shift identity"] = math.isclose(
        numerics.log_sum_exp(x + 1e3), numerics.log_sum_exp(x) + 1e3, rel_tol=1e-14)
    scores = {K.Ia: {"WAIC": 5.0}, K.Ib: {"WAIC": 5.0}, K.IIb: {"WAIC": 4.0}}
    checks["ranking deterministic"] = len({tuple(compare.rank(scores, order, "WAIC")) for order in
                                           ((K.Ia, K.Ib, K.IIb), (K.IIb, K.Ib, K.Ia))}) == 1
    failed = [k for k, v in checks.items() if not v]
    record_criterion(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} invariants hold"
                     + (f"; failed: {failed}" if failed else "")
                     + "; full suite in test_properties.py and module tests")
    assert not failed
