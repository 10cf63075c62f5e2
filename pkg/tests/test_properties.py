import io
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from fatiguelife import distributions as dist, models
from fatiguelife.dataset import FatigueDataset, FatigueRecord, read_csv, to_csv
from fatiguelife.models import ModelKind as K

from conftest import IA, IIB, IID

probs = st.floats(1e-6, 1 - 1e-6)
quick = settings(max_examples=40, deadline=None)


@quick
@given(p=probs, mu=st.floats(-5, 5), sigma=st.floats(0.01, 5))
def test_quantiles_invert_cdfs(p, mu, sigma):
    assert math.isclose(float(dist.normal_cdf(dist.normal_quantile(p, mu, sigma), mu, sigma)),
                        p, rel_tol=1e-9, abs_tol=1e-15)
    assert math.isclose(float(dist.sev_cdf(dist.sev_quantile(p, mu, sigma), mu, sigma)),
                        p, rel_tol=1e-9, abs_tol=1e-15)


@quick
@given(p=st.floats(0.01, 0.99), s=st.floats(36, 120))
def test_fixed_limit_quantile_round_trip(p, s):
    n = models.life_quantile(K.Ia, IA, s, p)
    mu = models.mean_log_life(K.Ia, IA, s)
    assert math.isclose(float(dist.normal_cdf(math.log10(n), mu, IA[4])), p, rel_tol=1e-9)


@quick
@given(p=st.floats(0.02, 0.5), s=st.floats(60, 120),
       kind_params=st.sampled_from([(K.IIb, IIB), (K.IId, IID)]))
def test_random_limit_quantile_round_trip(p, s, kind_params):
    kind, theta = kind_params
    if p >= models.failure_probability(kind, theta, s):
        return
    n = models.life_quantile(kind, theta, s, p)
    assert math.isclose(float(models.marginal_cdf_log_life(kind, theta, s, math.log10(n))), p,
                        abs_tol=1e-8)


@quick
@given(u=st.lists(st.floats(2, 9), min_size=2, max_size=6), s=st.floats(30, 120))
def test_marginal_cdf_monotone_and_bounded(u, s):
    u = np.sort(np.array(u))
    c = np.asarray(models.marginal_cdf_log_life(K.IIb, IIB, s, u))
    assert np.all((c >= 0) & (c <= 1))
    assert np.all(np.diff(c) >= -1e-13)
    sf = np.asarray(models.marginal_sf_log_life(K.IIb, IIB, s, u))
    assert np.allclose(c + sf, 1.0, atol=1e-10)


@quick
@given(s=st.lists(st.floats(20, 150), min_size=2, max_size=6))
def test_failure_probability_increases_with_stress(s):
    s = np.sort(np.array(s))
    f = np.asarray(models.failure_probability(K.IIb, IIB, s))
    assert np.all(np.diff(f) >= -1e-15)


records = st.builds(FatigueRecord, st.floats(36, 100).map(lambda v: round(v, 3)),
                    st.sampled_from([-1.0, 0.0, 0.5, -0.25]),
                    st.integers(10, 10 ** 8), st.booleans())


@settings(max_examples=30, deadline=None)
@given(recs=st.lists(records, min_size=1, max_size=20), seed=st.integers(0, 1000))
def test_loglik_permutation_invariant(recs, seed):
    d = FatigueDataset(recs)
    perm = np.random.default_rng(seed).permutation(len(d))
    a = models.loglik(K.Ia, IA, d)
    b = models.loglik(K.Ia, IA, d.subset(perm))
    assert a == b or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)
    terms = models.pointwise_loglik(K.Ia, IA, d)
    assert np.all(terms[d.runout] <= 0)


@settings(max_examples=30, deadline=None)
@given(recs=st.lists(records, min_size=1, max_size=20))
def test_csv_round_trip(recs):
    d = FatigueDataset(recs)
    back = read_csv(io.StringIO(to_csv(d)))
    assert back.records == d.records
