"""Information criteria, predictive scores and the model ranking report."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bayes, mle, models
from .models import ModelKind
from .numerics import log_sum_exp

# criterion -> True when larger is better
CRITERIA = {
    "loglik": True, "AIC": False, "BIC": False, "AICc": False,
    "laplace": True, "laplace_metropolis": True, "lppd": True,
    "DIC": False, "WAIC": False, "elpd": True,
}
CLASSICAL = ("loglik", "AIC", "BIC", "AICc")
BAYESIAN = ("laplace", "laplace_metropolis", "lppd", "DIC", "WAIC", "elpd")


def aic_bic_aicc(loglik, p, n):
    """``(AIC, BIC, AICc)``; AICc is NaN when ``n <= p + 1``."""
    aic = 2.0 * p - 2.0 * loglik
    bic = p * math.log(n) - 2.0 * loglik if p else -2.0 * loglik
    aicc = aic + 2.0 * p * (p + 1) / (n - p - 1) if n > p + 1 else math.nan
    return aic, bic, aicc


def pointwise_matrix(chain, kind, dataset):
    """``(S, n)`` per-draw, per-record log density (failures) or log survival (run-outs)."""
    kind = ModelKind.parse(kind)
    return np.array([models.pointwise_loglik(kind, th, dataset) for th in chain.draws])


def _terms(chain, kind, dataset, terms):
    return pointwise_matrix(chain, kind, dataset) if terms is None else np.asarray(terms)


def lppd(chain, kind, dataset, terms=None):
    """Log pointwise predictive density ``sum_i ln mean_m rho(y_i | theta^m)``."""
    t = _terms(chain, kind, dataset, terms)
    return float(np.sum(log_sum_exp(t, axis=0) - math.log(t.shape[0])))


def dic(chain, kind, dataset, terms=None):
    """``(DIC, p_DIC)`` with the plug-in log-likelihood at the posterior mean."""
    kind = ModelKind.parse(kind)
    t = _terms(chain, kind, dataset, terms)
    mean = np.mean(chain.draws, axis=0)
    ll_mean = models.loglik(kind, mean, dataset)
    if not math.isfinite(ll_mean):
        raise ValueError(f"log-likelihood at the posterior mean {mean.tolist()} is not finite")
    p_dic = 2.0 * (ll_mean - float(np.mean(np.sum(t, axis=1))))
    return -2.0 * (ll_mean - p_dic), p_dic


def waic(chain, kind, dataset, terms=None):
    """``(WAIC, p_WAIC)`` with the mean-log-density form of ``p_WAIC``."""
    t = _terms(chain, kind, dataset, terms)
    lp = log_sum_exp(t, axis=0) - math.log(t.shape[0])
    with np.errstate(invalid="ignore"):
        p_waic = float(np.sum(2.0 * (lp - np.mean(t, axis=0))))
    return -2.0 * (float(np.sum(lp)) - p_waic), p_waic


def kfold_partition(dataset, K, seed=0):
    """Folds stratified on (cycle-ratio stratum, run-out flag).

    Each group is shuffled and dealt to the folds round-robin, continuing the
    rotation across groups, so fold sizes differ by at most one.
    """
    n = len(dataset)
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(K)]
    pos = 0
    for stratum in dataset.strata:
        for flag in (False, True):
            group = [i for i in stratum if dataset.runout[i] == flag]
            for i in rng.permutation(group):
                folds[pos % K].append(int(i))
                pos += 1
    return [sorted(f) for f in folds]


def kfold_elpd(kind, scenario, dataset, K, config, seed=0, return_pointwise=False):
    """K-fold cross-validated expected log predictive density.

    Each training fold gets its own chain (seeded from ``SeedSequence(seed)``);
    held-out records are scored by log-sum-exp over that fold's draws.
    """
    kind = ModelKind.parse(kind)
    folds = kfold_partition(dataset, K, seed)
    seeds = np.random.SeedSequence(seed).spawn(K)
    out = np.empty(len(dataset))
    for k, held in enumerate(folds):
        held_set = set(held)
        train = dataset.subset([i for i in range(len(dataset)) if i not in held_set])
        cfg = bayes.SamplerConfig(config.theta0, config.delta, config.total_iterations,
                                  config.burn_in, config.thin,
                                  int(seeds[k].generate_state(1)[0]))
        try:
            chain = bayes.run_mh(kind, scenario, train, cfg)
        except bayes.SamplerError as exc:
            raise bayes.SamplerError(f"fold {k}: {exc}") from None
        t = pointwise_matrix(chain, kind, dataset.subset(held))
        out[held] = log_sum_exp(t, axis=0) - math.log(t.shape[0])
    total = float(np.sum(out))
    return (total, out) if return_pointwise else total


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class ReportConfig:
    criteria: tuple = tuple(CRITERIA)
    K: int = 5
    seed: int = 0
    sampler_scale: int = 1
    sampler_overrides: dict = field(default_factory=dict)
    mle_starts: int = 5


@dataclass
class ComparisonReport:
    n: int
    models: tuple
    scores: dict
    errors: dict
    extras: dict
    rankings: dict

    def as_dict(self):
        return {"n": self.n, "models": [m.name for m in self.models],
                "scores": {m.name: self.scores[m] for m in self.models},
                "extras": {m.name: self.extras[m] for m in self.models},
                "errors": {m.name: self.errors[m] for m in self.models if self.errors[m]},
                "rankings": self.rankings}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        crits = [c for c in CRITERIA if any(c in self.scores[m] for m in self.models)]
        w.writerow(["model", "p"] + crits)
        for m in self.models:
            w.writerow([m.name, m.n_params] + [_fmt(self.scores[m].get(c)) for c in crits])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_fmt)


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.10g}" if isinstance(v, float) else v


def rank(scores, models_, criterion):
    """Model names best-first; ties go to fewer parameters, then kind order."""
    higher = CRITERIA[criterion]
    have = [m for m in models_ if criterion in scores[m] and math.isfinite(scores[m][criterion])]
    key = (lambda m: (-scores[m][criterion] if higher else scores[m][criterion],
                      m.n_params, m.value))
    return [m.name for m in sorted(have, key=key)]


def build_report(kinds, dataset, scenario=None, config=None, fits=None, chains=None):
    """Score every model on every requested criterion.

    Failures are recorded per (model, criterion) cell and the report is
    still produced.  Bayesian criteria need ``scenario`` (preset id or
    JSON path); ``fits``/``chains`` may supply precomputed results keyed by
    kind.
    """
    config = config or ReportConfig()
    kinds = tuple(ModelKind.parse(k) for k in kinds)
    if not kinds:
        raise ValueError("need at least one model")
    fits, chains = dict(fits or {}), dict(chains or {})
    n = len(dataset)
    scores = {k: {} for k in kinds}
    errors = {k: {} for k in kinds}
    extras = {k: {} for k in kinds}
    want = set(config.criteria)
    for k in kinds:
        if want & set(CLASSICAL):
            try:
                fit = fits.get(k) or mle.fit_mle(k, dataset, n_starts=config.mle_starts,
                                                 seed=config.seed)
                fits[k] = fit
                aic, bic, aicc = aic_bic_aicc(fit.loglik, k.n_params, n)
                for c, v in zip(CLASSICAL, (fit.loglik, aic, bic, aicc)):
                    if c in want:
                        scores[k][c] = v
                extras[k]["mle"] = fit.params.as_dict()
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                for c in want & set(CLASSICAL):
                    errors[k][c] = str(exc)
        if not want & set(BAYESIAN):
            continue
        try:
            if scenario is None:
                raise ValueError("Bayesian criteria need a prior scenario")
            prior = bayes.load_scenario(k, scenario)
            cfg = bayes.SamplerConfig.for_scenario(prior, seed=config.seed,
                                                   **config.sampler_overrides)
            if config.sampler_scale > 1:
                cfg = cfg.scaled(config.sampler_scale)
        except Exception as exc:  # noqa: BLE001
            for c in want & set(BAYESIAN):
                errors[k][c] = str(exc)
            continue
        _bayes_cells(k, prior, cfg, dataset, config, want, chains, scores[k], errors[k], extras[k])
    rankings = {c: rank(scores, kinds, c) for c in CRITERIA if c in want}
    return ComparisonReport(n, kinds, scores, errors, extras, rankings)


def _bayes_cells(kind, prior, cfg, dataset, config, want, chains, score, error, extra):
    def cell(name, fn):
        if name not in want:
            return
        try:
            fn()
        except Exception as exc:  # noqa: BLE001
            error[name] = str(exc)

    def lap():
        score["laplace"], mode = bayes.laplace_log_marginal(kind, prior, dataset)
        extra["posterior_mode"] = dict(zip(kind.param_names, mode.tolist()))
    cell("laplace", lap)

    chain_needed = want & {"laplace_metropolis", "lppd", "DIC", "WAIC"}
    if chain_needed:
        try:
            chain = chains.get(kind) or bayes.run_mh(kind, prior, dataset, cfg)
            chains[kind] = chain
            extra["acceptance_rate"] = chain.acceptance_rate
            terms = pointwise_matrix(chain, kind, dataset)
        except Exception as exc:  # noqa: BLE001
            for c in chain_needed:
                error[c] = str(exc)
        else:
            def lm():
                score["laplace_metropolis"] = bayes.laplace_metropolis_log_marginal(
                    chain, kind, prior, dataset)

            def lp():
                score["lppd"] = lppd(chain, kind, dataset, terms)

            def d():
                score["DIC"], extra["p_DIC"] = dic(chain, kind, dataset, terms)

            def w():
                score["WAIC"], extra["p_WAIC"] = waic(chain, kind, dataset, terms)
            cell("laplace_metropolis", lm)
            cell("lppd", lp)
            cell("DIC", d)
            cell("WAIC", w)

    def el():
        score["elpd"] = kfold_elpd(kind, prior, dataset, config.K, cfg, config.seed)
    cell("elpd", el)
