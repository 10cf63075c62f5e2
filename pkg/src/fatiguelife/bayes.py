"""Priors, random-walk Metropolis-Hastings, posterior summaries, marginal likelihoods."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import distributions as dist
from . import models
from .models import ModelKind
from .numerics import HessianError, fd_hessian, minimize

CHAIN_FORMAT = "fatiguelife-chain v1"
DEFAULT_SAMPLER = {"total_iterations": 1_010_000, "burn_in": 10_000, "thin": 50}
# Fourth root of machine epsilon: the rounding/truncation balance for second
# differences, tighter than the cube-root step used for Wald errors.
LAPLACE_H_REL = float(np.finfo(float).eps) ** 0.25

_PRIOR_FAMILIES = {
    "normal": lambda a, b: dist.Normal(a, b),
    "invgamma": lambda a, b: dist.InverseGamma(a, b),
    "uniform": lambda a, b: dist.UniformInterval(a, b),
}


class SamplerError(RuntimeError):
    pass


class MarginalLikelihoodError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PriorScenario:
    """One proper prior per parameter of ``kind``, plus sampler defaults."""

    kind: ModelKind
    scenario_id: str
    priors: tuple
    theta0: tuple = None
    delta: tuple = None

    def __post_init__(self):
        kind = ModelKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if len(self.priors) != kind.n_params:
            raise ValueError(f"{kind} needs {kind.n_params} priors, got {len(self.priors)}")

    def log_prior(self, theta):
        total = 0.0
        for prior, x in zip(self.priors, theta):
            lp = float(prior.logpdf(x))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total

    @classmethod
    def from_dict(cls, kind, scenario_id, spec):
        """Build from ``{"priors": {name: [family, a, b]}, "theta0": .., "delta": ..}``."""
        kind = ModelKind.parse(kind)
        table = spec["priors"]
        missing = [n for n in kind.param_names if n not in table]
        if missing:
            raise ValueError(f"scenario {scenario_id} lacks priors for {missing}")
        priors = []
        for name in kind.param_names:
            family, a, b = table[name]
            if family not in _PRIOR_FAMILIES:
                raise ValueError(f"unknown prior family {family!r} for {name}")
            priors.append(_PRIOR_FAMILIES[family](float(a), float(b)))
        theta0 = tuple(spec["theta0"]) if spec.get("theta0") is not None else None
        delta = tuple(spec["delta"]) if spec.get("delta") is not None else None
        return cls(kind, str(scenario_id), tuple(priors), theta0, delta)


def load_scenario(kind, scenario):
    """Prior scenario for ``kind``: a preset id (``"1"``, ``"2"``) or a JSON file path."""
    kind = ModelKind.parse(kind)
    key = str(scenario)
    if key in ("1", "2"):
        text = resources.files("fatiguelife").joinpath(f"presets/scenario{key}.json").read_text()
    else:
        path = Path(key)
        if not path.is_file():
            raise FileNotFoundError(f"scenario must be 1, 2 or a JSON file; got {scenario!r}")
        text = path.read_text(encoding="utf-8")
    doc = json.loads(text)
    if kind.name not in doc.get("models", {}):
        raise ValueError(f"scenario {key} defines no priors for {kind}")
    return PriorScenario.from_dict(kind, doc.get("scenario", key), doc["models"][kind.name])


@dataclass(frozen=True)
class SamplerConfig:
    theta0: tuple
    delta: tuple
    total_iterations: int = DEFAULT_SAMPLER["total_iterations"]
    burn_in: int = DEFAULT_SAMPLER["burn_in"]
    thin: int = DEFAULT_SAMPLER["thin"]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta0", tuple(float(v) for v in np.asarray(self.theta0)))
        object.__setattr__(self, "delta", tuple(float(v) for v in np.asarray(self.delta)))
        if len(self.theta0) != len(self.delta):
            raise ValueError("theta0 and delta differ in length")
        if not all(d > 0 for d in self.delta):
            raise ValueError("proposal sds must be positive")
        if not 0 <= self.burn_in < self.total_iterations:
            raise ValueError("need 0 <= burn_in < total_iterations")
        if self.thin < 1 or (self.total_iterations - self.burn_in) % self.thin:
            raise ValueError("total_iterations - burn_in must be a positive multiple of thin")

    @property
    def n_kept(self):
        return (self.total_iterations - self.burn_in) // self.thin

    @classmethod
    def for_scenario(cls, scenario, **overrides):
        base = {"theta0": scenario.theta0, "delta": scenario.delta}
        base.update({k: v for k, v in overrides.items() if v is not None})
        if base["theta0"] is None or base["delta"] is None:
            raise ValueError(f"scenario {scenario.scenario_id} has no default theta0/delta "
                             f"for {scenario.kind}")
        return cls(**base)

    def scaled(self, factor):
        """Same settings with iterations and burn-in divided by ``factor``."""
        total = self.burn_in // factor + self.n_kept // factor * self.thin
        return SamplerConfig(self.theta0, self.delta, total, self.burn_in // factor,
                             self.thin, self.seed)


@dataclass
class PosteriorChain:
    kind: ModelKind
    scenario_id: str
    draws: np.ndarray
    log_posterior: np.ndarray
    acceptance_rate: float
    config: SamplerConfig = None
    param_names: tuple = None

    def __post_init__(self):
        if self.param_names is None:
            self.param_names = ModelKind.parse(self.kind).param_names

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def save_csv(self, path=None, extra=None):
        """Versioned CSV: ``#`` metadata lines, then one kept draw per row."""
        buf = io.StringIO()
        meta = {"format": CHAIN_FORMAT, "kind": getattr(self.kind, "name", str(self.kind)),
                "scenario": self.scenario_id, "acceptance_rate": repr(self.acceptance_rate)}
        if self.config is not None:
            meta.update(seed=self.config.seed, total_iterations=self.config.total_iterations,
                        burn_in=self.config.burn_in, thin=self.config.thin,
                        theta0=json.dumps(self.config.theta0), delta=json.dumps(self.config.delta))
        meta.update(extra or {})
        for k, v in meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.param_names) + ["log_posterior"])
        for row, lp in zip(self.draws, self.log_posterior):
            w.writerow([repr(float(x)) for x in row] + [repr(float(lp))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def load_csv(cls, path):
        meta, rows = {}, []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    k, _, v = line[1:].strip().partition("=")
                    meta[k.strip()] = v.strip()
                elif line.strip():
                    rows.append(line.strip().split(","))
        if meta.get("format") != CHAIN_FORMAT:
            raise ValueError(f"{path}: not a chain file of format {CHAIN_FORMAT!r}")
        header, body = rows[0], np.array(rows[1:], dtype=float)
        config = None
        if "seed" in meta:
            config = SamplerConfig(json.loads(meta["theta0"]), json.loads(meta["delta"]),
                                   int(meta["total_iterations"]), int(meta["burn_in"]),
                                   int(meta["thin"]), int(meta["seed"]))
        kind = ModelKind.parse(meta["kind"])
        return cls(kind, meta["scenario"], body[:, :-1], body[:, -1],
                   float(meta["acceptance_rate"]), config, tuple(header[:-1]))


@dataclass
class PosteriorSummary:
    names: tuple
    mean: np.ndarray
    sd: np.ndarray
    corr: np.ndarray
    degenerate: tuple
    kde: dict = field(repr=False, default_factory=dict)

    def as_dict(self):
        return {"mean": dict(zip(self.names, self.mean.tolist())),
                "sd": dict(zip(self.names, self.sd.tolist())),
                "corr": [[None if math.isnan(c) else c for c in row] for row in self.corr.tolist()],
                "degenerate": list(self.degenerate)}


# ---------------------------------------------------------------------------
# Posterior and sampler
# ---------------------------------------------------------------------------

def log_posterior(kind, scenario, params, dataset):
    """Log-likelihood plus log prior; -inf outside the prior or parameter support."""
    kind = ModelKind.parse(kind)
    theta = models.as_array(kind, params)
    lp = scenario.log_prior(theta)
    if lp == -math.inf or any(theta[i] <= 0 for i in kind.positive_params):
        return -math.inf
    ll = models.loglik(kind, theta, dataset)
    return ll + lp if math.isfinite(ll) else -math.inf


def metropolis(log_target, theta0, delta, total_iterations, burn_in, thin, seed):
    """Gaussian random-walk Metropolis-Hastings on an arbitrary log target.

    Returns ``(draws, log_target_trace, acceptance_rate)`` for the kept
    states (iterations ``burn_in + thin, burn_in + 2 thin, ...``).  The
    proposal increment and acceptance uniform of every iteration come from
    ``numpy.random.default_rng(seed)`` in a fixed order.
    """
    theta = np.array(theta0, dtype=float)
    delta = np.asarray(delta, dtype=float)
    a = float(log_target(theta))
    if not math.isfinite(a):
        raise SamplerError(f"log posterior is not finite at theta0 = {theta.tolist()}")
    rng = np.random.default_rng(seed)
    p = theta.size
    n_kept = (total_iterations - burn_in) // thin
    draws = np.empty((n_kept, p))
    trace = np.empty(n_kept)
    accepted = 0
    block = 4096
    k = 0
    for start in range(0, total_iterations, block):
        m = min(block, total_iterations - start)
        steps = rng.standard_normal((m, p)) * delta
        logu = np.log(rng.random(m))
        for j in range(m):
            prop = theta + steps[j]
            b = float(log_target(prop))
            if logu[j] <= b - a:  # H = min(1, exp(b - a))
                theta, a = prop, b
                accepted += 1
            it = start + j + 1
            if it > burn_in and (it - burn_in) % thin == 0:
                draws[k] = theta
                trace[k] = a
                k += 1
    return draws, trace, accepted / total_iterations


def run_mh(kind, scenario, dataset, config):
    """Random-walk Metropolis-Hastings on the posterior of ``kind``."""
    kind = ModelKind.parse(kind)

    def target(theta):
        return log_posterior(kind, scenario, theta, dataset)

    try:
        draws, trace, rate = metropolis(target, config.theta0, config.delta,
                                        config.total_iterations, config.burn_in,
                                        config.thin, config.seed)
    except SamplerError as exc:
        raise SamplerError(f"{kind}, scenario {scenario.scenario_id}: {exc}") from None
    return PosteriorChain(kind, scenario.scenario_id, draws, trace, rate, config)


def summarize(chain, kde_points=512):
    """Posterior mean, SD, correlation matrix and KDE marginals of a chain.

    Columns with zero variance are listed in ``degenerate`` and their
    correlation entries are NaN.
    """
    x = np.asarray(chain.draws, dtype=float)
    if x.shape[0] < 100:
        raise ValueError(f"summaries need at least 100 draws, got {x.shape[0]}")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    bad = sd == 0
    corr = np.full((x.shape[1], x.shape[1]), math.nan)
    good = np.flatnonzero(~bad)
    if good.size:
        c = np.corrcoef(x[:, good], rowvar=False)
        corr[np.ix_(good, good)] = np.atleast_2d(c)
        corr[good, good] = 1.0
    names = tuple(chain.param_names)
    kde = {}
    for i in good:
        grid = dist.kde_grid(x[:, i], num=kde_points)
        kde[names[i]] = (grid, dist.kde_density(x[:, i], grid))
    return PosteriorSummary(names, mean, sd, corr, tuple(names[i] for i in np.flatnonzero(bad)),
                            kde)


# ---------------------------------------------------------------------------
# Marginal likelihood
# ---------------------------------------------------------------------------

def _logdet_pd(M, what):
    # Factor the unit-diagonal rescaling so the singularity test ignores units.
    M = np.asarray(M, dtype=float)
    d = np.diag(M)

    def fail():
        eig = np.linalg.eigvalsh(0.5 * (M + M.T))
        return MarginalLikelihoodError(
            f"{what} is not positive definite; eigenvalues {eig.tolist()}")

    if not np.all(d > 0):
        raise fail()
    s = np.sqrt(d)
    try:
        L = np.linalg.cholesky(M / np.outer(s, s))
    except np.linalg.LinAlgError:
        raise fail() from None
    piv = np.diag(L)
    if np.min(piv) ** 2 < 1e-12:
        raise fail()
    return 2.0 * float(np.sum(np.log(piv))) + float(np.sum(np.log(d)))


def laplace_from_target(log_target, x0, h_rel=LAPLACE_H_REL, transform=None):
    """Laplace approximation ``(P/2) ln 2pi - (1/2) ln|H| + log_target(mode)``.

    ``H`` is the finite-difference Hessian of ``-log_target`` at the mode.
    ``transform = (to_internal, to_natural)`` optimises in a reparameterised
    space while the Hessian stays in the natural parameters.
    Returns ``(value, mode)``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    fwd, back = transform if transform is not None else (lambda v: v, lambda v: v)

    def neg(z):
        val = log_target(back(z))
        return -val if math.isfinite(val) else math.inf

    r = minimize(neg, fwd(x0))
    mode = np.asarray(back(r.argmin), dtype=float)
    try:
        H = fd_hessian(lambda t: -log_target(t), mode, h_rel)
    except HessianError as exc:
        raise MarginalLikelihoodError(f"Hessian at the mode failed: {exc}") from None
    p = mode.size
    value = 0.5 * p * math.log(2 * math.pi) - 0.5 * _logdet_pd(H, "Hessian of -log posterior") \
        - r.fmin
    return value, mode


def laplace_log_marginal(kind, scenario, dataset, start=None, h_rel=LAPLACE_H_REL):
    """Laplace estimate of ``ln p(y)`` for ``kind`` under ``scenario``.

    The posterior mode is found from ``start`` (default: the scenario's
    theta0) with positive parameters optimised on the log scale.
    Returns ``(value, mode)``.
    """
    from .mle import to_internal, to_natural

    kind = ModelKind.parse(kind)
    start = scenario.theta0 if start is None else start
    if start is None:
        raise ValueError("no start point given and the scenario has no theta0")
    x0 = np.array(start, dtype=float)
    return laplace_from_target(
        lambda t: log_posterior(kind, scenario, t, dataset), x0, h_rel,
        (lambda t: to_internal(kind, t), lambda z: to_natural(kind, z)))


def laplace_metropolis_from_draws(draws, log_target_values):
    """Laplace-Metropolis: best draw as mode, empirical covariance as ``H*``."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise MarginalLikelihoodError("need at least two draws")
    lt = np.asarray(log_target_values, dtype=float)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    logdet = _logdet_pd(cov, "empirical covariance of the draws")
    p = x.shape[1]
    return 0.5 * p * math.log(2 * math.pi) + 0.5 * logdet + float(np.max(lt))


def laplace_metropolis_log_marginal(chain, kind=None, scenario=None, dataset=None):
    """Laplace-Metropolis estimate from a posterior chain.

    With ``scenario`` and ``dataset`` the log posterior at the best draw is
    re-evaluated; otherwise the stored trace value is used.
    """
    best = int(np.argmax(chain.log_posterior))
    trace = np.array(chain.log_posterior, dtype=float)
    if scenario is not None and dataset is not None:
        kind = ModelKind.parse(kind or chain.kind)
        trace[best] = log_posterior(kind, scenario, chain.draws[best], dataset)
    return laplace_metropolis_from_draws(chain.draws, trace)


def bayes_factor(log_marginal_a, log_marginal_b):
    """``F_{B,A} = p_B(y) / p_A(y)``; returns ``(F, ln F)``."""
    if not (math.isfinite(log_marginal_a) and math.isfinite(log_marginal_b)):
        raise ValueError("log marginals must be finite")
    ln_f = log_marginal_b - log_marginal_a
    with np.errstate(over="ignore"):
        return float(np.exp(ln_f)), ln_f
