"""Command-line front end: ``fatiguelife <command> [options]``.

Every command writes its artifacts under ``--out``; JSON artifacts carry the
tool version, seed and a hash of the resolved configuration.  Failures exit
with status 1 and a single-line JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bayes, compare, mle, models
from .dataset import load_csv, to_csv
from .models import ModelKind, ParamVector

RANDOMIZED = {"bootstrap", "mcmc", "compare", "simulate"}


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


# ---------------------------------------------------------------------------
# Formatting helpers
# ---------------------------------------------------------------------------

def _round(obj):
    """Floats to 10 significant digits, recursively; non-finite to strings."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.10g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _num(x):
    x = float(x)
    return f"{x:.10g}" if math.isfinite(x) else ("" if math.isnan(x) else str(x))


def _write_json(path, payload):
    Path(path).write_text(json.dumps(_round(payload), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _write_rows(path, header, rows, meta):
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append(",".join(header))
    for r in rows:
        lines.append(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v)
                              for v in r))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _config_hash(cfg):
    text = json.dumps(_round(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _grid(text):
    lo, hi, num = str(text).split(",")
    return np.linspace(float(lo), float(hi), int(num))


def _read_params(kind, path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "params" in doc:
        doc = doc["params"]
    if isinstance(doc, list):
        return ParamVector(kind, doc)
    return ParamVector.from_mapping(kind, doc)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="fatiguelife", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fatiguelife {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help="CSV with columns s_max,cycle_ratio,cycles,runout")
        sp.add_argument("--out", default=None, help="output directory (default: .)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--config", default=None, help="key=value file; flags take precedence")

    sp = sub.add_parser("fit", help="maximum likelihood fit")
    common(sp)
    sp.add_argument("--model", default=None)
    sp.add_argument("--init", default=None, help="JSON file with starting parameters")
    sp.add_argument("--starts", type=int, default=None)
    sp.add_argument("--exclude-runouts", default=None, help="LogFit only: 1 to drop run-outs")

    sp = sub.add_parser("profile", help="profile likelihood and interval for A3")
    common(sp)
    sp.add_argument("--model", default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--grid", default=None, help="lo,hi,num (default: MLE-4SE..MLE+2SE, 80)")

    sp = sub.add_parser("bootstrap", help="stratified bootstrap bands and intervals")
    common(sp)
    sp.add_argument("--model", default=None)
    sp.add_argument("--replicates", type=int, default=None)
    sp.add_argument("--p", default=None, help="comma-separated probabilities")
    sp.add_argument("--s-grid", default=None, help="lo,hi,num equivalent stress grid")

    sp = sub.add_parser("mcmc", help="random-walk Metropolis-Hastings")
    common(sp)
    sp.add_argument("--model", default=None)
    sp.add_argument("--scenario", default=None, help="1, 2 or a JSON prior file")
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--burn-in", type=int, default=None)
    sp.add_argument("--thin", type=int, default=None)
    sp.add_argument("--theta0", default=None, help="comma-separated start")
    sp.add_argument("--delta", default=None, help="comma-separated proposal sds")
    sp.add_argument("--shorten", type=int, default=None, help="divide chain length by this")

    sp = sub.add_parser("compare", help="classical and Bayesian comparison report")
    common(sp)
    sp.add_argument("--models", default=None, help="comma-separated kinds")
    sp.add_argument("--scenario", default=None)
    sp.add_argument("--criteria", default=None, help="comma-separated subset")
    sp.add_argument("--folds", type=int, default=None)
    sp.add_argument("--shorten", type=int, default=None)

    sp = sub.add_parser("predict", help="life-quantile curves")
    common(sp, data=False)
    sp.add_argument("--model", default=None)
    sp.add_argument("--params", default=None, help="JSON parameters or a fit.json")
    sp.add_argument("--p", default=None)
    sp.add_argument("--s-grid", default=None)

    sp = sub.add_parser("simulate", help="synthetic censored dataset")
    common(sp)
    sp.add_argument("--model", default=None)
    sp.add_argument("--params", default=None)
    sp.add_argument("--design", default=None, help="CSV with s_max,cycle_ratio columns")
    sp.add_argument("--replicate", type=int, default=None)
    sp.add_argument("--censor-at", type=float, default=None)
    return p


DEFAULTS = {
    "out": ".", "threads": None, "model": None, "starts": 5, "exclude_runouts": "0",
    "alpha": 0.05, "replicates": 200, "p": "0.05,0.5,0.95", "scenario": "1",
    "folds": 5, "shorten": 1, "replicate": 1, "censor_at": 1e7,
}


def _read_config(path):
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise CLIError("missing command; see --help")
    cfg = vars(args)
    if args.config:
        for k, v in _read_config(args.config).items():
            if k not in cfg or k in ("command", "config"):
                raise CLIError(f"unknown config key {k!r} for {args.command}")
            if cfg[k] is None:
                action = next(a for a in parser._subparsers._group_actions[0]
                              .choices[args.command]._actions if a.dest == k)
                cfg[k] = action.type(v) if action.type else v
    for k, v in DEFAULTS.items():
        if k in cfg and cfg[k] is None:
            cfg[k] = v
    if cfg.get("threads") is None:
        cfg["threads"] = os.cpu_count() or 1
    cfg["seed_generated"] = False
    if cfg["seed"] is None:
        if args.command in RANDOMIZED:
            cfg["seed"] = int(np.random.SeedSequence().entropy % (2 ** 63))
            cfg["seed_generated"] = True
            print(f"fatiguelife: no --seed given, using seed {cfg['seed']}", file=sys.stderr)
        else:
            cfg["seed"] = 0
    return cfg


def _meta(cfg):
    hashed = {k: v for k, v in cfg.items() if k not in ("out", "threads", "config")}
    return {"tool": "fatiguelife", "version": __version__, "seed": cfg["seed"],
            "seed_generated": cfg["seed_generated"], "config_hash": _config_hash(hashed),
            "command": cfg["command"]}


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise CLIError(f"--{k.replace('_', '-')} is required for {cfg['command']}")


def _dataset(cfg):
    _need(cfg, "data")
    return load_csv(cfg["data"])


def _out(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fit(cfg):
    _need(cfg, "model")
    kind = ModelKind.parse(cfg["model"])
    data = _dataset(cfg)
    meta = _meta(cfg)
    if kind is ModelKind.LogFit:
        res = mle.fit_logfit(data, include_runouts=str(cfg["exclude_runouts"]) != "1")
        payload = dict(meta, kind=kind.name, params=res.params.as_dict(), e_std=res.e_std,
                       include_runouts=res.include_runouts, n=len(data))
    else:
        init = _read_params(kind, cfg["init"]) if cfg.get("init") else None
        fit = mle.fit_mle(kind, data, init, n_starts=int(cfg["starts"]), seed=cfg["seed"])
        aic, bic, aicc = compare.aic_bic_aicc(fit.loglik, kind.n_params, len(data))
        se = mle.standard_errors(fit, data)
        payload = dict(meta, **fit.as_dict(), n=len(data), n_runouts=data.n_runouts,
                       AIC=aic, BIC=bic, AICc=aicc, standard_errors=se)
    _write_json(_out(cfg) / "fit.json", payload)
    return payload


def cmd_profile(cfg):
    _need(cfg, "model")
    kind = ModelKind.parse(cfg["model"])
    data = _dataset(cfg)
    fit = mle.fit_mle(kind, data, seed=cfg["seed"])
    grid = _grid(cfg["grid"]) if cfg.get("grid") else None
    pc = mle.profile_a3(kind, data, fit, grid, float(cfg["alpha"]))
    meta = _meta(cfg)
    out = _out(cfg)
    with np.errstate(divide="ignore"):
        dev = -2.0 * np.log(pc.ratio)
    _write_rows(out / "profile.csv", ["a3", "ratio", "deviance"],
                zip(pc.a3_grid, pc.ratio, dev), meta)
    payload = dict(meta, kind=kind.name, mle=fit.as_dict(), alpha=pc.alpha,
                   ci=list(pc.ci), loglik_max=pc.loglik_mle)
    _write_json(out / "profile.json", payload)
    return payload


def cmd_bootstrap(cfg):
    _need(cfg, "model")
    kind = ModelKind.parse(cfg["model"])
    data = _dataset(cfg)
    fit = mle.fit_mle(kind, data, seed=cfg["seed"])
    ens = mle.bootstrap(kind, data, int(cfg["replicates"]), cfg["seed"], original=fit,
                        workers=int(cfg["threads"]))
    s_eq = data.equivalent_stress(fit.params["q"])
    grid = _grid(cfg["s_grid"]) if cfg.get("s_grid") else \
        np.linspace(s_eq.min(), s_eq.max(), 50)
    rows = ens.quantile_bands(grid, _float_list(cfg["p"]))
    meta = _meta(cfg)
    out = _out(cfg)
    _write_rows(out / "bootstrap_bands.csv", ["s_eq", "p", "lo", "median", "hi"], rows, meta)
    payload = dict(meta, kind=kind.name, mle=fit.as_dict(), replicates=len(ens.replicates),
                   failures=ens.failures, intervals=ens.param_intervals(),
                   standard_errors=ens.standard_errors())
    _write_json(out / "bootstrap.json", payload)
    return payload


def _sampler(cfg, prior):
    over = {"seed": cfg["seed"]}
    if cfg.get("theta0"):
        over["theta0"] = _float_list(cfg["theta0"])
    if cfg.get("delta"):
        over["delta"] = _float_list(cfg["delta"])
    for key, name in (("iterations", "total_iterations"), ("burn_in", "burn_in"),
                      ("thin", "thin")):
        if cfg.get(key) is not None:
            over[name] = int(cfg[key])
    sc = bayes.SamplerConfig.for_scenario(prior, **over)
    shorten = int(cfg.get("shorten") or 1)
    return sc.scaled(shorten) if shorten > 1 else sc


def cmd_mcmc(cfg):
    _need(cfg, "model")
    kind = ModelKind.parse(cfg["model"])
    data = _dataset(cfg)
    prior = bayes.load_scenario(kind, cfg["scenario"])
    sc = _sampler(cfg, prior)
    chain = bayes.run_mh(kind, prior, data, sc)
    meta = _meta(cfg)
    out = _out(cfg)
    sid = Path(str(cfg["scenario"])).stem
    chain.save_csv(out / f"chain_{kind.name}_{sid}.csv",
                   extra={"version": __version__, "config_hash": meta["config_hash"]})
    summ = bayes.summarize(chain)
    payload = dict(meta, kind=kind.name, scenario=prior.scenario_id, draws=chain.n_draws,
                   acceptance_rate=chain.acceptance_rate, **summ.as_dict())
    try:
        payload["laplace_metropolis"] = bayes.laplace_metropolis_log_marginal(
            chain, kind, prior, data)
    except bayes.MarginalLikelihoodError as exc:
        payload["laplace_metropolis"] = None
        payload["laplace_metropolis_error"] = str(exc)
    _write_json(out / "summary.json", payload)
    return payload


def cmd_compare(cfg):
    _need(cfg, "models")
    data = _dataset(cfg)
    kinds = [ModelKind.parse(k) for k in str(cfg["models"]).split(",") if k.strip()]
    crit = tuple(c.strip() for c in cfg["criteria"].split(",")) if cfg.get("criteria") \
        else tuple(compare.CRITERIA)
    unknown = [c for c in crit if c not in compare.CRITERIA]
    if unknown:
        raise CLIError(f"unknown criteria {unknown}; choose from {list(compare.CRITERIA)}")
    rc = compare.ReportConfig(criteria=crit, K=int(cfg["folds"]), seed=cfg["seed"],
                              sampler_scale=int(cfg["shorten"]))
    rep = compare.build_report(kinds, data, cfg["scenario"], rc)
    meta = _meta(cfg)
    out = _out(cfg)
    text = "".join(f"# {k}={v}\n" for k, v in meta.items()) + rep.to_csv()
    (out / "compare.csv").write_text(text, encoding="utf-8")
    payload = dict(meta, scenario=str(cfg["scenario"]), **rep.as_dict())
    _write_json(out / "compare.json", payload)
    return payload


def cmd_predict(cfg):
    _need(cfg, "model", "params", "s_grid")
    kind = ModelKind.parse(cfg["model"])
    params = _read_params(kind, cfg["params"])
    grid = _grid(cfg["s_grid"])
    rows = []
    for p in _float_list(cfg["p"]):
        vals = mle._safe_quantiles(kind, params.values, np.sort(grid), p)
        rows.extend((s, p, v) for s, v in zip(np.sort(grid), vals))
    meta = _meta(cfg)
    _write_rows(_out(cfg) / "predict.csv", ["s_eq", "p", "cycles"], rows, meta)
    return dict(meta, rows=len(rows))


def cmd_simulate(cfg):
    _need(cfg, "model", "params")
    kind = ModelKind.parse(cfg["model"])
    params = _read_params(kind, cfg["params"])
    if cfg.get("design"):
        design = _read_design(cfg["design"])
    elif cfg.get("data"):
        d = load_csv(cfg["data"])
        design = list(zip(d.s_max.tolist(), d.cycle_ratio.tolist()))
    else:
        raise CLIError("simulate needs --design or --data for the (s_max, R) design")
    design = design * int(cfg["replicate"])
    sim = models.simulate(kind, params, design, float(cfg["censor_at"]), cfg["seed"])
    meta = _meta(cfg)
    to_csv(sim, _out(cfg) / "simulated.csv",
           comments=[f"{k}={v}" for k, v in meta.items()] + [f"params={json.dumps(params.as_dict())}"])
    return dict(meta, n=len(sim), n_runouts=sim.n_runouts)


def _read_design(path):
    rows = []
    header = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            if "s_max" not in header or "cycle_ratio" not in header:
                raise CLIError(f"{path}: design needs s_max and cycle_ratio columns")
            continue
        rows.append((float(cells[header.index("s_max")]),
                     float(cells[header.index("cycle_ratio")])))
    if not rows:
        raise CLIError(f"{path}: empty design")
    return rows


COMMANDS = {"fit": cmd_fit, "profile": cmd_profile, "bootstrap": cmd_bootstrap,
            "mcmc": cmd_mcmc, "compare": cmd_compare, "predict": cmd_predict,
            "simulate": cmd_simulate}


def main(argv=None):
    command = None
    try:
        cfg = resolve(sys.argv[1:] if argv is None else argv)
        command = cfg["command"]
        COMMANDS[command](cfg)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        record = {"error": type(exc).__name__, "message": str(exc).replace("\n", " "),
                  "command": command}
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
