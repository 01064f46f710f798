"""Command-line runner: ``pgica {generate,fit,metrics,bench,theory,rerun}``.

Every output file embeds the resolved settings of the command that wrote
it, so ``pgica rerun FILE --out NEW`` reproduces FILE byte for byte.
Settings can also come from an INI file (``--config``) with one section per
subcommand (``[fit]``, ``[theory.lan]``); flags given on the command line
win. Relative output paths are resolved against ``$PGICA_OUTPUT_DIR`` when
it is set.

Exit codes: 0 on success (for ``theory``, only if every check passes), 1 on
a runtime failure or failed check, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import NoConvergenceWarning, PgicaError

OUTPUT_DIR_ENV = "PGICA_OUTPUT_DIR"
FIT_METHODS = ("gibbs-ice", "gibbs-t", "em", "mackay", "fastica")
BENCH_METHODS = ("gibbs-ice", "em", "mackay", "fastica")
# flags that never change file contents
_NOT_EMBEDDED = {"out", "config", "metrics_csv", "trace", "workers", "func", "command"}


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------------

def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _embedded(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_EMBEDDED}
    cfg["command"] = args.command
    return cfg


def _csv_text(rows, config: dict, columns=None) -> str:
    from .metrics import CSV_COLUMNS, rows_to_csv

    return "# config=" + _dump(config) + "\n" + rows_to_csv(rows, columns or CSV_COLUMNS)


def _strip_comments(text: str) -> str:
    return "".join(line + "\n" for line in text.splitlines() if not line.startswith("#"))


def _csv_list(text, cast=str):
    if isinstance(text, (list, tuple)):
        return [cast(t) for t in text]
    return [cast(t.strip()) for t in str(text).split(",") if t.strip()]


def _sizes(text):
    out = []
    for tok in _csv_list(text):
        try:
            n, d = tok.lower().split("x")
            out.append((int(n), int(d)))
        except ValueError:
            raise UsageError(f"size {tok!r} is not of the form NxD") from None
    return out


def _truth_label(ds) -> str:
    if ds.truth is not None and ds.truth.family is not None:
        return ds.truth.family.token
    return ds.protocol


# -- generate ---------------------------------------------------------------------------

def _generate(cfg: dict):
    from .datagen import generate_benchmark, generate_hierarchical

    if cfg["protocol"] == "hierarchical":
        ds = generate_hierarchical(cfg["n"], cfg["d"], cfg["sigma"], cfg["sigma2"], cfg["hard"], cfg["seed"])
    else:
        if not cfg.get("family"):
            raise UsageError("--family is required for the benchmark protocol")
        ds = generate_benchmark(cfg["family"], cfg["n"], cfg["d"], cfg["sigma"], cfg["seed"])
    ds.meta["config"] = cfg
    return ds


def cmd_generate(args) -> int:
    from .datagen import save_dataset

    cfg = _embedded(args)
    ds = _generate(cfg)
    path = _out_path(args.out or f"{args.protocol}_n{args.n}_d{args.d}_seed{args.seed}.jsonl")
    save_dataset(ds, path)
    print(path)
    meta = {k: v for k, v in ds.metadata().items() if k != "config"}
    print(_dump(meta))
    return 0


# -- fit ----------------------------------------------------------------------------

def _fit(ds, cfg: dict):
    """Run one method on a dataset; returns a FitResult with S_hat/A_hat extras for samplers."""
    from .gibbs import GibbsConfig, StudentTGibbsConfig, posterior_summary, run_gibbs_ice, run_student_t_gibbs
    from .numerics import matrix_to_record
    from .optim import FitResult, em_fit, fastica, mackay_fit

    method = cfg["method"]
    X = ds.X
    trace = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergenceWarning)
        if method == "gibbs-ice":
            sigma = cfg.get("sigma")
            if sigma is None:
                if ds.truth is None:
                    raise UsageError("--sigma is required when the dataset carries no noise level")
                sigma = ds.truth.sigma
            gc = GibbsConfig(cfg["iters"], cfg["burnin"], cfg["thin"], sigma, cfg["sigma2"], cfg["seed"],
                             cfg["keep_sources"], cfg["init"])
            trace = run_gibbs_ice(X, gc)
        elif method == "gibbs-t":
            gc = StudentTGibbsConfig(cfg["iters"], cfg["burnin"], cfg["thin"], alpha=cfg["alpha"], lam=cfg["lam"],
                                     seed=cfg["seed"], keep_sources=cfg["keep_sources"], init=cfg["init"])
            trace = run_student_t_gibbs(X, gc)
        elif method == "em":
            fit = em_fit(X, max_iter=cfg["max_iter"], tol=cfg["tol"])
        elif method == "mackay":
            fit = mackay_fit(X, eta=cfg["eta"], max_iter=cfg["max_iter"], tol=cfg["tol"])
        elif method == "fastica":
            fit = fastica(X, max_iter=cfg["max_iter"], tol=cfg["tol"], seed=cfg["seed"])
        else:
            raise UsageError(f"unknown method {method!r}")
    if trace is not None:
        from .optim import sech_objective

        ps = posterior_summary(trace)
        fit = FitResult(method, ps["W_mean"], cfg["iters"], sech_objective(ps["W_mean"], X), True,
                        extra={"A_hat": matrix_to_record(ps["A_mean"]), "S_hat": matrix_to_record(ps["S_mean"]),
                               "kept": len(trace)})
    fit.extra["seed"] = cfg["seed"]
    return fit, trace


def _metrics_row(ds, fit, runtime_ms=None) -> dict:
    from .metrics import evaluate
    from .numerics import matrix_from_record

    S_hat = matrix_from_record(fit.extra["S_hat"]) if "S_hat" in fit.extra else None
    A_hat = matrix_from_record(fit.extra["A_hat"]) if "A_hat" in fit.extra else None
    rep = evaluate(ds.X, fit.W, ds.truth.S, ds.truth.A, S_hat=S_hat, A_hat=A_hat)
    return {"method": fit.method, "family": _truth_label(ds), "n": ds.n, "d": ds.d, "sigma": ds.truth.sigma,
            "seed": fit.extra.get("seed", ""), "amari": rep.amari, "src": rep.src, "rmse": rep.rmse,
            "d_pm": rep.d_pm, "runtime_ms": "" if runtime_ms is None else runtime_ms}


def _append_csv(path: Path, row: dict):
    from .metrics import CSV_COLUMNS, rows_to_csv

    text = rows_to_csv([row])
    if path.exists() and path.stat().st_size > 0:
        text = text.split("\n", 1)[1]
    with open(path, "a") as fh:
        fh.write(text)


def cmd_fit(args) -> int:
    from .datagen import load_dataset
    from .gibbs import save_trace

    cfg = _embedded(args)
    ds = load_dataset(args.data)
    t0 = time.perf_counter()
    fit, trace = _fit(ds, cfg)
    runtime = round(1000.0 * (time.perf_counter() - t0), 3) if args.timing else None
    fit.extra["config"] = cfg
    fit.extra["backend"] = BACKEND
    if runtime is not None:
        fit.extra["runtime_ms"] = runtime
    out = _out_path(args.out or f"fit_{args.method}_seed{args.seed}.json")
    from .optim import save_fit

    save_fit(fit, out)
    print(out)
    if trace is not None and args.trace:
        tpath = _out_path(args.trace)
        save_trace(trace, tpath)
        print(tpath)
    if ds.truth is None:
        print("notice: dataset has no ground truth; metrics row omitted", file=sys.stderr)
        return 0
    row = _metrics_row(ds, fit, runtime)
    if args.metrics_csv:
        _append_csv(_out_path(args.metrics_csv), row)
    print(_dump({k: row[k] for k in ("amari", "src", "rmse", "d_pm")}))
    return 0


# -- metrics ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    from .datagen import load_dataset
    from .optim import load_fit

    ds = load_dataset(args.data)
    if ds.truth is None:
        raise UsageError("dataset has no ground truth to score against")
    fit = load_fit(args.estimate)
    if fit.W.shape != (ds.d, ds.d):
        raise ValueError(f"estimate is {fit.W.shape}, dataset has d={ds.d}")
    row = _metrics_row(ds, fit)
    text = _csv_text([row], _embedded(args))
    if args.out:
        p = _out_path(args.out)
        p.write_text(text)
        print(p)
    else:
        sys.stdout.write(text)
    return 0


# -- bench -------------------------------------------------------------------------------

def _bench_cell(task):
    """One (family, size, sigma, replicate, method) cell; never raises."""
    cfg, family, n, d, sigma, rep, method = task
    from .datagen import generate_benchmark

    seed = cfg["seed"] + rep
    row = {"method": method, "family": family, "n": n, "d": d, "sigma": sigma, "seed": seed}
    try:
        ds = generate_benchmark(family, n, d, sigma, seed)
        fit_cfg = dict(cfg, method=method, seed=seed, sigma=sigma, keep_sources=False, init="em")
        t0 = time.perf_counter()
        fit, _ = _fit(ds, fit_cfg)
        runtime = round(1000.0 * (time.perf_counter() - t0), 3) if cfg["timing"] else None
        row.update(_metrics_row(ds, fit, runtime))
        row["status"] = "ok"
    except Exception as exc:  # partial-failure policy: record and continue
        row.update({"amari": "", "src": "", "rmse": "", "d_pm": "", "runtime_ms": "",
                    "status": f"error: {type(exc).__name__}: {exc}"})
    return row


AGG_COLUMNS = ["method", "family", "n", "d", "sigma", "reps", "errors", "statistic", "amari", "src", "rmse",
               "d_pm", "gate"]


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Mean and median of each metric per (method, family, n, d, sigma) cell."""
    cells: dict = {}
    for r in rows:
        key = (r["method"], r["family"], int(r["n"]), int(r["d"]), float(r["sigma"]))
        cells.setdefault(key, []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: (k[1], k[2], k[4], k[0])):
        group = cells[key]
        ok = [r for r in group if r.get("status", "ok") == "ok"]
        for stat, fn in (("mean", np.mean), ("median", np.median)):
            rec = dict(zip(("method", "family", "n", "d", "sigma"), key))
            rec.update(reps=len(group), errors=len(group) - len(ok), statistic=stat)
            for m in ("amari", "src", "rmse", "d_pm"):
                vals = [float(r[m]) for r in ok if r[m] not in ("", None)]
                rec[m] = float(fn(vals)) if vals else ""
            rec["gate"] = _gate(rec)
            out.append(rec)
    return out


def _gate(rec) -> str:
    if (rec["method"], rec["family"], rec["n"], rec["d"], rec["sigma"], rec["statistic"]) == (
            "gibbs-ice", "laplace", 500, 4, 0.01, "mean"):
        return "PASS" if rec["src"] != "" and rec["src"] >= 0.9 else "FAIL"
    return ""


def cmd_bench(args) -> int:
    cfg = _embedded(args)
    families = _csv_list(args.families)
    sizes = _sizes(args.sizes)
    sigmas = _csv_list(args.sigmas, float)
    methods = _csv_list(args.methods)
    for m in methods:
        if m not in FIT_METHODS:
            raise UsageError(f"unknown method {m!r}")
    tasks = [(cfg, f, n, d, s, r, m) for f in families for (n, d) in sizes for s in sigmas
             for r in range(args.reps) for m in methods]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_bench_cell, tasks))
    else:
        rows = [_bench_cell(t) for t in tasks]
    from .metrics import CSV_COLUMNS

    out_dir = _out_path(args.out or "bench")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rows.csv").write_text(_csv_text(rows, cfg, CSV_COLUMNS + ["status"]))
    note = f"# aggregation=mean and median over {args.reps} replicates per cell\n"
    agg_text = _csv_text(aggregate_rows(rows), cfg, AGG_COLUMNS)
    head, body = agg_text.split("\n", 1)
    (out_dir / "aggregate.csv").write_text(head + "\n" + note + body)
    print(out_dir / "rows.csv")
    print(out_dir / "aggregate.csv")
    errors = sum(r["status"] != "ok" for r in rows)
    if errors:
        print(f"{errors} of {len(rows)} cells failed", file=sys.stderr)
    return 0


def read_bench_rows(path) -> list[dict]:
    from .metrics import read_csv_rows

    return read_csv_rows(_strip_comments(Path(path).read_text()))


# -- theory -------------------------------------------------------------------------

def _theory(cfg: dict) -> dict:
    from .numerics import RngStream
    from .theory import (NoiselessModel, bvm_report, check_ibp, contraction_study, fisher_info_mc,
                         fisher_info_quadrature, lan_study, loglog_slope, rwm_posterior)

    check = cfg["check"]
    model = NoiselessModel.build(cfg["family"], cfg["d"], seed=cfg["seed"])
    rng = RngStream(cfg["seed"], 100)
    fam = model.families[0].token
    if check == "ibp":
        return check_ibp(model, cfg["draws"], rng).to_record(fam)
    if check == "fisher":
        fi = fisher_info_mc(model, cfg["draws"], rng)
        se = np.sqrt(fi.standard_error ** 2 + fi.outer_se ** 2)
        diff = np.abs(fi.matrix - fi.outer)
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff < 1e-10, 0.0, np.inf))
        details = {"information": fi.matrix, "outer_product": fi.outer, "min_eigenvalue": fi.min_eigenvalue(),
                   "max_abs_z": float(np.max(z))}
        if model.smooth:
            q = fisher_info_quadrature(model)
            details["quadrature"] = q
            details["max_abs_diff_quadrature"] = float(np.max(np.abs(q - fi.matrix)))
        return {"check": "fisher", "family": fam, "d": model.d, "draws": cfg["draws"],
                "residuals": (fi.matrix - fi.outer).tolist(), "pass": bool(np.max(z) <= 4.0), "details": details}
    fisher = fisher_info_mc(model, cfg["fisher_draws"], rng).matrix
    if check == "lan":
        rep = lan_study(model, _csv_list(cfg["ns"], int), cfg["reps"], cfg["h_norm"], rng, fisher)
        return rep.to_record(fam, model.d, (-0.7, -0.3))
    if check == "bvm":
        r = RngStream(cfg["seed"], 200 + cfg["n"])
        X = model.sample(cfg["n"], r)
        tr = rwm_posterior(X, model, cfg["prior_sd"], cfg["iters"], cfg["iters"] // 10, 0.05, r)
        rep = bvm_report(tr, model, fisher, cfg["n"])
        quant = contraction_study(model, _csv_list(cfg["contraction_ns"], int), cfg["contraction_reps"],
                                  cfg["contraction_iters"], cfg["seed"], prior_sd=cfg["prior_sd"])
        slope = loglog_slope(list(quant), list(quant.values()))
        ok_cov = rep.max_rel_err <= 0.15
        ok_slope = -0.65 <= slope <= -0.35
        ok_ks = bool(np.all(rep.ks_stats <= rep.ks_critical))
        return {"check": "bvm", "family": fam, "d": model.d, "N": cfg["n"],
                "residuals": rep.rel_err_diag.tolist(),
                "slopes": {"dpm_q90": slope}, "pass": bool(ok_cov and ok_slope and ok_ks),
                "details": {"scaled_cov": rep.scaled_cov, "inverse_information": rep.reference,
                            "max_rel_err": rep.max_rel_err, "ks": rep.ks_stats, "ks_critical": rep.ks_critical,
                            "ess": rep.ess, "acceptance": tr.acceptance,
                            "dpm_q90": {str(k): v for k, v in quant.items()},
                            "pass_cov": ok_cov, "pass_slope": ok_slope, "pass_ks": ok_ks}}
    raise UsageError(f"unknown theory check {check!r}")


def cmd_theory(args) -> int:
    from .theory import report_json

    cfg = _embedded(args)
    rec = _theory(cfg)
    rec["config"] = cfg
    text = report_json(rec) + "\n"
    p = _out_path(args.out or f"theory_{args.check}_{args.family}_seed{args.seed}.json")
    p.write_text(text)
    print(p)
    print(f"{args.check}: {'PASS' if rec['pass'] else 'FAIL'}")
    return 0 if rec["pass"] else 1


# -- rerun ----------------------------------------------------------------------------

def _read_embedded(path: Path) -> dict:
    text = path.read_text()
    first = text.split("\n", 1)[0]
    if first.startswith("# config="):
        return json.loads(first[len("# config="):])
    rec = json.loads(first)
    if "config" in rec:
        return rec["config"]
    raise UsageError(f"{path} carries no embedded config")


def config_to_argv(cfg: dict) -> list[str]:
    """Command-line arguments that reproduce an embedded config."""
    cfg = dict(cfg)
    command = cfg.pop("command")
    argv = [command]
    if command == "theory":
        argv.append(cfg.pop("check"))
    for k, v in sorted(cfg.items()):
        flag = "--" + k.replace("_", "-")
        if isinstance(v, bool):
            if v:
                argv.append(flag)
        elif v is None:
            continue
        elif isinstance(v, (list, tuple)):
            argv += [flag, ",".join(str(x) for x in v)]
        elif isinstance(v, float):
            argv += [flag, repr(v)]
        else:
            argv += [flag, str(v)]
    return argv


def cmd_rerun(args) -> int:
    cfg = _read_embedded(Path(args.file))
    argv = config_to_argv(cfg) + ["--out", args.out]
    return main(argv)


# -- parser ------------------------------------------------------------------------------

def _add_common(p, seed_required=True):
    p.add_argument("--seed", type=int, default=None, help="random seed" + (" (required)" if seed_required else ""))
    p.add_argument("--out", default=None, help="output path (relative paths honour $PGICA_OUTPUT_DIR)")
    p.add_argument("--config", default=None, help="INI file with a section for this subcommand")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgica", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pgica {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset")
    g.add_argument("--protocol", choices=("hierarchical", "benchmark"), default=None)
    g.add_argument("--family", default=None, help="source family token (benchmark protocol)")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--d", type=int, default=4)
    g.add_argument("--sigma", type=float, default=0.01)
    g.add_argument("--sigma2", type=float, default=1.0)
    g.add_argument("--hard", action="store_true", help="shrink the first hierarchical component")
    _add_common(g)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit one method to a dataset file")
    f.add_argument("--data", default=None)
    f.add_argument("--method", choices=FIT_METHODS, default=None)
    f.add_argument("--iters", type=int, default=4000)
    f.add_argument("--burnin", type=int, default=2000)
    f.add_argument("--thin", type=int, default=5)
    f.add_argument("--sigma", type=float, default=None, help="noise SD for gibbs-ice (default: dataset value)")
    f.add_argument("--sigma2", type=float, default=1.0)
    f.add_argument("--alpha", type=float, default=3.0)
    f.add_argument("--lam", type=float, default=1.0)
    f.add_argument("--init", choices=("em", "fastica", "identity"), default="em")
    f.add_argument("--max-iter", type=int, default=1000)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--eta", type=float, default=0.1)
    f.add_argument("--keep-sources", action="store_true")
    f.add_argument("--trace", default=None, help="also write the sampler trace here")
    f.add_argument("--metrics-csv", default=None, help="append the metrics row to this CSV")
    f.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reruns)")
    _add_common(f)
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("metrics", help="score an estimate file against a dataset's truth")
    m.add_argument("--data", default=None)
    m.add_argument("--estimate", default=None)
    m.add_argument("--out", default=None)
    m.add_argument("--config", default=None)
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("bench", help="run the benchmark grid")
    b.add_argument("--families", default="sech,t3,laplace,mixed")
    b.add_argument("--sizes", default="500x4,2000x8")
    b.add_argument("--sigmas", default="0.01,0.05")
    b.add_argument("--methods", default=",".join(BENCH_METHODS))
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--iters", type=int, default=4000)
    b.add_argument("--burnin", type=int, default=2000)
    b.add_argument("--thin", type=int, default=5)
    b.add_argument("--sigma2", type=float, default=1.0)
    b.add_argument("--alpha", type=float, default=3.0)
    b.add_argument("--lam", type=float, default=1.0)
    b.add_argument("--max-iter", type=int, default=1000)
    b.add_argument("--tol", type=float, default=1e-8)
    b.add_argument("--eta", type=float, default=0.1)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--timing", action="store_true")
    _add_common(b)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("theory", help="large-sample diagnostics")
    tsub = t.add_subparsers(dest="check", required=True)
    for name in ("ibp", "lan", "bvm", "fisher"):
        tp = tsub.add_parser(name)
        tp.add_argument("--family", default="sech")
        tp.add_argument("--d", type=int, default=2)
        if name in ("ibp", "fisher"):
            tp.add_argument("--draws", type=int, default=100_000)
        else:
            tp.add_argument("--fisher-draws", type=int, default=200_000)
        if name == "lan":
            tp.add_argument("--ns", default="250,1000,4000")
            tp.add_argument("--reps", type=int, default=50)
            tp.add_argument("--h-norm", type=float, default=3.0)
        if name == "bvm":
            tp.add_argument("--n", type=int, default=8000)
            tp.add_argument("--iters", type=int, default=200_000)
            tp.add_argument("--prior-sd", type=float, default=100.0)
            tp.add_argument("--contraction-ns", default="500,2000,8000")
            tp.add_argument("--contraction-reps", type=int, default=3)
            tp.add_argument("--contraction-iters", type=int, default=40_000)
        _add_common(tp)
        tp.set_defaults(func=cmd_theory)

    r = sub.add_parser("rerun", help="re-execute the command embedded in an output file")
    r.add_argument("file")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rerun)
    return parser


_REQUIRED = {
    "generate": ("seed", "protocol"),
    "fit": ("seed", "data", "method"),
    "metrics": ("data", "estimate"),
    "bench": ("seed",),
    "theory": ("seed",),
}


def _apply_config(parser, sub_parser, args, argv):
    """Fill values from the INI section of this subcommand unless given as flags."""
    section = args.command if args.command != "theory" else f"theory.{args.check}"
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise UsageError(f"cannot read config file {args.config}")
    if not cp.has_section(section):
        return args
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    actions = {a.dest: a for a in sub_parser._actions}
    for key, raw in cp.items(section):
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"[{section}] unknown key {key!r}")
        act = actions[dest]
        if any(opt in given for opt in act.option_strings):
            continue
        if isinstance(act, argparse._StoreTrueAction):
            val = cp.getboolean(section, key)
        else:
            val = act.type(raw) if act.type else raw
            if act.choices and val not in act.choices:
                raise UsageError(f"[{section}] {key}: {val!r} not in {list(act.choices)}")
        setattr(args, dest, val)
    return args


def _subparser(parser, args):
    sp = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    if args.command == "theory":
        sp = next(a for a in sp._actions if isinstance(a, argparse._SubParsersAction)).choices[args.check]
    return sp


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    sp = _subparser(parser, args)
    try:
        if getattr(args, "config", None):
            args = _apply_config(parser, sp, args, argv)
        for name in _REQUIRED.get(args.command, ()):
            if getattr(args, name, None) is None:
                raise UsageError(f"the following arguments are required: --{name.replace('_', '-')}")
        return args.func(args)
    except UsageError as exc:
        sp.print_usage(sys.stderr)
        print(f"{sp.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (PgicaError, ValueError, OSError, KeyError) as exc:
        print(f"pgica {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
