"""
Command-line interface.

Exit codes: 0 success (including statuses such as ``no_root``), 1 usage
error, 2 data or model error, 3 advisory warnings under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import DEFAULT_THRESHOLDS, Thresholds, beta_conditioning, crlb, nem_diagnostics
from .errors import NetDisturbError
from .graph import (
    gnp,
    read_edge_list,
    row_normalized_weights,
    special_graph,
    two_block_mixture,
    write_edge_list,
)
from .mle import fit_mle, mle_theory
from .model import DisturbanceModel, read_csv_matrix, simulate, write_csv_matrix
from .quadform import fit_quadform, permutation_spread
from .simlab import load_config, run_experiment, summarize

__all__ = ["main", "record_to_text", "record_from_text", "DEFAULT_SEED"]

#: Seed used whenever ``--seed`` is omitted.
DEFAULT_SEED = 20240101


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# -- records ------------------------------------------------------------------


def _plain(v):
    if isinstance(v, np.ndarray):
        return [_plain(t) for t in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(t) for t in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def record_to_text(record, fmt="json"):
    """Serialize a flat record. Non-finite reals are written as ``NaN`` /
    ``Infinity`` so that every value round-trips exactly."""
    rec = {k: _plain(v) for k, v in record.items()}
    if fmt == "json":
        return json.dumps(rec) + "\n"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(rec.keys())
    wr.writerow([_csv_cell(v) for v in rec.values()])
    return buf.getvalue()


def _csv_cell(v):
    # strings stay bare unless they would read back as some other JSON value
    if isinstance(v, str):
        try:
            json.loads(v)
        except ValueError:
            return v
    return json.dumps(v)


def record_from_text(text, fmt="json"):
    if fmt == "json":
        return json.loads(text)
    rows = list(csv.reader(io.StringIO(text)))
    out = {}
    for k, v in zip(rows[0], rows[1]):
        try:
            out[k] = json.loads(v)
        except ValueError:
            out[k] = v
    return out


# -- helpers ------------------------------------------------------------------


def _floats(s):
    try:
        return [float(t) for t in s.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of reals, got {s!r}") from None


def _graph_from_args(a, rng_seed):
    if getattr(a, "edges", None):
        return read_edge_list(a.edges)
    if a.graph is None:
        raise UsageError("give --graph or --edges")
    if a.graph == "gnp":
        return gnp(a.n, a.p, rng_seed)
    if a.graph == "mixture":
        return two_block_mixture(a.block_size, a.p, rng_seed)
    return special_graph(a.graph, a.n)


def _model(a):
    g = read_edge_list(a.edges)
    w = row_normalized_weights(g)
    if a.x:
        x = read_csv_matrix(a.x, header=a.header)
    else:
        x = np.ones((g.n, 1))
    if x.shape[0] != g.n:
        raise ValueError(f"{a.x}: {x.shape[0]} rows but the graph has {g.n} vertices")
    return g, DisturbanceModel(x, w)


def _response(a, n):
    y = read_csv_matrix(a.y, header=a.header, columns=1)[:, 0]
    if y.size != n:
        raise ValueError(f"{a.y}: {y.size} rows but the graph has {n} vertices")
    return y


def _c_arg(c):
    if c.lower() in ("w", "a"):
        return c.lower()
    return read_csv_matrix(c)


def _thresholds(a):
    return Thresholds(
        gamma=a.gamma_threshold,
        nem_information=a.nem_threshold,
        lambda_max_wtw=DEFAULT_THRESHOLDS.lambda_max_wtw,
    )


def _emit(a, record, out):
    out.write(record_to_text(record, a.output))
    return 3 if a.strict and record.get("warnings") else 0


# -- subcommands --------------------------------------------------------------


def cmd_generate(a, out):
    g = _graph_from_args(a, a.seed)
    if a.out:
        write_edge_list(g, a.out)
    else:
        write_edge_list(g, out)
    return 0


def cmd_simulate(a, out):
    _, model = _model(a)
    beta = _floats(a.beta) if a.beta else [1.0] * model.m
    y = simulate(model, beta, a.sigma, a.rho, a.seed)
    write_csv_matrix(y, a.out if a.out else out)
    return 0


def cmd_fit(a, out):
    _, model = _model(a)
    y = _response(a, model.n)
    rec = {"method": a.method}
    warns = []
    if a.method == "mle":
        r = fit_mle(model, y)
        rec.update(status=r.status, rho_hat=r.rho_hat)
        fit = r.fit
        scale = float("nan")
        if r.status == "converged":
            th = mle_theory(model, r.rho_hat)
            rec.update(psi0=th.psi0, bias_estimate=th.bias_estimate)
            scale = th.psi0
        else:
            rec.update(psi0=float("nan"), bias_estimate=float("nan"))
        rec["rough_guide"] = ["psi0", "bias_estimate"]
    else:
        r = fit_quadform(model, y, _c_arg(a.c))
        rec.update(status=r.status, rho_hat=r.rho_hat, c_kind=r.c_kind, roots=list(r.roots))
        fit = r.fit
        scale = r.scale
        rec.update(tau_hat_sq=r.tau_hat_sq, delta_hat=r.delta_hat)
    rec["beta_hat"] = fit.beta_hat if fit is not None else []
    rec["sigma2_hat"] = fit.sigma2_hat if fit is not None else float("nan")
    rec["scale"] = scale
    rho_g = rec["rho_hat"] if math.isfinite(rec["rho_hat"]) else 0.0
    pr = crlb(model.w, rho_g, thresholds=_thresholds(a))
    rec["gamma"] = pr.gamma
    warns.extend(pr.warnings)
    if rec["status"] != "converged":
        warns.append(f"estimator status {rec['status']}")
    rec["warnings"] = warns
    return _emit(a, rec, out)


def cmd_crlb(a, out):
    g = _graph_from_args(a, a.seed)
    w = row_normalized_weights(g)
    x = None
    if a.x:
        x = read_csv_matrix(a.x, header=a.header)
    pr = crlb(w, a.rho, x, thresholds=_thresholds(a))
    rec = {
        "n": g.n,
        "rho0": a.rho,
        "gamma": pr.gamma,
        "trace_z2": pr.trace_z2,
        "trace_zzt": pr.trace_zzt,
        "v_rho0": pr.v_rho0,
        "psi0": pr.psi0,
        "lambda_max_wtw": pr.lambda_max_wtw,
        "warnings": list(pr.warnings),
    }
    return _emit(a, rec, out)


def cmd_diagnose(a, out):
    _, model = _model(a)
    th = _thresholds(a)
    plug_in = a.beta is None or a.sigma is None or a.rho0 is None
    if plug_in:
        y = _response(a, model.n) if a.y else None
        if y is None:
            raise UsageError("diagnose needs --y, or all of --beta, --sigma and --rho0")
        r = fit_quadform(model, y, "w", with_scale=False)
        if r.status != "converged":
            r = fit_mle(model, y)
        rho0 = r.rho_hat if a.rho0 is None else a.rho0
        beta = r.fit.beta_hat if a.beta is None else _floats(a.beta)
        sigma = math.sqrt(r.fit.sigma2_hat) if a.sigma is None else a.sigma
    else:
        rho0, beta, sigma = a.rho0, _floats(a.beta), a.sigma
    cond = beta_conditioning(model, a.rho_fit, rho0, thresholds=th)
    nem = nem_diagnostics(model, beta, sigma, rho0, rho_fit=a.rho_fit, thresholds=th)
    pr = crlb(model.w, rho0, thresholds=th)
    warns = list(dict.fromkeys(pr.warnings + cond.warnings + nem.warnings))
    rec = {
        "plug_in": plug_in,
        "rho0": rho0,
        "rho_fit": a.rho_fit,
        "beta": list(np.asarray(beta, dtype=float)),
        "sigma": sigma,
        "gamma": pr.gamma,
        "lambda_min_xtx": cond.lambda_min_xtx,
        "lambda_min_s": cond.lambda_min_s,
        "lambda_max_s_ratio": cond.lambda_max_s_ratio,
        "lambda_max_wtw": cond.lambda_max_wtw,
        "lambda_max_ete": nem.lambda_max_ete,
        "v1": nem.v1,
        "v2": nem.v2,
        "beta_offset": nem.beta_offset,
        "warnings": warns,
    }
    return _emit(a, rec, out)


def cmd_permtest(a, out):
    _, model = _model(a)
    y = _response(a, model.n)
    qf = fit_quadform(model, y, _c_arg(a.c))
    if qf.status != "converged":
        rec = {"status": qf.status, "rho_hat": qf.rho_hat, "reps": a.reps, "warnings": ["estimator status no_root"]}
        return _emit(a, rec, out)
    res = permutation_spread(model, y, qf, a.reps, a.seed)
    if a.dump:
        lines = "".join(format(v, ".17g") + "\n" for v in res.estimates)
        Path(a.dump).write_text(lines, encoding="utf-8")
    s = summarize(res.estimates)
    rec = {
        "status": qf.status,
        "rho_hat": qf.rho_hat,
        "scale": qf.scale,
        "reps": a.reps,
        "no_root": res.no_root,
        "perm_mean": s["mean"],
        "perm_se": s["se_single"],
        "seed": a.seed,
        "warnings": [],
    }
    return _emit(a, rec, out)


def cmd_experiment(a, out):
    from dataclasses import replace

    cfg = load_config(a.config)
    over = {}
    if a.seed_given:
        over["master_seed"] = a.seed
    if a.threads is not None:
        over["threads"] = a.threads
    if a.dump_dir:
        over["dump"] = True
    if a.dump_beta:
        over["dump_beta"] = True
    cfg = replace(cfg, **over)
    if (cfg.dump or cfg.dump_beta) and not a.dump_dir:
        raise UsageError("dumping estimates needs --dump-dir")
    table = run_experiment(cfg)
    text = table.to_csv() if a.output == "csv" else table.to_jsonl()
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if a.dump_dir:
        d = Path(a.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        for key in table.dumps:
            name = f"cell{key[0]}_{key[1]}" + ("_beta.csv" if len(key) == 3 else ".txt")
            (d / name).write_text(table.dump_lines(key), encoding="utf-8")
    return 0


# -- parser -------------------------------------------------------------------


def _build_parser():
    p = _Parser(prog="netdisturb", description="Network disturbance model estimation and diagnostics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, seed=True, fmt=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
        if fmt:
            sp.add_argument("--output", choices=("json", "csv"), default="json")
            sp.add_argument("--strict", action="store_true", help="exit 3 when advisories are raised")
            sp.add_argument("--gamma-threshold", type=float, default=DEFAULT_THRESHOLDS.gamma)
            sp.add_argument("--nem-threshold", type=float, default=DEFAULT_THRESHOLDS.nem_information)

    def graph_args(sp, edges=True):
        sp.add_argument("--graph", choices=("gnp", "mixture", "star", "complete"))
        sp.add_argument("--n", type=int, default=100)
        sp.add_argument("--p", type=float, default=0.1)
        sp.add_argument("--block-size", type=int, default=50)
        if edges:
            sp.add_argument("--edges", help="edge-list file instead of --graph")

    def data_args(sp, y=True, y_required=True):
        sp.add_argument("--edges", required=True, help="edge-list file")
        sp.add_argument("--x", help="design CSV (default: intercept only)")
        if y:
            sp.add_argument("--y", required=y_required, help="response CSV, one column")
        sp.add_argument("--header", action="store_true", help="skip one header row in CSV inputs")

    sp = sub.add_parser("generate", help="sample a graph and write an edge list")
    graph_args(sp, edges=False)
    common(sp, fmt=False)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("simulate", help="simulate a response from the model")
    data_args(sp, y=False)
    sp.add_argument("--beta")
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--rho", type=float, required=True)
    sp.add_argument("--out")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="estimate rho")
    data_args(sp)
    sp.add_argument("--method", choices=("mle", "qf"), default="qf")
    sp.add_argument("--c", default="w", help="w, a, or a CSV matrix file")
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("crlb", help="Cramer-Rao floor for rho")
    graph_args(sp)
    sp.add_argument("--rho", type=float, default=0.0)
    sp.add_argument("--x", help="design CSV; adds v(rho0) and psi0")
    sp.add_argument("--header", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_crlb)

    sp = sub.add_parser("diagnose", help="beta conditioning and network-effects diagnostics")
    data_args(sp, y_required=False)
    sp.add_argument("--beta")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--rho0", type=float)
    sp.add_argument("--rho-fit", type=float, default=0.0, help="rho used when fitting beta (default 0)")
    common(sp)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("permtest", help="permutation spread of the quadratic-form estimate")
    data_args(sp)
    sp.add_argument("--c", default="w")
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--dump", help="write the permutation estimates here, one per line")
    common(sp)
    sp.set_defaults(func=cmd_permtest)

    sp = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out")
    sp.add_argument("--dump-dir", help="write per-replicate rho estimates here, one file per cell and method")
    sp.add_argument("--dump-beta", action="store_true", help="also write per-replicate beta estimates")
    sp.add_argument("--seed", type=int, default=None, help="overrides master_seed in the config")
    sp.add_argument("--output", choices=("csv", "jsonl"), default="csv")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _build_parser()
    try:
        a = parser.parse_args(argv)
        a.seed_given = getattr(a, "seed", None) is not None
        if getattr(a, "seed", None) is None:
            a.seed = DEFAULT_SEED
        if getattr(a, "reps", 1) < 1:
            raise UsageError("--reps must be positive")
        return a.func(a, stdout)
    except SystemExit as exc:  # --help, --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=stderr)
        return 1
    except (NetDisturbError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"netdisturb: error: {exc}", file=stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
