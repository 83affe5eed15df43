"""
Seeded Monte-Carlo experiments.

An experiment is a list of cells. Each cell fixes a graph model, a design,
a true rho and the estimators to run. Within a cell the graph and design
are drawn once and the noise is redrawn for every replicate, unless
``resample_per_replicate`` is set. All randomness comes from
``SeedSequence(master_seed, spawn_key=...)`` keyed by cell and replicate
index, so results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .bounds import crlb
from .errors import FormatError, NetDisturbError
from .graph import gnp, read_edge_list, row_normalized_weights, special_graph, two_block_mixture
from .mle import fit_mle
from .model import DisturbanceModel, RhoCache, simulate
from .quadform import _Evaluator, fit_quadform, resolve_c

__all__ = [
    "GraphSpec",
    "DesignSpec",
    "CellSpec",
    "ExperimentConfig",
    "SummaryRow",
    "SummaryTable",
    "summarize",
    "sample_cell",
    "run_cell",
    "run_experiment",
    "parse_config",
    "load_config",
    "METHODS",
]

METHODS = ("mle", "qf_w", "qf_a")
DEFAULT_BETA = (1.0, 0.5, 0.4, 0.3)
GRAPH_KINDS = ("gnp", "mixture", "star", "complete", "file")
DESIGN_KINDS = ("intercept", "gaussian", "block_contrast")


@dataclass(frozen=True)
class GraphSpec:
    """``kind`` in gnp | mixture | star | complete | file.

    ``n`` is the vertex count (gnp, star, complete), ``block_size`` the
    size of each of the two mixture blocks, ``p`` the edge parameter and
    ``path`` the edge-list file.
    """

    kind: str = "gnp"
    n: int = 100
    p: float = 0.1
    block_size: int = 50
    path: str | None = None

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("graph kind 'file' needs a path")

    @property
    def param(self):
        return self.p if self.kind in ("gnp", "mixture") else float("nan")


@dataclass(frozen=True)
class DesignSpec:
    """Columns: intercept, then a +/-1 block contrast (``block_contrast``
    only), then ``k`` standard normal columns."""

    kind: str = "gaussian"
    k: int = 3

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.kind == "intercept" and self.k:
            object.__setattr__(self, "k", 0)
        if self.k < 0:
            raise ValueError("k must be >= 0")

    @property
    def m(self):
        return 1 + (self.kind == "block_contrast") + self.k

    def build(self, g, rng):
        cols = [np.ones(g.n)]
        if self.kind == "block_contrast":
            if g.blocks is None:
                raise ValueError("block_contrast design needs block labels on the graph")
            first = g.blocks == g.blocks.min()
            cols.append(np.where(first, 1.0, -1.0))
        if self.k:
            cols.extend(rng.standard_normal((self.k, g.n)))
        return np.column_stack(cols)


@dataclass(frozen=True)
class CellSpec:
    graph: GraphSpec
    design: DesignSpec
    rho: float
    beta: tuple = DEFAULT_BETA
    sigma: float = 1.0
    replicates: int = 100
    methods: tuple = ("qf_w",)
    resample_per_replicate: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if len(self.beta) != self.design.m:
            raise ValueError(f"beta has length {len(self.beta)} but the design has {self.design.m} columns")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A list of cells plus run-wide settings.

    ``resample_graph_per_cell`` (default True) draws a fresh graph and
    design for every cell; when False, cells sharing a graph and design
    specification reuse the draw of the first such cell. ``dump`` keeps the
    per-replicate rho estimates and ``dump_beta`` the per-replicate
    coefficient estimates.
    """

    cells: tuple
    master_seed: int = 20240101
    resample_graph_per_cell: bool = True
    threads: int = 1
    dump: bool = False
    dump_beta: bool = False

    @classmethod
    def grid(
        cls,
        graph: GraphSpec,
        design: DesignSpec,
        rho_values,
        p_values=None,
        **cell_kw,
    ):
        """Cells over the product of ``p_values`` (or the single graph) and ``rho_values``."""
        run_kw = {k: cell_kw.pop(k) for k in ("master_seed", "resample_graph_per_cell", "threads", "dump", "dump_beta") if k in cell_kw}
        ps = [graph.p] if p_values is None else list(p_values)
        cells = tuple(
            CellSpec(replace(graph, p=float(p)), design, float(r), **cell_kw) for p in ps for r in rho_values
        )
        return cls(cells, **run_kw)


@dataclass(frozen=True)
class SummaryRow:
    graph_param: float
    rho: float
    method: str
    mean: float
    se_single: float
    se_mean: float
    skewness: float
    count: int
    failures: int
    replicates: int
    gamma: float


SUMMARY_FIELDS = tuple(SummaryRow.__dataclass_fields__)


@dataclass(frozen=True, eq=False)
class SummaryTable:
    rows: tuple
    dumps: dict = field(default_factory=dict)

    def row(self, rho, method, graph_param=None):
        for r in self.rows:
            if r.method == method and math.isclose(r.rho, rho) and (
                graph_param is None or math.isclose(r.graph_param, graph_param)
            ):
                return r
        raise KeyError((rho, method, graph_param))

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(SUMMARY_FIELDS)
        for r in self.rows:
            wr.writerow([_fmt(getattr(r, f)) for f in SUMMARY_FIELDS])
        return buf.getvalue()

    def to_jsonl(self):
        return "".join(
            json.dumps({f: _json_val(getattr(r, f)) for f in SUMMARY_FIELDS}) + "\n" for r in self.rows
        )

    def dump_lines(self, key):
        """One replicate per line; coefficient dumps are comma separated."""
        return "".join(",".join(_fmt(float(t)) for t in np.atleast_1d(v)) + "\n" for v in self.dumps[key])


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def _json_val(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summarize(estimates):
    """Mean, single-estimate SE (ddof 1), SE of the mean, sample skewness.

    Non-finite values are dropped. With fewer than two values the SE and
    skewness fields are NaN.
    """
    x = np.asarray(estimates, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    nan = float("nan")
    out = {"mean": float(np.mean(x)) if n else nan, "se_single": nan, "se_mean": nan, "skewness": nan, "count": int(n)}
    if n >= 2:
        sd = float(np.std(x, ddof=1))
        out["se_single"] = sd
        out["se_mean"] = sd / math.sqrt(n)
        out["skewness"] = float(stats.skew(x, bias=False)) if n >= 3 and sd > 0 else 0.0
    return out


def _seq(master, *key):
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def sample_cell(cell: CellSpec, rng):
    """Draw the graph and design for a cell; returns ``(network, model)``."""
    gs = cell.graph
    if gs.kind == "gnp":
        g = gnp(gs.n, gs.p, rng)
    elif gs.kind == "mixture":
        g = two_block_mixture(gs.block_size, gs.p, rng)
    elif gs.kind == "file":
        g = read_edge_list(gs.path)
    else:
        g = special_graph(gs.kind, gs.n)
    w = row_normalized_weights(g)
    return g, DisturbanceModel(cell.design.build(g, rng), w)


def _estimate(method, model, y, cache, evaluators):
    """``(rho_hat, beta_hat)``; NaN marks a failed replicate."""
    if method == "mle":
        r = fit_mle(model, y, cache=cache)
    else:
        c = "w" if method == "qf_w" else "a"
        r = fit_quadform(model, y, c, with_scale=False, _evaluator=evaluators[c])
    if r.status != "converged":
        return float("nan"), np.full(model.m, np.nan)
    return r.rho_hat, r.fit.beta_hat


def _replicate(cell, model, rep_seq, cache, evaluators):
    rng = np.random.default_rng(rep_seq)
    if cell.resample_per_replicate:
        _, model = sample_cell(cell, rng)
        cache = RhoCache(model)
        evaluators = {c: _Evaluator(model, resolve_c(model.w, c)[1], cache) for c in ("w", "a")}
    y = simulate(model, cell.beta, cell.sigma, cell.rho, rng)
    out = {}
    for method in cell.methods:
        try:
            out[method] = _estimate(method, model, y, cache, evaluators)
        except (NetDisturbError, np.linalg.LinAlgError, ValueError):
            out[method] = float("nan"), np.full(model.m, np.nan)
    return out


def run_cell(cell: CellSpec, master_seed, cell_index, *, threads=1, model=None):
    """Run one cell; returns ``(rows, dumps)``.

    Replicate ``r`` of cell ``c`` uses ``SeedSequence(master, (c, 1, r))``;
    the graph and design use ``(c, 0)``. ``dumps`` maps ``(c, method)`` to
    the rho estimates and ``(c, method, "beta")`` to the coefficient rows.
    """
    if model is None:
        _, model = sample_cell(cell, np.random.default_rng(_seq(master_seed, cell_index, 0)))
    gamma = crlb(model.w, cell.rho).gamma
    cache = RhoCache(model)
    evaluators = {"w": _Evaluator(model, model.w.w, cache)}
    if model.w.adjacency is not None:
        evaluators["a"] = _Evaluator(model, model.w.adjacency, cache)
    seqs = [_seq(master_seed, cell_index, 1, r) for r in range(cell.replicates)]
    job = lambda s: _replicate(cell, model, s, cache, evaluators)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, seqs))
    else:
        results = [job(s) for s in seqs]
    rows, dumps = [], {}
    for method in cell.methods:
        est = np.array([r[method][0] for r in results])
        s = summarize(est)
        rows.append(
            SummaryRow(
                graph_param=float(cell.graph.param),
                rho=float(cell.rho),
                method=method,
                mean=s["mean"],
                se_single=s["se_single"],
                se_mean=s["se_mean"],
                skewness=s["skewness"],
                count=s["count"],
                failures=cell.replicates - s["count"],
                replicates=cell.replicates,
                gamma=float(gamma),
            )
        )
        dumps[(cell_index, method)] = est
        dumps[(cell_index, method, "beta")] = np.array([r[method][1] for r in results])
    return rows, dumps


def run_experiment(config: ExperimentConfig) -> SummaryTable:
    rows, dumps = [], {}
    shared = {}
    for ci, cell in enumerate(config.cells):
        model = None
        if not config.resample_graph_per_cell:
            key = (cell.graph, cell.design)
            if key not in shared:
                shared[key] = sample_cell(cell, np.random.default_rng(_seq(config.master_seed, ci, 0)))[1]
            model = shared[key]
        r, d = run_cell(cell, config.master_seed, ci, threads=config.threads, model=model)
        rows.extend(r)
        dumps.update(d)
    keep = {k: v for k, v in dumps.items() if (config.dump_beta if len(k) == 3 else config.dump)}
    return SummaryTable(tuple(rows), keep)


# -- configuration files ------------------------------------------------------

_CELL_KEYS = {
    "graph", "n", "p", "block_size", "graph_file", "design", "k", "rho", "beta",
    "sigma", "replicates", "methods", "resample_per_replicate",
}
_RUN_KEYS = {
    "master_seed", "seed", "resample_graph_per_cell", "threads", "dump", "dump_beta", "p_values", "rho_values",
}


def _parse_bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(t) for t in s.replace(",", " ").split()]


def _cell_from(opts, base_dir):
    graph = GraphSpec(
        kind=opts.get("graph", "gnp"),
        n=int(opts.get("n", 100)),
        p=float(opts.get("p", 0.1)),
        block_size=int(opts.get("block_size", 50)),
        path=str(base_dir / opts["graph_file"]) if "graph_file" in opts else None,
    )
    dkind = opts.get("design", "gaussian")
    design = DesignSpec(dkind, int(opts.get("k", 0 if dkind == "intercept" else 3 if dkind == "gaussian" else 2)))
    if "beta" in opts:
        beta = tuple(_floats(opts["beta"]))
    elif design.m == len(DEFAULT_BETA):
        beta = DEFAULT_BETA
    else:
        beta = (DEFAULT_BETA + (0.0,) * design.m)[: design.m]
    return CellSpec(
        graph=graph,
        design=design,
        rho=float(opts["rho"]),
        beta=beta,
        sigma=float(opts.get("sigma", 1.0)),
        replicates=int(opts.get("replicates", 100)),
        methods=tuple(opts.get("methods", "qf_w").replace(",", " ").split()),
        resample_per_replicate=_parse_bool(opts.get("resample_per_replicate", "false")),
    )


def parse_config(text, *, path="<config>", base_dir="."):
    """Parse a flat ``key = value`` experiment description.

    Top-level keys set defaults. Each ``[cell]`` section starts a cell that
    overrides them. Without sections, cells are the product of
    ``p_values`` (default: ``p``) and ``rho_values`` (default: ``rho``).
    ``#`` starts a comment.
    """
    base_dir = Path(base_dir)
    top, cells, cur = {}, [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[cell]":
                raise FormatError(path, lineno, "'[cell]' section header", line)
            cur = {}
            cells.append((lineno, cur))
            continue
        if "=" not in line:
            raise FormatError(path, lineno, "'key = value'", line)
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _CELL_KEYS | _RUN_KEYS or (cur is not None and key in _RUN_KEYS):
            raise FormatError(path, lineno, "a known key" if cur is None else "a cell key", key)
        (top if cur is None else cur)[key] = val
    try:
        run = {
            "master_seed": int(top.get("master_seed", top.get("seed", 20240101))),
            "resample_graph_per_cell": _parse_bool(top.get("resample_graph_per_cell", "true")),
            "threads": int(top.get("threads", 1)),
            "dump": _parse_bool(top.get("dump", "false")),
            "dump_beta": _parse_bool(top.get("dump_beta", "false")),
        }
    except ValueError as exc:
        raise FormatError(path, 0, "valid run settings", str(exc)) from None
    defaults = {k: v for k, v in top.items() if k in _CELL_KEYS}
    specs = []
    if cells:
        for lineno, opts in cells:
            try:
                specs.append(_cell_from({**defaults, **opts}, base_dir))
            except (KeyError, ValueError) as exc:
                raise FormatError(path, lineno, "a complete, valid cell", str(exc)) from None
    else:
        ps = _floats(top["p_values"]) if "p_values" in top else [None]
        rhos = _floats(top["rho_values"]) if "rho_values" in top else [None]
        for p in ps:
            for r in rhos:
                opts = dict(defaults)
                if p is not None:
                    opts["p"] = repr(p)
                if r is not None:
                    opts["rho"] = repr(r)
                try:
                    specs.append(_cell_from(opts, base_dir))
                except (KeyError, ValueError) as exc:
                    raise FormatError(path, 0, "rho or rho_values and valid cell settings", str(exc)) from None
    return ExperimentConfig(tuple(specs), **run)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path=path, base_dir=path.parent)
