"""Coverage study for the interval methods on simulated binomial pairs.

For each cell (n, RR, pF) we draw ``replications`` datasets yF ~ Bin(n, pF),
yC ~ Bin(n, pF / RR), compute one-sided lower and upper bounds with every
requested method, and summarise coverage, the median lower bound and how often
a method could not produce a bound.  Datasets without a bound are excluded from
coverage and reported separately.  ``exact_coverage`` replaces the Monte Carlo
average by an exact sum over all outcomes.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binom

from . import bootstrap as _boot
from . import ratio_intervals as ri
from . import wang_shan as _ws
from .core import InfeasibleSizeError

DEFAULT_N = (25, 50, 100, 400)
DEFAULT_RR = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_PF = (0.01, 0.025, 0.05, 0.10, 0.20)

CLOSED_FORM = ri.METHODS
ALL_METHODS = ri.METHODS + _boot.METHODS
EXACT_MAX_N = 400


@dataclass(frozen=True)
class ScenarioGrid:
    n_values: tuple = DEFAULT_N
    rr_values: tuple = DEFAULT_RR
    pF_values: tuple = DEFAULT_PF
    replications: int = 1000
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        for name in ("n_values", "rr_values", "pF_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise ValueError("n values must be positive integers")
        if any(not r > 0 for r in self.rr_values):
            raise ValueError("risk ratios must be positive")
        if any(not 0 < p <= 1 for p in self.pF_values):
            raise ValueError("pF values must lie in (0, 1]")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")

    def cells(self):
        """(n, i_rr, rr, i_pf, pF) for every cell with pC = pF / RR <= 1."""
        for n in self.n_values:
            for i, rr in enumerate(self.rr_values):
                for j, pf in enumerate(self.pF_values):
                    if pf / rr <= 1.0:
                        yield int(n), i, float(rr), j, float(pf)


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    n: int
    rr: float
    pF: float
    coverage_lower: float
    coverage_upper: float
    median_lower_bound: float
    prop_not_computable: float
    mc_standard_error: float
    mc_se_upper: float
    replications: int
    n_not_computable: int
    n_covered_lower: int
    n_covered_upper: int
    mean_degenerate_replicates: float | None = None
    policy: str | None = None

    @property
    def label(self) -> str:
        """Method tag, qualified by the degenerate-replicate policy when not the default."""
        if self.policy in (None, _boot.DegeneratePolicy.DROP_AND_FLAG.value):
            return self.method
        return f"{self.method}@{self.policy}"

    @property
    def cell(self) -> tuple[int, float, float]:
        return self.n, self.rr, self.pF

    @property
    def n_computable(self) -> int:
        return self.replications - self.n_not_computable


def _cell_rng(seed, n, rr, pf, stream):
    # keyed by the cell's values (float bit patterns) so any sub-grid reproduces it
    bits = [int(np.float64(x).view(np.uint64)) for x in (rr, pf)]
    ss = np.random.SeedSequence(seed, spawn_key=(n, *bits, stream))
    return np.random.Generator(np.random.PCG64(ss))


def missing_tables(n_values: Iterable[int], level: float) -> list[str]:
    missing = []
    for n in n_values:
        name = _ws.table_filename(n, n, level)
        if not any((d / name).is_file() for d in _ws._search_dirs()):
            missing.append(name)
    return missing


def _closed_form_bounds(method, yf, yc, n, level, tables):
    """Bounds for each dataset, computed once per distinct outcome."""
    keys = yf * (n + 1) + yc
    uniq, inv = np.unique(keys, return_inverse=True)
    uf, uc = uniq // (n + 1), uniq % (n + 1)
    if method == "wang-shan":
        t = tables[n]
        lo, hi = ri.wang_shan_bounds(uf, n, uc, n, level, table=t, mirror=t)
    else:
        lo, hi = ri.count_bounds(method, uf, n, uc, n, level)
    return lo[inv], hi[inv]


def _metrics(method, n, rr, pf, lo, hi, deg=None, policy=None) -> MethodMetrics:
    reps = lo.size
    ok_lo, ok_hi = ~np.isnan(lo), ~np.isnan(hi)
    m_lo, m_hi = int(ok_lo.sum()), int(ok_hi.sum())
    cov_lo = int((lo[ok_lo] <= rr).sum())
    cov_hi = int((hi[ok_hi] >= rr).sum())
    c_lo = cov_lo / m_lo if m_lo else math.nan
    c_hi = cov_hi / m_hi if m_hi else math.nan
    return MethodMetrics(
        method=method, n=n, rr=rr, pF=pf,
        coverage_lower=c_lo, coverage_upper=c_hi,
        median_lower_bound=float(np.median(lo[ok_lo])) if m_lo else math.nan,
        prop_not_computable=1.0 - m_lo / reps,
        mc_standard_error=math.sqrt(c_lo * (1 - c_lo) / m_lo) if m_lo else math.nan,
        mc_se_upper=math.sqrt(c_hi * (1 - c_hi) / m_hi) if m_hi else math.nan,
        replications=reps, n_not_computable=reps - m_lo,
        n_covered_lower=cov_lo, n_covered_upper=cov_hi,
        mean_degenerate_replicates=None if deg is None or deg.size == 0 else float(deg.mean()),
        policy=policy,
    )


def simulate_cell(n, rr, pf, replications, rng):
    yf = rng.binomial(n, pf, size=replications)
    yc = rng.binomial(n, pf / rr, size=replications)
    return yf, yc


def run_grid(grid: ScenarioGrid, methods: Sequence[str] = CLOSED_FORM, n_b: int = 1000,
             policy=_boot.DegeneratePolicy.DROP_AND_FLAG,
             tables: dict | None = None, progress=None) -> list[MethodMetrics]:
    """Monte Carlo metrics for every (cell, method); deterministic given grid.seed.

    Each cell draws its data from its own stream keyed by (seed, cell), and the
    bootstrap from a separate one, so results do not depend on which methods or
    cells are run alongside.  ``policy`` may list several degenerate-replicate
    policies; each is applied to the same bootstrap replicates.
    """
    policies = [_boot.DegeneratePolicy(p) for p in
                ((policy,) if isinstance(policy, str) else tuple(policy))]
    if not policies:
        raise ValueError("at least one bootstrap policy is needed")
    methods = tuple(methods)
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {ALL_METHODS}")
    tables = dict(tables or {})
    if "wang-shan" in methods:
        need = [n for n in grid.n_values if n not in tables]
        missing = missing_tables(need, grid.level)
        if missing:
            raise InfeasibleSizeError(
                "Wang-Shan cells need prebuilt tables; missing: " + ", ".join(missing)
                + " (build them with `riskratio build-ws-table`)")
        for n in need:
            tables[n] = _ws.get_table(n, n, grid.level)
    boot_methods = [m for m in methods if m in _boot.METHODS]
    out = []
    for n, i_rr, rr, i_pf, pf in grid.cells():
        t0 = time.perf_counter()
        yf, yc = simulate_cell(n, rr, pf, grid.replications, _cell_rng(grid.seed, n, rr, pf, 0))
        for method in methods:
            if method in CLOSED_FORM:
                lo, hi = _closed_form_bounds(method, yf, yc, n, grid.level, tables)
                out.append(_metrics(method, n, rr, pf, lo, hi))
        for pol in policies if boot_methods else ():
            res, deg = _boot.count_bounds(boot_methods, yf, n, yc, n, grid.level, n_b,
                                          _cell_rng(grid.seed, n, rr, pf, 1), pol)
            ok = (yf > 0) & (yc > 0)
            for method in boot_methods:
                lo, hi = res[method]
                out.append(_metrics(method, n, rr, pf, lo, hi, deg[ok], pol.value))
        if progress is not None:
            progress(n, rr, pf, time.perf_counter() - t0)
    order = {m: k for k, m in enumerate(methods)}
    pol_order = {p.value: k for k, p in enumerate(policies)}
    return sorted(out, key=lambda m: (m.n, m.rr, m.pF, order[m.method],
                                      pol_order.get(m.policy, -1)))


def outcome_grid(n):
    yf, yc = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    return yf.ravel(), yc.ravel()


def exact_coverage(n: int, rr: float, pF: float, method: str, level: float = 0.95,
                   side: str = "lower", include_degenerate: bool = False,
                   table: _ws.WangShanTable | None = None) -> float:
    """Exact coverage of a one-sided (or two-sided) bound by summing over outcomes.

    ``level`` is the confidence of each computed bound.  Outcomes with no bound
    are dropped and the rest renormalised, matching ``run_grid``; with
    ``include_degenerate`` they count instead as the trivial interval (0, inf).
    """
    if not (0.0 < rr < math.inf):
        raise ValueError("rr must lie in (0, inf)")
    if not 0.0 <= pF <= 1.0 or pF / rr > 1.0:
        raise ValueError("need 0 <= pF <= 1 and pF / rr <= 1")
    if method not in CLOSED_FORM:
        raise ValueError(f"exact coverage is available for {CLOSED_FORM}")
    if n > EXACT_MAX_N:
        raise InfeasibleSizeError(f"n={n} exceeds the enumeration cap {EXACT_MAX_N}")
    if side not in ("lower", "upper", "two_sided"):
        raise ValueError("side must be 'lower', 'upper' or 'two_sided'")
    yf, yc = outcome_grid(n)
    if method == "wang-shan":
        t = table if table is not None else _ws.get_table(n, n, level)
        lo, hi = ri.wang_shan_bounds(yf, n, yc, n, level, table=t, mirror=t)
    else:
        lo, hi = ri.count_bounds(method, yf, n, yc, n, level)
    w = binom.pmf(yf, n, pF) * binom.pmf(yc, n, pF / rr)
    if side == "lower":
        bad = np.isnan(lo)
        covers = np.where(bad, True, lo <= rr)
    elif side == "upper":
        bad = np.isnan(hi)
        covers = np.where(bad, True, hi >= rr)
    else:
        bad = np.isnan(lo) | np.isnan(hi)
        covers = np.where(bad, True, (lo <= rr) & (hi >= rr))
    if include_degenerate:
        return min(1.0, float(w[covers].sum()))
    mass = w[~bad].sum()
    return min(1.0, float(w[covers & ~bad].sum() / mass)) if mass > 0 else math.nan


def exact_not_computable(n: int, rr: float, pF: float, method: str) -> float:
    """Probability that ``method`` cannot produce a lower bound, by enumeration."""
    if method in _boot.METHODS:
        method = "delta"      # the bootstrap fails on exactly the delta-method outcomes
    if method not in CLOSED_FORM:
        raise ValueError(f"unknown method {method!r}")
    if n > EXACT_MAX_N:
        raise InfeasibleSizeError(f"n={n} exceeds the enumeration cap {EXACT_MAX_N}")
    yf, yc = outcome_grid(n)
    if method == "wang-shan":
        bad = (yf == 0) & (yc == 0)
    else:
        bad = np.isnan(ri.count_bounds(method, yf, n, yc, n, 0.95)[0])
    w = binom.pmf(yf, n, pF) * binom.pmf(yc, n, pF / rr)
    return float(w[bad].sum())


FIGURE_METRICS = ("coverage_lower", "coverage_upper", "median_lower_bound",
                  "prop_not_computable", "mc_standard_error", "mc_se_upper",
                  "mean_degenerate_replicates")
FIGURE_COLUMNS = ("method", "n", "rr", "pF", "metric", "value")


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_figures(metrics: Iterable[MethodMetrics], out: str | os.PathLike | io.TextIOBase | None = None) -> str:
    """Long-format records (method, n, rr, pF, metric, value) for plotting.

    Bootstrap rows computed under the ``error`` policy carry the method tag
    ``<method>@error``.
    Undefined metrics (e.g. coverage with no computable dataset, or bootstrap
    statistics for non-bootstrap methods) are omitted rather than written as
    NaN.  Returns the CSV text; also writes it to ``out`` if given.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIGURE_COLUMNS)
    for m in metrics:
        row = asdict(m)
        for name in FIGURE_METRICS:
            v = row[name]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                continue
            w.writerow((m.label, m.n, _fmt(m.rr), _fmt(m.pF), name, _fmt(v)))
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
        return text
    path = Path(out)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return text
