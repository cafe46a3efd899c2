"""Confidence intervals for the risk ratio from two independent binomial counts.

Every method computes one-sided bounds; a two-sided interval at level L is the
pair of one-sided bounds at (1 + L) / 2.  For the test-inversion methods the
chi-square(1) cut-off at one-sided level L is therefore ``ndtri(L) ** 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import wang_shan as _ws
from ._kernels import KOOPMAN, LRT, impl as _impl
from .core import (NotComputableError, RatioInterval, ScenarioPair, Side, as_interval,
                   counts_estimate, one_sided_level)

METHODS = ("delta", "lrt", "koopman", "wilson", "wang-shan")


@dataclass(frozen=True)
class ConstrainedMle:
    """Binomial MLE under the restriction pF = rr0 * pC."""

    pF_tilde: float
    pC_tilde: float
    rr0: float


def _counts(data: ScenarioPair) -> tuple[int, int, int, int]:
    if not isinstance(data, ScenarioPair):
        raise TypeError("expected a ScenarioPair")
    return data.counts()


def critical_value(level_one_sided: float) -> float:
    """Chi-square(1) cut-off whose inversion gives a one-sided bound at this level."""
    return float(ndtri(level_one_sided)) ** 2


def constrained_binomial_mle(data: ScenarioPair, rr0: float) -> ConstrainedMle:
    if not rr0 > 0.0 or math.isinf(rr0):
        raise ValueError(f"rr0 must be positive and finite, got {rr0!r}")
    yf, nf, yc, nc = _counts(data)
    pf, pc = _impl.constrained_mle(float(yf), float(nf), float(yc), float(nc), float(rr0))
    return ConstrainedMle(float(pf), float(pc), float(rr0))


def lr_statistic(data: ScenarioPair, rr0: float) -> float:
    """Likelihood-ratio statistic for H0: RR = rr0."""
    yf, nf, yc, nc = _counts(data)
    return float(_impl.statistic(LRT, float(yf), float(nf), float(yc), float(nc),
                                 math.log(rr0)))


def koopman_statistic(data: ScenarioPair, rr0: float) -> float:
    """Pearson chi-square at the constrained MLE for H0: RR = rr0."""
    yf, nf, yc, nc = _counts(data)
    return float(_impl.statistic(KOOPMAN, float(yf), float(nf), float(yc), float(nc),
                                 math.log(rr0)))


# -- vectorised bounds ---------------------------------------------------------
# Each returns (lower, upper) arrays at a one-sided level; NaN marks an outcome
# for which the method cannot produce a bound.

def _arrays(*xs):
    return np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))


def delta_bounds(yf, nf, yc, nc, level_one_sided):
    yf, nf, yc, nc = _arrays(yf, nf, yc, nc)
    z = ndtri(level_one_sided)
    ok = (yf > 0) & (yc > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pf, pc = yf / nf, yc / nc
        log_rr = np.log(pf / pc)
        se = np.sqrt((1.0 - pf) / (nf * pf) + (1.0 - pc) / (nc * pc))
        lower = np.where(ok, np.exp(log_rr - z * se), np.nan)
        upper = np.where(ok, np.exp(log_rr + z * se), np.nan)
    return lower, upper


def _inversion_bounds(kind, yf, nf, yc, nc, level_one_sided):
    yf, nf, yc, nc = _arrays(yf, nf, yc, nc)
    q = np.full(yf.shape, critical_value(level_one_sided))
    lower, upper = _impl.invert_counts(kind, yf.ravel(), nf.ravel(), yc.ravel(),
                                       nc.ravel(), q.ravel())
    return lower.reshape(yf.shape), upper.reshape(yf.shape)


def lrt_bounds(yf, nf, yc, nc, level_one_sided):
    return _inversion_bounds(LRT, yf, nf, yc, nc, level_one_sided)


def koopman_bounds(yf, nf, yc, nc, level_one_sided):
    return _inversion_bounds(KOOPMAN, yf, nf, yc, nc, level_one_sided)


def wilson_bounds(yf, nf, yc, nc, level_one_sided):
    yf, nf, yc, nc = _arrays(yf, nf, yc, nc)
    z = ndtri(level_one_sided)
    s = yf + yc
    ok = s > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = yf / s
        den = s + z * z
        centre = (yf + 0.5 * z * z) / den
        half = z / den * np.sqrt(s * theta * (1.0 - theta) + 0.25 * z * z)
        t_lo = np.clip(centre - half, 0.0, 1.0)
        t_hi = np.clip(centre + half, 0.0, 1.0)
        ratio = nc / nf
        lower = ratio * t_lo / (1.0 - t_lo)
        upper = ratio * t_hi / (1.0 - t_hi)
    # the score interval touches the boundary exactly when a count is zero
    lower = np.where(yf == 0, 0.0, lower)
    upper = np.where(yc == 0, np.inf, upper)
    return np.where(ok, lower, np.nan), np.where(ok, upper, np.nan)


def wang_shan_bounds(yf, nf, yc, nc, level_one_sided, table=None, mirror=None,
                     max_n=_ws.DEFAULT_MAX_N):
    yf, yc = np.broadcast_arrays(np.asarray(yf, dtype=np.int64), np.asarray(yc, dtype=np.int64))
    nf, nc = int(nf), int(nc)
    lower_t, upper_t = ws_tables(nf, nc, level_one_sided, table, mirror, max_n)
    lower, upper = _ws.lookup_bounds(yf, yc, lower_t, upper_t)
    both_zero = (yf == 0) & (yc == 0)
    return np.where(both_zero, np.nan, lower), np.where(both_zero, np.nan, upper)


def _checked(t, nf, nc, level_one_sided):
    if (t.nF, t.nC) != (nf, nc) or not math.isclose(t.level, level_one_sided,
                                                     rel_tol=0.0, abs_tol=1e-12):
        raise ValueError(f"table is for nF={t.nF}, nC={t.nC}, level={t.level}; "
                         f"need nF={nf}, nC={nc}, level={level_one_sided}")
    return t


def _lower_table(nf, nc, level_one_sided, table, max_n):
    if table is not None:
        return _checked(table, nf, nc, level_one_sided)
    return _ws.get_table(nf, nc, level_one_sided, max_n)


def ws_tables(nf, nc, level_one_sided, table=None, mirror=None, max_n=_ws.DEFAULT_MAX_N):
    """Tables for the lower bound and (scenarios swapped) the upper bound."""
    table = _lower_table(nf, nc, level_one_sided, table, max_n)
    if mirror is None and nf == nc:
        mirror = table
    return table, _lower_table(nc, nf, level_one_sided, mirror, max_n)


BOUNDS = {
    "delta": delta_bounds,
    "lrt": lrt_bounds,
    "koopman": koopman_bounds,
    "wilson": wilson_bounds,
    "wang-shan": wang_shan_bounds,
}


def count_bounds(method: str, yf, nf, yc, nc, level_one_sided: float):
    """Dispatch to the vectorised bound routine for ``method``."""
    try:
        fn = BOUNDS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}") from None
    return fn(yf, nf, yc, nc, level_one_sided)


# -- scalar API ----------------------------------------------------------------

_FAILURES = {
    "delta": "a zero count makes log RR or its standard error infinite",
    "lrt": "both counts zero",
    "koopman": "both counts zero",
    "wilson": "both counts zero",
    "wang-shan": "both counts zero",
}


def _interval(method, data, level, side, **kw) -> RatioInterval:
    side = Side.parse(side)
    yf, nf, yc, nc = _counts(data)
    lo, hi = BOUNDS[method](yf, nf, yc, nc, one_sided_level(level, side), **kw)
    lo, hi = float(lo), float(hi)
    if math.isnan(lo) or math.isnan(hi):
        raise NotComputableError(f"{method}: {_FAILURES[method]}")
    return as_interval(counts_estimate(yf, nf, yc, nc), lo, hi, level, side, method)


def delta_interval(data: ScenarioPair, level: float = 0.95,
                   side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    """Normal-theory interval on the log scale with the delta-method variance."""
    return _interval("delta", data, level, side)


def lrt_interval(data: ScenarioPair, level: float = 0.95,
                 side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    """Invert the likelihood-ratio test of RR = RR0 (profile over pC)."""
    return _interval("lrt", data, level, side)


def koopman_interval(data: ScenarioPair, level: float = 0.95,
                     side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    """Invert Pearson's chi-square test evaluated at the constrained MLE."""
    return _interval("koopman", data, level, side)


def wilson_interval(data: ScenarioPair, level: float = 0.95,
                    side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    """Wilson score interval for yF | yF + yC, mapped to the ratio scale."""
    return _interval("wilson", data, level, side)


def wang_shan_interval(data: ScenarioPair, level: float = 0.95,
                       side: Side | str = Side.TWO_SIDED,
                       table: _ws.WangShanTable | None = None,
                       mirror: _ws.WangShanTable | None = None,
                       max_n: int = _ws.DEFAULT_MAX_N) -> RatioInterval:
    """Exact interval from stored (or freshly built) Wang-Shan tables.

    ``table`` covers (nF, nC) and gives the lower bound; ``mirror`` covers
    (nC, nF) and gives the upper bound.  Only the tables a one-sided request
    needs are looked up.
    """
    side = Side.parse(side)
    yf, nf, yc, nc = _counts(data)
    if yf == 0 and yc == 0:
        raise NotComputableError(f"wang-shan: {_FAILURES['wang-shan']}")
    lev = one_sided_level(level, side)
    lower, upper = 0.0, math.inf
    if side is not Side.UPPER:
        lower = _lower_table(nf, nc, lev, table, max_n).lower(yf, yc)
    if side is not Side.LOWER:
        if mirror is None and nf == nc:
            mirror = table
        m = _lower_table(nc, nf, lev, mirror, max_n).lower(yc, yf)
        upper = math.inf if m == 0.0 else 1.0 / m
    return as_interval(counts_estimate(yf, nf, yc, nc), lower, upper, level, side,
                       "wang-shan")
