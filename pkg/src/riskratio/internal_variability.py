"""Time-averaged probabilities and intervals for ensembles run over many years.

In atmosphere-only ensembles every member shares the same sequence of years
(boundary conditions), so year-to-year variability is sampled once and shared
by the members.  Estimators pool over years; the bootstrap resamples years
and members separately and uses the same year draw for both scenarios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from . import bootstrap as _boot
from .core import (BinomialCount, EventDefinition, NotComputableError, RatioInterval, Side,
                   TotalDegeneracyError, as_interval, one_sided_level)
from .estimation import ProbabilityEstimate, Source


@dataclass(frozen=True, eq=False)
class EnsembleSeries:
    """Year-by-member values, or per-year event counts when only those are known."""

    years: tuple
    members_per_year: int
    values: np.ndarray | None = None
    counts: np.ndarray | None = None

    def __post_init__(self):
        years = tuple(self.years)
        if len(years) < 1 or len(set(years)) != len(years):
            raise ValueError("years must be non-empty and distinct")
        object.__setattr__(self, "years", years)
        if (self.values is None) == (self.counts is None):
            raise ValueError("give exactly one of values or counts")
        n_w = int(self.members_per_year)
        if n_w < 1:
            raise ValueError("members_per_year must be positive")
        if self.values is not None:
            v = np.array(self.values, dtype=float)
            if v.shape != (len(years), n_w):
                raise ValueError(f"values must have shape {(len(years), n_w)}, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError("values must be finite")
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        else:
            c = np.array(self.counts, dtype=np.int64)
            if c.shape != (len(years),) or np.any((c < 0) | (c > n_w)):
                raise ValueError("counts must be one integer in [0, n_w] per year")
            c.setflags(write=False)
            object.__setattr__(self, "counts", c)

    @classmethod
    def from_counts(cls, years: Sequence, events: Sequence[int] | Sequence[BinomialCount],
                    members_per_year: int | None = None) -> "EnsembleSeries":
        if events and isinstance(events[0], BinomialCount):
            n_w = {e.trials for e in events}
            if len(n_w) != 1:
                raise ValueError("every year needs the same number of members")
            return cls(years, n_w.pop(), counts=[e.events for e in events])
        return cls(years, members_per_year, counts=events)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def indicators(self, event: EventDefinition | None) -> np.ndarray:
        if self.values is None:
            raise ValueError("member-level indicators need member values")
        if event is None:
            raise ValueError("an event definition is needed for raw values")
        return event.exceeds(self.values).astype(np.int64)

    def year_counts(self, event: EventDefinition | None = None) -> np.ndarray:
        if self.counts is not None:
            return np.asarray(self.counts)
        return self.indicators(event).sum(axis=1)


def time_averaged_p(series: EnsembleSeries, event: EventDefinition | None = None
                    ) -> ProbabilityEstimate:
    """Proportion of exceedances pooled over all years and members."""
    n = series.n_years * series.members_per_year
    return ProbabilityEstimate(series.year_counts(event).sum() / n, n, Source.NONPARAMETRIC)


def per_year_p(series: EnsembleSeries, event: EventDefinition | None = None) -> np.ndarray:
    return series.year_counts(event) / series.members_per_year


def time_averaged_var(series: EnsembleSeries, event: EventDefinition | None = None) -> float:
    """Binomial variance of the pooled proportion with each year's p_t plugged in."""
    p_t = per_year_p(series, event)
    return float((p_t * (1.0 - p_t)).sum() / (series.members_per_year * series.n_years**2))


def _check_years(factual, counterfactual):
    if factual.years != counterfactual.years:
        raise ValueError("factual and counterfactual must cover the same years")


def time_averaged_delta_interval(factual: EnsembleSeries, counterfactual: EnsembleSeries,
                                 event: EventDefinition | None = None, level: float = 0.95,
                                 side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    _check_years(factual, counterfactual)
    pf = time_averaged_p(factual, event).value
    pc = time_averaged_p(counterfactual, event).value
    if pf == 0.0 or pc == 0.0:
        raise NotComputableError("time-averaged-delta: a pooled proportion is zero")
    se = math.sqrt(time_averaged_var(factual, event) / pf**2
                   + time_averaged_var(counterfactual, event) / pc**2)
    z = ndtri(one_sided_level(level, side))
    est = math.log(pf / pc)
    return as_interval(pf / pc, math.exp(est - z * se), math.exp(est + z * se), level, side,
                       "time-averaged-delta", {"se_log_rr": se})


def _resampled_year_counts(series, event, year_mult, rng):
    """Exceedance counts per original year, after resampling members.

    Returns an (n_b, n_t) array: for each replicate, how many of the resampled
    members exceed in year t.  With member values, one member draw (whole
    trajectories) is shared by all years; with counts only, each year is
    redrawn binomially.
    """
    n_b = year_mult.shape[0]
    n_w = series.members_per_year
    if series.values is not None:
        ind = series.indicators(event)                                   # (n_t, n_w)
        member_mult = rng.multinomial(n_w, np.full(n_w, 1.0 / n_w), size=n_b)
        return member_mult @ ind.T
    p_t = series.counts / n_w
    return rng.binomial(n_w, np.broadcast_to(p_t, (n_b, p_t.size)))


def _year_jackknife_acceleration(yc_f, yc_c):
    """BCa acceleration from deleting one year at a time (both scenarios)."""
    n_t = yc_f.size
    tf, tc = yc_f.sum(), yc_c.sum()
    if n_t > 1:
        del_f, del_c = tf - yc_f, tc - yc_c
        if np.all(del_f > 0) and np.all(del_c > 0):
            theta = np.log(del_f) - np.log(del_c)      # common n_w(n_t-1) cancels
            l = (n_t - 1) * (theta.mean() - theta)
        else:
            l = (n_t * yc_f / tf - 1.0) - (n_t * yc_c / tc - 1.0)
        den = (l**2).sum() ** 1.5
        return float((l**3).sum() / (6.0 * den)) if den > 0 else 0.0
    return None


def year_block_bootstrap(factual: EnsembleSeries, counterfactual: EnsembleSeries,
                         event: EventDefinition | None = None,
                         cfg: _boot.BootstrapConfig | None = None) -> _boot.BootstrapDistribution:
    """Resample years (shared by both scenarios) and members (per scenario)."""
    cfg = cfg or _boot.BootstrapConfig()
    _check_years(factual, counterfactual)
    yc_f, yc_c = factual.year_counts(event), counterfactual.year_counts(event)
    if yc_f.sum() == 0 or yc_c.sum() == 0:
        side = "counterfactual" if yc_c.sum() == 0 else "factual"
        raise TotalDegeneracyError(f"{side} ensemble has no events in any year")
    n_t = factual.n_years
    nwf, nwc = factual.members_per_year, counterfactual.members_per_year

    theta = np.empty(cfg.n_b)
    se = np.empty(cfg.n_b)
    n_deg = 0
    pos = 0
    for rng_y, size in _boot.streams(cfg.seed, cfg.n_b, 0):
        year_mult = rng_y.multinomial(n_t, np.full(n_t, 1.0 / n_t), size=size)
        rng_f = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(cfg.seed, spawn_key=(1, pos // _boot.BLOCK))))
        rng_c = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(cfg.seed, spawn_key=(2, pos // _boot.BLOCK))))
        per_f = _resampled_year_counts(factual, event, year_mult, rng_f)
        per_c = _resampled_year_counts(counterfactual, event, year_mult, rng_c)
        tot_f = (year_mult * per_f).sum(axis=1)
        tot_c = (year_mult * per_c).sum(axis=1)
        sl = slice(pos, pos + size)
        theta[sl] = _boot.log_rr(tot_f, nwf * n_t, tot_c, nwc * n_t)
        n_deg += int(((tot_f == 0) | (tot_c == 0)).sum())
        pf, pc = tot_f / (nwf * n_t), tot_c / (nwc * n_t)
        vf = (year_mult * (per_f / nwf) * (1 - per_f / nwf)).sum(axis=1) / (nwf * n_t**2)
        vc = (year_mult * (per_c / nwc) * (1 - per_c / nwc)).sum(axis=1) / (nwc * n_t**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sqrt(vf / pf**2 + vc / pc**2)
        se[sl] = np.where((tot_f > 0) & (tot_c > 0), s, np.inf)
        pos += size

    pf_hat, pc_hat = yc_f.sum() / (nwf * n_t), yc_c.sum() / (nwc * n_t)
    se_hat = math.sqrt(time_averaged_var(factual, event) / pf_hat**2
                       + time_averaged_var(counterfactual, event) / pc_hat**2)
    accel = _year_jackknife_acceleration(yc_f, yc_c)
    if accel is None:
        accel = float(_boot.acceleration_counts(yc_f[0], nwf, yc_c[0], nwc))
    return _boot.BootstrapDistribution(
        replicates=theta, n_degenerate=n_deg, estimate=math.log(pf_hat / pc_hat),
        se_hat=se_hat, se_replicates=se, acceleration=accel, policy=cfg.degenerate_policy)


def per_year_intervals(factual: EnsembleSeries, counterfactual: EnsembleSeries,
                       event: EventDefinition | None, method: str = "koopman",
                       level: float = 0.95, side: Side | str = Side.TWO_SIDED):
    """RR-hat_t with an interval for each year separately (sensitivity analysis).

    Yields (year, interval or None) with None when the method cannot be
    computed for that year.
    """
    from . import ratio_intervals as ri
    from .core import ScenarioPair

    _check_years(factual, counterfactual)
    fn = getattr(ri, f"{method.replace('-', '_')}_interval")
    for year, a, b in zip(factual.years, factual.year_counts(event),
                          counterfactual.year_counts(event)):
        data = ScenarioPair.from_counts(int(a), factual.members_per_year, int(b),
                                        counterfactual.members_per_year)
        try:
            yield year, fn(data, level, side)
        except NotComputableError:
            yield year, None
