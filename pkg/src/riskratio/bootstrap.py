"""Paired-scenario bootstrap for log RR and the five interval constructions.

Replicates live on the log scale.  A replicate with a zero count on one side is
infinite; one with zero counts on both sides is undefined and stored as NaN in
``BootstrapDistribution.replicates`` (see ``undefined``).  How such replicates
are treated is governed by :class:`DegeneratePolicy`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import (EventDefinition, NotComputableError, RatioInterval, ScenarioPair, Side,
                   TotalDegeneracyError, as_interval, one_sided_level)

METHODS = ("boot-normal", "boot-percentile", "boot-basic", "boot-studentized", "boot-bca")

BLOCK = 1024  # replicates per RNG stream


class DegeneratePolicy(str, enum.Enum):
    ERROR = "error"
    DROP_AND_FLAG = "drop_and_flag"


@dataclass(frozen=True)
class BootstrapConfig:
    n_b: int = 10_000
    seed: int = 0
    degenerate_policy: DegeneratePolicy = DegeneratePolicy.DROP_AND_FLAG

    def __post_init__(self):
        if int(self.n_b) != self.n_b or self.n_b < 100:
            raise ValueError(f"n_b must be an integer >= 100, got {self.n_b!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "degenerate_policy", DegeneratePolicy(self.degenerate_policy))


@dataclass(frozen=True, eq=False)
class BootstrapDistribution:
    replicates: np.ndarray
    n_degenerate: int
    estimate: float
    se_hat: float | None = None
    se_replicates: np.ndarray | None = None
    acceleration: float | None = None
    policy: DegeneratePolicy = DegeneratePolicy.DROP_AND_FLAG

    def __post_init__(self):
        reps = np.array(self.replicates, dtype=float)
        reps.setflags(write=False)
        object.__setattr__(self, "replicates", reps)
        if not 0 <= self.n_degenerate <= reps.size:
            raise ValueError("n_degenerate out of range")

    @property
    def n_b(self) -> int:
        return self.replicates.size

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.replicates)


# -- resampling ------------------------------------------------------------------

def streams(seed: int, n_b: int, tag: int):
    """Generators for consecutive blocks of replicates.

    Each block gets its own child seed (seed, tag, block), so a replicate's
    draws do not depend on how the blocks are scheduled.
    """
    for b in range(-(-n_b // BLOCK)):
        ss = np.random.SeedSequence(seed, spawn_key=(tag, b))
        yield np.random.Generator(np.random.PCG64(ss)), min(BLOCK, n_b - b * BLOCK)


def _draw_counts(scenario, event, seed, n_b, tag):
    out = np.empty(n_b, dtype=np.int64)
    pos = 0
    if hasattr(scenario, "events"):
        p = scenario.events / scenario.trials
        for rng, size in streams(seed, n_b, tag):
            out[pos:pos + size] = rng.binomial(scenario.trials, p, size=size)
            pos += size
        return out, scenario.trials
    hits = event.exceeds(scenario.values).astype(np.int64)
    n = hits.size
    for rng, size in streams(seed, n_b, tag):
        idx = rng.integers(0, n, size=(size, n))
        out[pos:pos + size] = hits[idx].sum(axis=1)
        pos += size
    return out, n


def log_rr(yf, nf, yc, nc):
    """Elementwise log RR-hat; NaN where both counts are zero."""
    yf, yc = np.asarray(yf, dtype=float), np.asarray(yc, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(yf / nf) - np.log(yc / nc)
    return out


def delta_se(yf, nf, yc, nc):
    """Delta-method se of log RR-hat; inf when a count is zero."""
    yf, yc = np.asarray(yf, dtype=float), np.asarray(yc, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        pf, pc = yf / nf, yc / nc
        var = (1.0 - pf) / (nf * pf) + (1.0 - pc) / (nc * pc)
    return np.where((yf > 0) & (yc > 0), np.sqrt(var), np.inf)


def _sample_terms(y, n, sign):
    """Jackknife influence values of +/- log p-hat for one scenario.

    Returns (sum l^2, sum l^3), weighting the two distinct deletions by their
    multiplicities.  With a single event, deleting it leaves p-hat = 0, so the
    infinitesimal-jackknife values (I - p) / p are used instead.
    """
    y = np.asarray(y, dtype=float)
    n = float(n) if np.ndim(n) == 0 else np.asarray(n, dtype=float)
    p = y / n
    with np.errstate(divide="ignore", invalid="ignore"):
        th_e = np.log((y - 1.0) / (n - 1.0))   # an event deleted
        th_n = np.log(y / (n - 1.0))           # a non-event deleted
        mean = (y * th_e + (n - y) * th_n) / n
        l_e = (n - 1.0) * (mean - th_e)
        l_n = (n - 1.0) * (mean - th_n)
        use_analytic = (y <= 1) | (n <= 1)
        l_e = np.where(use_analytic, (1.0 - p) / p, l_e)
        l_n = np.where(use_analytic, -1.0, l_n)
    l_n = np.where(y >= n, 0.0, l_n)
    l_e = np.where(y == 0, 0.0, l_e)   # no events to delete; weight is zero anyway
    l_e, l_n = sign * l_e, sign * l_n
    s2 = y * l_e**2 + (n - y) * l_n**2
    s3 = y * l_e**3 + (n - y) * l_n**3
    return s2 / n**2, s3 / n**3


def acceleration_counts(yf, nf, yc, nc):
    """BCa acceleration for log RR from two independent samples of indicators."""
    f2, f3 = _sample_terms(yf, nf, 1.0)
    c2, c3 = _sample_terms(yc, nc, -1.0)
    den = (f2 + c2) ** 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (f3 + c3) / (6.0 * den)
    return np.where(den > 0, a, 0.0)


def resample_pair(data: ScenarioPair, cfg: BootstrapConfig,
                  event: EventDefinition | None = None) -> BootstrapDistribution:
    """Resample each scenario independently and pair the replicates by index.

    Counts are resampled as binomial draws at the observed proportion, raw
    samples by drawing members with replacement (``event`` is then required).
    """
    if not data.is_counts and event is None:
        raise ValueError("raw samples need an event definition")
    counts = data.to_counts(event)
    yf, nf, yc, nc = counts.counts()
    if yf == 0 or yc == 0:
        side = "counterfactual" if yc == 0 else "factual"
        raise TotalDegeneracyError(
            f"{side} scenario has no events, so every resample has p-hat = 0 there")
    rf, nf = _draw_counts(data.factual, event, cfg.seed, cfg.n_b, 0)
    rc, nc = _draw_counts(data.counterfactual, event, cfg.seed, cfg.n_b, 1)
    return BootstrapDistribution(
        replicates=log_rr(rf, nf, rc, nc),
        n_degenerate=int(((rf == 0) | (rc == 0)).sum()),
        estimate=float(log_rr(yf, nf, yc, nc)),
        se_hat=float(delta_se(yf, nf, yc, nc)),
        se_replicates=delta_se(rf, nf, rc, nc),
        acceleration=float(acceleration_counts(yf, nf, yc, nc)),
        policy=cfg.degenerate_policy,
    )


# -- interval engine -------------------------------------------------------------

def order_stat(sorted_rows, m, q):
    """Empirical quantile as the order statistic at rank ceil(q * m), no interpolation.

    ``sorted_rows`` is (rows, B) sorted with unusable entries (NaN) last and
    ``m`` the number of usable entries per row.  ``q`` may vary by row.
    """
    q = np.broadcast_to(np.asarray(q, dtype=float), m.shape)
    with np.errstate(invalid="ignore"):
        k = np.ceil(q * m - 1e-9).astype(np.int64)
    k = np.clip(k, 1, np.maximum(m, 1)) - 1
    return np.take_along_axis(sorted_rows, k[:, None], axis=1)[:, 0]


def interval_rows(method, theta_star, theta_hat, level_one_sided,
                  policy=DegeneratePolicy.DROP_AND_FLAG,
                  se_hat=None, se_star=None, accel=None):
    """Log-scale (lower, upper) bounds for each row of replicates.

    NaN in the output marks a row for which the method is not computable.
    Also returns the number of replicates dropped per row.
    """
    method = method.removeprefix("boot-")
    policy = DegeneratePolicy(policy)
    theta_star = np.atleast_2d(np.asarray(theta_star, dtype=float))
    rows, _ = theta_star.shape
    theta_hat = np.broadcast_to(np.asarray(theta_hat, dtype=float), (rows,))
    finite = np.isfinite(theta_star)
    undefined = np.isnan(theta_star)
    needs_moments = method in ("normal", "studentized", "bca")

    if policy is DegeneratePolicy.DROP_AND_FLAG or needs_moments:
        use = finite
        ok = np.ones(rows, dtype=bool)
        if policy is DegeneratePolicy.ERROR:
            ok = finite.all(axis=1)
    else:
        # percentile / basic can rank infinite replicates; 0/0 cannot be ranked
        use = ~undefined
        ok = ~undefined.any(axis=1)
    m = use.sum(axis=1)
    dropped = theta_star.shape[1] - m
    ok &= m > 0

    # a distribution sitting entirely on the estimate gives the point interval
    const = ok & np.isfinite(theta_hat) & np.all(
        ~use | (theta_star == theta_hat[:, None]), axis=1)

    alpha = 1.0 - level_one_sided
    vals = np.where(use, theta_star, np.nan)
    lo = np.full(rows, np.nan)
    hi = np.full(rows, np.nan)

    if method == "normal":
        with np.errstate(invalid="ignore", divide="ignore"):
            centre = np.where(use, theta_star, 0.0).sum(axis=1) / m
            ss = np.where(use, (theta_star - centre[:, None]) ** 2, 0.0).sum(axis=1)
            sd = np.sqrt(ss / (m - 1))
        z = ndtri(level_one_sided)
        lo, hi = theta_hat - z * sd, theta_hat + z * sd
        ok &= m > 1
    elif method in ("percentile", "basic"):
        srt = np.sort(vals, axis=1)
        q_lo, q_hi = order_stat(srt, m, alpha), order_stat(srt, m, 1.0 - alpha)
        if method == "percentile":
            lo, hi = q_lo, q_hi
        else:
            with np.errstate(invalid="ignore"):
                lo, hi = 2.0 * theta_hat - q_hi, 2.0 * theta_hat - q_lo
    elif method == "studentized":
        if se_hat is None or se_star is None:
            raise ValueError("studentized intervals need se_hat and per-replicate se")
        se_hat = np.broadcast_to(np.asarray(se_hat, dtype=float), (rows,))
        se_star = np.atleast_2d(np.asarray(se_star, dtype=float))
        use = use & np.isfinite(se_star) & (se_star > 0)
        m = use.sum(axis=1)
        ok &= (m > 0) & np.isfinite(se_hat)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(use, (theta_star - theta_hat[:, None]) / se_star, np.nan)
        srt = np.sort(z, axis=1)
        with np.errstate(invalid="ignore"):
            lo = theta_hat - se_hat * order_stat(srt, m, 1.0 - alpha)
            hi = theta_hat - se_hat * order_stat(srt, m, alpha)
    elif method == "bca":
        a = np.broadcast_to(np.asarray(0.0 if accel is None else accel, dtype=float), (rows,))
        below = (use & (theta_star < theta_hat[:, None])).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            z0 = ndtri(below / np.maximum(m, 1))
            ok &= np.isfinite(z0)
            srt = np.sort(vals, axis=1)
            bounds = []
            for za in (ndtri(alpha), ndtri(1.0 - alpha)):
                w = z0 + za
                adj = ndtr(z0 + w / (1.0 - a * w))
                bounds.append(order_stat(srt, m, np.where(ok, adj, 0.5)))
        lo, hi = bounds
    else:
        raise ValueError(f"unknown bootstrap method {method!r}")

    lo = np.where(const, theta_hat, lo)
    hi = np.where(const, theta_hat, hi)
    ok |= const
    lo = np.where(ok, lo, np.nan)
    hi = np.where(ok, hi, np.nan)
    return lo, hi, dropped


def _to_interval(method, dist: BootstrapDistribution, level, side) -> RatioInterval:
    side = Side.parse(side)
    lo, hi, dropped = interval_rows(method, dist.replicates[None, :], dist.estimate,
                                    one_sided_level(level, side), dist.policy,
                                    se_hat=dist.se_hat,
                                    se_star=None if dist.se_replicates is None
                                    else dist.se_replicates[None, :],
                                    accel=dist.acceleration)
    lo, hi, dropped = float(lo[0]), float(hi[0]), int(dropped[0])
    tag = method if method.startswith("boot-") else f"boot-{method}"
    if math.isnan(lo) or math.isnan(hi):
        if dist.policy is DegeneratePolicy.ERROR and dist.n_degenerate:
            raise NotComputableError(
                f"{tag}: {dist.n_degenerate} replicate(s) have a zero count, so the "
                "required statistic cannot be formed under policy 'error'")
        raise NotComputableError(f"{tag}: not enough usable replicates")
    est = math.exp(dist.estimate)
    with np.errstate(over="ignore"):
        lo_rr, hi_rr = float(np.exp(lo)), float(np.exp(hi))
    diag = {
        "n_b": float(dist.n_b),
        "n_degenerate": float(dist.n_degenerate),
        "n_dropped": float(dropped if dist.policy is DegeneratePolicy.DROP_AND_FLAG else 0),
        "drop_policy_fired": float(dist.policy is DegeneratePolicy.DROP_AND_FLAG
                                   and dropped > 0),
    }
    return as_interval(est, lo_rr, hi_rr, level, side, tag, diag)


def boot_normal(dist, level=0.95, side=Side.TWO_SIDED) -> RatioInterval:
    """log RR-hat -/+ z times the replicate standard deviation."""
    return _to_interval("boot-normal", dist, level, side)


def boot_percentile(dist, level=0.95, side=Side.TWO_SIDED) -> RatioInterval:
    return _to_interval("boot-percentile", dist, level, side)


def boot_basic(dist, level=0.95, side=Side.TWO_SIDED) -> RatioInterval:
    """Percentile interval reflected through the estimate."""
    return _to_interval("boot-basic", dist, level, side)


def boot_studentized(dist, level=0.95, side=Side.TWO_SIDED) -> RatioInterval:
    """Bootstrap-t with the delta-method se recomputed in every replicate."""
    return _to_interval("boot-studentized", dist, level, side)


def boot_bca(dist, level=0.95, side=Side.TWO_SIDED) -> RatioInterval:
    """Bias-corrected and accelerated percentile interval."""
    return _to_interval("boot-bca", dist, level, side)


INTERVALS = {
    "boot-normal": boot_normal,
    "boot-percentile": boot_percentile,
    "boot-basic": boot_basic,
    "boot-studentized": boot_studentized,
    "boot-bca": boot_bca,
}


def bootstrap_interval(data: ScenarioPair, method: str, level: float = 0.95,
                       side: Side | str = Side.TWO_SIDED,
                       cfg: BootstrapConfig | None = None,
                       event: EventDefinition | None = None) -> RatioInterval:
    if method not in INTERVALS:
        raise ValueError(f"unknown bootstrap method {method!r}; choose from {METHODS}")
    dist = resample_pair(data, cfg or BootstrapConfig(), event)
    return INTERVALS[method](dist, level, side)


def count_bounds(methods, yf, nf, yc, nc, level_one_sided, n_b, rng,
                 policy=DegeneratePolicy.DROP_AND_FLAG):
    """Bounds for many count datasets at once (rows), one resample per row.

    Returns ``{method: (lower, upper)}`` on the ratio scale with NaN where not
    computable, plus the per-row count of degenerate replicates.
    """
    yf = np.asarray(yf, dtype=np.int64)
    yc = np.asarray(yc, dtype=np.int64)
    rows = yf.size
    rf = rng.binomial(nf, (yf / nf)[:, None], size=(rows, n_b))
    rc = rng.binomial(nc, (yc / nc)[:, None], size=(rows, n_b))
    theta_star = log_rr(rf, nf, rc, nc)
    theta_hat = log_rr(yf, nf, yc, nc)
    source_ok = (yf > 0) & (yc > 0)
    n_deg = ((rf == 0) | (rc == 0)).sum(axis=1)
    extras = {}
    if "boot-studentized" in methods:
        extras["se_star"] = delta_se(rf, nf, rc, nc)
    out = {}
    for method in methods:
        lo, hi, _ = interval_rows(
            method, theta_star, theta_hat, level_one_sided, policy,
            se_hat=delta_se(yf, nf, yc, nc), se_star=extras.get("se_star"),
            accel=acceleration_counts(yf, nf, yc, nc) if method == "boot-bca" else None)
        with np.errstate(over="ignore", invalid="ignore"):
            lo = np.where(source_ok, np.exp(lo), np.nan)
            hi = np.where(source_ok, np.exp(hi), np.nan)
        out[method] = (lo, hi)
    return out, n_deg
