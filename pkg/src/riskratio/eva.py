"""Extreme value machinery: GEV distribution, point-process (peaks-over-threshold)
fits, and likelihood-based intervals for the risk ratio of two fitted scenarios.

Everything is written for upper-tail extremes; lower-tail events are handled
by negating values and cut-offs once at entry.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.differentiate import hessian as _fd_hessian
from scipy.optimize import brentq, minimize
from scipy.special import ndtri

from .core import (ConvergenceError, EventDefinition, InsufficientExceedancesError,
                   NotComputableError, RatioInterval, RawSample, Side, Tail, as_interval,
                   one_sided_level)
from .estimation import ProbabilityEstimate, Source

logger = logging.getLogger(__name__)

GUMBEL_EPS = 1e-8
XI_BOUND = 1.0
MIN_EXCEEDANCES = 5
XI_STARTS = (-0.1, 0.0, 0.1)


@dataclass(frozen=True)
class GevParams:
    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma, self.xi])


def _log_tail_intensity(y, mu, sigma, xi):
    """log1p(xi z) / xi with z = (y - mu) / sigma (z itself in the Gumbel limit).

    Returns NaN outside the support (1 + xi z <= 0).
    """
    z = (np.asarray(y, dtype=float) - mu) / sigma
    if abs(xi) < GUMBEL_EPS:
        return z
    arg = xi * z
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(arg > -1.0, np.log1p(arg) / xi, np.nan)


def tail_intensity(y, p: GevParams):
    """Expected number of block maxima above y per block: -log F(y)."""
    g = _log_tail_intensity(y, p.mu, p.sigma, p.xi)
    with np.errstate(over="ignore"):
        out = np.exp(-g)
    # outside the support: below a lower end point (xi > 0) every block
    # exceeds, above an upper end point (xi < 0) none does
    return np.where(np.isnan(g), np.inf if p.xi > 0 else 0.0, out)


def gev_cdf(y, p: GevParams):
    """GEV distribution function; 0 below a lower end point, 1 above an upper one."""
    out = np.exp(-tail_intensity(y, p))
    return float(out) if np.ndim(out) == 0 else out


def exceedance_probability(y, p: GevParams):
    """1 - F(y), computed without cancellation for small probabilities."""
    out = -np.expm1(-tail_intensity(y, p))
    return float(out) if np.ndim(out) == 0 else out


def return_value(T, p: GevParams):
    """Level exceeded with probability 1/T per block."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 1.0):
        raise ValueError("return period must exceed 1")
    y = -np.log1p(-1.0 / T)          # -log(1 - 1/T)
    if abs(p.xi) < GUMBEL_EPS:
        out = p.mu - p.sigma * np.log(y)
    else:
        out = p.mu + p.sigma * np.expm1(-p.xi * np.log(y)) / p.xi
    return float(out) if np.ndim(out) == 0 else out


def return_period(y, p: GevParams):
    prob = exceedance_probability(y, p)
    with np.errstate(divide="ignore"):
        return 1.0 / prob


def convert_block_probability(prob, b):
    """Exceedance probability for blocks b times longer: 1 - (1 - prob)^b.

    With b = 1/k this converts a k-block probability back to one block.
    """
    prob = np.asarray(prob, dtype=float)
    out = -np.expm1(b * np.log1p(-prob))
    return float(out) if np.ndim(out) == 0 else out


# -- point-process likelihood ---------------------------------------------------

def _scalar_log_tail(y, mu, sigma, xi):
    # scalar version of _log_tail_intensity; NaN outside the support
    z = (y - mu) / sigma
    if abs(xi) < GUMBEL_EPS:
        return z
    arg = xi * z
    return math.log1p(arg) / xi if arg > -1.0 else math.nan


def _scalar_exceedance(y, mu, sigma, xi):
    g = _scalar_log_tail(y, mu, sigma, xi)
    if math.isnan(g):
        return 1.0 if xi > 0 else 0.0
    return -math.expm1(-math.exp(-g))


def pp_loglik(mu, sigma, xi, exceedances, threshold, n_blocks):
    """Point-process log-likelihood (up to a constant) of the exceedances."""
    # called in tight optimiser loops, so scalar math and a single log1p
    if not sigma > 0.0:
        return -math.inf
    g_u = _scalar_log_tail(threshold, mu, sigma, xi)
    if math.isnan(g_u):
        return -math.inf
    z = (exceedances - mu) / sigma
    if abs(xi) < GUMBEL_EPS:
        sum_g = float(z.sum())
    else:
        arg = xi * z
        if arg.min() <= -1.0:
            return -math.inf
        sum_g = float(np.log1p(arg).sum()) / xi
    lam_u = math.exp(-g_u) if -g_u < 700.0 else math.inf
    return -n_blocks * lam_u - exceedances.size * math.log(sigma) - (1.0 + xi) * sum_g


@dataclass(frozen=True, eq=False)
class PotFit:
    params: GevParams
    threshold: float
    n_blocks: float
    n_exceedances: int
    log_likelihood: float
    converged: bool
    hessian_inverse: np.ndarray | None = None
    tail: Tail = Tail.UPPER
    exceedances: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.n_blocks > 0:
            raise ValueError("n_blocks must be positive")
        object.__setattr__(self, "tail", Tail(self.tail))


def _oriented(sample, threshold, tail):
    values = np.asarray(sample.values if isinstance(sample, RawSample) else sample,
                        dtype=float)
    if Tail(tail) is Tail.LOWER:
        return -values, -float(threshold)
    return values, float(threshold)


def _negloglik(x, exc, u, n_t):
    mu, log_sigma, xi = x
    if not -XI_BOUND < xi < XI_BOUND:
        return math.inf
    ll = pp_loglik(mu, math.exp(log_sigma), xi, exc, u, n_t)
    return -ll if math.isfinite(ll) else math.inf


_NM = dict(xatol=1e-10, fatol=1e-12, maxiter=20_000, maxfev=40_000)
# the profile only needs lambda to well below the chi-square cut-off
_NM_PROFILE = dict(xatol=1e-7, fatol=1e-9, maxiter=5_000, maxfev=10_000)


def _polish(fun, x0, args=(), options=_NM):
    """Nelder-Mead, restarted once from its own optimum to shake off stalls."""
    # infeasible vertices are +inf; their differences are harmless NaNs
    with np.errstate(invalid="ignore"):
        res = minimize(fun, x0, args=args, method="Nelder-Mead", options=options)
        res2 = minimize(fun, res.x, args=args, method="Nelder-Mead", options=options)
    return res2 if res2.fun <= res.fun else res


def _starts(exc, u, n_t):
    sigma0 = float(np.std(exc, ddof=1)) if exc.size > 1 else 1.0
    sigma0 = sigma0 if sigma0 > 0 else 1.0
    # second location start matches the expected exceedance count under a Gumbel
    mus = (u, u + sigma0 * math.log(exc.size / n_t))
    for mu0 in mus:
        for xi0 in XI_STARTS:
            yield np.array([mu0, math.log(sigma0), xi0])


def _hessian_inverse(exc, u, n_t, params):
    def f(x):
        flat = x.reshape(3, -1)
        vals = [-pp_loglik(m, s, k, exc, u, n_t) for m, s, k in flat.T]
        return np.array(vals).reshape(x.shape[1:])

    try:
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            res = _fd_hessian(f, params, initial_step=1e-3)
        h = res.ddf
    except Exception:  # pragma: no cover - numerical failure
        return None
    if not np.all(np.isfinite(h)):
        return None
    h = 0.5 * (h + h.T)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        return None
    cov = np.linalg.inv(h)
    return 0.5 * (cov + cov.T)


def fit_pot(sample: RawSample | np.ndarray, threshold: float, n_blocks: float,
            tail: Tail | str = Tail.UPPER) -> PotFit:
    """Maximum-likelihood point-process fit to the exceedances of ``threshold``.

    ``n_blocks`` sets the block length the fitted GEV refers to (e.g. the
    number of simulated years, so probabilities are per year).
    """
    tail = Tail(tail)
    values, u = _oriented(sample, threshold, tail)
    if not n_blocks > 0:
        raise ValueError("n_blocks must be positive")
    exc = values[values > u]
    if exc.size < MIN_EXCEEDANCES:
        raise InsufficientExceedancesError(
            f"{exc.size} exceedance(s) of the threshold; at least {MIN_EXCEEDANCES} needed")
    best = None
    for x0 in _starts(exc, u, n_blocks):
        res = _polish(_negloglik, x0, (exc, u, n_blocks))
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise ConvergenceError("point-process likelihood could not be evaluated at any start")
    mu, log_sigma, xi = best.x
    params = GevParams(float(mu), float(math.exp(log_sigma)), float(xi))
    at_bound = abs(xi) > XI_BOUND - 1e-3
    converged = bool(best.success) and not at_bound
    if at_bound:
        logger.warning("shape parameter hit the (-1, 1) box; fit flagged unconverged")
    cov = _hessian_inverse(exc, u, n_blocks, params.as_array()) if converged else None
    return PotFit(params, u if tail is Tail.UPPER else -u, float(n_blocks), int(exc.size),
                  -float(best.fun), converged, cov, tail, exc)


def eva_probability(fit: PotFit, event: EventDefinition) -> ProbabilityEstimate:
    """Per-block probability of the event under the fitted GEV."""
    if not fit.converged:
        raise ConvergenceError("fit did not converge; its probabilities are unreliable")
    if event.tail is not fit.tail:
        raise ValueError("event tail does not match the tail the fit was made for")
    c = event.cutoff if event.tail is Tail.UPPER else -event.cutoff
    u = fit.threshold if fit.tail is Tail.UPPER else -fit.threshold
    warnings = ()
    if c < u:
        warnings = ("cutoff lies inside the threshold; the fit is extrapolated below "
                    "the region it was estimated from",)
    p = exceedance_probability(c, fit.params)
    return ProbabilityEstimate(float(p), int(round(fit.n_blocks)), Source.EVA, warnings)


# -- risk ratio from two fitted scenarios -----------------------------------------

def _log_pc_grad(fit: PotFit, c: float, step=1e-6):
    x = fit.params.as_array()
    grad = np.empty(3)
    for i in range(3):
        h = step * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        fu = exceedance_probability(c, GevParams(*up))
        fd = exceedance_probability(c, GevParams(*dn))
        grad[i] = (math.log(fu) - math.log(fd)) / (2 * h)
    return grad


def eva_delta_interval(fit_f: PotFit, fit_c: PotFit, event: EventDefinition,
                       level: float = 0.95, side: Side | str = Side.TWO_SIDED) -> RatioInterval:
    """Normal-theory interval for log RR using each fit's inverse Hessian."""
    side = Side.parse(side)
    if fit_f.hessian_inverse is None or fit_c.hessian_inverse is None:
        raise ConvergenceError("delta interval needs both fits' inverse Hessians")
    c = event.cutoff if event.tail is Tail.UPPER else -event.cutoff
    pf = exceedance_probability(c, fit_f.params)
    pc = exceedance_probability(c, fit_c.params)
    if pf <= 0 or pc <= 0:
        raise NotComputableError("event lies beyond a fitted end point")
    gf, gc = _log_pc_grad(fit_f, c), _log_pc_grad(fit_c, c)
    var = gf @ fit_f.hessian_inverse @ gf + gc @ fit_c.hessian_inverse @ gc
    est = math.log(pf / pc)
    z = ndtri(one_sided_level(level, side))
    se = math.sqrt(max(var, 0.0))
    return as_interval(pf / pc, math.exp(est - z * se), math.exp(est + z * se), level,
                       side, "eva-delta", {"se_log_rr": se})


class _Profile:
    """Constrained log-likelihood of both scenarios under RR = RR0."""

    def __init__(self, fit_f: PotFit, fit_c: PotFit | None, c: float, exc_c, u_c, n_c):
        self.exc_f = fit_f.exceedances
        self.u_f = fit_f.threshold if fit_f.tail is Tail.UPPER else -fit_f.threshold
        self.n_f = fit_f.n_blocks
        self.exc_c, self.u_c, self.n_c = exc_c, u_c, n_c
        self.c = c
        self.zero_c = fit_c is None
        # shapes enter as xi = tanh(t): the optimum often sits at the box edge,
        # which Nelder-Mead handles badly when it is a wall of +inf
        pf = fit_f.params
        x = [pf.mu, math.log(pf.sigma), math.atanh(pf.xi)]
        if not self.zero_c:
            x += [math.log(fit_c.params.sigma), math.atanh(fit_c.params.xi)]
        self.warm = np.array(x)
        self.start = self.warm.copy()
        # fallback start: a Gumbel counterfactual has unbounded support, so it
        # stays feasible when the constraint pushes its location far away
        self.gumbel = None
        if not self.zero_c:
            self.gumbel = self.start.copy()
            self.gumbel[4] = 0.0

    def _negll(self, x, log_rr0):
        mu_f, ls_f, t_f = x[:3]
        xi_f = math.tanh(t_f)
        if not -XI_BOUND < xi_f < XI_BOUND:
            return math.inf
        sig_f = math.exp(ls_f)
        ll_f = pp_loglik(mu_f, sig_f, xi_f, self.exc_f, self.u_f, self.n_f)
        if not math.isfinite(ll_f):
            return math.inf
        p_f = _scalar_exceedance(self.c, mu_f, sig_f, xi_f)
        p_c = p_f / math.exp(log_rr0)
        if not 0.0 < p_c < 1.0:
            return math.inf
        lam = -math.log1p(-p_c)
        if self.zero_c:
            # sup over the counterfactual GEV of -n * Lambda(u) given Lambda(c) = lam
            return -(ll_f - self.n_c * lam)
        ls_c, xi_c = x[3], math.tanh(x[4])
        if not -XI_BOUND < xi_c < XI_BOUND:
            return math.inf
        sig_c = math.exp(ls_c)
        if abs(xi_c) < GUMBEL_EPS:
            mu_c = self.c + sig_c * math.log(lam)
        else:
            mu_c = self.c - sig_c * math.expm1(-xi_c * math.log(lam)) / xi_c
        ll_c = pp_loglik(mu_c, sig_c, xi_c, self.exc_c, self.u_c, self.n_c)
        if not math.isfinite(ll_c):
            return math.inf
        return -(ll_f + ll_c)

    def loglik(self, log_rr0: float) -> float:
        best = None
        for x0 in (self.warm, self.start, self.gumbel):
            if x0 is None or (x0 is self.gumbel and best is not None):
                continue
            res = _polish(self._negll, x0, (log_rr0,), _NM_PROFILE)
            if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
                best = res
        if best is None:
            raise ConvergenceError("constrained likelihood could not be evaluated",
                                   rr0=math.exp(log_rr0))
        self.warm = best.x
        return -float(best.fun)


def eva_lrt_interval(factual: RawSample, counterfactual: RawSample, event: EventDefinition,
                     thresholds: tuple[float, float], level: float = 0.95,
                     side: Side | str = Side.TWO_SIDED,
                     n_blocks: tuple[float, float] | None = None) -> RatioInterval:
    """Profile-likelihood interval for RR with both probabilities from PP fits.

    The counterfactual location is tied to the constraint p_C = p_F / RR0, so
    the constrained fit has the three factual parameters plus the
    counterfactual scale and shape free.  A counterfactual sample with no
    exceedances of its threshold gives a lower bound with upper = inf.
    """
    side = Side.parse(side)
    q = float(ndtri(one_sided_level(level, side))) ** 2
    if n_blocks is None:
        n_blocks = (len(factual), len(counterfactual))
    fit_f = fit_pot(factual, thresholds[0], n_blocks[0], event.tail)
    if not fit_f.converged:
        raise ConvergenceError("factual fit did not converge")
    c = event.cutoff if event.tail is Tail.UPPER else -event.cutoff
    values_c, u_c = _oriented(counterfactual, thresholds[1], event.tail)
    exc_c = values_c[values_c > u_c]
    pf_hat = float(exceedance_probability(c, fit_f.params))
    if pf_hat <= 0.0:
        raise ConvergenceError("event lies beyond the fitted factual end point")

    if exc_c.size == 0:
        if c < u_c:
            raise ValueError("event cutoff below a counterfactual threshold with no "
                             "exceedances; the constraint is not identifiable")
        fit_c = None
        # with no counterfactual exceedances the intensity above u_C can be
        # pushed to zero, so that scenario's supremum is 0
        ll_hat = fit_f.log_likelihood
        rr_hat = math.inf
    else:
        fit_c = fit_pot(counterfactual, thresholds[1], n_blocks[1], event.tail)
        if not fit_c.converged:
            raise ConvergenceError("counterfactual fit did not converge")
        pc_hat = float(exceedance_probability(c, fit_c.params))
        ll_hat = fit_f.log_likelihood + fit_c.log_likelihood
        rr_hat = math.inf if pc_hat == 0.0 else pf_hat / pc_hat

    prof = _Profile(fit_f, fit_c, c, exc_c, u_c, n_blocks[1])

    def lam(s):
        return max(0.0, 2.0 * (ll_hat - prof.loglik(s)))

    def edge(s_start, direction):
        # expand outward until lambda exceeds q, then solve on the bracket
        prof.warm = prof.start.copy()
        s_in, step = s_start, 0.5
        while True:
            s_out = s_in + direction * step
            if abs(s_out) > 50.0:
                return direction * math.inf
            if lam(s_out) > q:
                break
            s_in, step = s_out, step * 2.0
        return brentq(lambda s: lam(s) - q, min(s_in, s_out), max(s_in, s_out), xtol=1e-6)

    if math.isfinite(rr_hat):
        s_hat = math.log(rr_hat)
        lam_hat = lam(s_hat)
        if lam_hat > q:
            raise ConvergenceError("constrained fit at the estimate is worse than the "
                                   "unconstrained one", rr0=rr_hat)
        diag = {"lambda_at_estimate": lam_hat}
    else:
        # no interior maximum: start from a ratio where p_C is already tiny
        s_hat = math.log(pf_hat) + 20.0
        diag = {}
    lo = hi = None
    if side is not Side.UPPER:
        lo = math.exp(edge(s_hat, -1.0))
    if side is not Side.LOWER:
        hi = math.inf if fit_c is None else math.exp(edge(s_hat, 1.0))
    diag.update({"n_exceed_factual": float(fit_f.n_exceedances),
                 "n_exceed_counterfactual": float(exc_c.size)})
    return as_interval(rr_hat, lo if lo is not None else 0.0,
                       hi if hi is not None else math.inf, level, side, "eva-lrt", diag)
