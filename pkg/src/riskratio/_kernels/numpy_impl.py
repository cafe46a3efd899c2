"""Pure-numpy kernels, vectorised across count pairs / nuisance grid points.

Same contracts as ``numba_impl``; selected when numba is unavailable or
``RISKRATIO_BACKEND=numpy``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import xlog1py, xlogy
from scipy.stats import binom

LRT = 0
KOOPMAN = 1

_S_MAX = 700.0
_S_TOL = 1e-10


def constrained_mle(yf, nf, yc, nc, phi):
    yf, nf, yc, nc, phi = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                for v in (yf, nf, yc, nc, phi)))
    c = yf + yc
    a = phi * (nf + nc)
    b = -(phi * (nf + yc) + yf + nc)
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        pc = np.where(c == 0.0, 0.0, 2.0 * c / (-b + np.sqrt(disc)))
    pf = np.minimum(phi * pc, 1.0)
    return pf, np.minimum(pc, 1.0)


def _binom_ll(y, n, p):
    return xlogy(y, p) + xlog1py(n - y, -p)


def _pearson_term(y, n, p):
    num = (y - n * p) ** 2
    den = n * p * (1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(den <= 0.0, np.where(num == 0.0, 0.0, np.inf), out)


def statistic(kind, yf, nf, yc, nc, s):
    pf, pc = constrained_mle(yf, nf, yc, nc, np.exp(s))
    if kind == LRT:
        full = _binom_ll(yf, nf, yf / nf) + _binom_ll(yc, nc, yc / nc)
        con = _binom_ll(yf, nf, pf) + _binom_ll(yc, nc, pc)
        return np.maximum(2.0 * (full - con), 0.0)
    return _pearson_term(yf, nf, pf) + _pearson_term(yc, nc, pc)


def _edge(kind, yf, nf, yc, nc, q, s_in, direction):
    step = np.ones_like(s_in)
    s_out = s_in + direction * step
    open_ = statistic(kind, yf, nf, yc, nc, s_out) <= q
    unbounded = np.zeros(s_in.shape, dtype=bool)
    while open_.any():
        step = np.where(open_, 2.0 * step, step)
        s_out = s_in + direction * step
        unbounded |= open_ & (np.abs(s_out) > _S_MAX)
        open_ &= ~unbounded
        open_ &= statistic(kind, yf, nf, yc, nc, s_out) <= q
    lo, hi = s_in.copy(), s_out
    while np.any(np.abs(hi - lo) > _S_TOL):
        mid = 0.5 * (lo + hi)
        inside = statistic(kind, yf, nf, yc, nc, mid) <= q
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return np.where(unbounded, direction * np.inf, 0.5 * (lo + hi))


def _anchor(kind, yf, nf, yc, nc, q, direction):
    s = np.zeros(yf.shape)
    step = np.ones(yf.shape)
    out = statistic(kind, yf, nf, yc, nc, s) > q
    while out.any():
        s = np.where(out, s + direction * step, s)
        step = np.where(out, 2.0 * step, step)
        lost = out & (np.abs(s) > _S_MAX)
        s = np.where(lost, np.nan, s)
        out &= ~lost
        out &= statistic(kind, yf, nf, yc, nc, s) > q
    return s


def invert_counts(kind, yf, nf, yc, nc, q):
    yf, nf, yc, nc, q = (np.asarray(v, dtype=float) for v in (yf, nf, yc, nc, q))
    lower = np.full(yf.shape, np.nan)
    upper = np.full(yf.shape, np.nan)
    ok = ~((yf == 0) & (yc == 0))
    both = ok & (yf > 0) & (yc > 0)
    zero_c = ok & (yc == 0)
    zero_f = ok & (yf == 0)

    s_in = np.zeros(yf.shape)
    with np.errstate(divide="ignore"):
        s_in[both] = np.log((yf[both] / nf[both]) / (yc[both] / nc[both]))
    for mask, direction in ((zero_c, 1.0), (zero_f, -1.0)):
        if mask.any():
            s_in[mask] = _anchor(kind, yf[mask], nf[mask], yc[mask], nc[mask], q[mask],
                                 direction)

    need_lo = ok & (yf > 0)
    need_hi = ok & (yc > 0)
    lower[ok & (yf == 0)] = 0.0
    upper[ok & (yc == 0)] = np.inf
    for mask, direction, out in ((need_lo, -1.0, lower), (need_hi, 1.0, upper)):
        if mask.any():
            edge = _edge(kind, yf[mask], nf[mask], yc[mask], nc[mask], q[mask],
                         s_in[mask], direction)
            out[mask] = np.exp(edge)
    return lower, upper


# -- Wang-Shan ----------------------------------------------------------------

def _line_points(theta, t):
    t = np.asarray(t, dtype=float)
    if theta >= 1.0:
        return t, t / theta
    return theta * t, t


def _pmf_rows(n, p):
    return binom.pmf(np.arange(n + 1)[None, :], n, np.asarray(p, dtype=float)[:, None])


def _set_prob(theta, t, nf, nc, h):
    """P(outcome in the upper set described by h) at each nuisance value in t."""
    pf, pc = _line_points(theta, np.atleast_1d(t))
    rf = _pmf_rows(nf, pf)
    cum_c = np.cumsum(_pmf_rows(nc, pc), axis=1)
    idx = np.maximum(h - 1, 0)
    return (rf * np.where(h > 0, cum_c[:, idx], 0.0)).sum(axis=1)


def _select_eval(theta, ts, nf, nc, h, cands, tables):
    """Min over candidates of the parabola-corrected grid maximum."""
    tab_f, tab_c = tables
    if theta >= 1.0:
        rf, rc = tab_f, _pmf_rows(nc, ts / theta)
    else:
        rf, rc = _pmf_rows(nf, theta * ts), tab_c
    cum_c = np.cumsum(rc, axis=1)
    idx = np.maximum(h - 1, 0)
    base = (rf * np.where(h > 0, cum_c[:, idx], 0.0)).sum(axis=1)
    vals = base[:, None] + rf[:, cands] * rc[:, h[cands]]
    cols = np.arange(cands.size)
    jbest = vals.argmax(axis=0)
    g = vals[jbest, cols]
    inner = (jbest > 0) & (jbest < ts.size - 1)
    a = vals[np.maximum(jbest - 1, 0), cols]
    b = vals[np.minimum(jbest + 1, ts.size - 1), cols]
    den = 2.0 * g - a - b
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(inner & (den > 0.0), g + (b - a) ** 2 / (8.0 * den), g)
    cmin = int(np.argmin(g))
    return float(g[cmin]), cmin, int(jbest[cmin])


def _local_sup(theta, ts, j, nf, nc, h):
    G = ts.size
    a = ts[j - 2] if j >= 2 else 0.0
    b = ts[j + 2] if j + 2 < G else 1.0
    fine = np.linspace(a, b, 513)
    vals = _set_prob(theta, fine, nf, nc, h)
    k = int(vals.argmax())
    lo, hi = fine[max(k - 1, 0)], fine[min(k + 1, fine.size - 1)]
    vals2 = _set_prob(theta, np.linspace(lo, hi, 257), nf, nc, h)
    return float(max(vals.max(), vals2.max()))


def ws_lower_table(nf, nc, alpha, grid_size):
    s_floor = -50.0
    ts = np.arange(1, grid_size + 1) / grid_size
    table = np.full((nf + 1, nc + 1), np.nan)
    h = np.zeros(nf + 1, dtype=np.int64)
    tables = (_pmf_rows(nf, ts), _pmf_rows(nc, ts))
    prev = math.inf
    s_hint = 0.0
    stride = 0.5
    for _ in range((nf + 1) * (nc + 1)):
        nxt = np.append(h[1:], nc + 2)
        cands = np.flatnonzero((h <= nc) & (nxt > h))

        def G(s):
            return _select_eval(math.exp(s), ts, nf, nc, h, cands, tables)

        s_out, step = s_hint, stride
        g = G(s_out)[0]
        while g <= alpha:
            s_out += step
            step *= 2.0
            g = G(s_out)[0]
        f_out = g - alpha
        s_in, step, zero = s_out, stride, False
        while True:
            s_in -= step
            step *= 2.0
            if s_in < s_floor:
                zero = True
                break
            g = G(s_in)[0]
            if g <= alpha:
                break
            s_out, f_out = s_in, g - alpha
        if zero:
            for x in range(nf + 1):
                table[x, h[x]:] = 0.0
            break
        f_in = g - alpha
        side, it = 0, 0
        while s_out - s_in > 1e-7 and it < 200:
            it += 1
            if it % 4 == 0 or f_out == f_in:
                s = 0.5 * (s_in + s_out)
            else:
                s = s_in - f_in * (s_out - s_in) / (f_out - f_in)
                if not s_in < s < s_out:
                    s = 0.5 * (s_in + s_out)
            f = G(s)[0] - alpha
            if f <= 0.0:
                s_in, f_in = s, f
                if side == -1:
                    f_out *= 0.5
                side = -1
            else:
                s_out, f_out = s, f
                if side == 1:
                    f_in *= 0.5
                side = 1
        _, cmin, jstar = G(s_in)
        xc = int(cands[cmin])
        stride = min(0.5, max(1e-3, 2.0 * abs(s_out - s_hint)))
        s_hint = s_out

        h_next = h.copy()
        h_next[xc] += 1
        hi, lo, step = s_out, s_in, 1e-6
        while _local_sup(math.exp(lo), ts, jstar, nf, nc, h_next) > alpha:
            hi, lo = lo, lo - step
            step *= 2.0
            if lo < s_floor:
                break
        if lo < s_floor:
            bound = 0.0
        else:
            step = 1e-6
            while hi < _S_MAX and _local_sup(math.exp(hi), ts, jstar, nf, nc, h_next) <= alpha:
                lo, hi = hi, hi + step
                step *= 2.0
            while hi - lo > _S_TOL:
                mid = 0.5 * (lo + hi)
                if _local_sup(math.exp(mid), ts, jstar, nf, nc, h_next) <= alpha:
                    lo = mid
                else:
                    hi = mid
            bound = math.exp(lo)
        bound = min(bound, prev)
        table[xc, h[xc]] = bound
        h = h_next
        prev = bound
    return table
