"""Compiled kernels. Mirrors ``numpy_impl`` function-for-function."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LRT = 0
KOOPMAN = 1

_S_MAX = 700.0
_S_TOL = 1e-10


# -- binomial two-sample statistics -------------------------------------------

@njit(cache=True)
def _xlogy(x, y):
    if x == 0.0:
        return 0.0
    return x * math.log(y)


@njit(cache=True)
def _xlog1my(x, y):
    if x == 0.0:
        return 0.0
    return x * math.log1p(-y)


@njit(cache=True)
def _binom_ll(y, n, p):
    return _xlogy(y, p) + _xlog1my(n - y, p)


@njit(cache=True)
def constrained_mle(yf, nf, yc, nc, phi):
    """Maximiser of the two-binomial likelihood subject to p_f = phi * p_c."""
    c = yf + yc
    if c == 0.0:
        return 0.0, 0.0
    a = phi * (nf + nc)
    b = -(phi * (nf + yc) + yf + nc)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        disc = 0.0
    # smaller quadratic root, written to avoid cancellation
    pc = 2.0 * c / (-b + math.sqrt(disc))
    pf = phi * pc
    if pf > 1.0:
        pf = 1.0
    if pc > 1.0:
        pc = 1.0
    return pf, pc


@njit(cache=True)
def _pearson_term(y, n, p):
    num = (y - n * p) ** 2
    den = n * p * (1.0 - p)
    if den <= 0.0:
        if num == 0.0:
            return 0.0
        return math.inf
    return num / den


@njit(cache=True)
def statistic(kind, yf, nf, yc, nc, s):
    phi = math.exp(s)
    pf, pc = constrained_mle(yf, nf, yc, nc, phi)
    if kind == LRT:
        full = _binom_ll(yf, nf, yf / nf) + _binom_ll(yc, nc, yc / nc)
        con = _binom_ll(yf, nf, pf) + _binom_ll(yc, nc, pc)
        lam = 2.0 * (full - con)
        if lam < 0.0:
            lam = 0.0
        return lam
    return _pearson_term(yf, nf, pf) + _pearson_term(yc, nc, pc)


@njit(cache=True)
def _edge(kind, yf, nf, yc, nc, q, s_in, direction):
    """Boundary of {s : stat(s) <= q} on one side of an interior point."""
    step = 1.0
    s_out = s_in + direction * step
    while statistic(kind, yf, nf, yc, nc, s_out) <= q:
        step *= 2.0
        s_out = s_in + direction * step
        if abs(s_out) > _S_MAX:
            return direction * math.inf
    lo, hi = s_in, s_out
    while abs(hi - lo) > _S_TOL:
        mid = 0.5 * (lo + hi)
        if statistic(kind, yf, nf, yc, nc, mid) <= q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _anchor(kind, yf, nf, yc, nc, q, direction):
    """Interior starting point when the point estimate is 0 or infinite."""
    s = 0.0
    step = 1.0
    while statistic(kind, yf, nf, yc, nc, s) > q:
        s += direction * step
        step *= 2.0
        if abs(s) > _S_MAX:
            return math.nan
    return s


@njit(cache=True)
def invert_counts(kind, yf, nf, yc, nc, q):
    """Vectorised test inversion. Returns (lower, upper); NaN marks 0/0 data."""
    m = yf.shape[0]
    lower = np.empty(m)
    upper = np.empty(m)
    for i in range(m):
        a, na, b, nb = float(yf[i]), float(nf[i]), float(yc[i]), float(nc[i])
        if a == 0.0 and b == 0.0:
            lower[i] = math.nan
            upper[i] = math.nan
            continue
        if a > 0.0 and b > 0.0:
            s_in = math.log((a / na) / (b / nb))
        elif b == 0.0:
            s_in = _anchor(kind, a, na, b, nb, q[i], 1.0)
        else:
            s_in = _anchor(kind, a, na, b, nb, q[i], -1.0)
        if a == 0.0:
            lower[i] = 0.0
        else:
            lower[i] = math.exp(_edge(kind, a, na, b, nb, q[i], s_in, -1.0))
        if b == 0.0:
            upper[i] = math.inf
        else:
            upper[i] = math.exp(_edge(kind, a, na, b, nb, q[i], s_in, 1.0))
    return lower, upper


# -- Wang-Shan inductive construction ---------------------------------------

@njit(cache=True)
def binom_pmf_into(n, p, out):
    for k in range(n + 1):
        out[k] = 0.0
    if p <= 0.0:
        out[0] = 1.0
        return
    if p >= 1.0:
        out[n] = 1.0
        return
    m = int((n + 1) * p)
    if m > n:
        m = n
    logc = math.lgamma(n + 1.0) - math.lgamma(m + 1.0) - math.lgamma(n - m + 1.0)
    out[m] = math.exp(logc + m * math.log(p) + (n - m) * math.log1p(-p))
    r = p / (1.0 - p)
    for k in range(m, n):
        out[k + 1] = out[k] * (n - k) / (k + 1.0) * r
    ri = (1.0 - p) / p
    for k in range(m, 0, -1):
        out[k - 1] = out[k] * k / (n - k + 1.0) * ri


@njit(cache=True)
def _line_point(theta, t):
    # nuisance t is the larger of the two probabilities on the line p_f = theta p_c
    if theta >= 1.0:
        return t, t / theta
    return theta * t, t


@njit(cache=True)
def _set_prob(theta, t, nf, nc, h, xc, row_f, row_c, cum_c):
    pf, pc = _line_point(theta, t)
    binom_pmf_into(nf, pf, row_f)
    binom_pmf_into(nc, pc, row_c)
    acc = 0.0
    for y in range(nc + 1):
        acc += row_c[y]
        cum_c[y] = acc
    total = 0.0
    for x in range(nf + 1):
        k = h[x]
        if x == xc:
            k += 1
        if k > 0:
            total += row_f[x] * cum_c[k - 1]
    return total


@njit(cache=True)
def _rows(theta, j, ts, nf, nc, tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c):
    """pmf rows at grid point j; the side pinned to t_j comes from the tables."""
    t = ts[j]
    if theta >= 1.0:
        binom_pmf_into(nc, t / theta, row_c)
        acc = 0.0
        for y in range(nc + 1):
            acc += row_c[y]
            cum_c[y] = acc
        return tab_f[j], row_c, cum_c
    binom_pmf_into(nf, theta * t, row_f)
    return row_f, tab_c[j], cum_tab_c[j]


@njit(cache=True)
def _select_eval(theta, ts, nf, nc, h, cands, ncand, tab_f, tab_c, cum_tab_c,
                 row_f, row_c, cum_c, work, jbest):
    """min over candidates of the (parabola-corrected) grid maximum.

    work[0..3] rows hold, per candidate: best value, value before it, value
    after it, previous value.
    """
    vbest = work[0]
    vbm1 = work[1]
    vbp1 = work[2]
    vprev = work[3]
    pending = work[4]
    for c in range(ncand):
        vbest[c] = -1.0
        vbm1[c] = -1.0
        vbp1[c] = -1.0
        vprev[c] = -1.0
        pending[c] = 0.0
        jbest[c] = 0
    G = ts.shape[0]
    for j in range(G):
        rf, rc, cc = _rows(theta, j, ts, nf, nc, tab_f, tab_c, cum_tab_c,
                           row_f, row_c, cum_c)
        base = 0.0
        for x in range(nf + 1):
            k = h[x]
            if k > 0:
                base += rf[x] * cc[k - 1]
        for c in range(ncand):
            x = cands[c]
            v = base + rf[x] * rc[h[x]]
            if v > vbest[c]:
                vbest[c] = v
                jbest[c] = j
                vbm1[c] = vprev[c] if j > 0 else -1.0
                pending[c] = 1.0
            elif pending[c] > 0.0:
                vbp1[c] = v
                pending[c] = 0.0
            vprev[c] = v
    gmin = math.inf
    cmin = 0
    for c in range(ncand):
        g = vbest[c]
        a = vbm1[c]
        b = vbp1[c]
        if a >= 0.0 and b >= 0.0 and pending[c] == 0.0:
            den = 2.0 * g - a - b
            if den > 0.0:
                g += (b - a) ** 2 / (8.0 * den)
        if g < gmin:
            gmin = g
            cmin = c
    return gmin, cmin


@njit(cache=True)
def _local_sup(theta, ts, j, nf, nc, h, xc, row_f, row_c, cum_c):
    """Golden-section refinement of the nuisance maximum around grid index j."""
    G = ts.shape[0]
    a = ts[j - 2] if j >= 2 else 0.0
    b = ts[j + 2] if j + 2 < G else 1.0
    best = _set_prob(theta, ts[j], nf, nc, h, xc, row_f, row_c, cum_c)
    for t in (a, b):
        v = _set_prob(theta, t, nf, nc, h, xc, row_f, row_c, cum_c)
        if v > best:
            best = v
    invphi = 0.6180339887498949
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _set_prob(theta, c, nf, nc, h, xc, row_f, row_c, cum_c)
    fd = _set_prob(theta, d, nf, nc, h, xc, row_f, row_c, cum_c)
    for _ in range(60):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _set_prob(theta, c, nf, nc, h, xc, row_f, row_c, cum_c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _set_prob(theta, d, nf, nc, h, xc, row_f, row_c, cum_c)
        if b - a < 1e-13:
            break
    for v in (fc, fd):
        if v > best:
            best = v
    return best


@njit(cache=True)
def ws_lower_table(nf, nc, alpha, grid_size):
    """Lower one-sided (1 - alpha) bounds for every outcome (y_f, y_c)."""
    s_floor = -50.0
    ts = np.arange(1, grid_size + 1) / grid_size
    table = np.full((nf + 1, nc + 1), np.nan)
    h = np.zeros(nf + 1, dtype=np.int64)
    cands = np.zeros(nf + 1, dtype=np.int64)
    work = np.zeros((5, nf + 1))
    jbest = np.zeros(nf + 1, dtype=np.int64)
    tab_f = np.zeros((grid_size, nf + 1))
    tab_c = np.zeros((grid_size, nc + 1))
    for j in range(grid_size):
        binom_pmf_into(nf, ts[j], tab_f[j])
        binom_pmf_into(nc, ts[j], tab_c[j])
    cum_tab_c = np.zeros((grid_size, nc + 1))
    for j in range(grid_size):
        acc = 0.0
        for y in range(nc + 1):
            acc += tab_c[j, y]
            cum_tab_c[j, y] = acc
    row_f = np.zeros(nf + 1)
    row_c = np.zeros(nc + 1)
    cum_c = np.zeros(nc + 1)
    prev = math.inf
    s_hint = 0.0
    stride = 0.5
    for _step in range((nf + 1) * (nc + 1)):
        ncand = 0
        for x in range(nf + 1):
            if h[x] <= nc and (x == nf or h[x + 1] > h[x]):
                cands[ncand] = x
                ncand += 1

        # bracket sup{s : min_c g_c(e^s) <= alpha}
        s_out = s_hint
        step = stride
        g, _ = _select_eval(math.exp(s_out), ts, nf, nc, h, cands, ncand,
                            tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c, work, jbest)
        while g <= alpha:
            s_out += step
            step *= 2.0
            g, _ = _select_eval(math.exp(s_out), ts, nf, nc, h, cands, ncand,
                                tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c, work, jbest)
        f_out = g - alpha
        s_in = s_out
        step = stride
        zero = False
        while True:
            s_in = s_in - step
            step *= 2.0
            if s_in < s_floor:
                zero = True
                break
            g, _ = _select_eval(math.exp(s_in), ts, nf, nc, h, cands, ncand,
                                tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c, work, jbest)
            if g <= alpha:
                break
            s_out = s_in
            f_out = g - alpha
        if zero:
            for x in range(nf + 1):
                for y in range(h[x], nc + 1):
                    table[x, y] = 0.0
            break
        f_in = g - alpha

        # Illinois regula falsi with periodic bisection
        side = 0
        it = 0
        while s_out - s_in > 1e-7 and it < 200:
            it += 1
            if it % 4 == 0 or f_out == f_in:
                s = 0.5 * (s_in + s_out)
            else:
                s = s_in - f_in * (s_out - s_in) / (f_out - f_in)
                if not (s_in < s < s_out):
                    s = 0.5 * (s_in + s_out)
            g, _ = _select_eval(math.exp(s), ts, nf, nc, h, cands, ncand,
                                tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c, work, jbest)
            f = g - alpha
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
        g, cmin = _select_eval(math.exp(s_in), ts, nf, nc, h, cands, ncand,
                               tab_f, tab_c, cum_tab_c, row_f, row_c, cum_c, work, jbest)
        xc = cands[cmin]
        jstar = jbest[cmin]
        # successive roots are close; size the next bracket from this move
        stride = min(0.5, max(1e-3, 2.0 * abs(s_out - s_hint)))
        s_hint = s_out

        # refine the chosen set's root with an accurate nuisance supremum
        hi = s_out
        lo = s_in
        step = 1e-6
        while _local_sup(math.exp(lo), ts, jstar, nf, nc, h, xc,
                         row_f, row_c, cum_c) > alpha:
            hi = lo
            lo = lo - step
            step *= 2.0
            if lo < s_floor:
                break
        if lo < s_floor:
            bound = 0.0
        else:
            step = 1e-6
            while hi < _S_MAX and _local_sup(math.exp(hi), ts, jstar, nf, nc, h, xc,
                                             row_f, row_c, cum_c) <= alpha:
                lo = hi
                hi = hi + step
                step *= 2.0
            while hi - lo > _S_TOL:
                mid = 0.5 * (lo + hi)
                if _local_sup(math.exp(mid), ts, jstar, nf, nc, h, xc,
                              row_f, row_c, cum_c) <= alpha:
                    lo = mid
                else:
                    hi = mid
            bound = math.exp(lo)
        if bound > prev:
            bound = prev
        table[xc, h[xc]] = bound
        h[xc] += 1
        prev = bound
    return table
