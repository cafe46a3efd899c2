import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.optimize import brentq
from scipy.special import ndtri

from conftest import GOLDEN_INTERVALS
from riskratio import ratio_intervals as ri
from riskratio import simstudy
from riskratio.core import NotComputableError, ScenarioPair

N = 400
CLOSED = ("delta", "lrt", "koopman", "wilson")


def pair(yf, yc, nf=N, nc=N):
    return ScenarioPair.from_counts(yf, nf, yc, nc)


def printed(x, ref):
    """x rounded like the printed reference agrees within one unit of its last digit."""
    digits = len(str(ref).split(".")[1]) if "." in str(ref) else 0
    sig = max(0, digits)
    return abs(round(x, sig) - ref) <= 10 ** -sig + 1e-12


@pytest.mark.parametrize("yf,yc,lrt,koop", GOLDEN_INTERVALS)
def test_golden_intervals(yf, yc, lrt, koop):
    for fn, ref in ((ri.lrt_interval, lrt), (ri.koopman_interval, koop)):
        iv = fn(pair(yf, yc), 0.90)
        assert printed(iv.lower, ref[0])
        if ref[1] is None:
            assert iv.upper == math.inf
        else:
            assert printed(iv.upper, ref[1])


def test_critical_value():
    assert ri.critical_value(0.95) == pytest.approx(2.705543454095404, rel=1e-14)
    assert ri.critical_value(0.975) == pytest.approx(3.841458820694124, rel=1e-14)


def test_delta_hand_computation():
    pf, pc = 129 / N, 3 / N
    se = math.sqrt((1 - pf) / (N * pf) + (1 - pc) / (N * pc))
    z = 1.6448536269514722
    iv = ri.delta_interval(pair(129, 3), 0.90)
    assert iv.lower == pytest.approx(43 * math.exp(-z * se), rel=1e-12)
    assert iv.upper == pytest.approx(43 * math.exp(z * se), rel=1e-12)
    assert (round(iv.lower, 2), round(iv.upper, 2)) == (16.57, 111.58)


def test_delta_symmetric_and_not_computable():
    iv = ri.delta_interval(pair(20, 20), 0.9)
    assert math.log(iv.lower) == pytest.approx(-math.log(iv.upper))
    with pytest.raises(NotComputableError, match="zero count"):
        ri.delta_interval(pair(5, 0, 10, 10))


def _wilson_oracle(yf, nf, yc, nc, level):
    z = ndtri((1 + level) / 2)
    s = yf + yc
    p = yf / s
    centre = (p + z * z / (2 * s)) / (1 + z * z / s)
    half = z / (1 + z * z / s) * math.sqrt(p * (1 - p) / s + z * z / (4 * s * s))
    to_rr = lambda t: (nc / nf) * t / (1 - t)
    return to_rr(centre - half), to_rr(centre + half)


@pytest.mark.parametrize("yf,yc,nf,nc", [(129, 3, 400, 400), (10, 7, 50, 80), (1, 1, 5, 5)])
def test_wilson_matches_formula(yf, yc, nf, nc):
    iv = ri.wilson_interval(pair(yf, yc, nf, nc), 0.90)
    lo, hi = _wilson_oracle(yf, nf, yc, nc, 0.90)
    assert iv.lower == pytest.approx(lo, rel=1e-10)
    assert iv.upper == pytest.approx(hi, rel=1e-10)


def test_wilson_zero_counterfactual():
    iv = ri.wilson_interval(pair(5, 0, 100, 100), 0.90)
    assert 0 < iv.lower < math.inf and iv.upper == math.inf
    assert ri.wilson_interval(pair(20, 20), 0.9).contains(1.0)


def _profile_root(yf, nf, yc, nc, rr0):
    """Numeric maximiser of the profile log-likelihood over pC (score root)."""
    hi = min(1.0, 1.0 / rr0)

    def score(pc):
        out = (yf + yc) / pc
        if yf < nf:
            out -= rr0 * (nf - yf) / (1 - rr0 * pc)
        if yc < nc:
            out -= (nc - yc) / (1 - pc)
        return out

    eps = 1e-300
    if score(hi * (1 - 1e-15)) > 0:
        return hi
    return brentq(score, eps, hi * (1 - 1e-15), xtol=1e-300, rtol=1e-15, maxiter=500)


def test_constrained_mle_against_numeric_profile():
    rng = np.random.default_rng(12)
    for _ in range(100):
        nf, nc = rng.integers(5, 500, size=2)
        yf, yc = rng.integers(1, nf), rng.integers(1, nc)
        rr0 = float(np.exp(rng.uniform(-3, 3)))
        m = ri.constrained_binomial_mle(pair(yf, yc, nf, nc), rr0)
        assert m.pC_tilde == pytest.approx(_profile_root(yf, nf, yc, nc, rr0), rel=1e-8, abs=1e-12)
        assert m.pF_tilde == pytest.approx(rr0 * m.pC_tilde, rel=1e-12)


def test_constrained_mle_trivial_cases():
    m = ri.constrained_binomial_mle(pair(129, 3), 43.0)
    assert (m.pF_tilde, m.pC_tilde) == pytest.approx((129 / N, 3 / N), rel=1e-10)
    m = ri.constrained_binomial_mle(pair(0, 0), 3.0)
    assert (m.pF_tilde, m.pC_tilde) == (0.0, 0.0)
    with pytest.raises(ValueError):
        ri.constrained_binomial_mle(pair(1, 1), 0.0)


@given(st.integers(1, 60), st.integers(1, 60), st.integers(60, 120), st.integers(60, 120))
def test_statistics_vanish_at_estimate(yf, yc, nf, nc):
    d = pair(yf, yc, nf, nc)
    rr_hat = (yf / nf) / (yc / nc)
    assert abs(ri.lr_statistic(d, rr_hat)) < 1e-8
    assert abs(ri.koopman_statistic(d, rr_hat)) < 1e-8
    for rr0 in (0.1, 1.0, 7.0):
        assert ri.lr_statistic(d, rr0) >= 0.0


def test_lrt_bounds_hit_critical_value():
    d = pair(245, 11)
    iv = ri.lrt_interval(d, 0.90)
    q = ri.critical_value(0.95)
    assert ri.lr_statistic(d, iv.lower) == pytest.approx(q, abs=1e-6)
    assert ri.lr_statistic(d, iv.upper) == pytest.approx(q, abs=1e-6)


@pytest.mark.parametrize("method", CLOSED + ("wang-shan",))
def test_both_zero_not_computable(method):
    fn = getattr(ri, method.replace("-", "_") + "_interval")
    with pytest.raises(NotComputableError, match="zero"):
        fn(pair(0, 0, 10, 10))


counts = st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(40, 80), st.integers(40, 80))


@pytest.mark.parametrize("method", CLOSED)
@given(c=counts)
def test_reciprocal_under_swap(method, c):
    yf, yc, nf, nc = c
    assume(yf + yc > 0 and (method != "delta" or yf * yc > 0))
    fn = getattr(ri, f"{method}_interval")
    a = fn(pair(yf, yc, nf, nc), 0.9)
    b = fn(pair(yc, yf, nc, nf), 0.9)
    inv = lambda x: math.inf if x == 0 else 1 / x
    assert a.lower == pytest.approx(inv(b.upper), rel=1e-7)
    assert a.upper == pytest.approx(inv(b.lower), rel=1e-7)


@pytest.mark.parametrize("method", CLOSED)
@given(c=counts)
def test_nested_levels_and_estimate_inside(method, c):
    yf, yc, nf, nc = c
    assume(yf > 0 and yc > 0)
    fn = getattr(ri, f"{method}_interval")
    wide, narrow = fn(pair(yf, yc, nf, nc), 0.95), fn(pair(yf, yc, nf, nc), 0.8)
    assert wide.lower <= narrow.lower * (1 + 1e-9)
    assert wide.upper >= narrow.upper * (1 - 1e-9)
    if method != "wilson":
        assert narrow.lower <= narrow.estimate <= narrow.upper


def test_one_sided_is_endpoint_of_two_sided():
    d = pair(129, 3)
    two = ri.koopman_interval(d, 0.90)
    assert ri.koopman_interval(d, 0.95, "lower").lower == pytest.approx(two.lower, rel=1e-12)
    assert ri.koopman_interval(d, 0.95, "upper").upper == pytest.approx(two.upper, rel=1e-12)


def test_lrt_continuous_in_interior():
    base = ri.lrt_interval(pair(100, 20), 0.9)
    near = ri.lrt_interval(pair(100, 20, N, N + 1), 0.9)
    assert near.lower == pytest.approx(base.lower, rel=0.01)


def test_vectorised_matches_scalar():
    yf, yc = np.array([2, 43, 129, 0]), np.array([0, 0, 3, 5])
    lo, hi = ri.count_bounds("koopman", yf, N, yc, N, 0.95)
    for k in range(len(yf)):
        iv = ri.koopman_interval(pair(int(yf[k]), int(yc[k])), 0.9)
        assert (lo[k], hi[k]) == pytest.approx((iv.lower, iv.upper), rel=1e-12)
    with pytest.raises(ValueError, match="unknown method"):
        ri.count_bounds("nope", yf, N, yc, N, 0.95)


# exact coverage on the simulation grid at n = 25

def _grid_min(method):
    return min(simstudy.exact_coverage(25, rr, pf, method, 0.95)
               for rr in simstudy.DEFAULT_RR for pf in simstudy.DEFAULT_PF)


@pytest.mark.parametrize("method", ["koopman", "wilson"])
def test_score_methods_nearly_conservative(method):
    assert _grid_min(method) >= 0.95 - 0.01


@pytest.mark.xfail(strict=True, reason="exact LRT lower coverage reaches 0.8897 at "
                   "n=25, RR=1, pF=0.05; see decisions ledger")
def test_lrt_lower_coverage_floor():
    assert _grid_min("lrt") >= 0.90


def test_lrt_undercovers_somewhere():
    assert _grid_min("lrt") < 0.95
