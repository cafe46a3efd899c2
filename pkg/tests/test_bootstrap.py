import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from riskratio import bootstrap as boot
from riskratio.core import (EventDefinition, NotComputableError, RawSample, ScenarioPair,
                            TotalDegeneracyError)

EV = EventDefinition(0.5)


def counts(yf, nf, yc, nc):
    return ScenarioPair.from_counts(yf, nf, yc, nc)


def raw(hits_f, hits_c):
    return ScenarioPair(RawSample(np.asarray(hits_f, float)), RawSample(np.asarray(hits_c, float)))


def dist(values, estimate, **kw):
    return boot.BootstrapDistribution(np.asarray(values, float), 0, estimate, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        boot.BootstrapConfig(n_b=50)
    with pytest.raises(ValueError):
        boot.BootstrapConfig(seed=-1)
    with pytest.raises(ValueError):
        boot.BootstrapConfig(degenerate_policy="sometimes")


def test_total_degeneracy():
    with pytest.raises(TotalDegeneracyError, match="counterfactual"):
        boot.resample_pair(counts(5, 10, 0, 10), boot.BootstrapConfig())


@pytest.mark.parametrize("method", boot.METHODS)
def test_constant_resamples_give_point_interval(method):
    data = raw(np.ones(8), np.ones(5))
    iv = boot.bootstrap_interval(data, method, cfg=boot.BootstrapConfig(500), event=EV)
    assert (iv.lower, iv.upper) == (1.0, 1.0)


def test_member_resampling_matches_enumeration():
    data = raw([1, 0, 0], [1, 1, 0])
    d = boot.resample_pair(data, boot.BootstrapConfig(100_000, seed=9), EV)
    # recover the counts from the replicates via the seeded draws directly
    yf, _ = boot._draw_counts(data.factual, EV, 9, 100_000, 0)
    yc, _ = boot._draw_counts(data.counterfactual, EV, 9, 100_000, 1)
    freq = Counter(zip(yf.tolist(), yc.tolist()))
    for a in range(4):
        for b in range(4):
            p = binom.pmf(a, 3, 1 / 3) * binom.pmf(b, 3, 2 / 3)
            se = math.sqrt(p * (1 - p) / 100_000)
            assert abs(freq[(a, b)] / 100_000 - p) <= 4 * se + 1e-12
    assert d.n_degenerate == int(((yf == 0) | (yc == 0)).sum())


def test_hand_built_three_point_set():
    d = dist([0.0, math.log(2), math.log(4)], math.log(2))
    p = boot.boot_percentile(d, 0.5)
    b = boot.boot_basic(d, 0.5)
    assert (p.lower, p.upper) == pytest.approx((1.0, 4.0))
    assert (b.lower, b.upper) == pytest.approx((1.0, 4.0))


def test_order_statistic_rule():
    srt = np.arange(1.0, 11.0)[None, :]
    m = np.array([10])
    assert boot.order_stat(srt, m, 0.05)[0] == 1.0      # ceil(0.5) = 1
    assert boot.order_stat(srt, m, 0.95)[0] == 10.0     # ceil(9.5) = 10
    assert boot.order_stat(srt, m, 0.30)[0] == 3.0      # exact multiple, no rounding up


def test_symmetric_distribution_percentile_equals_basic():
    rng = np.random.default_rng(3)
    half = rng.normal(size=500)
    # 1001 points, so the ranks ceil(0.05 m) and ceil(0.95 m) mirror each other
    d = dist(np.concatenate([0.7 + half, 0.7 - half, [0.7]]), 0.7)
    p, b = boot.boot_percentile(d, 0.9), boot.boot_basic(d, 0.9)
    assert (p.lower, p.upper) == pytest.approx((b.lower, b.upper), rel=1e-12)


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 2**32))
def test_basic_percentile_duality_and_nesting(yf, yc, seed):
    d = boot.resample_pair(counts(yf, 50, yc, 50), boot.BootstrapConfig(300, seed))
    p, b = boot.boot_percentile(d, 0.9), boot.boot_basic(d, 0.9)
    est = math.exp(d.estimate)
    assert b.lower == pytest.approx(est**2 / p.upper if p.upper < math.inf else 0.0, rel=1e-9)
    assert b.upper == pytest.approx(est**2 / p.lower if p.lower > 0 else math.inf, rel=1e-9)
    for method in ("boot-percentile", "boot-basic", "boot-bca", "boot-normal", "boot-studentized"):
        fn = boot.INTERVALS[method]
        try:
            wide, narrow = fn(d, 0.95), fn(d, 0.90)
        except NotComputableError:
            continue
        assert wide.lower <= narrow.lower and wide.upper >= narrow.upper


def test_determinism_and_block_streams():
    data = counts(12, 40, 5, 40)
    a = boot.resample_pair(data, boot.BootstrapConfig(3000, seed=11))
    b = boot.resample_pair(data, boot.BootstrapConfig(3000, seed=11))
    c = boot.resample_pair(data, boot.BootstrapConfig(1024, seed=11))
    assert np.array_equal(a.replicates, b.replicates, equal_nan=True)
    assert np.array_equal(a.replicates[:1024], c.replicates, equal_nan=True)
    assert boot.boot_bca(a) == boot.boot_bca(b)


def test_policies_and_diagnostics():
    data = counts(3, 20, 2, 20)
    drop = boot.resample_pair(data, boot.BootstrapConfig(2000, 1))
    err = boot.resample_pair(data, boot.BootstrapConfig(2000, 1, "error"))
    assert drop.n_degenerate > 0
    iv = boot.boot_normal(drop)
    assert iv.diagnostics["n_degenerate"] == drop.n_degenerate
    assert iv.diagnostics["n_dropped"] == int((~np.isfinite(drop.replicates)).sum())
    assert iv.diagnostics["drop_policy_fired"] == 1.0
    for fn in (boot.boot_normal, boot.boot_studentized, boot.boot_bca):
        with pytest.raises(NotComputableError, match="policy 'error'"):
            fn(err)


def test_normal_interval_formula():
    rng = np.random.default_rng(0)
    reps = rng.normal(1.0, 0.3, size=1000)
    iv = boot.boot_normal(dist(reps, 1.0), 0.9)
    sd = reps.std(ddof=1)
    assert iv.lower == pytest.approx(math.exp(1.0 - 1.6448536269514722 * sd), rel=1e-12)


def test_studentized_formula():
    theta = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    se = np.array([0.1, 0.1, 0.1, 0.1, 0.1])
    d = dist(theta, 0.3, se_hat=0.2, se_replicates=se)
    iv = boot.boot_studentized(d, 0.5)     # one-sided 0.75: ranks ceil(1.25)=2, ceil(3.75)=4
    z = (theta - 0.3) / se
    assert iv.lower == pytest.approx(math.exp(0.3 - 0.2 * np.sort(z)[3]))
    assert iv.upper == pytest.approx(math.exp(0.3 - 0.2 * np.sort(z)[1]))


def _jackknife_accel(hits_f, hits_c):
    """Brute-force delete-one jackknife over all members of both samples."""
    def theta(f, c):
        return math.log(np.mean(f)) - math.log(np.mean(c))
    vals = [theta(np.delete(hits_f, i), hits_c) for i in range(len(hits_f))]
    lf = (len(hits_f) - 1) * (np.mean(vals) - np.array(vals))
    vals = [theta(hits_f, np.delete(hits_c, i)) for i in range(len(hits_c))]
    lc = (len(hits_c) - 1) * (np.mean(vals) - np.array(vals))
    lf, lc = lf / len(hits_f), lc / len(hits_c)
    l = np.concatenate([lf, lc])
    return (l**3).sum() / (6 * (l**2).sum() ** 1.5)


@pytest.mark.parametrize("yf,nf,yc,nc", [(7, 20, 3, 15), (2, 10, 9, 12), (30, 40, 5, 40)])
def test_bca_acceleration_matches_jackknife(yf, nf, yc, nc):
    hf = np.r_[np.ones(yf), np.zeros(nf - yf)]
    hc = np.r_[np.ones(yc), np.zeros(nc - yc)]
    a = float(boot.acceleration_counts(yf, nf, yc, nc))
    assert a == pytest.approx(_jackknife_accel(hf, hc), rel=1e-10)


def test_count_bounds_matches_scalar_path():
    rng = np.random.default_rng(4)
    out, deg = boot.count_bounds(["boot-percentile"], np.array([6]), 30, np.array([3]), 30,
                                 0.95, 1000, rng)
    lo, hi = out["boot-percentile"]
    assert 0 < lo[0] < 2.0 < hi[0]
    out, _ = boot.count_bounds(["boot-basic"], np.array([6, 0]), 30, np.array([0, 3]), 30,
                               0.95, 1000, np.random.default_rng(4))
    assert np.isnan(out["boot-basic"][0]).all()


def test_unknown_method():
    with pytest.raises(ValueError):
        boot.bootstrap_interval(counts(2, 5, 2, 5), "boot-magic")
