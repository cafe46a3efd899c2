import numpy as np
import pytest
from scipy.stats import norm

from riskratio.core import BinomialCount, DegenerateSampleError, EventDefinition, RawSample, Tail
from riskratio.estimation import (Source, estimate_nonparametric, estimate_parametric_normal,
                                  normal_tail)


def test_nonparametric_counts_and_raw():
    assert estimate_nonparametric(BinomialCount(7, 20)).value == pytest.approx(0.35)
    s = RawSample([0.1, 0.5, 2.0, 3.0])
    est = estimate_nonparametric(s, EventDefinition(1.0))
    assert est.value == 0.5 and est.n_effective == 4 and est.source is Source.NONPARAMETRIC
    assert estimate_nonparametric(s, EventDefinition(1.0, Tail.LOWER)).value == 0.5
    with pytest.raises(ValueError):
        estimate_nonparametric(s)


def test_normal_tail_matches_scipy():
    x = np.random.default_rng(1).normal(2.0, 3.0, size=50)
    expect = norm.sf(7.0, loc=x.mean(), scale=x.std(ddof=1))
    assert normal_tail(x, 7.0) == pytest.approx(expect, rel=1e-12)


def test_normal_tail_far_tail_keeps_relative_precision():
    x = np.array([-1.0, 0.0, 1.0])
    assert normal_tail(x, 30.0) == pytest.approx(norm.sf(30.0), rel=1e-10)


def test_parametric_lower_tail_and_degenerate():
    x = RawSample(np.random.default_rng(2).normal(size=200))
    up = estimate_parametric_normal(x, EventDefinition(-1.0, Tail.LOWER))
    assert up.source is Source.PARAMETRIC_NORMAL
    assert up.value == pytest.approx(norm.cdf(-1.0, x.values.mean(), x.values.std(ddof=1)))
    with pytest.raises(DegenerateSampleError):
        estimate_parametric_normal(RawSample([1.0, 1.0, 1.0]), EventDefinition(0.0))
