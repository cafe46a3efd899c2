import math

import numpy as np
import pytest

from riskratio import ratio_intervals as ri
from riskratio import simstudy
from riskratio import wang_shan as ws
from riskratio.core import InfeasibleSizeError, ScenarioPair


@pytest.fixture(scope="module")
def t10():
    return ws.get_table(10, 10, 0.95)


def test_shipped_table_matches_fresh_build(t10):
    fresh = ws.build_table(10, 10, 0.95)
    np.testing.assert_allclose(fresh.bounds, t10.bounds, rtol=1e-12)


def test_structure(t10):
    b = t10.bounds
    assert np.all(b[0, 1:] == 0.0)
    assert np.all(np.diff(b, axis=0) >= -1e-12), "more factual events never lowers the bound"
    assert np.all(np.diff(b, axis=1) <= 1e-12), "more counterfactual events never raises it"


def test_partial_order_example(t10):
    assert t10.lower(5, 0) > t10.lower(5, 1) > 0
    iv = ri.wang_shan_interval(ScenarioPair.from_counts(10, 10, 0, 10), 0.95, "lower")
    assert 1.0 < iv.lower < math.inf and iv.upper == math.inf


def test_exact_lower_coverage_n10(t10):
    worst = min(simstudy_cov(rr, pf, t10) for rr in (1, 1.5, 2, 4, 8, 16)
                for pf in np.linspace(0.02, 1.0, 25) if pf / rr <= 1)
    assert worst >= 0.95


def simstudy_cov(rr, pf, table):
    from scipy.stats import binom
    yf, yc = simstudy.outcome_grid(10)
    w = binom.pmf(yf, 10, pf) * binom.pmf(yc, 10, pf / rr)
    return w[table.bounds[yf, yc] <= rr].sum()


def test_exact_coverage_helper_agrees(t10):
    direct = simstudy_cov(4, 0.3, t10)
    helper = simstudy.exact_coverage(10, 4, 0.3, "wang-shan", include_degenerate=True, table=t10)
    assert helper == pytest.approx(direct, rel=1e-12)


def test_round_trip(tmp_path, t10):
    path = t10.save(tmp_path)
    assert path.name == ws.table_filename(10, 10, 0.95)
    assert ws.WangShanTable.load(path) == t10
    assert np.array_equal(ws.WangShanTable.load(path).bounds, t10.bounds)


def test_unequal_sizes_and_env_dir(tmp_path, monkeypatch):
    t = ws.build_table(4, 6, 0.9, grid_size=200)
    assert t.bounds.shape == (5, 7)
    mirror = ws.build_table(6, 4, 0.9, grid_size=200)
    t.save(tmp_path)
    mirror.save(tmp_path)
    monkeypatch.setenv(ws.TABLE_DIR_ENV, str(tmp_path))
    ws.get_table.cache_clear()
    try:
        iv = ri.wang_shan_interval(ScenarioPair.from_counts(3, 4, 1, 6), 0.9, "lower",
                                   max_n=0)
        assert iv.lower == t.lower(3, 1)
        iv = ri.wang_shan_interval(ScenarioPair.from_counts(3, 4, 1, 6), 0.8, max_n=0)
        assert iv.upper == pytest.approx(1 / mirror.lower(1, 3))
    finally:
        ws.get_table.cache_clear()


def test_infeasible_without_table():
    with pytest.raises(InfeasibleSizeError, match="build-ws-table"):
        ws.get_table(60, 60, 0.9)


def test_table_mismatch_rejected(t10):
    with pytest.raises(ValueError, match="table is for"):
        ri.wang_shan_interval(ScenarioPair.from_counts(3, 12, 1, 12), 0.9, "lower", table=t10)


def test_bad_file(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("format_version 99\nnF 1\nnC 1\nlevel 0.9\n")
    with pytest.raises(ValueError, match="format version"):
        ws.WangShanTable.load(p)
