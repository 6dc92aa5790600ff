"""Correlation, sign-pattern, and summary statistics on synthetic frames."""

import numpy as np
import pandas as pd
import pytest

from nettwin.analysis import (
    DEFAULT_FEATURES,
    SIGN_CONSTRAINTS,
    SchemaError,
    cell_latency_summary,
    check_sign_pattern,
    diurnal_summary,
    load_dataset,
    pearson_matrix,
    save_cell_summaries_csv,
    save_correlation_csv,
    save_diurnal_csv,
    schema_diff,
)
from nettwin.monitor import MONITOR_COLUMNS


def frame(**cols):
    n = max(len(v) for v in cols.values())
    base = {c: np.zeros(n) for c in DEFAULT_FEATURES}
    base.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
    return pd.DataFrame(base)


def test_pearson_hand_oracle():
    # x = 1..4, y = (1,3,2,4): covariance 1.0, variances 1.25 -> r = 0.8.
    df = frame(sinr_db=[1, 2, 3, 4], rsrp_dbm=[1, 3, 2, 4])
    corr = pearson_matrix(df, features=("sinr_db", "rsrp_dbm"))
    assert corr.loc["sinr_db", "rsrp_dbm"] == pytest.approx(0.8)
    assert corr.loc["rsrp_dbm", "sinr_db"] == pytest.approx(0.8)


def test_pearson_perfect_and_inverse():
    x = np.arange(10.0)
    df = frame(sinr_db=x, rsrp_dbm=2 * x + 1, latency_ms=-3 * x + 7)
    corr = pearson_matrix(df, features=("sinr_db", "rsrp_dbm", "latency_ms"))
    assert corr.loc["sinr_db", "rsrp_dbm"] == pytest.approx(1.0)
    assert corr.loc["sinr_db", "latency_ms"] == pytest.approx(-1.0)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = rng.normal(size=200)
    a = pearson_matrix(frame(sinr_db=x, rsrp_dbm=y), features=("sinr_db", "rsrp_dbm"))
    b = pearson_matrix(
        frame(sinr_db=5.0 * x - 3.0, rsrp_dbm=0.1 * y + 42.0), features=("sinr_db", "rsrp_dbm")
    )
    assert a.loc["sinr_db", "rsrp_dbm"] == pytest.approx(b.loc["sinr_db", "rsrp_dbm"])


def test_pearson_diagonal_is_one_and_constant_is_nan():
    df = frame(sinr_db=[1.0, 2.0, 3.0], rsrp_dbm=[5.0, 5.0, 5.0])
    corr = pearson_matrix(df, features=("sinr_db", "rsrp_dbm"))
    assert corr.loc["sinr_db", "sinr_db"] == 1.0
    assert np.isnan(corr.loc["sinr_db", "rsrp_dbm"])


def test_pearson_pairwise_deletion_of_nans():
    df = frame(
        sinr_db=[1.0, 2.0, 3.0, 4.0, 100.0],
        rsrp_dbm=[1.0, 3.0, 2.0, 4.0, np.nan],
    )
    corr = pearson_matrix(df, features=("sinr_db", "rsrp_dbm"))
    # The NaN row drops out, leaving the 0.8 oracle case.
    assert corr.loc["sinr_db", "rsrp_dbm"] == pytest.approx(0.8)


def test_default_features_cover_sign_pairs():
    names = set(DEFAULT_FEATURES)
    for a, b, _ in SIGN_CONSTRAINTS:
        assert a in names and b in names


def test_check_sign_pattern_flags_each_pair():
    n = len(DEFAULT_FEATURES)
    corr = pd.DataFrame(np.eye(n), index=DEFAULT_FEATURES, columns=DEFAULT_FEATURES)
    for a, b, sign in SIGN_CONSTRAINTS:
        corr.loc[a, b] = corr.loc[b, a] = 0.4 * sign
    checks = check_sign_pattern(corr)
    assert len(checks) == len(SIGN_CONSTRAINTS)
    assert all(c["ok"] for c in checks)
    # Flip one pair and it must fail.
    a, b, sign = SIGN_CONSTRAINTS[3]
    corr.loc[a, b] = corr.loc[b, a] = -0.4 * sign
    checks = check_sign_pattern(corr)
    bad = [c for c in checks if (c["a"], c["b"]) == (a, b)]
    assert len(bad) == 1 and not bad[0]["ok"]


def test_check_sign_pattern_rejects_nan():
    n = len(DEFAULT_FEATURES)
    corr = pd.DataFrame(np.full((n, n), np.nan), index=DEFAULT_FEATURES, columns=DEFAULT_FEATURES)
    assert not any(c["ok"] for c in check_sign_pattern(corr))


def latency_frame(entries):
    """entries: (hour, cell_id, latency) triples."""
    hours = [e[0] for e in entries]
    return pd.DataFrame(
        {
            "hour": hours,
            "cell_id": [e[1] for e in entries],
            "latency_ms": [e[2] for e in entries],
        }
    )


def test_cell_summary_quantile_oracle():
    rows = [(11.0, 0, float(v)) for v in range(1, 101)]
    out = cell_latency_summary(latency_frame(rows), hour=11)
    assert len(out) == 1
    s = out[0]
    assert s.count == 100
    # numpy linear interpolation on 1..100.
    assert s.p5 == pytest.approx(5.95)
    assert s.p50 == pytest.approx(50.5)
    assert s.p95 == pytest.approx(95.05)
    assert s.mean == pytest.approx(50.5)


def test_cell_summary_window_and_wraparound():
    rows = [
        (23.6, 0, 10.0),   # within 30 min of midnight
        (0.4, 0, 20.0),    # same, next day side
        (1.2, 0, 99.0),    # outside the window
    ]
    out = cell_latency_summary(latency_frame(rows), hour=0)
    assert len(out) == 1
    assert out[0].count == 2
    assert out[0].mean == pytest.approx(15.0)


def test_cell_summary_skips_unattached_and_empty():
    rows = [(11.0, -1, 5.0), (11.0, 2, np.nan)]
    assert cell_latency_summary(latency_frame(rows), hour=11) == []


def test_cell_summary_orders_by_cell():
    rows = [(11.0, 3, 1.0), (11.0, 0, 2.0), (11.0, 7, 3.0)]
    out = cell_latency_summary(latency_frame(rows), hour=11)
    assert [s.cell_id for s in out] == [0, 3, 7]


def test_cell_summary_validates_hour():
    with pytest.raises(ValueError):
        cell_latency_summary(latency_frame([(1.0, 0, 1.0)]), hour=24)


def test_diurnal_summary_shape_and_means():
    df = pd.DataFrame(
        {
            "hour": [3.2, 3.9, 15.5],
            "cell_load": [0.2, 0.4, 0.9],
            "latency_ms": [10.0, 20.0, 30.0],
            "throughput_bps": [1e5, 2e5, 4e5],
        }
    )
    out = diurnal_summary(df)
    assert len(out) == 24
    assert out.loc[3, "cell_load"] == pytest.approx(0.3)
    assert out.loc[15, "latency_ms"] == pytest.approx(30.0)
    assert np.isnan(out.loc[7, "cell_load"])


def test_diurnal_summary_empty_frame():
    out = diurnal_summary(pd.DataFrame(columns=["hour", "cell_load", "latency_ms", "throughput_bps"]))
    assert len(out) == 24
    assert out["cell_load"].isna().all()


def test_schema_diff_and_load_dataset(tmp_path):
    good = tmp_path / "good.csv"
    pd.DataFrame({c: [0] for c in MONITOR_COLUMNS}).to_csv(good, index=False)
    df = load_dataset(str(good))
    assert list(df.columns) == list(MONITOR_COLUMNS)
    missing, extra = schema_diff(df.drop(columns=["sinr_db"]).assign(bogus=1))
    assert missing == ["sinr_db"]
    assert extra == ["bogus"]

    bad = tmp_path / "bad.csv"
    pd.DataFrame({"a": [1]}).to_csv(bad, index=False)
    with pytest.raises(SchemaError):
        load_dataset(str(bad))


def test_save_helpers_round_trip(tmp_path):
    corr = pearson_matrix(
        frame(sinr_db=[1, 2, 3, 4], rsrp_dbm=[1, 3, 2, 4]), features=("sinr_db", "rsrp_dbm")
    )
    p1 = tmp_path / "corr.csv"
    save_correlation_csv(corr, str(p1))
    back = pd.read_csv(p1, index_col="feature")
    assert back.loc["sinr_db", "rsrp_dbm"] == pytest.approx(0.8)

    rows = [(11.0, 0, float(v)) for v in range(1, 11)]
    summaries = cell_latency_summary(latency_frame(rows), hour=11)
    p2 = tmp_path / "cells.csv"
    save_cell_summaries_csv(summaries, str(p2))
    cells = pd.read_csv(p2)
    assert cells.loc[0, "count"] == 10

    p3 = tmp_path / "diurnal.csv"
    save_diurnal_csv(diurnal_summary(latency_frame(rows).assign(cell_load=0.5, throughput_bps=1.0)), str(p3))
    d = pd.read_csv(p3)
    assert len(d) == 24
