"""Dataset analytics: correlations, per-cell latency summaries, diurnal view.

All operations are pure reads over the monitor CSV schema.  Missing
latency values (empty fields) survive loading as NaN and are handled by
pairwise deletion, so heavy-loss windows still contribute their radio
features to every other pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .monitor import MONITOR_COLUMNS

# Feature subset for the pairwise correlation view.
DEFAULT_FEATURES = (
    "cell_load",
    "tx_pkts",
    "rx_pkts",
    "per",
    "latency_ms",
    "jitter_ms",
    "throughput_bps",
    "sinr_db",
    "rsrp_dbm",
    "los",
)

# Expected signs of selected correlation pairs on a reference dataset:
# better radio -> lower latency and loss, higher load -> less capacity.
SIGN_CONSTRAINTS = (
    ("sinr_db", "rsrp_dbm", 1),
    ("los", "rsrp_dbm", 1),
    ("los", "sinr_db", 1),
    ("sinr_db", "latency_ms", -1),
    ("rsrp_dbm", "latency_ms", -1),
    ("sinr_db", "per", -1),
    ("per", "rx_pkts", -1),
    ("per", "latency_ms", 1),
    ("throughput_bps", "cell_load", -1),
    ("throughput_bps", "per", -1),
)

QUANTILE_LEVELS = (0.05, 0.25, 0.50, 0.75, 0.95)


class SchemaError(ValueError):
    """Dataset columns do not match the monitor contract."""


def load_dataset(path: str) -> pd.DataFrame:
    """Read a monitor CSV into a DataFrame, keeping empty latency as NaN."""
    df = pd.read_csv(path)
    missing, extra = schema_diff(df)
    if missing or extra:
        raise SchemaError(
            "dataset schema mismatch: missing columns %r, unexpected columns %r"
            % (missing, extra)
        )
    return df


def schema_diff(df: pd.DataFrame) -> tuple[list[str], list[str]]:
    have = list(df.columns)
    missing = [c for c in MONITOR_COLUMNS if c not in have]
    extra = [c for c in have if c not in MONITOR_COLUMNS]
    return missing, extra


def pearson_matrix(df: pd.DataFrame, features=DEFAULT_FEATURES) -> pd.DataFrame:
    """Pairwise Pearson coefficients with per-pair deletion of missing values.

    Constant columns produce NaN entries (undefined correlation).  The
    diagonal of defined columns is exactly 1.
    """
    unknown = [f for f in features if f not in df.columns]
    if unknown:
        raise ValueError("unknown feature columns: %r" % (unknown,))
    sub = df.loc[:, list(features)].astype(float)
    corr = sub.corr(method="pearson", min_periods=2)
    for f in features:
        col = sub[f].to_numpy()
        finite = col[np.isfinite(col)]
        if finite.size >= 2 and np.nanstd(finite) > 0:
            corr.loc[f, f] = 1.0
    return corr


def check_sign_pattern(corr: pd.DataFrame) -> list[dict]:
    """Evaluate the expected-sign pairs against a correlation matrix."""
    out = []
    for a, b, sign in SIGN_CONSTRAINTS:
        r = float(corr.loc[a, b])
        ok = np.isfinite(r) and (r > 0 if sign > 0 else r < 0)
        out.append({"a": a, "b": b, "expected_sign": sign, "r": r, "ok": bool(ok)})
    return out


@dataclass(frozen=True)
class CellLatencySummary:
    cell_id: int
    hour: int
    count: int
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    mean: float
    std: float


def _hour_distance(hours: np.ndarray, center: float) -> np.ndarray:
    raw = np.abs(hours - center)
    return np.minimum(raw, 24.0 - raw)


def cell_latency_summary(
    df: pd.DataFrame, hour: int, window_min: float = 30.0
) -> list[CellLatencySummary]:
    """Latency quantiles per cell near a given hour of day.

    Rows within +-window_min minutes of hour:00 contribute; cells without
    any latency sample in the window are omitted.
    """
    if not 0 <= hour < 24:
        raise ValueError("hour must be in [0, 24)")
    mask = _hour_distance(df["hour"].to_numpy(float), float(hour)) <= window_min / 60.0
    sub = df.loc[mask]
    out = []
    for cell_id, grp in sub.groupby("cell_id"):
        if cell_id < 0:
            continue
        lat = grp["latency_ms"].to_numpy(float)
        lat = lat[np.isfinite(lat)]
        if lat.size == 0:
            continue
        q = np.quantile(lat, QUANTILE_LEVELS)
        out.append(
            CellLatencySummary(
                cell_id=int(cell_id),
                hour=hour,
                count=int(lat.size),
                p5=float(q[0]),
                p25=float(q[1]),
                p50=float(q[2]),
                p75=float(q[3]),
                p95=float(q[4]),
                mean=float(lat.mean()),
                std=float(lat.std()),
            )
        )
    out.sort(key=lambda s: s.cell_id)
    return out


def diurnal_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Hour-of-day means of cell_load, latency_ms, and throughput_bps.

    Always returns 24 rows; hours without data carry NaN.
    """
    idx = pd.Index(range(24), name="hour_bucket")
    if len(df) == 0:
        return pd.DataFrame(
            {"cell_load": np.nan, "latency_ms": np.nan, "throughput_bps": np.nan},
            index=idx,
        )
    bucket = df["hour"].astype(int) % 24
    agg = (
        df.assign(hour_bucket=bucket)
        .groupby("hour_bucket")[["cell_load", "latency_ms", "throughput_bps"]]
        .mean()
    )
    return agg.reindex(idx)


def save_correlation_csv(corr: pd.DataFrame, path: str) -> None:
    corr.to_csv(path, index_label="feature")


def save_cell_summaries_csv(summaries: list[CellLatencySummary], path: str) -> None:
    cols = ["cell_id", "hour", "count", "p5", "p25", "p50", "p75", "p95", "mean", "std"]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for s in summaries:
            fh.write(
                ",".join(str(getattr(s, c)) for c in cols) + "\n"
            )


def save_diurnal_csv(diurnal: pd.DataFrame, path: str) -> None:
    diurnal.to_csv(path, index_label="hour_bucket")
