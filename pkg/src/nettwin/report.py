"""Figure rendering for analysis and prediction artifacts.

Every function writes a file and returns its path.  The Agg backend is
forced so rendering works headless; callers choose raster (.png) or
vector (.svg) via the path suffix.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fig_heatmap(grid: np.ndarray, width_m: float, height_m: float, path: str) -> str:
    """Best-server RSRP raster over the scene, north up."""
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    shown = np.where(grid <= -199.0, np.nan, grid)
    im = ax.imshow(
        shown,
        origin="lower",
        extent=(0.0, width_m, 0.0, height_m),
        cmap="viridis",
        vmin=-120.0,
        vmax=-40.0,
    )
    fig.colorbar(im, ax=ax, label="best-server RSRP [dBm]")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("Signal strength map")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def fig_correlation(corr, path: str) -> str:
    """Annotated correlation matrix, red positive / blue negative."""
    labels = list(corr.columns)
    values = corr.to_numpy(float)
    n = len(labels)
    fig, ax = plt.subplots(figsize=(0.75 * n + 2.2, 0.75 * n + 1.5))
    im = ax.imshow(values, cmap="RdBu_r", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(n), labels, rotation=45, ha="right")
    ax.set_yticks(range(n), labels)
    for i in range(n):
        for j in range(n):
            v = values[i, j]
            if np.isfinite(v):
                ax.text(
                    j, i, "%.2f" % v, ha="center", va="center",
                    fontsize=7, color="black" if abs(v) < 0.6 else "white",
                )
    fig.colorbar(im, ax=ax, label="Pearson r")
    ax.set_title("Feature correlations")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def fig_cell_latency(summaries_by_hour: dict, path: str) -> str:
    """Box-whisker latency per cell for the requested hours.

    Boxes come straight from the stored quantiles: whiskers at p5/p95,
    box at p25/p75, line at the median.
    """
    hours = sorted(summaries_by_hour)
    fig, axes = plt.subplots(
        1, len(hours), figsize=(6.0 * len(hours), 4.2), squeeze=False
    )
    for ax, hour in zip(axes[0], hours):
        summaries = summaries_by_hour[hour]
        stats = [
            {
                "label": str(s.cell_id),
                "med": s.p50,
                "q1": s.p25,
                "q3": s.p75,
                "whislo": s.p5,
                "whishi": s.p95,
                "fliers": [],
            }
            for s in summaries
        ]
        if stats:
            ax.bxp(stats, showfliers=False)
        ax.set_title("Latency per cell around %02d:00" % hour)
        ax.set_xlabel("cell id")
        ax.set_ylabel("latency [ms]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_diurnal(diurnal, path: str) -> str:
    """Hourly mean cell load and latency over the day."""
    hours = np.asarray(diurnal.index, dtype=float)
    fig, ax_load = plt.subplots(figsize=(7.0, 4.0))
    ax_lat = ax_load.twinx()
    ax_load.plot(hours, diurnal["cell_load"], "o-", color="tab:blue", label="cell load")
    ax_lat.plot(
        hours, diurnal["latency_ms"], "s--", color="tab:red", label="latency"
    )
    ax_load.set_xlabel("hour of day")
    ax_load.set_ylabel("mean cell load", color="tab:blue")
    ax_lat.set_ylabel("mean latency [ms]", color="tab:red")
    ax_load.set_xticks(range(0, 24, 2))
    ax_load.set_title("Diurnal profile")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def fig_prediction_error(report, path: str) -> str:
    """Normalized MSE bars plus absolute-error quantile spans."""
    names = ["naive", "global", "local"]
    fig, (ax_mse, ax_abs) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    mses = [report.mse_norm[n] for n in names]
    ax_mse.bar(names, mses, color=["tab:gray", "tab:blue", "tab:green"])
    ax_mse.set_ylabel("test MSE (normalized)")
    ax_mse.set_title("Predictor comparison")
    for x, v in enumerate(mses):
        ax_mse.text(x, v, "%.3g" % v, ha="center", va="bottom", fontsize=8)
    stats = [
        {
            "label": n,
            "med": report.abs_err_quantiles_ms[n][2],
            "q1": report.abs_err_quantiles_ms[n][1],
            "q3": report.abs_err_quantiles_ms[n][3],
            "whislo": report.abs_err_quantiles_ms[n][0],
            "whishi": report.abs_err_quantiles_ms[n][4],
            "fliers": [],
        }
        for n in names
    ]
    ax_abs.bxp(stats, showfliers=False)
    ax_abs.set_ylabel("abs error of predicted mean [ms]")
    ax_abs.set_title("Error distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path
