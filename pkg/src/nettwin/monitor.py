"""Per-flow KPI sampling and dataset export.

Once per simulated second the monitor emits one row per active flow.
Window statistics (packet counts, latency, jitter, throughput, observed
error fraction) cover the second that just ended; instantaneous fields
(position, serving cell, SINR, RSRP, LoS, cell load) are read at the
sample instant.  Attribution is by tick, so an event belongs to the
second during which its tick ran.

Rows are written as plain comma-separated text.  Floats are formatted
with repr, which round-trips exactly and keeps repeated runs of the same
seed byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .propagation import RSRP_SENTINEL_DBM

MONITOR_COLUMNS = (
    "time_s",
    "hour",
    "flow_id",
    "ue_id",
    "cell_id",
    "pos_x_m",
    "pos_y_m",
    "speed_mps",
    "heading_deg",
    "cell_load",
    "tx_pkts",
    "rx_pkts",
    "per",
    "avg_pkt_bytes",
    "latency_ms",
    "jitter_ms",
    "throughput_bps",
    "sinr_db",
    "rsrp_dbm",
    "los",
)


@dataclass
class SampleRow:
    time_s: int
    hour: float
    flow_id: int
    ue_id: int
    cell_id: int
    pos_x_m: float
    pos_y_m: float
    speed_mps: float
    heading_deg: float
    cell_load: float
    tx_pkts: int
    rx_pkts: int
    per: float
    avg_pkt_bytes: float
    latency_ms: float | None
    jitter_ms: float
    throughput_bps: float
    sinr_db: float
    rsrp_dbm: float
    los: int


assert tuple(f.name for f in fields(SampleRow)) == MONITOR_COLUMNS


def jitter_ms(delays_s: list[float]) -> float:
    """Mean absolute difference of consecutive delays, in milliseconds.

    Fewer than two deliveries in the window gives zero.
    """
    if len(delays_s) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(delays_s, delays_s[1:]):
        total += abs(b - a)
    return 1e3 * total / (len(delays_s) - 1)


def _cell_load_now(world, cell_id: int) -> float:
    cell = world.cells[cell_id]
    bg = cell.background_load
    if cell.attached > 0:
        util = (1.0 - bg) * min(1.0, cell.busy_s_window / cell.attached)
    else:
        util = 0.0
    return min(0.999, bg + util)


def sample(world) -> list[SampleRow]:
    """Build the rows for the second that just finished.

    Must be called right after the last tick of a second and before
    ``world.end_window()``.  Also runs the packet conservation check for
    every flow; violations are counted on the world.
    """
    t = world.finish_second()
    hour = (t % 86400) / 3600.0
    rows = []
    for fs in world.flows.values():
        if fs.cum_tx != fs.cum_rx + fs.cum_lost + len(fs.queue):
            world.conservation_violations += 1
        link = fs.link
        v = fs.vehicle
        serving = link.serving
        if serving is None:
            cell_id = -1
            cell_load = 0.0
            sinr = RSRP_SENTINEL_DBM
            rsrp = RSRP_SENTINEL_DBM
            los = 0
        else:
            cell_id = serving
            cell_load = _cell_load_now(world, serving)
            sinr = link.sinr_db
            rsrp = float(link.rsrp_dbm[serving])
            los = int(link.los[serving])
        delays = fs.w_delays
        latency = 1e3 * (sum(delays) / len(delays)) if delays else None
        per = 0.0
        if fs.w_tx > 0:
            per = min(1.0, max(0.0, (fs.w_tx - fs.w_rx) / fs.w_tx))
        rows.append(
            SampleRow(
                time_s=t,
                hour=hour,
                flow_id=fs.flow_id,
                ue_id=fs.ue_id,
                cell_id=cell_id,
                pos_x_m=v.x,
                pos_y_m=v.y,
                speed_mps=v.speed_mps,
                heading_deg=v.heading_deg,
                cell_load=cell_load,
                tx_pkts=fs.w_tx,
                rx_pkts=fs.w_rx,
                per=per,
                avg_pkt_bytes=float(fs.packet_bytes),
                latency_ms=latency,
                jitter_ms=jitter_ms(delays),
                throughput_bps=float(fs.w_bits),
                sinr_db=sinr,
                rsrp_dbm=rsrp,
                los=los,
            )
        )
        if fs.done:
            fs.emitted_after_done = True
    return rows


def _f(value) -> str:
    # float() unwraps numpy scalars exactly; repr of a Python float is the
    # shortest round-trip form, so output is stable across runs.
    return repr(float(value))


def format_row(row: SampleRow) -> str:
    lat = "" if row.latency_ms is None else _f(row.latency_ms)
    return ",".join(
        (
            str(row.time_s),
            _f(row.hour),
            str(row.flow_id),
            str(row.ue_id),
            str(row.cell_id),
            _f(row.pos_x_m),
            _f(row.pos_y_m),
            _f(row.speed_mps),
            _f(row.heading_deg),
            _f(row.cell_load),
            str(row.tx_pkts),
            str(row.rx_pkts),
            _f(row.per),
            _f(row.avg_pkt_bytes),
            lat,
            _f(row.jitter_ms),
            _f(row.throughput_bps),
            _f(row.sinr_db),
            _f(row.rsrp_dbm),
            str(row.los),
        )
    )


def run_seconds(world, n_seconds: int):
    """Drive the world one second at a time, yielding (second, rows)."""
    for _ in range(n_seconds):
        for _ in range(world.ticks_per_s):
            world.step()
        rows = sample(world)
        yield world.finish_second(), rows
        world.end_window()


def write_dataset(path: str, world, duration_s: float, progress=None) -> dict:
    """Run the simulation and stream rows to ``path``.

    The file appears atomically: rows go to a sibling temp file that is
    renamed over the target once the run finishes.  Returns summary
    counters for the caller's metadata.
    """
    n_seconds = int(round(duration_s))
    if abs(n_seconds - duration_s) > 1e-9 or n_seconds <= 0:
        raise ValueError("duration must be a positive whole number of seconds")
    tmp = path + ".tmp"
    n_rows = 0
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(MONITOR_COLUMNS) + "\n")
        for second, rows in run_seconds(world, n_seconds):
            for row in rows:
                fh.write(format_row(row) + "\n")
            n_rows += len(rows)
            if progress is not None and second % 3600 == 0:
                progress(second, n_rows)
    os.replace(tmp, path)
    return {
        "rows": n_rows,
        "seconds": n_seconds,
        "conservation_violations": world.conservation_violations,
        "capacity_overruns": world.capacity_overruns,
    }
