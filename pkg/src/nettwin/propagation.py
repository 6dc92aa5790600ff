"""Site-specific radio propagation.

Deterministic, side-effect-free geometry and link-budget math:

* exact segment/box line-of-sight tests (slab method),
* free-space path loss plus single-bounce specular reflections found with
  the image method against vertical building faces,
* a diffraction surrogate for deep-shadow links so a single building does
  not produce a total outage,
* SINR with load-weighted inter-cell interference,
* best-server coverage rasters with plain-text and pixmap export.

All functions are pure: same scene, positions, and config give bit-equal
results.  Stochastic effects (shadowing) live in the simulation core.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .scene import BaseStation, Scene

C_MPS = 299_792_458.0
# 20*log10(4*pi/c), the frequency/distance-independent Friis term.
FSPL_CONST_DB = 20.0 * math.log10(4.0 * math.pi / C_MPS)
THERMAL_NOISE_DBM_PER_HZ = -174.0

# Out-of-coverage sentinel used wherever a link has no usable path.
RSRP_SENTINEL_DBM = -200.0

# Open-segment tolerance: a box must be penetrated by more than this
# fraction of the segment length to count as blocking.  Keeps grazing
# contacts (reflection legs touching their own wall) out of the result.
_PENETRATION_TOL = 1e-12

# Per-thread reusable intermediates for the vectorized geometry tests.
# The hot path runs tens of thousands of times per simulated minute;
# reusing buffers keeps its cost independent of allocator state instead
# of varying with page-fault behaviour.  Never returned to callers.
_SCRATCH = threading.local()


def _scratch_arr(slot: str, shape, dtype) -> np.ndarray:
    store = _SCRATCH.__dict__
    n = 1
    for s in shape:
        n *= int(s)
    buf = store.get(slot)
    if buf is None or buf.size < n:
        buf = np.empty(max(n, 1), dtype=dtype)
        store[slot] = buf
    return buf[:n].reshape(shape)


@dataclass(frozen=True)
class PropagationConfig:
    carrier_freq_hz: float = 3.5e9
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    reflection_loss_db: float = 6.0
    max_reflections: int = 1
    nlos_excess_exponent: float = 1.4
    nlos_excess_loss_db: float = 15.0
    # When True, blocked links with no reflected path fall back to the
    # diffraction surrogate instead of the -200 dBm sentinel.
    nlos_fallback: bool = True


@dataclass(frozen=True)
class RayPath:
    """One propagation path; kind is 'direct', 'reflected' or 'diffracted'."""

    kind: str
    length_m: float
    gain_db: float


@dataclass(frozen=True)
class LinkState:
    rsrp_dbm: float
    sinr_db: float
    los: bool
    serving_distance_m: float


class BuildingArrays:
    """Columnar building boxes for vectorized geometry tests.

    Besides the box bounds this precomputes a flat table of the 4N vertical
    faces in _FACES order (x-low block, x-high, y-low, y-high), which lets
    the image method run over every (station, face) pair in one pass.
    """

    __slots__ = (
        "x0", "y0", "x1", "y1", "h", "count", "lo3", "hi3",
        "f_axis", "f_axis_lat", "f_sign", "f_plane", "f_lat_lo", "f_lat_hi", "f_h",
    )

    def __init__(self, scene: Scene):
        bs = scene.buildings
        self.count = len(bs)
        self.x0 = np.array([b.min_x for b in bs], dtype=float)
        self.y0 = np.array([b.min_y for b in bs], dtype=float)
        self.x1 = np.array([b.max_x for b in bs], dtype=float)
        self.y1 = np.array([b.max_y for b in bs], dtype=float)
        self.h = np.array([b.height_m for b in bs], dtype=float)
        self.lo3 = np.stack([self.x0, self.y0, np.zeros(self.count)])  # (3, N)
        self.hi3 = np.stack([self.x1, self.y1, self.h])
        n = self.count
        self.f_axis = np.repeat(np.array([0, 0, 1, 1]), n)
        self.f_axis_lat = 1 - self.f_axis
        # +1 for a low face (outside means coordinate < plane), -1 for high
        self.f_sign = np.repeat(np.array([1.0, -1.0, 1.0, -1.0]), n)
        self.f_plane = np.concatenate([self.x0, self.x1, self.y0, self.y1])
        self.f_lat_lo = np.concatenate([self.y0, self.y0, self.x0, self.x0])
        self.f_lat_hi = np.concatenate([self.y1, self.y1, self.x1, self.x1])
        self.f_h = np.concatenate([self.h] * 4)


def fspl_db(distance_m: float, freq_hz: float) -> float:
    """Free-space path loss; positive dB for any distance beyond ~2 cm."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return 20.0 * math.log10(distance_m) + 20.0 * math.log10(freq_hz) + FSPL_CONST_DB


def noise_floor_dbm(cfg: PropagationConfig) -> float:
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db


def _axis_interval(a, d, lo, hi):
    """Entry/exit parameters of a + t*d against one slab [lo, hi]."""
    if d == 0.0:
        # Parallel: full interval when strictly inside, empty otherwise.
        if lo < a < hi:
            return -math.inf, math.inf
        return math.inf, -math.inf
    t1 = (lo - a) / d
    t2 = (hi - a) / d
    return (t1, t2) if t1 <= t2 else (t2, t1)


def _segment_blocked_arrays(arrs: BuildingArrays, a, b) -> bool:
    """True iff the open segment a-b penetrates any building interior."""
    if arrs.count == 0:
        return False
    ax, ay, az = a
    bx, by, bz = b
    dx, dy, dz = bx - ax, by - ay, bz - az

    def axis(lo, hi, p, d):
        if d == 0.0:
            inside = (lo < p) & (p < hi)
            t1 = np.where(inside, -np.inf, np.inf)
            t2 = np.where(inside, np.inf, -np.inf)
            return t1, t2
        t1 = (lo - p) / d
        t2 = (hi - p) / d
        return np.minimum(t1, t2), np.maximum(t1, t2)

    ex1, ex2 = axis(arrs.x0, arrs.x1, ax, dx)
    ey1, ey2 = axis(arrs.y0, arrs.y1, ay, dy)
    ez1, ez2 = axis(np.zeros(arrs.count), arrs.h, az, dz)
    t_enter = np.maximum(np.maximum(ex1, ey1), ez1)
    t_exit = np.minimum(np.minimum(ex2, ey2), ez2)
    pen = np.minimum(t_exit, 1.0) - np.maximum(t_enter, 0.0)
    return bool(np.any(pen > _PENETRATION_TOL))


def _segments_blocked_batch(arrs: BuildingArrays, segs: np.ndarray) -> np.ndarray:
    """Vectorized blocked-test for K segments, shape (K, 6) = ax..bz.

    Axis-parallel components rely on IEEE semantics instead of explicit
    branches: division by zero puts the slab interval at (-inf, inf) when
    the point is strictly inside (penetration possible), collapses it to
    an empty +-inf interval when outside, and yields NaN exactly on the
    boundary, which propagates through min/max and makes the final
    comparison False -- the same verdict as the scalar strict-inside rule
    in every case.
    """
    k = segs.shape[0]
    if arrs.count == 0 or k == 0:
        return np.zeros(k, dtype=bool)
    n = arrs.count
    a = segs[:, :3][:, :, None]  # (K, 3, 1)
    d = np.subtract(segs[:, 3:], segs[:, :3], out=_scratch_arr("seg_d", (k, 3), float))
    d = d[:, :, None]
    t1 = _scratch_arr("seg_t1", (k, 3, n), float)
    t2 = _scratch_arr("seg_t2", (k, 3, n), float)
    with np.errstate(divide="ignore", invalid="ignore"):
        np.subtract(arrs.lo3[None], a, out=t1)
        np.divide(t1, d, out=t1)
        np.subtract(arrs.hi3[None], a, out=t2)
        np.divide(t2, d, out=t2)
    lo = np.minimum(t1, t2, out=_scratch_arr("seg_lo", (k, 3, n), float))
    hi = np.maximum(t1, t2, out=t1)
    t_enter = lo.max(axis=1, out=_scratch_arr("seg_enter", (k, n), float))
    t_exit = hi.min(axis=1, out=_scratch_arr("seg_exit", (k, n), float))
    np.minimum(t_exit, 1.0, out=t_exit)
    np.maximum(t_enter, 0.0, out=t_enter)
    pen = np.subtract(t_exit, t_enter, out=t_exit)
    with np.errstate(invalid="ignore"):
        mask = np.greater(pen, _PENETRATION_TOL, out=_scratch_arr("seg_mask", (k, n), bool))
    return np.any(mask, axis=1)


def los_blocked(scene_or_arrays, a, b) -> bool:
    """True iff the open segment between 3D points a and b hits a building."""
    arrs = scene_or_arrays if isinstance(scene_or_arrays, BuildingArrays) else BuildingArrays(scene_or_arrays)
    return _segment_blocked_arrays(arrs, a, b)


# Vertical face descriptors: (axis, use_low_face).  For axis 0 the face
# plane is x = x0 (low) or x = x1 (high); in-face extent runs along y.
_FACES = ((0, True), (0, False), (1, True), (1, False))


def _reflection_candidates(arrs: BuildingArrays, tx, rx):
    """Image-method candidates: (point, length) per face-geometry test.

    Geometry only; caller still has to run the two occlusion leg tests.
    """
    out = []
    if arrs.count == 0:
        return out
    txa = np.asarray(tx, dtype=float)
    rxa = np.asarray(rx, dtype=float)
    for axis, low in _FACES:
        plane = (arrs.x0 if low else arrs.x1) if axis == 0 else (arrs.y0 if low else arrs.y1)
        lat_lo = arrs.y0 if axis == 0 else arrs.x0
        lat_hi = arrs.y1 if axis == 0 else arrs.x1
        if low:
            outside = (txa[axis] < plane) & (rxa[axis] < plane)
        else:
            outside = (txa[axis] > plane) & (rxa[axis] > plane)
        if not np.any(outside):
            continue
        mirror_ax = 2.0 * plane - txa[axis]
        denom = mirror_ax - rxa[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane - rxa[axis]) / denom
        valid = outside & np.isfinite(t) & (t > 0.0) & (t < 1.0)
        if not np.any(valid):
            continue
        lat_rx = rxa[1 - axis]
        lat_tx = txa[1 - axis]
        p_lat = lat_rx + t * (lat_tx - lat_rx)
        p_z = rxa[2] + t * (txa[2] - rxa[2])
        valid &= (p_lat >= lat_lo) & (p_lat <= lat_hi) & (p_z > 0.0) & (p_z < arrs.h)
        if not np.any(valid):
            continue
        lengths = np.sqrt(
            (mirror_ax - rxa[axis]) ** 2 + (lat_tx - lat_rx) ** 2 + (txa[2] - rxa[2]) ** 2
        )
        for i in np.nonzero(valid)[0]:
            if axis == 0:
                point = (float(plane[i]), float(p_lat[i]), float(p_z[i]))
            else:
                point = (float(p_lat[i]), float(plane[i]), float(p_z[i]))
            out.append((point, float(lengths[i])))
    return out


def _nlos_surrogate_gain(distance_m: float, cfg: PropagationConfig) -> float:
    """Diffraction stand-in: steeper distance exponent plus flat excess."""
    loss = (
        cfg.nlos_excess_exponent * 20.0 * math.log10(distance_m)
        + 20.0 * math.log10(cfg.carrier_freq_hz)
        + FSPL_CONST_DB
        + cfg.nlos_excess_loss_db
    )
    return -loss


def trace_paths(scene_or_arrays, tx, rx, cfg: PropagationConfig) -> list[RayPath]:
    """Geometric paths between tx and rx: direct plus one-bounce reflections.

    Returns an empty list for deep-shadow links (blocked direct path and no
    valid reflection).  Gains hold path loss and bounce losses only; antenna
    and transmit power belong to the link budget.
    """
    arrs = scene_or_arrays if isinstance(scene_or_arrays, BuildingArrays) else BuildingArrays(scene_or_arrays)
    paths = []
    d3 = math.dist(tx, rx)
    if d3 <= 0:
        raise ValueError("tx and rx coincide")
    if not _segment_blocked_arrays(arrs, tx, rx):
        paths.append(RayPath("direct", d3, -fspl_db(d3, cfg.carrier_freq_hz)))
    if cfg.max_reflections >= 1 and arrs.count:
        cands = _reflection_candidates(arrs, tx, rx)
        if cands:
            segs = np.empty((2 * len(cands), 6))
            for i, (pt, _length) in enumerate(cands):
                segs[2 * i] = (*tx, *pt)
                segs[2 * i + 1] = (*pt, *rx)
            blocked = _segments_blocked_batch(arrs, segs)
            for i, (_pt, length) in enumerate(cands):
                if not blocked[2 * i] and not blocked[2 * i + 1]:
                    gain = -fspl_db(length, cfg.carrier_freq_hz) - cfg.reflection_loss_db
                    paths.append(RayPath("reflected", length, gain))
    return paths


def combined_gain_db(paths: list[RayPath]) -> float:
    """Power-sum of path gains in the linear domain."""
    if not paths:
        raise ValueError("no paths to combine")
    lin = sum(10.0 ** (p.gain_db / 10.0) for p in paths)
    return 10.0 * math.log10(lin)


def link_gain(arrs: BuildingArrays, tx, rx, cfg: PropagationConfig):
    """(combined gain dB or None, los) for one station-UE pair.

    Applies the NLoS surrogate when geometry yields nothing; None means the
    link is genuinely unusable (surrogate disabled).
    """
    d3 = math.dist(tx, rx)
    los = not _segment_blocked_arrays(arrs, tx, rx)
    lin = 0.0
    if los:
        lin += 10.0 ** (-fspl_db(d3, cfg.carrier_freq_hz) / 10.0)
    if cfg.max_reflections >= 1 and arrs.count:
        cands = _reflection_candidates(arrs, tx, rx)
        if cands:
            segs = np.empty((2 * len(cands), 6))
            for i, (pt, _length) in enumerate(cands):
                segs[2 * i] = (*tx, *pt)
                segs[2 * i + 1] = (*pt, *rx)
            blocked = _segments_blocked_batch(arrs, segs)
            for i, (_pt, length) in enumerate(cands):
                if not blocked[2 * i] and not blocked[2 * i + 1]:
                    lin += 10.0 ** ((-fspl_db(length, cfg.carrier_freq_hz) - cfg.reflection_loss_db) / 10.0)
    if lin > 0.0:
        return 10.0 * math.log10(lin), los
    if cfg.nlos_fallback:
        return _nlos_surrogate_gain(d3, cfg), False
    return None, False


def _station_gains_batch(
    arrs: BuildingArrays, stations: np.ndarray, rx2: np.ndarray, cfg: PropagationConfig
) -> tuple[np.ndarray, np.ndarray]:
    """link_gain for U receivers against B stations in one pass.

    stations is (B, 3), rx2 is (U, 3); returns (gains_db, los) as (U, B)
    arrays.  Every row matches the scalar link_gain per station up to
    floating-point summation order.  The direct segments and all
    reflection legs share one occlusion batch: rows are independent, so
    batching changes dispatch count, not values.
    """
    u_n = rx2.shape[0]
    n_st = stations.shape[0]
    diff = stations[None] - rx2[:, None]
    dist = np.sqrt(np.einsum("ubj,ubj->ub", diff, diff))
    if dist.min() <= 0.0:
        raise ValueError("tx and rx coincide")
    freq_term = 20.0 * math.log10(cfg.carrier_freq_hz) + FSPL_CONST_DB

    # Image-method geometry runs first so the direct segments and the
    # reflection legs can share one occlusion batch.
    refl_u = refl_b = refl_lengths = refl_pts = None
    if cfg.max_reflections >= 1 and arrs.count:
        # One pass over every (receiver, station, face) triple via the flat
        # face table.  Station-only terms are computed once and broadcast.
        nf = arrs.f_plane.size
        plane = arrs.f_plane
        sign = arrs.f_sign
        tx_ax = np.take(stations, arrs.f_axis, axis=1,
                        out=_scratch_arr("sg_txax", (n_st, nf), float))
        rx_ax = np.take(rx2, arrs.f_axis, axis=1,
                        out=_scratch_arr("sg_rxax", (u_n, nf), float))
        work_b = np.subtract(plane, tx_ax, out=_scratch_arr("sg_workb", (n_st, nf), float))
        np.multiply(sign, work_b, out=work_b)
        tx_out = np.greater(work_b, 0.0, out=_scratch_arr("sg_txout", (n_st, nf), bool))
        work_u = np.subtract(plane, rx_ax, out=_scratch_arr("sg_worku", (u_n, nf), float))
        np.multiply(sign, work_u, out=work_u)
        rx_out = np.greater(work_u, 0.0, out=_scratch_arr("sg_rxout", (u_n, nf), bool))
        outside = np.logical_and(
            tx_out[None], rx_out[:, None],
            out=_scratch_arr("sg_outside", (u_n, n_st, nf), bool),
        )
        if outside.any():
            mirror_ax = np.subtract(2.0 * plane, tx_ax,
                                    out=_scratch_arr("sg_mirror", (n_st, nf), float))
            denom = np.subtract(mirror_ax[None], rx_ax[:, None],
                                out=_scratch_arr("sg_t", (u_n, n_st, nf), float))
            pl_rx = np.subtract(plane, rx_ax, out=work_u)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.divide(pl_rx[:, None], denom, out=denom)
            cmp = np.isfinite(t, out=_scratch_arr("sg_cmp", (u_n, n_st, nf), bool))
            valid = np.logical_and(outside, cmp, out=outside)
            np.greater(t, 0.0, out=cmp)
            np.logical_and(valid, cmp, out=valid)
            np.less(t, 1.0, out=cmp)
            np.logical_and(valid, cmp, out=valid)
            if valid.any():
                lat_tx = np.take(stations, arrs.f_axis_lat, axis=1,
                                 out=_scratch_arr("sg_lattx", (n_st, nf), float))
                lat_rx = np.take(rx2, arrs.f_axis_lat, axis=1,
                                 out=_scratch_arr("sg_latrx", (u_n, nf), float))
                p_lat = np.subtract(lat_tx[None], lat_rx[:, None],
                                    out=_scratch_arr("sg_plat", (u_n, n_st, nf), float))
                np.multiply(t, p_lat, out=p_lat)
                np.add(lat_rx[:, None], p_lat, out=p_lat)
                dz = np.subtract(stations[:, 2][None], rx2[:, 2][:, None],
                                 out=_scratch_arr("sg_dz", (u_n, n_st), float))
                p_z = np.multiply(t, dz[:, :, None],
                                  out=_scratch_arr("sg_pz", (u_n, n_st, nf), float))
                np.add(rx2[:, 2][:, None, None], p_z, out=p_z)
                np.greater_equal(p_lat, arrs.f_lat_lo, out=cmp)
                np.logical_and(valid, cmp, out=valid)
                np.less_equal(p_lat, arrs.f_lat_hi, out=cmp)
                np.logical_and(valid, cmp, out=valid)
                np.greater(p_z, 0.0, out=cmp)
                np.logical_and(valid, cmp, out=valid)
                np.less(p_z, arrs.f_h, out=cmp)
                np.logical_and(valid, cmp, out=valid)
                u_idx, b_idx, f_idx = np.nonzero(valid)
                if u_idx.size:
                    lengths = np.sqrt(
                        (mirror_ax[b_idx, f_idx] - rx_ax[u_idx, f_idx]) ** 2
                        + (lat_tx[b_idx, f_idx] - lat_rx[u_idx, f_idx]) ** 2
                        + (stations[b_idx, 2] - rx2[u_idx, 2]) ** 2
                    )
                    k = u_idx.size
                    rows = np.arange(k)
                    ax_sel = arrs.f_axis[f_idx]
                    pts = np.empty((k, 3))
                    pts[rows, ax_sel] = plane[f_idx]
                    pts[rows, 1 - ax_sel] = p_lat[u_idx, b_idx, f_idx]
                    pts[:, 2] = p_z[u_idx, b_idx, f_idx]
                    refl_u, refl_b = u_idx, b_idx
                    refl_lengths, refl_pts = lengths, pts

    k = 0 if refl_u is None else refl_u.size
    n_direct = u_n * n_st
    segs = _scratch_arr("sg_segs", (n_direct + 2 * k, 6), float)
    direct = segs[:n_direct].reshape(u_n, n_st, 6)
    direct[:, :, :3] = stations[None]
    direct[:, :, 3:] = rx2[:, None]
    if k:
        legs = segs[n_direct:]
        legs[0::2, :3] = stations[refl_b]
        legs[0::2, 3:] = refl_pts
        legs[1::2, :3] = refl_pts
        legs[1::2, 3:] = rx2[refl_u]
    blocked = _segments_blocked_batch(arrs, segs)
    los = (~blocked[:n_direct]).reshape(u_n, n_st)
    lin = np.zeros((u_n, n_st))
    if los.any():
        fspl = 20.0 * np.log10(dist[los]) + freq_term
        lin[los] = 10.0 ** (-fspl / 10.0)
    if k:
        leg_blocked = blocked[n_direct:]
        ok = ~leg_blocked[0::2] & ~leg_blocked[1::2]
        if ok.any():
            refl_fspl = 20.0 * np.log10(refl_lengths[ok]) + freq_term
            powers = 10.0 ** ((-refl_fspl - cfg.reflection_loss_db) / 10.0)
            np.add.at(lin.reshape(-1), refl_u[ok] * n_st + refl_b[ok], powers)

    gains = np.full((u_n, n_st), np.nan)
    covered = lin > 0.0
    gains[covered] = 10.0 * np.log10(lin[covered])
    if cfg.nlos_fallback and not covered.all():
        dark = ~covered
        loss = (
            cfg.nlos_excess_exponent * 20.0 * np.log10(dist[dark])
            + freq_term
            + cfg.nlos_excess_loss_db
        )
        gains[dark] = -loss
    return gains, los


def station_gains(
    arrs: BuildingArrays, stations_xyz: np.ndarray, rx, cfg: PropagationConfig
) -> tuple[np.ndarray, np.ndarray]:
    """link_gain against every station at once.

    stations_xyz is (B, 3).  Returns (gains_db, los): gain entries are NaN
    where no path exists and the surrogate is disabled.  Matches the
    scalar link_gain per station up to floating-point summation order.
    """
    stations = np.asarray(stations_xyz, dtype=float)
    rx2 = np.asarray(rx, dtype=float).reshape(1, 3)
    gains, los = _station_gains_batch(arrs, stations, rx2, cfg)
    return gains[0], los[0]


def station_gains_multi(
    arrs: BuildingArrays, stations_xyz: np.ndarray, rx_xyz, cfg: PropagationConfig
) -> tuple[np.ndarray, np.ndarray]:
    """station_gains for many receiver positions in one call.

    rx_xyz is (U, 3); returns (gains_db, los) as (U, B) arrays whose rows
    equal station_gains for the corresponding receiver.  Amortizes the
    per-call dispatch cost over every link that refreshes in one tick.
    """
    stations = np.asarray(stations_xyz, dtype=float)
    rx2 = np.asarray(rx_xyz, dtype=float)
    if rx2.ndim != 2 or rx2.shape[1] != 3:
        raise ValueError("rx_xyz must be (U, 3)")
    return _station_gains_batch(arrs, stations, rx2, cfg)


def received_power_dbm(station: BaseStation, gain_db: float | None) -> float:
    if gain_db is None:
        return RSRP_SENTINEL_DBM
    return station.tx_power_dbm + station.antenna_gain_dbi + gain_db


def link_state(
    scene: Scene,
    serving: BaseStation,
    ue_pos,
    interferers,
    cfg: PropagationConfig,
    arrs: BuildingArrays | None = None,
) -> LinkState:
    """Full link budget for one UE against its serving station.

    interferers is a list of (BaseStation, load in [0, 1]) pairs; their
    received powers are load-weighted and added to the thermal noise floor.
    The serving station must not appear among them.
    """
    if any(st.id == serving.id for st, _load in interferers):
        raise ValueError("serving station listed as interferer")
    if arrs is None:
        arrs = BuildingArrays(scene)
    d3 = math.dist((serving.x, serving.y, serving.z), ue_pos)
    gain, los = link_gain(arrs, (serving.x, serving.y, serving.z), ue_pos, cfg)
    rsrp = received_power_dbm(serving, gain)
    if gain is None:
        return LinkState(RSRP_SENTINEL_DBM, RSRP_SENTINEL_DBM, False, d3)
    noise_mw = 10.0 ** (noise_floor_dbm(cfg) / 10.0)
    interf_mw = 0.0
    for st, load in interferers:
        g_i, _ = link_gain(arrs, (st.x, st.y, st.z), ue_pos, cfg)
        if g_i is None:
            continue
        interf_mw += max(0.0, min(1.0, load)) * 10.0 ** (received_power_dbm(st, g_i) / 10.0)
    sinr = rsrp - 10.0 * math.log10(noise_mw + interf_mw)
    return LinkState(rsrp, sinr, los, d3)


# ---------- coverage rasters ----------

def heatmap(
    scene: Scene,
    cfg: PropagationConfig,
    resolution_m: float = 5.0,
    rx_height_m: float = 1.5,
) -> np.ndarray:
    """Best-server RSRP on a pixel-center lattice.

    Grid shape is (ceil(height/res), ceil(width/res)); entry [i, j] holds the
    strongest station's rsrp in dBm at ((j+0.5)*res, (i+0.5)*res).
    """
    if resolution_m <= 0:
        raise ValueError("resolution must be positive")
    rows = math.ceil(scene.height_m / resolution_m)
    cols = math.ceil(scene.width_m / resolution_m)
    arrs = BuildingArrays(scene)
    stations = np.array([(st.x, st.y, st.z) for st in scene.stations])
    eirp = np.array([st.tx_power_dbm + st.antenna_gain_dbi for st in scene.stations])
    grid = np.full((rows, cols), RSRP_SENTINEL_DBM)
    for i in range(rows):
        y = (i + 0.5) * resolution_m
        for j in range(cols):
            x = (j + 0.5) * resolution_m
            gains, _los = station_gains(arrs, stations, (x, y, rx_height_m), cfg)
            powers = eirp + gains
            if not np.all(np.isnan(gains)):
                grid[i, j] = np.nanmax(powers)
    return grid


def save_heatmap_txt(grid: np.ndarray, path) -> None:
    """One grid row per line, dBm values with mdB precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in grid:
            fh.write(" ".join(f"{v:.3f}" for v in row))
            fh.write("\n")


# Color ramp stops for the pixmap export: weak signal in dark blue through
# cyan and yellow to red at the strong end.
_RAMP = (
    (0.00, (10, 10, 80)),
    (0.33, (30, 160, 200)),
    (0.66, (235, 210, 50)),
    (1.00, (200, 30, 25)),
)


def _ramp_rgb(frac: float) -> tuple[int, int, int]:
    frac = min(1.0, max(0.0, frac))
    for (f0, c0), (f1, c1) in zip(_RAMP, _RAMP[1:]):
        if frac <= f1:
            w = 0.0 if f1 == f0 else (frac - f0) / (f1 - f0)
            return tuple(int(round(a + w * (b - a))) for a, b in zip(c0, c1))
    return _RAMP[-1][1]


def save_heatmap_ppm(grid: np.ndarray, path, vmin_dbm: float = -120.0, vmax_dbm: float = -40.0) -> None:
    """Binary PPM with a linear dBm-to-color mapping over [vmin, vmax].

    Row 0 of the file is the top of the image, so the grid is flipped to
    keep north (large y) up.
    """
    rows, cols = grid.shape
    span = vmax_dbm - vmin_dbm
    header = (
        f"P6\n# best-server RSRP, {vmin_dbm} dBm -> blue, {vmax_dbm} dBm -> red, linear ramp\n"
        f"{cols} {rows}\n255\n"
    )
    body = bytearray()
    for i in range(rows - 1, -1, -1):
        for j in range(cols):
            body.extend(_ramp_rgb((grid[i, j] - vmin_dbm) / span))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(bytes(body))
