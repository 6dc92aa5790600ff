"""Diurnal profile math and per-cell background draws."""

import numpy as np
import pytest

from nettwin.mobility import Vehicle
from nettwin.rng import CELL_FACTOR, substream
from nettwin.traffic import (
    BackgroundTraffic,
    DEFAULT_HOURLY_ANCHORS,
    DiurnalProfile,
    TrafficConfig,
    active_flows,
    load_multiplier,
)

FLAT = DiurnalProfile(hourly=tuple([0.5] * 24), noise_sigma=0.0)


def ramp_profile():
    anchors = [0.0] * 24
    anchors[7] = 0.4
    anchors[8] = 0.8
    return DiurnalProfile(hourly=tuple(anchors), noise_sigma=0.0)


def test_profile_requires_24_anchors():
    with pytest.raises(ValueError):
        DiurnalProfile(hourly=(0.5,) * 23)


def test_profile_rejects_out_of_range_anchor():
    bad = [0.5] * 24
    bad[3] = 1.4
    with pytest.raises(ValueError):
        DiurnalProfile(hourly=tuple(bad))


def test_interpolation_midpoint():
    # 07:30 sits halfway between the 07 and 08 anchors.
    p = ramp_profile()
    assert p.value(7.5 * 3600.0) == pytest.approx(0.6)
    assert p.value(7.0 * 3600.0) == pytest.approx(0.4)
    assert p.value(8.0 * 3600.0) == pytest.approx(0.8)


def test_interpolation_wraps_at_midnight():
    anchors = [0.0] * 24
    anchors[23] = 0.8
    anchors[0] = 0.2
    p = DiurnalProfile(hourly=tuple(anchors), noise_sigma=0.0)
    assert p.value(23.5 * 3600.0) == pytest.approx(0.5)
    # Day 2 gives the same values as day 1.
    assert p.value((24.0 + 23.5) * 3600.0) == pytest.approx(0.5)


def test_default_profile_has_two_rush_peaks():
    p = DiurnalProfile()
    assert p.hourly == DEFAULT_HOURLY_ANCHORS
    assert p.value(8 * 3600.0) == 1.0
    assert p.value(17 * 3600.0) == 1.0
    assert p.value(3 * 3600.0) == pytest.approx(0.10)


def test_load_multiplier_noise_free_path():
    assert load_multiplier(FLAT, 12 * 3600.0) == pytest.approx(0.5)


def test_load_multiplier_clamps_to_unit_interval():
    hot = DiurnalProfile(hourly=tuple([1.0] * 24), noise_sigma=5.0)
    rng = substream(0, 99)
    draws = [load_multiplier(hot, 0.0, rng) for _ in range(200)]
    assert all(0.0 <= d <= 1.0 for d in draws)
    assert min(draws) == 0.0 and max(draws) == 1.0  # huge sigma hits both rails


def test_load_multiplier_noise_is_multiplicative():
    zero = DiurnalProfile(hourly=tuple([0.0] * 24), noise_sigma=0.5)
    rng = substream(0, 98)
    assert all(load_multiplier(zero, 0.0, rng) == 0.0 for _ in range(50))


def test_cell_factors_deterministic_and_in_range():
    a = BackgroundTraffic(FLAT, range(8), seed=5)
    b = BackgroundTraffic(FLAT, range(8), seed=5)
    assert a.factors == b.factors
    assert all(0.8 <= f <= 1.2 for f in a.factors.values())
    c = BackgroundTraffic(FLAT, range(8), seed=6)
    assert a.factors != c.factors


def test_cell_static_draw_order_is_stable():
    """factor, phase, capacity come from one per-cell stream in that order."""
    bg = BackgroundTraffic(
        FLAT, [3], seed=17, phase_max_h=2.0, capacity_choices=(0.5, 1.0)
    )
    rng = substream(17, CELL_FACTOR, 3)
    assert bg.factors[3] == pytest.approx(rng.uniform(0.8, 1.2))
    assert bg.phases_h[3] == pytest.approx(rng.uniform(-2.0, 2.0))
    assert bg.capacity_scales[3] == (0.5, 1.0)[rng.integers(0, 2)]


def test_zero_phase_keeps_cells_synchronous():
    bg = BackgroundTraffic(ramp_profile(), [0, 1, 2], seed=1)
    assert all(ph == 0.0 for ph in bg.phases_h.values())
    t = 7.5 * 3600.0
    loads = {cid: bg.load(cid, t) for cid in (0, 1, 2)}
    # Same instant, same profile point: ratios equal the factor ratios.
    assert loads[0] / bg.factors[0] == pytest.approx(loads[1] / bg.factors[1])


def test_phase_shift_moves_the_peak():
    bg = BackgroundTraffic(ramp_profile(), [0], seed=2, phase_max_h=1.5)
    ph = bg.phases_h[0]
    assert -1.5 <= ph <= 1.5 and ph != 0.0
    # The shifted cell sees the 08:00 anchor value at 08:00 minus its phase.
    t = (8.0 - ph) * 3600.0
    assert bg.load(0, t) == pytest.approx(0.8 * 0.7 * bg.factors[0], abs=1e-9)


def test_background_load_saturates_below_one():
    hot = DiurnalProfile(hourly=tuple([1.0] * 24), noise_sigma=0.0)
    bg = BackgroundTraffic(hot, [0], seed=3, peak_fraction=0.95, factor_range=(1.2, 1.2))
    assert bg.load(0, 0.0) == pytest.approx(0.999)


def test_peak_fraction_validated():
    with pytest.raises(ValueError):
        BackgroundTraffic(FLAT, [0], seed=0, peak_fraction=1.0)


def test_default_capacity_scales_are_unity():
    bg = BackgroundTraffic(FLAT, [0, 1], seed=9)
    assert set(bg.capacity_scales.values()) == {1.0}


def test_demand_tracks_profile_with_floor():
    cfg = TrafficConfig(demand_pkt_s=40.0, demand_tracks_load=True, profile=ramp_profile())
    assert cfg.demand_at(8.0 * 3600.0) == pytest.approx(32.0)
    # Profile reads 0 overnight: the floor keeps flows alive.
    assert cfg.demand_at(2.0 * 3600.0) == pytest.approx(40.0 * 0.2)


def test_demand_constant_when_not_tracking():
    cfg = TrafficConfig(demand_pkt_s=40.0, demand_tracks_load=False, profile=ramp_profile())
    assert cfg.demand_at(2.0 * 3600.0) == 40.0


def vehicle(vid, t0=0.0):
    return Vehicle(
        id=vid, route=[0], route_dirs=[True], cursor=0, offset_m=0.0,
        speed_mps=10.0, speed_factor=1.0, spawn_time_s=t0,
    )


def test_one_flow_per_vehicle_with_stable_ids():
    cfg = TrafficConfig(demand_tracks_load=False, demand_pkt_s=25.0)
    flows = active_flows([vehicle(4, 1.0), vehicle(9, 2.5)], 100.0, cfg)
    assert [(f.flow_id, f.ue_id) for f in flows] == [(4, 4), (9, 9)]
    assert all(f.demand_pkt_s == 25.0 for f in flows)
    assert flows[0].start_s == 1.0
    assert flows[1].end_s == float("inf")


def test_no_vehicles_no_flows():
    assert active_flows([], 0.0, TrafficConfig()) == []
