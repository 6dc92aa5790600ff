"""Diurnal traffic model.

A 24-anchor hourly profile drives both the background load of every cell
(through a per-cell static factor) and, optionally, the offered rate of the
vehicle uplink flows.  Interpolation is piecewise linear with wraparound at
midnight; noise is multiplicative Gaussian applied per draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mobility import Vehicle
from .rng import CELL_FACTOR, substream

# Low overnight, morning and evening rush peaks, moderate midday plateau.
DEFAULT_HOURLY_ANCHORS = (
    0.20, 0.15, 0.12, 0.10, 0.12, 0.25, 0.50, 0.85,
    1.00, 0.80, 0.65, 0.60, 0.65, 0.60, 0.60, 0.65,
    0.80, 1.00, 0.90, 0.70, 0.55, 0.45, 0.35, 0.25,
)

DEFAULT_PEAK_BACKGROUND = 0.7
CELL_FACTOR_RANGE = (0.8, 1.2)
DEMAND_FLOOR_FRACTION = 0.2


@dataclass(frozen=True)
class DiurnalProfile:
    """Hourly multipliers in [0, 1], one anchor per hour of day."""

    hourly: tuple[float, ...] = DEFAULT_HOURLY_ANCHORS
    noise_sigma: float = 0.1

    def __post_init__(self) -> None:
        if len(self.hourly) != 24:
            raise ValueError("profile needs exactly 24 hourly anchors")
        if any(not 0.0 <= v <= 1.0 for v in self.hourly):
            raise ValueError("profile anchors must lie in [0, 1]")

    def value(self, t_s: float) -> float:
        """Noise-free piecewise-linear interpolation, wrapping at midnight."""
        hour = (t_s / 3600.0) % 24.0
        i = int(hour) % 24
        frac = hour - int(hour)
        a, b = self.hourly[i], self.hourly[(i + 1) % 24]
        return a + frac * (b - a)


def load_multiplier(profile: DiurnalProfile, t_s: float, rng: np.random.Generator | None = None) -> float:
    """Profile value with multiplicative Gaussian noise, clamped to [0, 1]."""
    v = profile.value(t_s)
    if rng is not None and profile.noise_sigma > 0.0:
        v *= 1.0 + profile.noise_sigma * rng.standard_normal()
    return min(1.0, max(0.0, v))


class BackgroundTraffic:
    """Per-cell background load: profile x peak fraction x static cell factor.

    Cell factors are drawn once per run from the run seed, so two cells with
    the same profile still differ persistently.  An optional per-cell phase
    shift staggers when each cell peaks (office cells midday, residential
    cells in the evening); zero keeps all cells on the shared clock.  The
    same per-cell stream also draws a static capacity scale (mixed carrier
    widths across sites); the simulator reads it from capacity_scales.
    """

    def __init__(
        self,
        profile: DiurnalProfile,
        cell_ids,
        seed: int,
        peak_fraction: float = DEFAULT_PEAK_BACKGROUND,
        factor_range: tuple[float, float] = CELL_FACTOR_RANGE,
        phase_max_h: float = 0.0,
        capacity_choices: tuple[float, ...] = (1.0,),
    ):
        if not 0.0 <= peak_fraction < 1.0:
            raise ValueError("peak background fraction must lie in [0, 1)")
        self.profile = profile
        self.peak_fraction = peak_fraction
        self.factors = {}
        self.phases_h = {}
        self.capacity_scales = {}
        for cid in cell_ids:
            # One substream per cell holds every static cell attribute; the
            # draw order (factor, phase, capacity) is fixed so existing seeds
            # keep earlier values when later knobs are enabled.
            rng = substream(seed, CELL_FACTOR, cid)
            self.factors[cid] = float(rng.uniform(*factor_range))
            self.phases_h[cid] = float(rng.uniform(-phase_max_h, phase_max_h))
            self.capacity_scales[cid] = float(
                capacity_choices[rng.integers(0, len(capacity_choices))]
            )

    def load(self, cell_id: int, t_s: float, rng: np.random.Generator | None = None) -> float:
        """Background load in [0, 1); saturates just below full occupancy."""
        shifted = t_s + 3600.0 * self.phases_h[cell_id]
        mult = load_multiplier(self.profile, shifted, rng)
        raw = mult * self.peak_fraction * self.factors[cell_id]
        return min(raw, 0.999)


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    ue_id: int
    packet_bytes: int
    demand_pkt_s: float
    start_s: float
    end_s: float


@dataclass(frozen=True)
class TrafficConfig:
    packet_bytes: int = 1200
    demand_pkt_s: float = 50.0
    # When True the offered rate follows the diurnal multiplier (with the
    # floor below); when False every flow offers the nominal rate all day.
    demand_tracks_load: bool = True
    demand_floor: float = DEMAND_FLOOR_FRACTION
    peak_background: float = DEFAULT_PEAK_BACKGROUND
    cell_phase_max_h: float = 0.0
    profile: DiurnalProfile = field(default_factory=DiurnalProfile)

    def demand_at(self, t_s: float) -> float:
        """Offered packet rate for any flow at time t."""
        if not self.demand_tracks_load:
            return self.demand_pkt_s
        mult = max(self.profile.value(t_s), self.demand_floor)
        return self.demand_pkt_s * mult


def active_flows(vehicles: list[Vehicle], t_s: float, cfg: TrafficConfig) -> list[FlowSpec]:
    """Exactly one uplink CBR flow per active vehicle.

    flow_id equals the vehicle id, so it is stable for the vehicle lifetime;
    end_s is open-ended until despawn.
    """
    demand = cfg.demand_at(t_s)
    return [
        FlowSpec(
            flow_id=v.id,
            ue_id=v.id,
            packet_bytes=cfg.packet_bytes,
            demand_pkt_s=demand,
            start_s=v.spawn_time_s,
            end_s=math.inf,
        )
        for v in vehicles
    ]
