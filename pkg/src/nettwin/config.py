"""Run configuration: JSON file + flag overrides -> validated objects.

One RunConfig owns everything a run needs: scene parameters (or a path to
a saved scene), population size, radio/simulation/traffic settings, seed,
and output directory.  The canonical-JSON hash of the config is embedded
in every output's metadata so artifacts can be audited against the exact
settings that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .mobility import SpawnModel
from .predict import TrainConfig
from .propagation import PropagationConfig
from .scene import SceneParams
from .simcore import SimConfig
from .traffic import DiurnalProfile, TrafficConfig


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending field path."""


@dataclass
class RunConfig:
    seed: int = 1
    out_dir: str = "out"
    vehicles: int = 1
    duration_s: float = 86400.0
    scene_path: str | None = None
    scene: SceneParams = field(default_factory=SceneParams)
    sim: SimConfig = field(default_factory=SimConfig)
    radio: PropagationConfig = field(default_factory=PropagationConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    spawn: SpawnModel = field(default_factory=lambda: SpawnModel(target_population=1))
    predict: TrainConfig = field(default_factory=TrainConfig)
    raw: dict = field(default_factory=dict)


# JSON key -> (dataclass field, converter).  Times arrive in the units the
# key names; SimConfig stores seconds internally.
_SIM_KEYS = {
    "tick_s": ("tick_s", float),
    "handover_hysteresis_db": ("handover_hysteresis_db", float),
    "core_latency_ms": ("core_latency_s", lambda v: float(v) / 1e3),
    "harq_max_retx": ("harq_max_retx", int),
    "harq_rtt_ms": ("harq_rtt_s", lambda v: float(v) / 1e3),
    "scheduler_efficiency": ("scheduler_efficiency", float),
    "shadowing_sigma_db": ("shadowing_sigma_db", float),
    "shadowing_decorr_m": ("shadowing_decorr_m", float),
    "per_midpoint_db": ("per_midpoint_db", float),
    "per_slope_db": ("per_slope_db", float),
    "link_refresh_m": ("link_refresh_m", float),
    "cell_capacity_choices": (
        "cell_capacity_choices",
        lambda v: tuple(float(x) for x in v),
    ),
}

_RADIO_KEYS = {
    "carrier_freq_hz": ("carrier_freq_hz", float),
    "bandwidth_hz": ("bandwidth_hz", float),
    "noise_figure_db": ("noise_figure_db", float),
    "reflection_loss_db": ("reflection_loss_db", float),
    "max_reflections": ("max_reflections", int),
    "nlos_excess_exponent": ("nlos_excess_exponent", float),
    "nlos_excess_loss_db": ("nlos_excess_loss_db", float),
    "nlos_fallback": ("nlos_fallback", bool),
}

_SCENE_KEYS = {
    "width_m": ("width_m", float),
    "height_m": ("height_m", float),
    "grid_x": ("grid_x", int),
    "grid_y": ("grid_y", int),
    "block_m": ("block_m", float),
    "building_density": ("building_density", float),
    "building_setback_m": ("building_setback_m", float),
    "station_count": ("station_count", int),
    "station_height_m": ("station_height_m", float),
    "tx_power_dbm": ("tx_power_dbm", float),
    "antenna_gain_dbi": ("antenna_gain_dbi", float),
}

_TRAFFIC_KEYS = {
    "packet_bytes": ("packet_bytes", int),
    "demand_pkt_s": ("demand_pkt_s", float),
    "demand_tracks_load": ("demand_tracks_load", bool),
    "demand_floor": ("demand_floor", float),
    "cell_phase_max_h": ("cell_phase_max_h", float),
}

_SPAWN_KEYS = {
    "route_edges": ("route_edges", int),
    "speed_jitter": ("speed_jitter", float),
}

_PREDICT_KEYS = {
    "window_s": ("window_s", float),
    "stride_s": ("stride_s", float),
    "horizon_s": ("horizon_s", float),
    "min_target_samples": ("min_target_samples", int),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "learning_rate": ("learning_rate", float),
    "dropout": ("dropout", float),
    "test_fraction": ("test_fraction", float),
    "cell_id_feature": ("cell_id_feature", bool),
    "hidden": ("hidden", lambda v: tuple(int(x) for x in v)),
    "local_hidden": ("local_hidden", lambda v: tuple(int(x) for x in v)),
}


def _apply(section: dict, keys: dict, cls, path: str, base=None):
    values = {} if base is None else dict(base)
    for key, value in section.items():
        if key not in keys:
            raise ConfigError("%s.%s: unknown field" % (path, key))
        name, conv = keys[key]
        try:
            values[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError("%s.%s: %s" % (path, key, exc)) from exc
    return cls(**values)


def _build_profile(section: dict) -> DiurnalProfile:
    kwargs = {}
    if "hourly_anchors" in section:
        anchors = section["hourly_anchors"]
        if not isinstance(anchors, list) or len(anchors) != 24:
            raise ConfigError("traffic.hourly_anchors: need a list of 24 values")
        kwargs["hourly"] = tuple(float(v) for v in anchors)
    if "noise_sigma" in section:
        kwargs["noise_sigma"] = float(section["noise_sigma"])
    return DiurnalProfile(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = RunConfig(raw=json.loads(json.dumps(data, sort_keys=True)))
    known_top = {
        "seed", "out_dir", "vehicles", "duration_s", "scene_path",
        "scene", "sim", "radio", "traffic", "mobility", "predict",
    }
    for key in data:
        if key not in known_top:
            raise ConfigError("%s: unknown field" % key)
    try:
        cfg.seed = int(data.get("seed", cfg.seed))
        cfg.out_dir = str(data.get("out_dir", cfg.out_dir))
        cfg.vehicles = int(data.get("vehicles", cfg.vehicles))
        cfg.duration_s = float(data.get("duration_s", cfg.duration_s))
    except (TypeError, ValueError) as exc:
        raise ConfigError("top-level field: %s" % exc) from exc
    if data.get("scene_path") is not None:
        cfg.scene_path = str(data["scene_path"])
    if "scene" in data:
        cfg.scene = _apply(data["scene"], _SCENE_KEYS, SceneParams, "scene")
    if "sim" in data:
        cfg.sim = _apply(data["sim"], _SIM_KEYS, SimConfig, "sim")
    cfg.sim = dataclasses.replace(cfg.sim, duration_s=cfg.duration_s)
    if "radio" in data:
        cfg.radio = _apply(data["radio"], _RADIO_KEYS, PropagationConfig, "radio")
    traffic_section = dict(data.get("traffic", {}))
    profile_fields = {
        k: traffic_section.pop(k) for k in ("hourly_anchors", "noise_sigma")
        if k in traffic_section
    }
    peak = traffic_section.pop("peak_background", None)
    profile = _build_profile(profile_fields)
    traffic_kwargs = {"profile": profile}
    if peak is not None:
        traffic_kwargs["peak_background"] = float(peak)
    cfg.traffic = _apply(
        traffic_section, _TRAFFIC_KEYS, TrafficConfig, "traffic", base=traffic_kwargs
    )
    spawn_kwargs = {"target_population": cfg.vehicles}
    if "mobility" in data:
        cfg.spawn = _apply(
            data["mobility"], _SPAWN_KEYS, SpawnModel, "mobility", base=spawn_kwargs
        )
    else:
        cfg.spawn = SpawnModel(**spawn_kwargs)
    if "predict" in data:
        cfg.predict = _apply(data["predict"], _PREDICT_KEYS, TrainConfig, "predict")
    cfg.predict = dataclasses.replace(cfg.predict, seed=cfg.seed)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.vehicles < 0:
        raise ConfigError("vehicles: must be >= 0")
    if cfg.scene.station_count < 1:
        raise ConfigError("scene.station_count: must be >= 1")
    if cfg.duration_s <= 0:
        raise ConfigError("duration_s: must be > 0")
    if cfg.sim.tick_s <= 0:
        raise ConfigError("sim.tick_s: must be > 0")
    if not 0 <= cfg.traffic.demand_floor <= 1:
        raise ConfigError("traffic.demand_floor: must be in [0, 1]")
    if cfg.seed < 0:
        raise ConfigError("seed: must be >= 0")


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s: invalid JSON (%s)" % (path, exc)) from exc
    if overrides:
        data = dict(data)
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
    return config_from_dict(data)


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
