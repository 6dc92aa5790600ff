"""End-to-end command behavior: artifacts, metadata, exit codes."""

import json
import os

import pytest

from nettwin.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SCHEMA, main

SMALL_SCENE = {
    "width_m": 300.0,
    "height_m": 300.0,
    "grid_x": 4,
    "grid_y": 4,
    "block_m": 60.0,
    "station_count": 2,
}


def small_config(tmp_path, **top):
    data = {
        "seed": 5,
        "vehicles": 3,
        "duration_s": 60.0,
        "out_dir": str(tmp_path / "out"),
        "scene": SMALL_SCENE,
        "traffic": {"demand_tracks_load": False, "demand_pkt_s": 20.0},
    }
    data.update(top)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return str(path)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------- argparse surface ----------

def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--help"])
    assert err.value.code == 0
    assert "simulate" in capsys.readouterr().out


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert "nettwin" in capsys.readouterr().out


# ---------- exit-code mapping ----------

def test_bad_config_field_exits_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"sim": {"bogus": 1}}))
    assert main(["scene", "--config", str(cfg)]) == EXIT_CONFIG
    assert "sim.bogus" in capsys.readouterr().err


def test_invalid_json_exits_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{oops")
    assert main(["scene", "--config", str(cfg)]) == EXIT_CONFIG
    assert "invalid JSON" in capsys.readouterr().err


def test_unwritable_out_dir_exits_io(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["scene", "--out", str(blocker / "sub"), "--stations", "2"])
    assert rc == EXIT_IO


def test_missing_dataset_exits_io(tmp_path):
    rc = main(
        ["analyze", "--dataset", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]
    )
    assert rc == EXIT_IO


def test_malformed_dataset_exits_schema(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time_s,latency_ms\n1,2\n")
    rc = main(["analyze", "--dataset", str(bad), "--out", str(tmp_path)])
    assert rc == EXIT_SCHEMA


# ---------- scene ----------

def test_scene_writes_artifacts_and_metadata(tmp_path):
    out = tmp_path / "scn"
    rc = main(["scene", "--out", str(out), "--seed", "3", "--stations", "4"])
    assert rc == EXIT_OK
    assert (out / "scene.json").exists()
    meta = read_json(out / "scene_metadata.json")
    assert meta["command"] == "scene"
    assert meta["seed"] == 3
    assert meta["stations"] == 4
    assert len(meta["config_hash"]) == 16
    assert meta["tool_version"]


# ---------- simulate ----------

def test_simulate_writes_dataset(tmp_path):
    rc = main(["simulate", "--config", small_config(tmp_path)])
    assert rc == EXIT_OK
    out = tmp_path / "out"
    with open(out / "dataset.csv", encoding="ascii") as fh:
        header = fh.readline().strip()
    assert header.startswith("time_s,hour,flow_id")
    meta = read_json(out / "run_metadata.json")
    assert meta["rows"] > 0
    assert meta["seconds"] == 60
    assert meta["conservation_violations"] == 0
    assert meta["seed"] == 5


def test_simulate_seed_flag_overrides_config(tmp_path):
    rc = main(["simulate", "--config", small_config(tmp_path), "--seed", "9"])
    assert rc == EXIT_OK
    assert read_json(tmp_path / "out" / "run_metadata.json")["seed"] == 9


def test_simulate_is_reproducible(tmp_path):
    cfg = small_config(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == EXIT_OK
    with open(a / "dataset.csv", "rb") as fh:
        bytes_a = fh.read()
    with open(b / "dataset.csv", "rb") as fh:
        bytes_b = fh.read()
    assert bytes_a == bytes_b


# ---------- heatmap ----------

def test_heatmap_writes_rasters(tmp_path):
    rc = main(
        ["heatmap", "--config", small_config(tmp_path), "--resolution", "30"]
    )
    assert rc == EXIT_OK
    out = tmp_path / "out"
    for name in ("heatmap.txt", "heatmap.ppm", "heatmap.png"):
        assert (out / name).exists(), name
    meta = read_json(out / "heatmap_metadata.json")
    assert meta["grid_shape"] == [10, 10]
    assert meta["best_rsrp_dbm"] > -120.0


# ---------- pipeline (simulate + heatmap + analyze + predict) ----------

@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = small_config(
        tmp,
        duration_s=7200.0,
        vehicles=4,
        predict={"epochs": 3, "hidden": [16, 8], "local_hidden": [8, 4]},
    )
    rc = main(["pipeline", "--config", cfg, "--resolution", "30"])
    assert rc == EXIT_OK
    return tmp / "out"


def test_pipeline_produces_all_artifacts(pipeline_out):
    expected = [
        "scene.json", "dataset.csv", "run_metadata.json",
        "heatmap.txt", "heatmap.ppm", "heatmap.png", "heatmap_metadata.json",
        "correlation.csv", "correlation.png", "sign_checks.json",
        "cells_h11.csv", "cells_h23.csv", "cell_latency.svg",
        "diurnal.csv", "diurnal.png", "analyze_metadata.json",
        "prediction_report.json", "per_cell_mse.csv", "prediction_error.png",
        "global_model.npz", "predict_metadata.json",
    ]
    missing = [n for n in expected if not (pipeline_out / n).exists()]
    assert not missing, missing


def test_pipeline_metadata_shares_config_hash(pipeline_out):
    hashes = {
        read_json(pipeline_out / name)["config_hash"]
        for name in (
            "run_metadata.json", "heatmap_metadata.json",
            "analyze_metadata.json", "predict_metadata.json",
        )
    }
    assert len(hashes) == 1


def test_pipeline_prediction_report(pipeline_out):
    rep = read_json(pipeline_out / "prediction_report.json")
    assert set(rep["mse_norm"]) == {"naive", "global", "local"}
    assert rep["n_examples"] >= 96
    meta = read_json(pipeline_out / "predict_metadata.json")
    assert meta["examples"] == rep["n_examples"]


def test_pipeline_sign_checks_structure(pipeline_out):
    signs = read_json(pipeline_out / "sign_checks.json")
    assert len(signs) == 10
    assert {"a", "b", "expected_sign", "r", "ok"} <= set(signs[0])


# ---------- bench ----------

def test_bench_writes_scaling_results(tmp_path):
    out = tmp_path / "bench"
    rc = main(
        [
            "bench", "--config", small_config(tmp_path), "--out", str(out),
            "--v-list", "2,4", "--b-list", "2,3",
            "--v-fixed", "2", "--b-fixed", "2", "--bench-duration", "5",
        ]
    )
    assert rc == EXIT_OK
    with open(out / "bench.csv", encoding="ascii") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "sweep,vehicles,stations,wall_s"
    assert len(lines) == 5
    payload = read_json(out / "bench.json")
    assert isinstance(payload["v_exponent"], float)
    assert isinstance(payload["b_exponent"], float)


def test_bench_empty_sweep_is_config_error(tmp_path):
    rc = main(
        ["bench", "--config", small_config(tmp_path), "--v-list", ""]
    )
    assert rc == EXIT_CONFIG
