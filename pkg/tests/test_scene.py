"""Scene generation invariants, validation, and JSON round-trips."""

import dataclasses
import json

import pytest

from nettwin.scene import (
    Building,
    BaseStation,
    Region,
    RoadEdge,
    RoadGraph,
    RoadNode,
    Scene,
    SceneError,
    SceneParams,
    generate_scene,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    validate_scene,
)

SMALL = SceneParams(width_m=500.0, height_m=500.0, grid_x=6, grid_y=6, station_count=6)


def test_generation_is_deterministic():
    a = generate_scene(SMALL, seed=3)
    b = generate_scene(SMALL, seed=3)
    assert scene_to_dict(a) == scene_to_dict(b)


def test_different_seeds_differ():
    a = generate_scene(SMALL, seed=3)
    b = generate_scene(SMALL, seed=4)
    assert scene_to_dict(a) != scene_to_dict(b)


def test_generated_scene_validates_clean():
    scene = generate_scene(SMALL, seed=11)
    assert validate_scene(scene) == []


def test_requested_station_count():
    scene = generate_scene(SMALL, seed=2)
    assert len(scene.stations) == 6
    assert sorted(s.id for s in scene.stations) == list(range(6))


def test_stations_sit_on_distinct_road_nodes():
    scene = generate_scene(SMALL, seed=5)
    node_xy = {(n.x, n.y) for n in scene.roads.nodes}
    seen = set()
    for s in scene.stations:
        assert (s.x, s.y) in node_xy
        assert (s.x, s.y) not in seen
        seen.add((s.x, s.y))


def test_road_lattice_shape():
    scene = generate_scene(SMALL, seed=0)
    assert len(scene.roads.nodes) == 36
    # 6x6 lattice: 2 * 6 * 5 street segments.
    assert len(scene.roads.edges) == 60
    assert scene.roads.is_connected()


def test_density_zero_gives_open_scene():
    scene = generate_scene(dataclasses.replace(SMALL, building_density=0.0), seed=1)
    assert scene.buildings == []


def test_density_one_fills_every_block():
    scene = generate_scene(dataclasses.replace(SMALL, building_density=1.0), seed=1)
    assert len(scene.buildings) == 25


def test_buildings_respect_setback():
    scene = generate_scene(SMALL, seed=9)
    for b in scene.buildings:
        # Street grid pitch is 90 m starting at the margin; every footprint
        # must leave at least the configured setback to the block edge.
        assert b.max_x - b.min_x <= 90.0 - 2 * 8.0 + 1e-9
        assert b.max_y - b.min_y <= 90.0 - 2 * 8.0 + 1e-9
        assert b.max_x > b.min_x and b.max_y > b.min_y


def test_tight_block_clamps_inset():
    # 0.25 * block < setback used to draw a negative slack.
    params = dataclasses.replace(SMALL, block_m=30.0, grid_x=4, grid_y=4, station_count=4)
    scene = generate_scene(params, seed=4)
    for b in scene.buildings:
        assert b.max_x - b.min_x == pytest.approx(30.0 - 16.0, abs=1e-9)


def test_core_buildings_taller_than_outer_belt():
    scene = generate_scene(dataclasses.replace(SMALL, building_density=1.0), seed=8)
    def region_name(b):
        return scene.region_of((b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2).name
    core = [b for b in scene.buildings if region_name(b) == "core"]
    outer = [b for b in scene.buildings if region_name(b) == "outer_belt"]
    assert core and outer
    assert min(b.height_m for b in core) >= 18.0
    assert max(b.height_m for b in outer) <= 20.0


def test_rejects_tiny_grid():
    with pytest.raises(SceneError):
        generate_scene(dataclasses.replace(SMALL, grid_x=1), seed=0)


def test_rejects_oversized_blocks():
    with pytest.raises(SceneError):
        generate_scene(dataclasses.replace(SMALL, block_m=200.0), seed=0)


def test_rejects_bad_density():
    with pytest.raises(SceneError):
        generate_scene(dataclasses.replace(SMALL, building_density=1.5), seed=0)


def test_rejects_station_overflow():
    with pytest.raises(SceneError):
        generate_scene(dataclasses.replace(SMALL, station_count=37), seed=0)


def test_region_layout_is_nested():
    scene = generate_scene(SMALL, seed=0)
    names = [r.name for r in scene.regions]
    assert names == ["core", "inner_belt", "outer_belt", "periphery"]
    # region_of returns the innermost (first listed) region containing a point
    assert scene.region_of(250.0, 250.0).name == "core"
    assert scene.region_of(5.0, 5.0).name == "periphery"


def test_json_round_trip(tmp_path):
    scene = generate_scene(SMALL, seed=13)
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    back = load_scene(path)
    assert scene_to_dict(back) == scene_to_dict(scene)
    assert validate_scene(back) == []


def test_scene_dict_round_trip_preserves_floats():
    scene = generate_scene(SMALL, seed=21)
    clone = scene_from_dict(json.loads(json.dumps(scene_to_dict(scene))))
    for a, b in zip(scene.buildings, clone.buildings):
        assert a == b
    for a, b in zip(scene.stations, clone.stations):
        assert a == b


def make_invalid_scene():
    region = Region(0, "all", 0.0, 0.0, 100.0, 100.0, 1.0, 1.0, 13.9)
    nodes = [RoadNode(0, 10.0, 10.0), RoadNode(1, 90.0, 10.0)]
    edges = [RoadEdge(0, 0, 1, 80.0, 0)]
    return Scene(
        width_m=100.0,
        height_m=100.0,
        buildings=[Building(0, 30.0, 30.0, 20.0, 40.0, 10.0)],  # min_x > max_x
        regions=[region],
        roads=RoadGraph(nodes, edges),
        stations=[BaseStation(0, 150.0, 10.0, 10.0)],  # off the map
    )


def test_validate_reports_specific_problems():
    issues = validate_scene(make_invalid_scene())
    assert any("degenerate footprint" in i for i in issues)
    assert any("stations[0]" in i for i in issues)


def test_validate_flags_wrong_edge_length():
    region = Region(0, "all", 0.0, 0.0, 100.0, 100.0, 1.0, 1.0, 13.9)
    nodes = [RoadNode(0, 0.0, 0.0), RoadNode(1, 50.0, 0.0)]
    edges = [RoadEdge(0, 0, 1, 62.0, 0)]
    scene = Scene(100.0, 100.0, [], [region], RoadGraph(nodes, edges), [])
    assert any("length" in i for i in validate_scene(scene))


def test_validate_flags_disconnected_roads():
    region = Region(0, "all", 0.0, 0.0, 100.0, 100.0, 1.0, 1.0, 13.9)
    nodes = [RoadNode(0, 0.0, 0.0), RoadNode(1, 50.0, 0.0), RoadNode(2, 0.0, 50.0), RoadNode(3, 50.0, 50.0)]
    edges = [RoadEdge(0, 0, 1, 50.0, 0), RoadEdge(1, 2, 3, 50.0, 0)]
    scene = Scene(100.0, 100.0, [], [region], RoadGraph(nodes, edges), [])
    assert any("not connected" in i for i in validate_scene(scene))


def test_validate_flags_station_inside_building():
    region = Region(0, "all", 0.0, 0.0, 100.0, 100.0, 1.0, 1.0, 13.9)
    nodes = [RoadNode(0, 5.0, 5.0), RoadNode(1, 95.0, 5.0)]
    edges = [RoadEdge(0, 0, 1, 90.0, 0)]
    bld = Building(0, 40.0, 40.0, 60.0, 60.0, 30.0)
    st = BaseStation(0, 50.0, 50.0, 20.0)  # below the roof
    scene = Scene(100.0, 100.0, [bld], [region], RoadGraph(nodes, edges), [st])
    assert any("inside buildings" in i for i in validate_scene(scene))
    tall = Scene(100.0, 100.0, [bld], [region], RoadGraph(nodes, edges), [BaseStation(0, 50.0, 50.0, 35.0)])
    assert not any("inside buildings" in i for i in validate_scene(tall))
