"""Static world model: buildings, regions, road graph, and base stations.

A Scene is the immutable input shared by propagation, mobility, and the
simulation core.  Scenes are either generated procedurally (Manhattan-style
block grid with named speed/spawn regions) or loaded from JSON.  Generation
is a pure function of its parameters and seed.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace

from .rng import SCENE, substream

KMH = 1.0 / 3.6
MIN_SPEED_LIMIT_MPS = 30.0 * KMH
MAX_SPEED_LIMIT_MPS = 100.0 * KMH

VEHICLE_ANTENNA_M = 1.5

_LENGTH_TOL_M = 1e-6


class SceneError(ValueError):
    """Raised when a scene file fails schema or consistency validation."""


@dataclass(frozen=True)
class Building:
    """Axis-aligned box footprint extruded from ground to `height_m`."""

    id: int
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    height_m: float

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass(frozen=True)
class Region:
    """Rectangular zone carrying spawn/route weights and a speed limit."""

    id: int
    name: str
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    spawn_weight: float
    route_weight: float
    speed_limit_mps: float

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def area(self) -> float:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)


@dataclass(frozen=True)
class RoadNode:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class RoadEdge:
    """Undirected street segment, drivable in both directions."""

    id: int
    node_a: int
    node_b: int
    length_m: float
    region_id: int


@dataclass
class RoadGraph:
    nodes: list[RoadNode]
    edges: list[RoadEdge]
    adjacency: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.adjacency:
            adj: dict[int, list[int]] = {n.id: [] for n in self.nodes}
            for e in self.edges:
                adj[e.node_a].append(e.id)
                adj[e.node_b].append(e.id)
            self.adjacency = {nid: tuple(eids) for nid, eids in adj.items()}

    def node(self, node_id: int) -> RoadNode:
        return self.nodes[node_id]

    def edge(self, edge_id: int) -> RoadEdge:
        return self.edges[edge_id]

    def other_end(self, edge_id: int, node_id: int) -> int:
        e = self.edges[edge_id]
        return e.node_b if node_id == e.node_a else e.node_a

    def is_connected(self) -> bool:
        """Breadth-first reachability; with two-way edges this equals strong
        connectivity of the directed drive graph."""
        if not self.nodes:
            return False
        seen = {self.nodes[0].id}
        queue = deque(seen)
        while queue:
            nid = queue.popleft()
            for eid in self.adjacency.get(nid, ()):
                nxt = self.other_end(eid, nid)
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class BaseStation:
    id: int
    x: float
    y: float
    z: float
    tx_power_dbm: float = 30.0
    antenna_gain_dbi: float = 0.0


@dataclass
class Scene:
    width_m: float
    height_m: float
    buildings: list[Building]
    regions: list[Region]
    roads: RoadGraph
    stations: list[BaseStation]

    def region_of(self, x: float, y: float) -> Region | None:
        """Most specific (smallest-area) region containing the point."""
        best = None
        for r in self.regions:
            if r.contains(x, y) and (best is None or r.area() < best.area()):
                best = r
        return best

    def edge_region(self, edge: RoadEdge) -> Region:
        for r in self.regions:
            if r.id == edge.region_id:
                return r
        raise KeyError(f"edge {edge.id} references unknown region {edge.region_id}")


@dataclass(frozen=True)
class SceneParams:
    """Procedural generation knobs.

    grid_x/grid_y count intersections per side; blocks between them carry at
    most one building each.  The road lattice is centered inside the bounds.
    """

    width_m: float = 500.0
    height_m: float = 500.0
    grid_x: int = 6
    grid_y: int = 6
    block_m: float = 90.0
    building_density: float = 0.9
    building_setback_m: float = 8.0
    station_count: int = 12
    station_height_m: float = 25.0
    tx_power_dbm: float = 30.0
    antenna_gain_dbi: float = 0.0


# Default four-zone layout: a dense core, two belts, and the periphery.
# (name, fractional inset of the region rectangle, spawn weight,
#  route weight, speed limit km/h)
_DEFAULT_REGION_LAYOUT = (
    ("core", 0.35, 0.5, 0.5, 30.0),
    ("inner_belt", 0.20, 0.2, 0.2, 50.0),
    ("outer_belt", 0.075, 0.2, 0.2, 70.0),
    ("periphery", 0.0, 0.1, 0.1, 100.0),
)

# Building height ranges (m) drawn per region name.  The core is built tall
# so streets there sit in radio shadow; the periphery stays low and open.
_HEIGHT_RANGES = {
    "core": (18.0, 45.0),
    "inner_belt": (12.0, 30.0),
    "outer_belt": (8.0, 20.0),
    "periphery": (4.0, 12.0),
}


def _default_regions(width: float, height: float) -> list[Region]:
    regions = []
    for rid, (name, inset, spawn_w, route_w, limit_kmh) in enumerate(_DEFAULT_REGION_LAYOUT):
        regions.append(
            Region(
                id=rid,
                name=name,
                min_x=inset * width,
                min_y=inset * height,
                max_x=(1.0 - inset) * width,
                max_y=(1.0 - inset) * height,
                spawn_weight=spawn_w,
                route_weight=route_w,
                speed_limit_mps=limit_kmh * KMH,
            )
        )
    return regions


def generate_scene(params: SceneParams = SceneParams(), seed: int = 0) -> Scene:
    """Build a Manhattan-grid scene; pure function of (params, seed)."""
    p = params
    span_x = (p.grid_x - 1) * p.block_m
    span_y = (p.grid_y - 1) * p.block_m
    if p.grid_x < 2 or p.grid_y < 2:
        raise SceneError("grid must be at least 2x2 intersections")
    if span_x > p.width_m or span_y > p.height_m:
        raise SceneError(
            f"block size {p.block_m} m does not fit scene bounds "
            f"{p.width_m}x{p.height_m} m with a {p.grid_x}x{p.grid_y} grid"
        )
    if not 0.0 <= p.building_density <= 1.0:
        raise SceneError("building_density must lie in [0, 1]")
    if p.station_count < 1:
        raise SceneError("station_count must be positive")
    if p.station_count > p.grid_x * p.grid_y:
        raise SceneError("more stations than road nodes")

    rng = substream(seed, SCENE)
    margin_x = (p.width_m - span_x) / 2.0
    margin_y = (p.height_m - span_y) / 2.0
    regions = _default_regions(p.width_m, p.height_m)

    # Road lattice.
    nodes = []
    for j in range(p.grid_y):
        for i in range(p.grid_x):
            nodes.append(RoadNode(id=len(nodes), x=margin_x + i * p.block_m, y=margin_y + j * p.block_m))

    def node_at(i: int, j: int) -> RoadNode:
        return nodes[j * p.grid_x + i]

    tmp_scene = Scene(p.width_m, p.height_m, [], regions, RoadGraph(nodes, []), [])
    edges = []
    for j in range(p.grid_y):
        for i in range(p.grid_x):
            a = node_at(i, j)
            for di, dj in ((1, 0), (0, 1)):
                ii, jj = i + di, j + dj
                if ii < p.grid_x and jj < p.grid_y:
                    b = node_at(ii, jj)
                    mid_region = tmp_scene.region_of((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)
                    edges.append(
                        RoadEdge(
                            id=len(edges),
                            node_a=a.id,
                            node_b=b.id,
                            length_m=math.dist((a.x, a.y), (b.x, b.y)),
                            region_id=mid_region.id,
                        )
                    )

    # One candidate building per block, inset from the surrounding streets.
    buildings = []
    for j in range(p.grid_y - 1):
        for i in range(p.grid_x - 1):
            if rng.random() >= p.building_density:
                continue
            x0 = margin_x + i * p.block_m
            y0 = margin_y + j * p.block_m
            # Small blocks can leave no slack beyond the setback; clamp at 0.
            slack = max(0.0, 0.25 * p.block_m - p.building_setback_m)
            inset = p.building_setback_m + rng.uniform(0.0, slack)
            inset_y = p.building_setback_m + rng.uniform(0.0, slack)
            cx, cy = x0 + p.block_m / 2.0, y0 + p.block_m / 2.0
            region = tmp_scene.region_of(cx, cy)
            lo, hi = _HEIGHT_RANGES.get(region.name, (5.0, 15.0))
            buildings.append(
                Building(
                    id=len(buildings),
                    min_x=x0 + inset,
                    min_y=y0 + inset_y,
                    max_x=x0 + p.block_m - inset,
                    max_y=y0 + p.block_m - inset_y,
                    height_m=rng.uniform(lo, hi),
                )
            )

    # Stations: jittered lattice snapped to the nearest free road node, so
    # masts always stand in open street space.
    cols = max(1, math.ceil(math.sqrt(p.station_count)))
    rows = max(1, math.ceil(p.station_count / cols))
    cell_w, cell_h = p.width_m / cols, p.height_m / rows
    stations = []
    used: set[int] = set()
    for k in range(p.station_count):
        r, c = divmod(k, cols)
        tx = (c + 0.5) * cell_w + rng.uniform(-0.15, 0.15) * cell_w
        ty = (r + 0.5) * cell_h + rng.uniform(-0.15, 0.15) * cell_h
        order = sorted(nodes, key=lambda n: (math.dist((n.x, n.y), (tx, ty)), n.id))
        pick = next(n for n in order if n.id not in used)
        used.add(pick.id)
        stations.append(
            BaseStation(
                id=k,
                x=pick.x,
                y=pick.y,
                z=p.station_height_m,
                tx_power_dbm=p.tx_power_dbm,
                antenna_gain_dbi=p.antenna_gain_dbi,
            )
        )

    scene = Scene(
        width_m=p.width_m,
        height_m=p.height_m,
        buildings=buildings,
        regions=regions,
        roads=RoadGraph(nodes, edges),
        stations=stations,
    )
    problems = validate_scene(scene)
    if problems:
        raise SceneError("generated scene failed validation: " + "; ".join(problems))
    return scene


def validate_scene(scene: Scene) -> list[str]:
    """Return a list of human-readable consistency violations (empty = ok)."""
    issues = []
    if scene.width_m <= 0 or scene.height_m <= 0:
        issues.append("bounds: width and height must be positive")

    for b in scene.buildings:
        if not (b.min_x < b.max_x and b.min_y < b.max_y):
            issues.append(f"buildings[{b.id}]: degenerate footprint")
        if b.height_m <= 0:
            issues.append(f"buildings[{b.id}].height: must be positive")
        if b.min_x < 0 or b.min_y < 0 or b.max_x > scene.width_m or b.max_y > scene.height_m:
            issues.append(f"buildings[{b.id}]: footprint outside scene bounds")

    if not scene.regions:
        issues.append("regions: at least one region required")
    region_ids = {r.id for r in scene.regions}
    for r in scene.regions:
        if r.spawn_weight < 0:
            issues.append(f"regions[{r.id}].spawn_weight: must be >= 0")
        if r.route_weight <= 0:
            issues.append(f"regions[{r.id}].route_weight: must be > 0")
        if not (MIN_SPEED_LIMIT_MPS - 1e-9 <= r.speed_limit_mps <= MAX_SPEED_LIMIT_MPS + 1e-9):
            issues.append(
                f"regions[{r.id}].speed_limit: {r.speed_limit_mps:.3f} m/s outside "
                f"[{MIN_SPEED_LIMIT_MPS:.3f}, {MAX_SPEED_LIMIT_MPS:.3f}]"
            )
    if scene.regions and sum(r.spawn_weight for r in scene.regions) <= 0:
        issues.append("regions: spawn weights sum to zero")

    # Region rectangles must cover the bounds (checked on a coarse lattice).
    for fx in range(11):
        for fy in range(11):
            x, y = fx / 10.0 * scene.width_m, fy / 10.0 * scene.height_m
            if not any(r.contains(x, y) for r in scene.regions):
                issues.append(f"regions: point ({x:.1f}, {y:.1f}) not covered by any region")
                break
        else:
            continue
        break

    node_ids = {n.id for n in scene.roads.nodes}
    if len(node_ids) != len(scene.roads.nodes):
        issues.append("roads.nodes: duplicate node ids")
    for n in scene.roads.nodes:
        for b in scene.buildings:
            if b.contains(n.x, n.y):
                issues.append(f"roads.nodes[{n.id}]: lies inside buildings[{b.id}]")
    for e in scene.roads.edges:
        if e.node_a not in node_ids or e.node_b not in node_ids:
            issues.append(f"roads.edges[{e.id}]: endpoint references unknown node")
            continue
        a, b = scene.roads.node(e.node_a), scene.roads.node(e.node_b)
        d = math.dist((a.x, a.y), (b.x, b.y))
        if abs(d - e.length_m) > _LENGTH_TOL_M:
            issues.append(
                f"roads.edges[{e.id}].length: {e.length_m!r} differs from node distance {d!r}"
            )
        if e.region_id not in region_ids:
            issues.append(f"roads.edges[{e.id}].region: unknown region {e.region_id}")
    if scene.roads.nodes and not scene.roads.is_connected():
        issues.append("roads: graph is not connected")

    for s in scene.stations:
        if not (0 <= s.x <= scene.width_m and 0 <= s.y <= scene.height_m):
            issues.append(f"stations[{s.id}]: outside scene bounds")
        if s.z <= 0:
            issues.append(f"stations[{s.id}].z: must be positive")
        for b in scene.buildings:
            if b.contains(s.x, s.y) and s.z < b.height_m:
                issues.append(f"stations[{s.id}]: inside buildings[{b.id}] at antenna height")
    return issues


# ---------- JSON serialization ----------

def scene_to_dict(scene: Scene) -> dict:
    return {
        "bounds": {"width_m": scene.width_m, "height_m": scene.height_m},
        "buildings": [
            {
                "id": b.id,
                "min_x": b.min_x,
                "min_y": b.min_y,
                "max_x": b.max_x,
                "max_y": b.max_y,
                "height_m": b.height_m,
            }
            for b in scene.buildings
        ],
        "regions": [
            {
                "id": r.id,
                "name": r.name,
                "min_x": r.min_x,
                "min_y": r.min_y,
                "max_x": r.max_x,
                "max_y": r.max_y,
                "spawn_weight": r.spawn_weight,
                "route_weight": r.route_weight,
                "speed_limit_mps": r.speed_limit_mps,
            }
            for r in scene.regions
        ],
        "roads": {
            "nodes": [{"id": n.id, "x": n.x, "y": n.y} for n in scene.roads.nodes],
            "edges": [
                {
                    "id": e.id,
                    "node_a": e.node_a,
                    "node_b": e.node_b,
                    "length_m": e.length_m,
                    "region_id": e.region_id,
                }
                for e in scene.roads.edges
            ],
        },
        "stations": [
            {
                "id": s.id,
                "x": s.x,
                "y": s.y,
                "z": s.z,
                "tx_power_dbm": s.tx_power_dbm,
                "antenna_gain_dbi": s.antenna_gain_dbi,
            }
            for s in scene.stations
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    try:
        bounds = data["bounds"]
        scene = Scene(
            width_m=float(bounds["width_m"]),
            height_m=float(bounds["height_m"]),
            buildings=[
                Building(
                    id=int(b["id"]),
                    min_x=float(b["min_x"]),
                    min_y=float(b["min_y"]),
                    max_x=float(b["max_x"]),
                    max_y=float(b["max_y"]),
                    height_m=float(b["height_m"]),
                )
                for b in data.get("buildings", [])
            ],
            regions=[
                Region(
                    id=int(r["id"]),
                    name=str(r.get("name", f"region_{r['id']}")),
                    min_x=float(r["min_x"]),
                    min_y=float(r["min_y"]),
                    max_x=float(r["max_x"]),
                    max_y=float(r["max_y"]),
                    spawn_weight=float(r["spawn_weight"]),
                    route_weight=float(r["route_weight"]),
                    speed_limit_mps=float(r["speed_limit_mps"]),
                )
                for r in data["regions"]
            ],
            roads=RoadGraph(
                nodes=[
                    RoadNode(id=int(n["id"]), x=float(n["x"]), y=float(n["y"]))
                    for n in data["roads"]["nodes"]
                ],
                edges=[
                    RoadEdge(
                        id=int(e["id"]),
                        node_a=int(e["node_a"]),
                        node_b=int(e["node_b"]),
                        length_m=float(e["length_m"]),
                        region_id=int(e["region_id"]),
                    )
                    for e in data["roads"]["edges"]
                ],
            ),
            stations=[
                BaseStation(
                    id=int(s["id"]),
                    x=float(s["x"]),
                    y=float(s["y"]),
                    z=float(s["z"]),
                    tx_power_dbm=float(s.get("tx_power_dbm", 30.0)),
                    antenna_gain_dbi=float(s.get("antenna_gain_dbi", 0.0)),
                )
                for s in data["stations"]
            ],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneError(f"malformed scene document: {exc}") from exc
    problems = validate_scene(scene)
    if problems:
        raise SceneError("scene failed validation: " + "; ".join(problems))
    return scene


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")


def load_scene(path) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneError(f"invalid JSON in scene file {path}: {exc}") from exc
    return scene_from_dict(data)
