"""Vehicular mobility on the scene road graph.

Vehicles spawn at region-weighted road nodes, follow a bounded weighted
random walk over street segments, keep a per-edge constant speed clamped to
the edge region's limit, and despawn when the route is exhausted.  All
randomness comes from caller-supplied generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import RoadEdge, Scene

DEFAULT_ROUTE_EDGES = 40
DEFAULT_SPEED_JITTER = 0.1


@dataclass
class Vehicle:
    """One active vehicle; mutated in place by step_vehicle."""

    id: int
    route: list[int]                 # edge ids, traversal order
    route_dirs: list[bool]           # True = node_a -> node_b
    cursor: int                      # index into route
    offset_m: float                  # distance along the current edge
    speed_mps: float
    speed_factor: float              # personal jitter, fixed at spawn
    spawn_time_s: float
    x: float = 0.0
    y: float = 0.0
    heading_deg: float = 0.0

    def current_edge_id(self) -> int:
        return self.route[self.cursor]


@dataclass(frozen=True)
class SpawnModel:
    target_population: int
    route_edges: int = DEFAULT_ROUTE_EDGES
    speed_jitter: float = DEFAULT_SPEED_JITTER


def _edge_endpoints(scene: Scene, edge: RoadEdge, forward: bool):
    a = scene.roads.node(edge.node_a)
    b = scene.roads.node(edge.node_b)
    return (a, b) if forward else (b, a)


def _node_region_weights(scene: Scene):
    """Group road nodes by their most specific region."""
    groups: dict[int, list[int]] = {}
    weights: dict[int, float] = {}
    for n in scene.roads.nodes:
        r = scene.region_of(n.x, n.y)
        if r is None or r.spawn_weight <= 0:
            continue
        groups.setdefault(r.id, []).append(n.id)
        weights[r.id] = r.spawn_weight
    return groups, weights


def choose_spawn_node(scene: Scene, rng: np.random.Generator) -> int:
    """Pick a region by spawn weight, then a node uniformly inside it."""
    groups, weights = _node_region_weights(scene)
    if not groups:
        raise ValueError("no spawnable road nodes: all region spawn weights are zero")
    region_ids = sorted(groups)
    w = np.array([weights[r] for r in region_ids], dtype=float)
    region = region_ids[int(rng.choice(len(region_ids), p=w / w.sum()))]
    nodes = groups[region]
    return nodes[int(rng.integers(len(nodes)))]


def plan_route(
    scene: Scene,
    start_node: int,
    rng: np.random.Generator,
    max_edges: int = DEFAULT_ROUTE_EDGES,
) -> tuple[list[int], list[bool]]:
    """Weighted random walk from start_node, at most max_edges edges long.

    Edge choice is proportional to the region route_weight; the edge just
    traversed is excluded unless the node is a dead end.
    """
    if max_edges < 1:
        raise ValueError("route must contain at least one edge")
    route: list[int] = []
    dirs: list[bool] = []
    node = start_node
    prev_edge = -1
    for _ in range(max_edges):
        options = [e for e in scene.roads.adjacency.get(node, ()) if e != prev_edge]
        if not options:
            options = list(scene.roads.adjacency.get(node, ()))
            if not options:
                break  # isolated node
        w = np.array(
            [scene.edge_region(scene.roads.edge(e)).route_weight for e in options], dtype=float
        )
        pick = options[int(rng.choice(len(options), p=w / w.sum()))]
        edge = scene.roads.edge(pick)
        dirs.append(edge.node_a == node)
        route.append(pick)
        node = scene.roads.other_end(pick, node)
        prev_edge = pick
    return route, dirs


def _edge_speed(scene: Scene, edge: RoadEdge, factor: float) -> float:
    """Per-edge speed: region limit scaled by the vehicle's jitter factor,
    never above the limit itself."""
    limit = scene.edge_region(edge).speed_limit_mps
    return min(limit * factor, limit)


def _place(scene: Scene, v: Vehicle) -> None:
    edge = scene.roads.edge(v.route[v.cursor])
    a, b = _edge_endpoints(scene, edge, v.route_dirs[v.cursor])
    frac = v.offset_m / edge.length_m
    v.x = a.x + frac * (b.x - a.x)
    v.y = a.y + frac * (b.y - a.y)
    v.heading_deg = math.degrees(math.atan2(b.y - a.y, b.x - a.x)) % 360.0


def spawn_vehicle(
    scene: Scene,
    vehicle_id: int,
    now_s: float,
    rng: np.random.Generator,
    model: SpawnModel,
) -> Vehicle:
    start = choose_spawn_node(scene, rng)
    route, dirs = plan_route(scene, start, rng, model.route_edges)
    factor = 1.0 + rng.uniform(-model.speed_jitter, model.speed_jitter)
    v = Vehicle(
        id=vehicle_id,
        route=route,
        route_dirs=dirs,
        cursor=0,
        offset_m=0.0,
        speed_mps=0.0,
        speed_factor=factor,
        spawn_time_s=now_s,
    )
    v.speed_mps = _edge_speed(scene, scene.roads.edge(route[0]), factor)
    _place(scene, v)
    return v


def spawn_vehicles(
    scene: Scene,
    model: SpawnModel,
    current_count: int,
    next_id: int,
    now_s: float,
    rng: np.random.Generator,
) -> list[Vehicle]:
    """Replenish the population up to model.target_population."""
    return [
        spawn_vehicle(scene, next_id + k, now_s, rng, model)
        for k in range(max(0, model.target_population - current_count))
    ]


def step_vehicle(scene: Scene, v: Vehicle, dt_s: float) -> Vehicle | None:
    """Advance dt seconds along the route; None signals despawn.

    Leftover travel distance carries across edge boundaries, and speed is
    re-evaluated per edge from the vehicle's fixed jitter factor.
    """
    travel = v.speed_mps * dt_s
    edge = scene.roads.edge(v.route[v.cursor])
    while v.offset_m + travel > edge.length_m:
        travel -= edge.length_m - v.offset_m
        v.cursor += 1
        v.offset_m = 0.0
        if v.cursor >= len(v.route):
            return None
        edge = scene.roads.edge(v.route[v.cursor])
        new_speed = _edge_speed(scene, edge, v.speed_factor)
        if new_speed != v.speed_mps:
            # Constant speed per edge: the remaining travel time of this
            # tick continues at the new edge's speed.
            travel *= new_speed / v.speed_mps if v.speed_mps > 0 else 0.0
            v.speed_mps = new_speed
    v.offset_m += travel
    _place(scene, v)
    return v
