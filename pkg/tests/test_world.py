from __future__ import annotations

import json
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import empty_room, flood_fill
from dualclean.errors import DegenerateScene, ParseError, UnknownScene, ValidationError
from dualclean.scenes import CATEGORY_TABLE, builtin_scene, builtin_ids
from dualclean.world import (GraspTarget, RobotSpec, SceneSpec, StaticObstacle, SweepTarget, TaskZone,
                             check_pose, load_scene, min_corridor_width, navigable_grid, save_scene,
                             scene_from_dict, scene_to_dict, validate_scene)


def center_free(scene: SceneSpec, r: float) -> np.ndarray:
    """Cell-center test against axis-aligned obstacle rectangles."""
    x0, y0, x1, y1 = scene.bounds
    nx, ny = int(np.ceil((x1 - x0) / r - 1e-9)), int(np.ceil((y1 - y0) / r - 1e-9))
    xs = x0 + (np.arange(nx) + 0.5) * r
    ys = y0 + (np.arange(ny) + 0.5) * r
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    free = (X <= x1) & (Y <= y1)
    for o in scene.obstacles:
        a, b, c, d = o.rect
        free &= ~((X >= a) & (X <= c) & (Y >= b) & (Y <= d))
    return free


# --- loading ----------------------------------------------------------------------

def test_load_s1_file(tmp_path):
    path = tmp_path / "s1.json"
    save_scene(builtin_scene(1), path)
    s = load_scene(path)
    assert s.area == pytest.approx(45.2)
    assert len(s.obstacles) == 5
    assert len(s.sweep_targets) == 5 and len(s.grasp_targets) == 5


def test_spawn_inside_obstacle_rejected(tmp_path):
    d = scene_to_dict(empty_room(5, 5, spawn=(2.0, 2.0, 0.0),
                                 obstacles=(StaticObstacle.from_rect("box", 1.5, 1.5, 2.5, 2.5),)))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ValidationError, match="spawn collides") as exc:
        load_scene(path)
    assert exc.value.field == "spawns[0]"


def test_minimal_scene_valid():
    s = validate_scene(empty_room(4, 4, sweep_targets=(SweepTarget("s0", (3.0, 3.0)),)))
    assert len(s.sweep_targets) == 1


def test_malformed_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_scene(p)
    with pytest.raises(ParseError):
        load_scene(tmp_path / "missing.json")
    with pytest.raises(ParseError, match="missing keys"):
        scene_from_dict({"bounds": [0, 0, 1, 1]})


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["sweep_targets"].append({"id": "s0", "position": [20, 20]}), "sweep_targets[0].position"),
    (lambda d: d["grasp_targets"].append({"id": "g0", "position": [2, 2], "mass": 5.0}), "grasp_targets[0].mass"),
    (lambda d: d["zones"].append({"id": "z", "kind": "lava", "rect": [0, 0, 1, 1]}), "zones[0].kind"),
    (lambda d: d.update(complexity=9), "complexity_score"),
    (lambda d: d["obstacles"].append({"id": "o", "rect": [1, 1, 1, 2]}), "obstacles[0]"),
])
def test_validation_names_field(mutate, field):
    d = scene_to_dict(empty_room(5, 5))
    mutate(d)
    with pytest.raises(ValidationError) as exc:
        scene_from_dict(d)
    assert exc.value.field == field


def test_robot_spec_defaults():
    r = RobotSpec()
    assert (r.length, r.width) == (0.41, 0.47)
    assert (r.max_lin_vel, r.max_ang_vel) == (0.5, 1.0)
    assert (r.sweep_width, r.brush_diameter, r.arm_reach) == (0.35, 0.15, 0.855)
    assert r.sensor_range == 10.0
    with pytest.raises(ValidationError):
        RobotSpec(sweep_width=2.0)
    with pytest.raises(ValidationError):
        RobotSpec(max_lin_vel=0.0)


# --- built-in library ------------------------------------------------------------

def test_builtin_examples():
    s1 = builtin_scene(1, 0)
    assert s1.area == pytest.approx(45.2, rel=0.10)
    assert min_corridor_width(s1) == pytest.approx(2.5, rel=0.10)
    assert s1.complexity_score == 1
    s5 = builtin_scene(5, 0)
    assert (len(s5.sweep_targets), len(s5.grasp_targets), s5.complexity_score) == (30, 20, 5)
    with pytest.raises(UnknownScene):
        builtin_scene(6, 0)
    with pytest.raises(UnknownScene):
        builtin_scene(1, 3)
    assert builtin_ids() == [f"builtin:{k}" for k in range(1, 6)]


@pytest.mark.parametrize("cat", range(1, 6))
def test_builtin_matches_category_row(cat):
    area, n_obs, n_s, n_g, corridor, complexity = CATEGORY_TABLE[cat]
    s = builtin_scene(cat)
    assert s.area == pytest.approx(area, rel=0.10)
    assert len(s.obstacles) == pytest.approx(n_obs, rel=0.10)
    assert len(s.sweep_targets) == pytest.approx(n_s, rel=0.10)
    assert len(s.grasp_targets) == pytest.approx(n_g, rel=0.10)
    assert min_corridor_width(s) == pytest.approx(corridor, rel=0.10)
    assert s.complexity_score == complexity
    validate_scene(s)


# --- navigable grid ------------------------------------------------------------------

def test_empty_room_grid():
    g = navigable_grid(empty_room(10, 10), 0.1)
    assert g.shape == (100, 100)
    assert g.navigable.sum() == 10_000
    assert g.a_total == pytest.approx(100.0)


def test_fully_blocked_room():
    s = empty_room(5, 5, obstacles=(StaticObstacle.from_rect("all", 0, 0, 5, 5),))
    with pytest.raises(DegenerateScene):
        navigable_grid(s, 0.1)


def test_wall_split_matches_flood_fill():
    s = empty_room(10, 10, obstacles=(StaticObstacle.from_rect("wall", 4.9, 0.0, 5.1, 10.0),))
    g = navigable_grid(s, 0.1)
    oracle = flood_fill(center_free(s, 0.1), (10, 10))
    assert np.array_equal(g.navigable, oracle)
    assert g.a_total == pytest.approx(oracle.sum() * 0.01)
    assert g.navigable[:49].all() and not g.navigable[49:].any()


@pytest.mark.parametrize("cat", [1, 2, 3, 5])
def test_grid_matches_flood_fill_on_builtins(cat):
    s = builtin_scene(cat)
    g = navigable_grid(s, 0.1)
    seed = g.cell_of(*s.spawns[0][:2])
    assert np.array_equal(g.navigable, flood_fill(center_free(s, 0.1), seed))


@pytest.mark.parametrize("cat", range(1, 6))
def test_discretisation_bound(cat):
    s = builtin_scene(cat)
    d = 0.1
    perimeter = 2 * (s.bounds[2] - s.bounds[0] + s.bounds[3] - s.bounds[1])
    for o in s.obstacles:
        a, b, c, e = o.rect
        perimeter += 2 * (c - a + e - b)
    diff = abs(navigable_grid(s, d).a_total - navigable_grid(s, d / 2).a_total)
    assert diff <= 4 * perimeter * d


# obstacles stay clear of the spawn corner so the flood-fill seed never moves
rects = st.tuples(st.floats(1, 7), st.floats(0, 7), st.floats(0.2, 3), st.floats(0.2, 3))


@settings(max_examples=40, deadline=None)
@given(st.lists(rects, min_size=0, max_size=5), rects)
def test_a_total_bounded_and_monotone(obstacles, extra):
    def obs(rs):
        return tuple(StaticObstacle.from_rect(f"o{k}", x, y, min(8.0, x + w), min(8.0, y + h))
                     for k, (x, y, w, h) in enumerate(rs))
    base = empty_room(8, 8, spawn=(0.1, 0.1, 0.0), obstacles=obs(obstacles))
    more = empty_room(8, 8, spawn=(0.1, 0.1, 0.0), obstacles=obs(obstacles + [extra]))
    try:
        a0 = navigable_grid(base, 0.1).a_total
    except DegenerateScene:
        return
    assert a0 <= base.area + 1e-9
    try:
        a1 = navigable_grid(more, 0.1).a_total
    except DegenerateScene:
        a1 = 0.0
    assert a1 <= a0 + 1e-9


# --- serialisation ---------------------------------------------------------------------

@pytest.mark.parametrize("cat", range(1, 6))
def test_round_trip(cat, tmp_path):
    s = builtin_scene(cat)
    p = tmp_path / "s.json"
    save_scene(s, p)
    t = load_scene(p)
    assert scene_to_dict(t) == scene_to_dict(s)
    save_scene(t, tmp_path / "t.json")
    assert (tmp_path / "t.json").read_text() == p.read_text()


def test_round_trip_polygon_and_zones():
    tri = StaticObstacle("tri", ((1.0, 1.0), (2.0, 1.0), (1.5, 2.0)), "furniture")
    s = empty_room(6, 4, spawn=(4.0, 3.0, 0.5), obstacles=(tri,),
                   grasp_targets=(GraspTarget("g", (1.5, 1.3), elevation_tag="surface"),),
                   zones=(TaskZone("z", "restricted", (4.5, 0.2, 5.5, 1.0)),))
    d = scene_to_dict(validate_scene(s))
    assert scene_to_dict(scene_from_dict(json.loads(json.dumps(d)))) == d


def test_surface_target_must_rest_on_obstacle():
    s = empty_room(6, 4, grasp_targets=(GraspTarget("g", (3.0, 3.0), elevation_tag="surface"),))
    with pytest.raises(ValidationError, match="surface"):
        validate_scene(s)


def test_check_pose():
    s = empty_room(10, 10)
    assert not check_pose(s, (5.0, 5.0, 0.3))
    assert check_pose(s, (0.2, 5.0, 0.0))
