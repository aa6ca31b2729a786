"""Built-in scene library: one hand-authored layout per complexity category.

Geometry is authored here; target positions are drawn once with a fixed
per-category seed from the cells the robot can service, so every built-in
scene is reproducible and fully solvable.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import UnknownScene
from .procgen import place_scene_targets
from .world import DynamicObstacle, SceneSpec, StaticObstacle, TaskZone, validate_scene

# category -> (area m^2, obstacles, sweep targets, grasp targets, min corridor m, complexity)
CATEGORY_TABLE = {
    1: (45.2, 5, 5, 5, 2.5, 1),
    2: (52.8, 12, 10, 10, 1.8, 3),
    3: (38.6, 18, 15, 10, 1.2, 4),
    4: (48.3, 10, 20, 15, 2.0, 5),   # plus 3 movers
    5: (67.5, 22, 30, 20, 1.5, 5),
}
CATEGORY_NAMES = {1: "sparse", 2: "cluttered", 3: "narrow", 4: "dynamic", 5: "multi-zone"}
PI = math.pi


def _rects(prefix: str, rects, material: str = "furniture"):
    return [StaticObstacle.from_rect(f"{prefix}{k}", *r, material) for k, r in enumerate(rects)]


def _sparse() -> SceneSpec:
    obs = _rects("o", [(0.0, 0.0, 1.5, 0.8), (4.0, 0.0, 5.0, 0.6), (7.2, 2.55, 8.0, 3.15),
                       (0.0, 3.3, 0.6, 5.65), (3.2, 5.0, 4.6, 5.65)])
    return SceneSpec("builtin-1-sparse", (0.0, 0.0, 8.0, 5.65), tuple(obs),
                     zones=(TaskZone("collect0", "collection", (2.8, 2.3, 3.8, 3.3)),),
                     spawns=((2.05, 2.05, 0.0), (5.95, 3.95, PI), (2.75, 4.45, -PI / 2)),
                     complexity_score=1)


def _cluttered() -> SceneSpec:
    xs = (0.0, 2.65, 5.3, 7.95)
    ys = (0.0, 2.6, 5.2)
    rects = [(x, y, x + 0.85, y + 0.8) for y in ys for x in xs]
    return SceneSpec("builtin-2-cluttered", (0.0, 0.0, 8.8, 6.0), tuple(_rects("o", rects)),
                     zones=(TaskZone("collect0", "collection", (3.9, 1.2, 4.9, 2.2)),),
                     spawns=((1.75, 1.75, 0.0), (7.05, 4.25, PI), (4.45, 1.75, PI / 2)),
                     complexity_score=3)


def _narrow() -> SceneSpec:
    widths = (1.4, 1.4, 1.4, 1.2, 1.4, 1.4, 1.4)
    shelves = []
    x = 0.0
    for w in widths:
        shelves.append((round(x, 9), 0.0, round(x + w, 9), 0.4))
        shelves.append((round(x, 9), 3.6, round(x + w, 9), 4.0))
        x += w
    islands = [(x0, 1.6, x0 + 0.9, 2.4) for x0 in (1.2, 3.3, 5.4, 7.5)]
    obs = _rects("shelf", shelves, "shelf") + _rects("island", islands)
    return SceneSpec("builtin-3-narrow", (0.0, 0.0, 9.6, 4.0), tuple(obs),
                     zones=(TaskZone("collect0", "collection", (0.15, 1.5, 1.05, 2.5)),),
                     spawns=((0.65, 1.05, 0.0), (8.95, 2.95, PI), (4.75, 2.05, PI / 2)),
                     complexity_score=4)


def _dynamic() -> SceneSpec:
    xs = (0.0, 2.5, 5.0, 7.5)
    rows = ((0.0, 0.7), (2.7, 3.3), (5.3, 6.0))
    rects = []
    for r, (y0, y1) in enumerate(rows):
        for c, x0 in enumerate(xs):
            if r == 1 and c in (1, 2):
                continue
            rects.append((x0, y0, x0 + 0.5, y1))
    movers = (
        DynamicObstacle("m0", (0.4, 0.4), ((1.0, 1.7), (7.0, 1.7)), 0.3),
        DynamicObstacle("m1", (0.4, 0.4), ((7.0, 4.3), (1.0, 4.3)), 0.3),
        DynamicObstacle("m2", (0.4, 0.4), ((1.5, 1.0), (1.5, 5.0)), 0.3),
    )
    return SceneSpec("builtin-4-dynamic", (0.0, 0.0, 8.0, 6.0), tuple(_rects("o", rects)), movers=movers,
                     zones=(TaskZone("collect0", "collection", (3.5, 2.5, 4.5, 3.5)),),
                     spawns=((3.95, 3.05, PI / 2), (6.25, 3.05, 0.0), (3.95, 5.55, 0.0)),
                     complexity_score=5)


def _multi_zone() -> SceneSpec:
    walls = _rects("wall", [(4.4, 0.0, 4.6, 3.0), (4.4, 4.5, 4.6, 7.5)], "wall")
    rows = (0.0, 2.25, 4.5, 6.75)
    rects = []
    for x0 in (0.0, 2.95, 4.6, 7.55):
        for k, y0 in enumerate(rows):
            if k == 0:
                # the bottom blocks are built from two touching halves
                rects.append((x0, y0, x0 + 0.725, y0 + 0.75))
                rects.append((x0 + 0.725, y0, x0 + 1.45, y0 + 0.75))
            else:
                rects.append((x0, y0, x0 + 1.45, y0 + 0.75))
    obs = walls + _rects("o", [tuple(round(v, 9) for v in r) for r in rects])
    zones = (TaskZone("collect0", "collection", (1.75, 3.25, 2.75, 4.25)),
             TaskZone("collect1", "collection", (6.3, 3.25, 7.3, 4.25)))
    return SceneSpec("builtin-5-multizone", (0.0, 0.0, 9.0, 7.5), tuple(obs), zones=zones,
                     spawns=((2.25, 3.75, 0.0), (6.85, 3.75, PI), (2.25, 1.45, PI / 2)),
                     complexity_score=5)


_LAYOUTS = {1: _sparse, 2: _cluttered, 3: _narrow, 4: _dynamic, 5: _multi_zone}


@lru_cache(maxsize=None)
def builtin_scene(category: int, variant: int = 0) -> SceneSpec:
    """Hand-authored representative scene of a complexity category (1-5)."""
    if category not in _LAYOUTS or variant != 0:
        raise UnknownScene(f"no built-in scene ({category}, {variant})")
    base = _LAYOUTS[category]()
    _, _, n_sweep, n_grasp, _, _ = CATEGORY_TABLE[category]
    rng = np.random.default_rng(1000 + category)
    scene = place_scene_targets(base, n_sweep, n_grasp, rng, "random", min_clearance=0.25)
    return validate_scene(scene)


def builtin_ids() -> list[str]:
    return [f"builtin:{c}" for c in sorted(_LAYOUTS)]
