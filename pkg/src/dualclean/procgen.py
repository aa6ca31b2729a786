"""Procedural scene generation.

Pipeline per attempt: base floor geometry for the layout, a reserved corridor
tree that obstacles may not occupy, rectangular furniture grown around
Poisson-disk seeds until the covered fraction reaches the requested density,
connectivity checks on every insertion, then target placement restricted to
cells the robot can actually service.  Everything is a pure function of
:class:`GenParams`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse.csgraph import minimum_spanning_tree

from .agents.planning import (grasp_accessible, grasp_accessible_mask, planning_grid, sweep_accessible,
                              sweep_accessible_mask)
from .errors import GenerationFailure, InsufficientSpace, ValidationError
from .geometry import AABB, Point
from .world import (DEFAULT_RESOLUTION, GRASP_MASS_RANGE, SWEEP_MASS_RANGE, GraspTarget, OccupancyGrid,
                    SceneSpec, StaticObstacle, SweepTarget, TaskZone, grid_shape, validate_scene)

LAYOUTS = ("rectangular", "l_shaped", "multi_room")
LAYOUT_ALIASES = {"rect": "rectangular", "rectangular": "rectangular", "l_shaped": "l_shaped",
                  "l_shape": "l_shaped", "l": "l_shaped", "multi_room": "multi_room", "multi": "multi_room"}
PATTERNS = ("random", "clustered", "linear")
DENSITY_RANGE = (0.10, 0.80)
DENSITY_TOLERANCE = 0.05
MAX_RETRIES = 50
CORRIDOR_WIDTH = 0.9
WALL_THICKNESS = 0.2
DOORWAY = 0.9
CLUSTER_RADIUS = 0.5
CLUSTER_SIZE = 5


@dataclass(frozen=True)
class GenParams:
    layout: str = "rectangular"
    density: float = 0.15
    pattern: str = "random"
    n_sweep: int = 10
    n_grasp: int = 5
    seed: int = 0
    size: tuple[float, float] | None = None
    resolution: float = DEFAULT_RESOLUTION
    time_budget_s: float = 300.0
    n_spawns: int = 3

    def __post_init__(self):
        layout = LAYOUT_ALIASES.get(str(self.layout).lower())
        if layout is None:
            raise ValidationError("layout", f"must be one of {LAYOUTS}")
        object.__setattr__(self, "layout", layout)
        if not (DENSITY_RANGE[0] - 1e-12 <= self.density <= DENSITY_RANGE[1] + 1e-12):
            raise ValidationError("density", f"must lie in [{DENSITY_RANGE[0]}, {DENSITY_RANGE[1]}]")
        if self.pattern not in PATTERNS:
            raise ValidationError("pattern", f"must be one of {PATTERNS}")
        for name in ("n_sweep", "n_grasp"):
            if getattr(self, name) < 0:
                raise ValidationError(name, "must be >= 0")
        if self.size is not None:
            w, h = self.size
            if not (w > 0 and h > 0):
                raise ValidationError("size", "must be > 0")
            if self.layout == "rectangular" and not (1.0 - 1e-9 <= max(w, h) / min(w, h) <= 3.0 + 1e-9):
                raise ValidationError("size", "aspect ratio must lie in [1, 3]")
        if not self.n_spawns >= 1:
            raise ValidationError("n_spawns", "must be >= 1")


# --- samplers -----------------------------------------------------------------

def poisson_disk_sample(region: AABB, min_dist: float, seed, k: int = 30) -> list[Point]:
    """Bridson dart throwing: pairwise distances >= ``min_dist``, ``k`` darts per active point."""
    if not min_dist > 0:
        raise ValueError("min_dist must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x0, y0, x1, y1 = region
    w, h = x1 - x0, y1 - y0
    cell = min_dist / math.sqrt(2.0)
    gw, gh = max(1, int(math.ceil(w / cell))), max(1, int(math.ceil(h / cell)))
    grid = -np.ones((gw, gh), dtype=np.int64)
    pts: list[Point] = []

    def add(p: Point) -> None:
        gi = min(gw - 1, int((p[0] - x0) / cell))
        gj = min(gh - 1, int((p[1] - y0) / cell))
        grid[gi, gj] = len(pts)
        pts.append(p)

    add((x0 + rng.random() * w, y0 + rng.random() * h))
    active = [0]
    while active:
        a = int(rng.integers(len(active)))
        base = pts[active[a]]
        rad = min_dist * (1.0 + rng.random(k))
        ang = 2.0 * math.pi * rng.random(k)
        cand = np.column_stack([base[0] + rad * np.cos(ang), base[1] + rad * np.sin(ang)])
        ok = (cand[:, 0] >= x0) & (cand[:, 0] <= x1) & (cand[:, 1] >= y0) & (cand[:, 1] <= y1)
        # every candidate lies within 2 min_dist of base, so neighbours sit within 6 cells
        gi = min(gw - 1, int((base[0] - x0) / cell))
        gj = min(gh - 1, int((base[1] - y0) / cell))
        near = grid[max(0, gi - 5):gi + 6, max(0, gj - 5):gj + 6]
        near = near[near >= 0]
        if len(near):
            P = np.asarray(pts)[near]
            d2 = ((cand[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
            ok &= (d2 >= min_dist * min_dist).all(axis=1)
        hit = np.flatnonzero(ok)
        if len(hit):
            add((float(cand[hit[0], 0]), float(cand[hit[0], 1])))
            active.append(len(pts) - 1)
        else:
            active.pop(a)
    return pts


def verify_connectivity(grid, spawn_cell: tuple[int, int]) -> bool:
    """True iff every free cell is 4-connected to ``spawn_cell``."""
    free = grid.free if isinstance(grid, OccupancyGrid) else (
        np.asarray(grid, dtype=bool) if isinstance(grid, np.ndarray) else np.asarray(grid.navigable, dtype=bool))
    ix, iy = spawn_cell
    if not (0 <= ix < free.shape[0] and 0 <= iy < free.shape[1]) or not free[ix, iy]:
        return False
    labels, _ = ndimage.label(free)
    return bool(np.all(labels[free] == labels[ix, iy]))


def place_targets(pattern: str, n: int, free_cells, seed, resolution: float = DEFAULT_RESOLUTION) -> list[Point]:
    """Pick ``n`` positions among ``free_cells`` (an (N, 2) array of cell centers)."""
    pts = np.asarray(free_cells, dtype=float).reshape(-1, 2)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > len(pts):
        raise InsufficientSpace(f"need {n} cells, only {len(pts)} free")
    if n == 0:
        return []
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if pattern == "random":
        idx = rng.choice(len(pts), size=n, replace=False)
        return [tuple(map(float, pts[i])) for i in idx]
    if pattern == "clustered":
        return _clustered(pts, n, rng)
    if pattern == "linear":
        return _linear(pts, n, rng, resolution)
    raise ValueError(f"unknown pattern {pattern!r}")


def _clustered(pts: np.ndarray, n: int, rng: np.random.Generator) -> list[Point]:
    k = math.ceil(n / CLUSTER_SIZE)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    used = np.zeros(len(pts), dtype=bool)
    out: list[Point] = []
    for size in sizes:
        for _ in range(200):
            c = int(rng.integers(len(pts)))
            if used[c]:
                continue
            d = np.hypot(pts[:, 0] - pts[c, 0], pts[:, 1] - pts[c, 1])
            cand = np.flatnonzero((d <= CLUSTER_RADIUS + 1e-9) & ~used)
            if len(cand) >= size:
                pick = rng.choice(cand, size=size, replace=False)
                used[pick] = True
                out.extend(tuple(map(float, pts[i])) for i in pick)
                break
        else:
            raise InsufficientSpace(f"cannot fit a cluster of {size} within {CLUSTER_RADIUS} m")
    return out


def _linear(pts: np.ndarray, n: int, rng: np.random.Generator, r: float) -> list[Point]:
    """Cells spaced along straight grid lines (axis-aligned or diagonal)."""
    keys = {(int(round(x / r * 2)), int(round(y / r * 2))): i for i, (x, y) in enumerate(pts)}
    dirs = ((2, 0), (0, 2), (2, 2), (2, -2))

    def run_through(i: int, d) -> list[int]:
        x, y = (int(round(pts[i, 0] / r * 2)), int(round(pts[i, 1] / r * 2)))
        back = []
        a, b = x - d[0], y - d[1]
        while (a, b) in keys:
            back.append(keys[(a, b)])
            a, b = a - d[0], b - d[1]
        fwd = [i]
        a, b = x + d[0], y + d[1]
        while (a, b) in keys:
            fwd.append(keys[(a, b)])
            a, b = a + d[0], b + d[1]
        return back[::-1] + fwd

    best: list[int] = []
    for _ in range(200):
        i = int(rng.integers(len(pts)))
        d = dirs[int(rng.integers(len(dirs)))]
        line = run_through(i, d)
        if len(line) >= n:
            sel = np.round(np.linspace(0, len(line) - 1, n)).astype(int)
            return [tuple(map(float, pts[line[s]])) for s in sel]
        if len(line) > len(best):
            best = line
    # no single line is long enough: fill several disjoint lines
    used: set[int] = set()
    out: list[Point] = []
    for _ in range(2000):
        if len(out) == n:
            return out
        i = int(rng.integers(len(pts)))
        if i in used:
            continue
        d = dirs[int(rng.integers(len(dirs)))]
        line = [j for j in run_through(i, d) if j not in used]
        take = line[: n - len(out)]
        used.update(take)
        out.extend(tuple(map(float, pts[j])) for j in take)
    if len(out) < n:
        raise InsufficientSpace(f"cannot place {n} targets on lines")
    return out


# --- scene assembly -----------------------------------------------------------

def _snap(v: float, r: float) -> float:
    return round(round(v / r) * r, 9)


def _base_geometry(p: GenParams, rng: np.random.Generator):
    """Bounds, structural obstacles (walls, cut-outs) and room anchor rectangles."""
    r = p.resolution
    if p.size is not None:
        w, h = p.size
    else:
        area = rng.uniform(40.0, 60.0)
        aspect = rng.uniform(1.0, 2.0) if p.layout != "l_shaped" else rng.uniform(1.0, 1.5)
        if p.layout == "l_shaped":
            area /= 0.8     # the cut-out removes roughly a fifth of the box
        w, h = math.sqrt(area * aspect), math.sqrt(area / aspect)
    w, h = max(_snap(w, r), 4 * r), max(_snap(h, r), 4 * r)
    bounds = (0.0, 0.0, w, h)
    structure: list[StaticObstacle] = []
    rooms: list[AABB] = [bounds]
    if p.layout == "l_shaped":
        cw = _snap(w * rng.uniform(0.35, 0.5), r)
        ch = _snap(h * rng.uniform(0.35, 0.5), r)
        structure.append(StaticObstacle.from_rect("wall0", w - cw, h - ch, w, h, "wall"))
        rooms = [(0.0, 0.0, w, h - ch), (0.0, h - ch, w - cw, h)]
    elif p.layout == "multi_room":
        n_rooms = int(rng.integers(2, 5))
        rooms = [bounds]
        walls = []
        while len(rooms) < n_rooms:
            rooms.sort(key=lambda b: -(b[2] - b[0]) * (b[3] - b[1]))
            x0, y0, x1, y1 = rooms.pop(0)
            vertical = (x1 - x0) >= (y1 - y0)
            if vertical:
                c = _snap(x0 + (x1 - x0) * rng.uniform(0.35, 0.65), r)
                a, b = c - WALL_THICKNESS / 2, c + WALL_THICKNESS / 2
                rooms += [(x0, y0, a, y1), (b, y0, x1, y1)]
                walls.append(("v", a, b, y0, y1))
            else:
                c = _snap(y0 + (y1 - y0) * rng.uniform(0.35, 0.65), r)
                a, b = c - WALL_THICKNESS / 2, c + WALL_THICKNESS / 2
                rooms += [(x0, y0, x1, a), (x0, b, x1, y1)]
                walls.append(("h", a, b, x0, x1))
        k = 0
        for kind, a, b, s0, s1 in walls:
            lo = s0 + 0.3
            hi = s1 - 0.3 - DOORWAY
            d0 = _snap(rng.uniform(lo, hi), r) if hi > lo else _snap(0.5 * (s0 + s1 - DOORWAY), r)
            d1 = d0 + DOORWAY
            for p0, p1 in ((s0, d0), (d1, s1)):
                if p1 - p0 > 1e-9:
                    rect = (a, p0, b, p1) if kind == "v" else (p0, a, p1, b)
                    structure.append(StaticObstacle.from_rect(f"wall{k}", *rect, "wall"))
                    k += 1
    return bounds, structure, rooms


def _cell_rect(rect: AABB, r: float) -> tuple[int, int, int, int]:
    return (int(round(rect[0] / r)), int(round(rect[1] / r)), int(round(rect[2] / r)), int(round(rect[3] / r)))


def _mark(mask: np.ndarray, rect: AABB, r: float, value=True) -> None:
    a, b, c, d = _cell_rect(rect, r)
    mask[max(0, a):max(0, c), max(0, b):max(0, d)] = value


def _corridor_tree(anchors: list[Point], bounds: AABB, r: float, shape) -> np.ndarray:
    """Cells of L-shaped, CORRIDOR_WIDTH-wide corridors along a minimum spanning tree of anchors."""
    res = np.zeros(shape, dtype=bool)
    n = len(anchors)
    if n == 0:
        return res
    A = np.array(anchors)
    D = np.abs(A[:, None, :] - A[None, :, :]).sum(axis=2)
    mst = minimum_spanning_tree(D + 1e-9 * (D == 0)).tocoo()
    hw = CORRIDOR_WIDTH / 2
    pads = [(x - hw, y - hw, x + hw, y + hw) for x, y in anchors]
    for i, j in zip(mst.row.tolist(), mst.col.tolist()):
        (xa, ya), (xb, yb) = anchors[i], anchors[j]
        pads.append((min(xa, xb) - hw, ya - hw, max(xa, xb) + hw, ya + hw))
        pads.append((xb - hw, min(ya, yb) - hw, xb + hw, max(ya, yb) + hw))
    for x0, y0, x1, y1 in pads:
        rect = (max(bounds[0], x0), max(bounds[1], y0), min(bounds[2], x1), min(bounds[3], y1))
        a, b = int(math.floor(rect[0] / r)), int(math.floor(rect[1] / r))
        c, d = int(math.ceil(rect[2] / r)), int(math.ceil(rect[3] / r))
        res[max(0, a):c, max(0, b):d] = True
    return res


def _grow_rect(avail: np.ndarray, ci: int, cj: int, tw_c: int, th_c: int, side: int,
               budget_cells: int) -> tuple[int, int, int, int]:
    """Grow a rectangle from a seed cell one side at a time while cells stay available."""
    nx, ny = avail.shape
    i0, i1, j0, j1 = ci, ci + 1, cj, cj + 1
    grew = True
    while grew:
        grew = False
        for s in range(4):
            dirn = (side + s) % 4
            if dirn == 0 and i1 - i0 < tw_c and i1 < nx and avail[i1, j0:j1].all():
                i1 += 1
                grew = True
            elif dirn == 1 and i1 - i0 < tw_c and i0 > 0 and avail[i0 - 1, j0:j1].all():
                i0 -= 1
                grew = True
            elif dirn == 2 and j1 - j0 < th_c and j1 < ny and avail[i0:i1, j1].all():
                j1 += 1
                grew = True
            elif dirn == 3 and j1 - j0 < th_c and j0 > 0 and avail[i0:i1, j0 - 1].all():
                j0 -= 1
                grew = True
            if (i1 - i0) * (j1 - j0) > budget_cells:
                return i0, i1, j0, j1
    return i0, i1, j0, j1


def _grow_obstacles(p: GenParams, rng, bounds: AABB, floor: np.ndarray, reserved: np.ndarray,
                    spawn_cell) -> tuple[list[AABB], float]:
    """Furniture rectangles (cell-aligned) until coverage reaches the density band.

    Poisson-spaced seeds come first so furniture is spread out; a fill pass seeded
    from every remaining free cell then closes any gap to the requested density.
    """
    r = p.resolution
    nx, ny = floor.shape
    occ = np.zeros_like(floor)
    n_floor = int(floor.sum())
    target = p.density
    rects: list[AABB] = []
    cover = 0.0
    min_dist = max(0.5, 1.6 - 1.0 * p.density)

    def place(ci: int, cj: int, cap_area: float, max_side: float, min_side: int) -> None:
        nonlocal occ, cover
        if not floor[ci, cj] or reserved[ci, cj] or occ[ci, cj]:
            return
        aspect = rng.uniform(1.0, 2.5)
        tw = math.sqrt(cap_area * aspect)
        th = cap_area / tw
        if rng.random() < 0.5:
            tw, th = th, tw
        tw_c = max(2, min(int(round(tw / r)), int(round(max_side / r))))
        th_c = max(2, min(int(round(th / r)), int(round(max_side / r))))
        budget_cells = int((target + 0.04) * n_floor) - int(occ.sum())
        i0, i1, j0, j1 = _grow_rect(floor & ~reserved & ~occ, ci, cj, tw_c, th_c,
                                    int(rng.integers(4)), budget_cells)
        if (i1 - i0) < min_side or (j1 - j0) < min_side or (i1 - i0) * (j1 - j0) > budget_cells:
            return
        trial = occ.copy()
        trial[i0:i1, j0:j1] = True
        if not verify_connectivity(floor & ~trial, spawn_cell):
            return
        occ = trial
        rects.append((round(i0 * r, 9), round(j0 * r, 9), round(i1 * r, 9), round(j1 * r, 9)))
        cover = float(occ.sum()) / n_floor

    for rnd in range(6):
        if cover >= target - 0.02:
            break
        seeds = poisson_disk_sample(bounds, min_dist * (0.85 ** rnd), rng)
        cap_area = max(0.16, p.density * min_dist ** 2 / 0.7) * (1.0 + 0.5 * rnd)
        max_side = max(0.6, min(3.0, 2.2 * math.sqrt(cap_area)))
        for k in rng.permutation(len(seeds)).tolist():
            if cover >= target - 0.005:
                break
            ci, cj = int(seeds[k][0] / r), int(seeds[k][1] / r)
            if 0 <= ci < nx and 0 <= cj < ny:
                place(ci, cj, cap_area, max_side, 2)
    if cover < target - 0.02:
        free = np.argwhere(floor & ~reserved & ~occ)
        for k in rng.permutation(len(free)).tolist():
            if cover >= target - 0.005:
                break
            place(int(free[k][0]), int(free[k][1]), 1.0, 1.5, 1)
    return rects, cover


def density_of(scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION) -> float:
    """Furniture-covered fraction of the floor (structural walls excluded from both terms)."""
    shape = grid_shape(scene.bounds, resolution)
    C = scene.grid(resolution).centers().reshape(-1, 2)
    x0, y0, x1, y1 = scene.bounds
    struct = np.zeros(len(C), dtype=bool)
    furn = np.zeros(len(C), dtype=bool)
    from .geometry import points_in_convex
    for o in scene.obstacles:
        inside = points_in_convex(C, o.polygon)
        if o.material_tag == "wall":
            struct |= inside
        else:
            furn |= inside
    floor = (~struct) & (C[:, 0] <= x1) & (C[:, 1] <= y1)
    return float((furn & floor).sum()) / float(floor.sum())


def _complexity(p: GenParams) -> int:
    c = 1 + sum(p.density >= t for t in (0.2, 0.35, 0.5, 0.65))
    if p.layout == "multi_room":
        c += 1
    return int(min(5, c))


def place_scene_targets(scene: SceneSpec, n_sweep: int, n_grasp: int, rng: np.random.Generator,
                        pattern: str = "random", n_surface: int | None = None,
                        min_clearance: float = 0.2) -> SceneSpec:
    """Place serviceable targets: sweep targets reachable by the brush strip, grasp
    targets within arm reach of a planning-reachable pose (some on furniture tops)."""
    r = scene.grid().resolution
    grid = scene.grid()
    plan = planning_grid(scene)
    C = grid.centers().reshape(-1, 2)
    nav = grid.navigable.ravel()
    clear = plan.clearance.ravel()
    cand_idx = np.flatnonzero(nav & (clear >= min_clearance))
    sweep_cells = cand_idx[sweep_accessible_mask(plan).ravel()[cand_idx]]
    reach = scene.robot.arm_reach
    grasp_ok = grasp_accessible_mask(plan, reach).ravel()
    positions_s = place_targets(pattern, n_sweep, C[sweep_cells], rng, r) if n_sweep else []
    used = {(round(x, 6), round(y, 6)) for x, y in positions_s}
    furniture = [o for o in scene.obstacles if o.material_tag != "wall"]
    if n_surface is None:
        n_surface = n_grasp // 3 if furniture else 0
    n_surface = min(n_surface, n_grasp) if furniture else 0
    surface: list[Point] = []
    if n_surface:
        spots = []
        for o in furniture:
            x0, y0, x1, y1 = o.rect if o.rect is not None else (
                min(p[0] for p in o.polygon), min(p[1] for p in o.polygon),
                max(p[0] for p in o.polygon), max(p[1] for p in o.polygon))
            for x in np.arange(x0 + 0.1, x1 - 0.05, 0.1):
                for y in np.arange(y0 + 0.1, y1 - 0.05, 0.1):
                    if min(x - x0, x1 - x, y - y0, y1 - y) <= 0.15:
                        spots.append((round(float(x), 6), round(float(y), 6)))
        if spots:
            inside = scene.collider.inside_obstacle(np.array(spots))
            spots = [s for s, k in zip(spots, inside) if k and grasp_accessible(plan, s, reach)]
        if len(spots) < n_surface:
            n_surface = len(spots)
        surface = place_targets("random", n_surface, np.array(spots).reshape(-1, 2), rng, r) if n_surface else []
    n_floor = n_grasp - len(surface)
    floor_idx = [i for i in cand_idx[grasp_ok[cand_idx]] if (round(C[i, 0], 6), round(C[i, 1], 6)) not in used]
    floor_pts = place_targets(pattern, n_floor, C[floor_idx], rng, r) if n_floor else []
    sweep = [SweepTarget(f"s{k}", (round(x, 6), round(y, 6)), 0.02,
                         round(float(rng.uniform(*SWEEP_MASS_RANGE)), 4)) for k, (x, y) in enumerate(positions_s)]
    grasp = [GraspTarget(f"g{k}", (round(x, 6), round(y, 6)), 0.04,
                         round(float(rng.uniform(*GRASP_MASS_RANGE)), 4), "pending", "surface")
             for k, (x, y) in enumerate(surface)]
    grasp += [GraspTarget(f"g{k + len(surface)}", (round(x, 6), round(y, 6)), 0.04,
                          round(float(rng.uniform(*GRASP_MASS_RANGE)), 4), "pending", "floor")
              for k, (x, y) in enumerate(floor_pts)]
    return scene.with_targets(sweep, grasp)


def targets_accessible(scene: SceneSpec) -> list[str]:
    """Ids of targets the robot cannot service (empty when all are accessible)."""
    plan = planning_grid(scene)
    bad = [t.id for t in scene.sweep_targets if not sweep_accessible(plan, t.position)]
    bad += [t.id for t in scene.grasp_targets if not grasp_accessible(plan, t.position, scene.robot.arm_reach)]
    return bad


def _attempt(p: GenParams, rng: np.random.Generator, attempt: int) -> SceneSpec:
    r = p.resolution
    bounds, structure, rooms = _base_geometry(p, rng)
    shape = grid_shape(bounds, r)
    floor = np.ones(shape, dtype=bool)
    for o in structure:
        _mark(floor, o.rect, r, False)
    # one anchor per room plus doorway anchors keep every room on the corridor tree
    anchors: list[Point] = []
    for x0, y0, x1, y1 in rooms:
        m = 0.6
        anchors.append((_snap(rng.uniform(x0 + m, max(x0 + m, x1 - m)), r) + r / 2,
                        _snap(rng.uniform(y0 + m, max(y0 + m, y1 - m)), r) + r / 2))
    doorways = _doorway_anchors(structure, bounds, p.layout)
    free_budget = (1.0 - p.density - 0.03) * floor.sum()
    extra = 3 if p.density < 0.6 else 1
    for _ in range(extra):
        x0, y0, x1, y1 = rooms[int(rng.integers(len(rooms)))]
        anchors.append((_snap(rng.uniform(x0 + 0.6, max(x0 + 0.6, x1 - 0.6)), r) + r / 2,
                        _snap(rng.uniform(y0 + 0.6, max(y0 + 0.6, y1 - 0.6)), r) + r / 2))
    anchors = anchors[:len(rooms)] + doorways + anchors[len(rooms):]
    reserved = _corridor_tree(anchors, bounds, r, shape) & floor
    while reserved.sum() > free_budget and len(anchors) > len(rooms) + len(doorways):
        anchors.pop()
        reserved = _corridor_tree(anchors, bounds, r, shape) & floor
    spawn_xy = anchors[0]
    spawn_cell = (int(spawn_xy[0] / r), int(spawn_xy[1] / r))
    rects, cover = _grow_obstacles(p, rng, bounds, floor, reserved, spawn_cell)
    if abs(cover - p.density) > DENSITY_TOLERANCE:
        raise GenerationFailure(f"density {cover:.3f} outside band around {p.density:.2f}")
    furniture = [StaticObstacle.from_rect(f"obs{k}", *rc, "furniture") for k, rc in enumerate(rects)]
    spawns = [(spawn_xy[0], spawn_xy[1], 0.0)]
    base = SceneSpec(id=f"gen-{p.layout}-{p.seed}", bounds=bounds, obstacles=tuple(structure + furniture),
                     spawns=tuple(spawns), complexity_score=_complexity(p), time_budget_s=p.time_budget_s)
    plan = planning_grid(base)
    if not plan.navigable.any():
        raise GenerationFailure("spawn has no planning clearance")
    cells = np.argwhere(plan.navigable)
    for _ in range(p.n_spawns - 1):
        for _try in range(50):
            c = cells[int(rng.integers(len(cells)))]
            xy = plan.center(int(c[0]), int(c[1]))
            if all(math.dist(xy, s[:2]) >= 1.5 for s in spawns):
                spawns.append((round(xy[0], 6), round(xy[1], 6), round(float(rng.uniform(-math.pi, math.pi)), 6)))
                break
    zones = []
    if p.n_grasp:
        far = max(cells.tolist(), key=lambda c: (math.dist(plan.center(*c), spawn_xy), -c[0], -c[1]))
        zx, zy = plan.center(*far)
        zr = (max(bounds[0], zx - 0.5), max(bounds[1], zy - 0.5), min(bounds[2], zx + 0.5), min(bounds[3], zy + 0.5))
        zones.append(TaskZone("collect0", "collection", tuple(round(v, 6) for v in zr)))
    scene = SceneSpec(id=base.id, bounds=bounds, obstacles=base.obstacles, spawns=tuple(spawns),
                      zones=tuple(zones), complexity_score=base.complexity_score, time_budget_s=p.time_budget_s)
    try:
        scene = place_scene_targets(scene, p.n_sweep, p.n_grasp, rng, p.pattern)
    except InsufficientSpace as exc:
        raise GenerationFailure(str(exc)) from exc
    validate_scene(scene)
    grid = scene.grid(r)
    if not verify_connectivity(grid, grid.cell_of(*spawn_xy)):
        raise GenerationFailure("free space is not connected")
    bad = targets_accessible(scene)
    if bad:
        raise GenerationFailure(f"inaccessible targets: {', '.join(bad)}")
    return scene


def _doorway_anchors(structure, bounds, layout) -> list[Point]:
    """Anchor points on either side of each doorway gap so corridors pass through it."""
    if layout != "multi_room":
        return []
    walls = [o.rect for o in structure]
    out: list[Point] = []
    seen = set()
    for i, a in enumerate(walls):
        for b in walls[i + 1:]:
            vertical_pair = abs(a[0] - b[0]) < 1e-9 and abs(a[2] - b[2]) < 1e-9
            horizontal_pair = abs(a[1] - b[1]) < 1e-9 and abs(a[3] - b[3]) < 1e-9
            if vertical_pair:
                lo, hi = sorted([(a[1], a[3]), (b[1], b[3])])
                if abs((hi[0] - lo[1]) - DOORWAY) < 1e-6:
                    y = 0.5 * (lo[1] + hi[0])
                    key = ("v", a[0], y)
                    if key not in seen:
                        seen.add(key)
                        out += [(a[0] - 0.55, y), (a[2] + 0.55, y)]
            elif horizontal_pair:
                lo, hi = sorted([(a[0], a[2]), (b[0], b[2])])
                if abs((hi[0] - lo[1]) - DOORWAY) < 1e-6:
                    x = 0.5 * (lo[1] + hi[0])
                    key = ("h", x, a[1])
                    if key not in seen:
                        seen.add(key)
                        out += [(x, a[1] - 0.55), (x, a[3] + 0.55)]
    return [(min(max(x, bounds[0] + 0.5), bounds[2] - 0.5), min(max(y, bounds[1] + 0.5), bounds[3] - 0.5))
            for x, y in out]


def generate_scene(p: GenParams) -> SceneSpec:
    """Generate a validated scene; GenerationFailure after MAX_RETRIES attempts."""
    ss = np.random.SeedSequence(int(p.seed) & ((1 << 64) - 1))
    last = ""
    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng(ss.spawn(1)[0])
        try:
            return _attempt(p, rng, attempt)
        except (GenerationFailure, InsufficientSpace, ValidationError) as exc:
            last = str(exc)
    raise GenerationFailure(f"no valid scene after {MAX_RETRIES} attempts (last: {last})")
