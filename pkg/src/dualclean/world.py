"""Scene data model, occupancy grids and scene file I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import ndimage

from . import geometry as geo
from .errors import DegenerateScene, ParseError, ValidationError
from .geometry import AABB, Point, Polygon, Pose

SCHEMA_VERSION = 1
DEFAULT_RESOLUTION = 0.1
CONTACT_TOLERANCE = 0.01

SWEEP_MASS_RANGE = (0.01, 0.05)
GRASP_MASS_RANGE = (0.1, 0.8)
ZONE_KINDS = ("collection", "restricted", "target")
ELEVATIONS = ("floor", "surface")
STATUSES = ("pending", "completed")


@dataclass(frozen=True)
class RobotSpec:
    """Chassis and actuator limits of the dual-mode robot (SI units)."""

    length: float = 0.41          # along heading
    width: float = 0.47
    max_lin_vel: float = 0.5
    max_ang_vel: float = 1.0
    sweep_width: float = 0.35
    brush_diameter: float = 0.15
    arm_reach: float = 0.855
    gripper_open_max: float = 0.08
    sensor_range: float = 10.0

    def __post_init__(self):
        for name in ("length", "width", "max_lin_vel", "max_ang_vel", "sweep_width",
                     "brush_diameter", "arm_reach", "gripper_open_max", "sensor_range"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"robot.{name}", "must be > 0")
        if self.sweep_width > self.width + 2 * self.brush_diameter:
            raise ValidationError("robot.sweep_width", "wider than chassis plus brushes")

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)

    def footprint(self, pose: Pose) -> Polygon:
        hl, hw = 0.5 * self.length, 0.5 * self.width
        return geo.body_rect(pose, -hl, hl, -hw, hw)

    def sweep_strip(self, pose: Pose) -> Polygon:
        """Brush strip attached to the front edge of the chassis."""
        hl, hs = 0.5 * self.length, 0.5 * self.sweep_width
        return geo.body_rect(pose, hl, hl + self.brush_diameter, -hs, hs)


@dataclass(frozen=True)
class StaticObstacle:
    id: str
    polygon: Polygon
    material_tag: str = "generic"
    rect: AABB | None = None

    @classmethod
    def from_rect(cls, id: str, x0: float, y0: float, x1: float, y1: float,
                  material_tag: str = "generic") -> "StaticObstacle":
        return cls(id, geo.rect_polygon(x0, y0, x1, y1), material_tag, (x0, y0, x1, y1))

    @property
    def area(self) -> float:
        return abs(geo.polygon_area(self.polygon))


@dataclass(frozen=True)
class DynamicObstacle:
    """Axis-aligned box looping through its waypoints at constant speed."""

    id: str
    size: tuple[float, float]
    waypoints: tuple[Point, ...]
    speed: float

    @cached_property
    def _legs(self) -> tuple[tuple[float, ...], float]:
        pts = self.waypoints
        cum = [0.0]
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            cum.append(cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))
        return tuple(cum), cum[-1]

    def position_at(self, t: float) -> Point:
        cum, total = self._legs
        if total <= 0.0 or self.speed <= 0.0:
            return self.waypoints[0]
        s = (self.speed * t) % total
        for i in range(len(self.waypoints)):
            if s <= cum[i + 1] or i == len(self.waypoints) - 1:
                a = self.waypoints[i]
                b = self.waypoints[(i + 1) % len(self.waypoints)]
                seg = cum[i + 1] - cum[i]
                u = 0.0 if seg <= 0 else (s - cum[i]) / seg
                return (a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]))
        return self.waypoints[0]

    def polygon_at(self, t: float) -> Polygon:
        x, y = self.position_at(t)
        hw, hh = 0.5 * self.size[0], 0.5 * self.size[1]
        return geo.rect_polygon(x - hw, y - hh, x + hw, y + hh)


@dataclass(frozen=True)
class SweepTarget:
    id: str
    position: Point
    radius: float = 0.02
    mass: float = 0.02
    status: str = "pending"

    kind = "sweep"


@dataclass(frozen=True)
class GraspTarget:
    id: str
    position: Point
    radius: float = 0.04
    mass: float = 0.3
    status: str = "pending"
    elevation_tag: str = "floor"

    kind = "grasp"


@dataclass(frozen=True)
class TaskZone:
    id: str
    kind: str
    region: AABB

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.region
        return x0 <= x <= x1 and y0 <= y <= y1

    @property
    def polygon(self) -> Polygon:
        return geo.rect_polygon(*self.region)


@dataclass(frozen=True)
class SceneSpec:
    """Immutable description of one world."""

    id: str
    bounds: AABB
    obstacles: tuple[StaticObstacle, ...] = ()
    movers: tuple[DynamicObstacle, ...] = ()
    sweep_targets: tuple[SweepTarget, ...] = ()
    grasp_targets: tuple[GraspTarget, ...] = ()
    zones: tuple[TaskZone, ...] = ()
    spawns: tuple[Pose, ...] = ()
    complexity_score: int = 1
    time_budget_s: float = 300.0
    robot: RobotSpec = field(default_factory=RobotSpec)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @property
    def collection_zones(self) -> tuple[TaskZone, ...]:
        return tuple(z for z in self.zones if z.kind == "collection")

    @property
    def restricted_zones(self) -> tuple[TaskZone, ...]:
        return tuple(z for z in self.zones if z.kind == "restricted")

    @cached_property
    def collider(self) -> "Collider":
        return Collider(self)

    @cached_property
    def _grids(self) -> dict:
        return {}

    def grid(self, resolution: float = DEFAULT_RESOLUTION) -> "OccupancyGrid":
        """Cached :func:`navigable_grid`."""
        key = round(resolution, 12)
        g = self._grids.get(key)
        if g is None:
            g = navigable_grid(self, resolution)
            self._grids[key] = g
        return g

    def with_targets(self, sweep: Sequence[SweepTarget], grasp: Sequence[GraspTarget]) -> "SceneSpec":
        return replace(self, sweep_targets=tuple(sweep), grasp_targets=tuple(grasp))


class Collider:
    """Static collision geometry of a scene with an AABB broad phase."""

    def __init__(self, scene: SceneSpec):
        self.bounds = scene.bounds
        self.polys = [o.polygon for o in scene.obstacles]
        self.boxes = (np.array([geo.aabb(p) for p in self.polys], dtype=float)
                      if self.polys else np.zeros((0, 4)))
        self.restricted = [z.polygon for z in scene.restricted_zones]

    def candidates(self, box: AABB, margin: float) -> list[int]:
        if not self.polys:
            return []
        B = self.boxes
        m = ((B[:, 0] <= box[2] + margin) & (B[:, 2] >= box[0] - margin)
             & (B[:, 1] <= box[3] + margin) & (B[:, 3] >= box[1] - margin))
        return np.flatnonzero(m).tolist()

    def gap(self, poly: Polygon, cap: float = math.inf, candidates: Iterable[int] | None = None) -> float:
        """Signed clearance of ``poly`` against walls and obstacles.

        Obstacles whose bounding box is at least ``cap`` away are skipped, so
        any returned value >= ``cap`` only certifies "at least cap".
        """
        g = geo.box_inner_gap(poly, self.bounds)
        box = geo.aabb(poly)
        idx = self.candidates(box, cap if math.isfinite(cap) else 1e9) if candidates is None else candidates
        for i in idx:
            ob = self.boxes[i]
            if geo.aabb_distance(box, (ob[0], ob[1], ob[2], ob[3])) >= min(cap, g):
                continue
            d = geo.convex_gap(poly, self.polys[i])
            if d < g:
                g = d
        return g

    def segment_clearance(self, p: Point, q: Point, cap: float = 1.0, include_restricted: bool = True) -> float:
        """Exact distance from segment p-q to walls and obstacles, capped at ``cap``."""
        seg = (tuple(p), tuple(q))
        g = min(cap, geo.box_inner_gap(seg, self.bounds))
        box = geo.aabb(seg)
        for i in self.candidates(box, cap):
            d = geo.convex_gap(seg, self.polys[i])
            if d < g:
                g = d
        if include_restricted:
            for z in self.restricted:
                if geo.aabb_distance(box, geo.aabb(z)) < g:
                    g = min(g, geo.convex_gap(seg, z))
        return g

    def touches_restricted(self, poly: Polygon) -> bool:
        return any(geo.sat_separation(poly, z) < 0.0 for z in self.restricted)

    def clearance(self, pts: np.ndarray, include_restricted: bool = False) -> np.ndarray:
        """Distance from each point to the nearest wall or obstacle (0 inside one)."""
        c = np.maximum(geo.points_box_clearance(pts, self.bounds), 0.0)
        polys = self.polys + (self.restricted if include_restricted else [])
        for poly in polys:
            # the box distance is a lower bound, so only points it cannot rule out need the exact test
            bx0, by0, bx1, by1 = geo.aabb(poly)
            dx = np.maximum(np.maximum(bx0 - pts[:, 0], pts[:, 0] - bx1), 0.0)
            dy = np.maximum(np.maximum(by0 - pts[:, 1], pts[:, 1] - by1), 0.0)
            near = np.flatnonzero(np.hypot(dx, dy) < c)
            if len(near):
                c[near] = np.minimum(c[near], geo.points_polygon_distance(pts[near], poly))
        return c

    def inside_obstacle(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(len(pts), dtype=bool)
        for poly, (bx0, by0, bx1, by1) in zip(self.polys, self.boxes):
            near = np.flatnonzero((pts[:, 0] >= bx0) & (pts[:, 0] <= bx1) & (pts[:, 1] >= by0) & (pts[:, 1] <= by1))
            if len(near):
                out[near] |= geo.points_in_convex(pts[near], poly)
        return out


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """delta-resolution decomposition of the floor.

    Arrays are indexed ``[ix, iy]``; cell ``(ix, iy)`` has its center at
    ``origin + (ix + 0.5, iy + 0.5) * resolution``.
    """

    origin: Point
    resolution: float
    free: np.ndarray           # center inside bounds and outside every obstacle
    navigable: np.ndarray      # free and 4-connected to a spawn

    @property
    def shape(self) -> tuple[int, int]:
        return self.free.shape

    @property
    def a_total(self) -> float:
        return float(self.navigable.sum()) * self.resolution ** 2

    def center(self, ix: int, iy: int) -> Point:
        r = self.resolution
        return (self.origin[0] + (ix + 0.5) * r, self.origin[1] + (iy + 0.5) * r)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        r = self.resolution
        return (int(math.floor((x - self.origin[0]) / r)), int(math.floor((y - self.origin[1]) / r)))

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.free.shape[0] and 0 <= iy < self.free.shape[1]

    def centers(self) -> np.ndarray:
        """(nx, ny, 2) array of cell centers."""
        return grid_centers(self.origin, self.resolution, self.free.shape)


def grid_shape(bounds: AABB, resolution: float) -> tuple[int, int]:
    x0, y0, x1, y1 = bounds
    return (max(1, int(math.ceil((x1 - x0) / resolution - 1e-9))),
            max(1, int(math.ceil((y1 - y0) / resolution - 1e-9))))


def grid_centers(origin: Point, resolution: float, shape: tuple[int, int]) -> np.ndarray:
    xs = origin[0] + (np.arange(shape[0]) + 0.5) * resolution
    ys = origin[1] + (np.arange(shape[1]) + 0.5) * resolution
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X, Y], axis=-1)


def free_mask(scene: SceneSpec, resolution: float) -> np.ndarray:
    shape = grid_shape(scene.bounds, resolution)
    C = grid_centers(scene.bounds[:2], resolution, shape).reshape(-1, 2)
    x0, y0, x1, y1 = scene.bounds
    inside = (C[:, 0] <= x1) & (C[:, 1] <= y1)
    return (inside & ~scene.collider.inside_obstacle(C)).reshape(shape)


def reachable_from(free: np.ndarray, seeds: Iterable[tuple[int, int]]) -> np.ndarray:
    """Cells of ``free`` 4-connected to any seed cell."""
    labels, _ = ndimage.label(free)
    keep = {int(labels[s]) for s in seeds if free[s]}
    keep.discard(0)
    if not keep:
        return np.zeros_like(free)
    return np.isin(labels, sorted(keep))


def navigable_grid(scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION) -> OccupancyGrid:
    """Grid whose navigable cells are obstacle-free and reachable from a spawn."""
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    free = free_mask(scene, resolution)
    origin = scene.bounds[:2]
    seeds = []
    for sx, sy, _ in scene.spawns:
        cell = _nearest_free_cell(free, origin, resolution, sx, sy)
        if cell is not None:
            seeds.append(cell)
    nav = reachable_from(free, seeds)
    if not nav.any():
        raise DegenerateScene(f"scene {scene.id!r} has no navigable cell at resolution {resolution}")
    free.setflags(write=False)
    nav.setflags(write=False)
    return OccupancyGrid(origin, resolution, free, nav)


def _nearest_free_cell(free, origin, r, x, y, max_radius: float = 0.5):
    ix, iy = int(math.floor((x - origin[0]) / r)), int(math.floor((y - origin[1]) / r))
    nx, ny = free.shape
    if 0 <= ix < nx and 0 <= iy < ny and free[ix, iy]:
        return (ix, iy)
    k = int(math.ceil(max_radius / r))
    best, best_d = None, math.inf
    for i in range(max(0, ix - k), min(nx, ix + k + 1)):
        for j in range(max(0, iy - k), min(ny, iy + k + 1)):
            if free[i, j]:
                d = (i - ix) ** 2 + (j - iy) ** 2
                if d < best_d:
                    best, best_d = (i, j), d
    return best


def check_pose(scene: SceneSpec, pose: Pose) -> bool:
    """True if the robot footprint at ``pose`` is in contact with walls or obstacles."""
    fp = scene.robot.footprint(pose)
    return scene.collider.gap(fp, cap=CONTACT_TOLERANCE) < CONTACT_TOLERANCE


# --- validation -------------------------------------------------------------

def _within(bounds: AABB, x: float, y: float, eps: float = 1e-9) -> bool:
    return bounds[0] - eps <= x <= bounds[2] + eps and bounds[1] - eps <= y <= bounds[3] + eps


def validate_scene(scene: SceneSpec) -> SceneSpec:
    """Check every scene invariant; raise :class:`ValidationError` naming the field."""
    b = scene.bounds
    if not (b[2] > b[0] and b[3] > b[1]):
        raise ValidationError("bounds", "area must be > 0")
    ids: set[str] = set()
    for i, ob in enumerate(scene.obstacles):
        path = f"obstacles[{i}]"
        if ob.id in ids:
            raise ValidationError(f"{path}.id", f"duplicate id {ob.id!r}")
        ids.add(ob.id)
        if len(ob.polygon) < 3 or not geo.is_convex(ob.polygon):
            raise ValidationError(path, "shape must be a convex polygon")
        if ob.area <= 0:
            raise ValidationError(path, "shape is degenerate (zero area)")
        if not all(_within(b, x, y) for x, y in ob.polygon):
            raise ValidationError(path, "shape leaves bounds")
    for i, mv in enumerate(scene.movers):
        path = f"movers[{i}]"
        if mv.speed < 0:
            raise ValidationError(f"{path}.speed", "must be >= 0")
        if len(mv.waypoints) < 2:
            raise ValidationError(f"{path}.waypoints", "need at least 2 waypoints")
        if not (mv.size[0] > 0 and mv.size[1] > 0):
            raise ValidationError(f"{path}.size", "must be > 0")
        hw, hh = 0.5 * mv.size[0], 0.5 * mv.size[1]
        for x, y in mv.waypoints:
            if not (_within(b, x - hw, y - hh) and _within(b, x + hw, y + hh)):
                raise ValidationError(f"{path}.waypoints", "path leaves bounds")
    target_ids: set[str] = set()
    for group, items, mass_range in (("sweep_targets", scene.sweep_targets, SWEEP_MASS_RANGE),
                                     ("grasp_targets", scene.grasp_targets, GRASP_MASS_RANGE)):
        for i, t in enumerate(items):
            path = f"{group}[{i}]"
            if t.id in target_ids:
                raise ValidationError(f"{path}.id", f"duplicate target id {t.id!r}")
            target_ids.add(t.id)
            if not _within(b, *t.position):
                raise ValidationError(f"{path}.position", "outside bounds")
            if not t.radius > 0:
                raise ValidationError(f"{path}.radius", "must be > 0")
            if not (mass_range[0] - 1e-12 <= t.mass <= mass_range[1] + 1e-12):
                raise ValidationError(f"{path}.mass", f"must lie in {mass_range}")
            if t.status not in STATUSES:
                raise ValidationError(f"{path}.status", f"must be one of {STATUSES}")
            elevated = getattr(t, "elevation_tag", "floor")
            if elevated not in ELEVATIONS:
                raise ValidationError(f"{path}.elevation_tag", f"must be one of {ELEVATIONS}")
            inside = bool(scene.collider.inside_obstacle(np.array([t.position]))[0])
            if elevated == "surface" and not inside:
                raise ValidationError(f"{path}.position", "surface target must rest on an obstacle")
            if elevated == "floor" and inside:
                raise ValidationError(f"{path}.position", "floor target lies inside an obstacle")
    for i, z in enumerate(scene.zones):
        path = f"zones[{i}]"
        if z.kind not in ZONE_KINDS:
            raise ValidationError(f"{path}.kind", f"must be one of {ZONE_KINDS}")
        x0, y0, x1, y1 = z.region
        if not (x1 > x0 and y1 > y0):
            raise ValidationError(f"{path}.region", "area must be > 0")
        if not (_within(b, x0, y0) and _within(b, x1, y1)):
            raise ValidationError(f"{path}.region", "outside bounds")
    if not scene.spawns:
        raise ValidationError("spawns", "at least one spawn required")
    for i, pose in enumerate(scene.spawns):
        if not _within(b, pose[0], pose[1]):
            raise ValidationError(f"spawns[{i}]", "outside bounds")
        if check_pose(scene, pose):
            raise ValidationError(f"spawns[{i}]", "spawn collides with an obstacle or wall")
    if scene.complexity_score not in (1, 2, 3, 4, 5):
        raise ValidationError("complexity_score", "must be an integer in 1..5")
    if not scene.time_budget_s > 0:
        raise ValidationError("time_budget_s", "must be > 0")
    return scene


# --- serialisation ------------------------------------------------------------

def _r(v: float) -> float:
    return round(float(v), 9)


def scene_to_dict(scene: SceneSpec) -> dict[str, Any]:
    def obstacle(o: StaticObstacle):
        d: dict[str, Any] = {"id": o.id, "material": o.material_tag}
        if o.rect is not None:
            d["rect"] = [_r(v) for v in o.rect]
        else:
            d["polygon"] = [[_r(x), _r(y)] for x, y in o.polygon]
        return d

    def target(t):
        d = {"id": t.id, "position": [_r(t.position[0]), _r(t.position[1])],
             "radius": _r(t.radius), "mass": _r(t.mass), "status": t.status}
        if isinstance(t, GraspTarget):
            d["elevation"] = t.elevation_tag
        return d

    return {
        "schema": SCHEMA_VERSION,
        "id": scene.id,
        "bounds": [_r(v) for v in scene.bounds],
        "obstacles": [obstacle(o) for o in scene.obstacles],
        "movers": [{"id": m.id, "size": [_r(m.size[0]), _r(m.size[1])],
                    "waypoints": [[_r(x), _r(y)] for x, y in m.waypoints], "speed": _r(m.speed)}
                   for m in scene.movers],
        "sweep_targets": [target(t) for t in scene.sweep_targets],
        "grasp_targets": [target(t) for t in scene.grasp_targets],
        "zones": [{"id": z.id, "kind": z.kind, "rect": [_r(v) for v in z.region]} for z in scene.zones],
        "spawns": [[_r(x), _r(y), _r(th)] for x, y, th in scene.spawns],
        "complexity": scene.complexity_score,
        "time_budget_s": _r(scene.time_budget_s),
    }


def _pair(v, path: str) -> Point:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ParseError(f"{path}: expected [x, y]")
    return (float(v[0]), float(v[1]))


def scene_from_dict(d: dict[str, Any]) -> SceneSpec:
    if not isinstance(d, dict):
        raise ParseError("scene document must be an object")
    if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema {d.get('schema')!r}")
    required = ("bounds", "obstacles", "movers", "sweep_targets", "grasp_targets",
                "zones", "spawns", "time_budget_s")
    missing = [k for k in required if k not in d]
    if missing:
        raise ParseError(f"missing keys: {', '.join(missing)}")
    try:
        bounds = tuple(float(v) for v in d["bounds"])
        if len(bounds) != 4:
            raise ParseError("bounds: expected [x0, y0, x1, y1]")
        obstacles = []
        for i, o in enumerate(d["obstacles"]):
            oid = str(o.get("id", f"obs{i}"))
            mat = str(o.get("material", "generic"))
            if "rect" in o:
                x0, y0, x1, y1 = (float(v) for v in o["rect"])
                obstacles.append(StaticObstacle.from_rect(oid, x0, y0, x1, y1, mat))
            elif "polygon" in o:
                pts = [_pair(p, f"obstacles[{i}].polygon") for p in o["polygon"]]
                obstacles.append(StaticObstacle(oid, geo.ensure_ccw(pts), mat, None))
            else:
                raise ParseError(f"obstacles[{i}]: needs 'rect' or 'polygon'")
        movers = [DynamicObstacle(str(m["id"]), _pair(m["size"], f"movers[{i}].size"),
                                  tuple(_pair(p, f"movers[{i}].waypoints") for p in m["waypoints"]),
                                  float(m["speed"]))
                  for i, m in enumerate(d["movers"])]
        sweep = [SweepTarget(str(t["id"]), _pair(t["position"], f"sweep_targets[{i}].position"),
                             float(t.get("radius", 0.02)), float(t.get("mass", 0.02)),
                             str(t.get("status", "pending")))
                 for i, t in enumerate(d["sweep_targets"])]
        grasp = [GraspTarget(str(t["id"]), _pair(t["position"], f"grasp_targets[{i}].position"),
                             float(t.get("radius", 0.04)), float(t.get("mass", 0.3)),
                             str(t.get("status", "pending")), str(t.get("elevation", "floor")))
                 for i, t in enumerate(d["grasp_targets"])]
        zones = [TaskZone(str(z["id"]), str(z["kind"]), tuple(float(v) for v in z["rect"]))
                 for z in d["zones"]]
        spawns = []
        for i, s in enumerate(d["spawns"]):
            if len(s) != 3:
                raise ParseError(f"spawns[{i}]: expected [x, y, theta]")
            spawns.append(tuple(float(v) for v in s))
        scene = SceneSpec(
            id=str(d.get("id", "scene")), bounds=bounds, obstacles=tuple(obstacles),
            movers=tuple(movers), sweep_targets=tuple(sweep), grasp_targets=tuple(grasp),
            zones=tuple(zones), spawns=tuple(spawns),
            complexity_score=int(d.get("complexity", 1)), time_budget_s=float(d["time_budget_s"]))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scene: {exc!r}") from exc
    return validate_scene(scene)


def load_scene(path: str | Path) -> SceneSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return scene_from_dict(doc)


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1) + "\n", encoding="utf-8")


def min_corridor_width(scene: SceneSpec, touch_eps: float = 1e-6) -> float:
    """Narrowest free-space gap between two walls or obstacles that do not touch.

    Gaps whose midpoint lies inside a third solid (e.g. two blocks on either
    side of a partition wall) are not passages and are skipped.
    """
    x0, y0, x1, y1 = scene.bounds
    t = 1.0
    walls = [geo.rect_polygon(x0 - t, y0 - t, x0, y1 + t), geo.rect_polygon(x1, y0 - t, x1 + t, y1 + t),
             geo.rect_polygon(x0 - t, y0 - t, x1 + t, y0), geo.rect_polygon(x0 - t, y1, x1 + t, y1 + t)]
    polys = walls + [o.polygon for o in scene.obstacles]
    best = math.inf
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if geo.sat_separation(polys[i], polys[j]) <= touch_eps:
                continue
            p, q, g = geo.closest_points(polys[i], polys[j])
            if g <= touch_eps or g >= best:
                continue
            mx, my = 0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])
            if any(geo.point_in_convex(mx, my, polys[k]) for k in range(4, len(polys)) if k not in (i, j)):
                continue
            best = g
    return best
