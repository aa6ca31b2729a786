"""Deterministic discrete-time simulation of dual-mode cleaning robots.

One control step lasts ``dt`` (0.1 s) and is integrated as six physics
substeps of 1/60 s.  Robots are unicycles whose commanded velocities are
scaled by the actuator limits; a substep that would make the footprint
penetrate a wall, a static obstacle or another robot is cut back to the
contact point by bisection and the robot holds for the rest of the step.

:func:`step` mutates the state it is given and returns it together with the
events emitted during that step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import geometry as geo
from .errors import AlreadyCarrying, OutOfReach, TerminalState
from .geometry import Point, Pose
from .world import CONTACT_TOLERANCE, SceneSpec, check_pose

MODES = ("sweep", "grasp", "navigate")
PHYSICS_DT = 1.0 / 60.0
EVENT_KINDS = ("sweep_success", "grasp_success", "deposit", "collision", "mover_contact",
               "timeout", "completed", "collision_limit", "policy_idle")
TERMINATIONS = ("completed", "collision_limit", "policy_idle", "timeout")


@dataclass
class SimConfig:
    dt: float = 0.1
    substeps: int = 6
    time_budget: float = 300.0
    collision_limit: int = 100
    idle_timeout: float | None = 30.0
    grasp_duration: float = 3.0
    stationary_threshold: float = 0.01
    contact_tolerance: float = CONTACT_TOLERANCE


@dataclass
class RobotState:
    pose: Pose
    lin_vel: float = 0.0
    ang_vel: float = 0.0
    mode: str = "navigate"
    carrying: str | None = None
    grasp_target: str | None = None
    grasp_steps: int = 0
    dt: float = 0.1

    @property
    def grasp_timer(self) -> float:
        """Seconds left on the running grasp primitive (0 when idle)."""
        return self.grasp_steps * self.dt if self.grasp_target is not None else 0.0


@dataclass
class Action:
    mode: str = "navigate"
    nav: tuple[float, float] = (0.0, 0.0)
    manip: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        u, w = self.nav
        u = float(u)
        w = float(w)
        if math.isnan(u) or math.isnan(w):
            u = w = 0.0
        self.nav = (min(1.0, max(-1.0, u)), min(1.0, max(-1.0, w)))


IDLE = Action()


@dataclass(frozen=True)
class Event:
    step: int
    time: float
    kind: str
    robot: int
    object_id: str | None = None


class SimState:
    """Mutable episode state."""

    def __init__(self, scene: SceneSpec, poses: Sequence[Pose], config: SimConfig | None = None):
        self.scene = scene
        self.config = config or SimConfig()
        self.robots = [RobotState(tuple(map(float, p)), dt=self.config.dt) for p in poses]
        self.status: dict[str, str] = {}
        for t in scene.sweep_targets:
            self.status[t.id] = t.status
        for t in scene.grasp_targets:
            self.status[t.id] = t.status
        self.targets = {t.id: t for t in scene.sweep_targets + scene.grasp_targets}
        self.tau = 0
        self.events: list[Event] = []
        self.terminal: str | None = None
        self.collisions = 0
        self._last_active = 0
        self._sweep_ids = [t.id for t in scene.sweep_targets]
        self._sweep_xy = (np.array([t.position for t in scene.sweep_targets], dtype=float)
                          if scene.sweep_targets else np.zeros((0, 2)))

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def clock(self) -> float:
        return self.tau * self.config.dt

    def mover_polygons(self, t: float | None = None):
        t = self.clock if t is None else t
        return [m.polygon_at(t) for m in self.scene.movers]

    def counts(self) -> tuple[int, int]:
        """(sweep completed, grasp completed)."""
        ns = sum(1 for t in self.scene.sweep_targets if self.status[t.id] == "completed")
        ng = sum(1 for t in self.scene.grasp_targets if self.status[t.id] == "completed")
        return ns, ng

    def all_done(self) -> bool:
        return bool(self.status) and all(s == "completed" for s in self.status.values())


def check_collision(pose: Pose, scene: SceneSpec) -> bool:
    """Footprint at ``pose`` within contact tolerance of a wall or static obstacle."""
    return check_pose(scene, pose)


def _footprint_gap(state: SimState, i: int, pose: Pose, cand: list[int], others) -> float:
    fp = state.scene.robot.footprint(pose)
    g = state.scene.collider.gap(fp, cap=0.05, candidates=cand)
    for o in others:
        d = geo.convex_gap(fp, o)
        if d < g:
            g = d
    return g


def _move(state: SimState, i: int, u_lin: float, u_ang: float) -> None:
    cfg = state.config
    spec = state.scene.robot
    r = state.robots[i]
    v = u_lin * spec.max_lin_vel
    w = u_ang * spec.max_ang_vel
    x, y, th = r.pose
    x_start, y_start, th_start = x, y, th
    if v == 0.0 and w == 0.0:
        r.lin_vel = 0.0
        r.ang_vel = 0.0
        return
    h = cfg.dt / cfg.substeps
    reach = abs(v) * cfg.dt + spec.half_diagonal + 0.1
    cand = state.scene.collider.candidates((x - reach, y - reach, x + reach, y + reach), 0.0)
    others = []
    for j, o in enumerate(state.robots):
        if j != i and math.hypot(o.pose[0] - x, o.pose[1] - y) < 2 * reach:
            others.append(spec.footprint(o.pose))
    g_now = _footprint_gap(state, i, (x, y, th), cand, others)
    floor = min(0.0, g_now) - 1e-12
    for _ in range(cfg.substeps):
        mid = th + 0.5 * w * h
        dx, dy, dth = v * math.cos(mid) * h, v * math.sin(mid) * h, w * h
        g = _footprint_gap(state, i, (x + dx, y + dy, th + dth), cand, others)
        if g >= floor:
            x, y, th = x + dx, y + dy, th + dth
            continue
        lo, hi = 0.0, 1.0
        for _ in range(20):
            f = 0.5 * (lo + hi)
            if _footprint_gap(state, i, (x + f * dx, y + f * dy, th + f * dth), cand, others) >= floor:
                lo = f
            else:
                hi = f
        x, y, th = x + lo * dx, y + lo * dy, th + lo * dth
        break
    th = geo.wrap_angle(th)
    ddx, ddy = x - x_start, y - y_start
    dist = math.hypot(ddx, ddy)
    sign = 1.0 if ddx * math.cos(th_start) + ddy * math.sin(th_start) >= 0.0 else -1.0
    r.lin_vel = sign * dist / cfg.dt
    r.ang_vel = geo.wrap_angle(th - th_start) / cfg.dt
    r.pose = (x, y, th)


def apply_sweep(state: SimState, i: int) -> list[Event]:
    """Collect every pending sweep target whose center lies in robot ``i``'s brush strip."""
    r = state.robots[i]
    if r.mode != "sweep" or not len(state._sweep_ids):
        return []
    spec = state.scene.robot
    body = geo.world_to_body(state._sweep_xy, r.pose)
    hl = 0.5 * spec.length
    eps = 1e-9
    inside = ((body[:, 0] >= hl - eps) & (body[:, 0] <= hl + spec.brush_diameter + eps)
              & (np.abs(body[:, 1]) <= 0.5 * spec.sweep_width + eps))
    out = []
    for k in np.flatnonzero(inside):
        tid = state._sweep_ids[k]
        if state.status[tid] == "pending":
            state.status[tid] = "completed"
            ev = Event(state.tau, state.clock, "sweep_success", i, tid)
            out.append(ev)
    state.events.extend(out)
    return out


def apply_grasp(state: SimState, i: int, target_id: str | None = None) -> Event | None:
    """Advance robot ``i``'s grasp primitive by one control step.

    A request (``target_id``) starts a timer when the target is pending, within
    arm reach and the base is stationary.  The timer runs while the base stays
    still; on expiry the object is carried.  A carried object is deposited
    (``grasp_success``) inside a collection zone, or at once when the scene has
    none.  Returns the ``grasp_success`` event when one occurs.
    """
    r = state.robots[i]
    cfg = state.config
    if r.mode != "grasp":
        raise ValueError("robot is not in grasp mode")
    moving = abs(r.lin_vel) >= cfg.stationary_threshold
    if r.grasp_target is not None:
        if moving:
            r.grasp_target = None
            r.grasp_steps = 0
        else:
            r.grasp_steps -= 1
            if r.grasp_steps <= 0:
                r.carrying = r.grasp_target
                state.status[r.grasp_target] = "carried"
                r.grasp_target = None
                r.grasp_steps = 0
    elif target_id is not None:
        if r.carrying is not None:
            raise AlreadyCarrying(f"robot {i} already carries {r.carrying}")
        t = state.targets.get(target_id)
        if t is None or getattr(t, "kind", "") != "grasp":
            raise KeyError(f"unknown grasp target {target_id!r}")
        if state.status[target_id] != "pending":
            raise ValueError(f"target {target_id!r} is not pending")
        d = math.hypot(t.position[0] - r.pose[0], t.position[1] - r.pose[1])
        if d > state.scene.robot.arm_reach + 1e-12:
            raise OutOfReach(f"target {target_id!r} is {d:.3f} m away")
        if not moving:
            r.grasp_target = target_id
            r.grasp_steps = int(round(cfg.grasp_duration / cfg.dt))
    if r.carrying is not None:
        zones = state.scene.collection_zones
        if not zones or any(z.contains(r.pose[0], r.pose[1]) for z in zones):
            tid = r.carrying
            r.carrying = None
            state.status[tid] = "completed"
            state.events.append(Event(state.tau, state.clock, "deposit", i, tid))
            ev = Event(state.tau, state.clock, "grasp_success", i, tid)
            state.events.append(ev)
            return ev
    return None


def step(state: SimState, actions: Sequence[Action]) -> tuple[SimState, list[Event]]:
    """Advance ``state`` by one control step (in place)."""
    if state.terminal is not None:
        raise TerminalState(f"episode already terminated ({state.terminal})")
    if len(actions) != len(state.robots):
        raise ValueError(f"expected {len(state.robots)} actions, got {len(actions)}")
    cfg = state.config
    first = len(state.events)
    before = [r.pose for r in state.robots]
    for i, a in enumerate(actions):
        r = state.robots[i]
        if a.mode != r.mode and r.grasp_target is not None:
            r.grasp_target = None
            r.grasp_steps = 0
        r.mode = a.mode
        _move(state, i, a.nav[0], a.nav[1])
    state.tau += 1
    for i, a in enumerate(actions):
        r = state.robots[i]
        if r.mode == "sweep":
            apply_sweep(state, i)
        elif r.mode == "grasp":
            try:
                apply_grasp(state, i, a.manip)
            except (OutOfReach, AlreadyCarrying, KeyError, ValueError):
                pass
    _detect_contacts(state)
    new = state.events[first:]
    moved = any(r.pose != p for r, p in zip(state.robots, before))
    if moved or new:
        state._last_active = state.tau
    _check_termination(state)
    return state, state.events[first:]


def _detect_contacts(state: SimState) -> None:
    spec = state.scene.robot
    tol = state.config.contact_tolerance
    fps = [spec.footprint(r.pose) for r in state.robots]
    movers = state.mover_polygons()
    col = state.scene.collider
    for i, fp in enumerate(fps):
        hit = col.gap(fp, cap=tol) < tol or col.touches_restricted(fp)
        if not hit:
            for j, other in enumerate(fps):
                if j != i and geo.convex_gap(fp, other) < tol:
                    hit = True
                    break
        if hit:
            state.collisions += 1
            state.events.append(Event(state.tau, state.clock, "collision", i))
        if any(geo.convex_gap(fp, m) < tol for m in movers):
            state.events.append(Event(state.tau, state.clock, "mover_contact", i))


def _check_termination(state: SimState) -> None:
    cfg = state.config
    cause = None
    if state.all_done():
        cause = "completed"
    elif state.collisions >= cfg.collision_limit:
        cause = "collision_limit"
    elif cfg.idle_timeout is not None and (state.tau - state._last_active) * cfg.dt >= cfg.idle_timeout - 1e-9:
        cause = "policy_idle"
    elif state.clock >= cfg.time_budget - 1e-9:
        cause = "timeout"
    if cause is not None:
        state.terminal = cause
        state.events.append(Event(state.tau, state.clock, cause, 0))


# --- observations -------------------------------------------------------------

@dataclass(frozen=True)
class TargetInfo:
    id: str
    kind: str
    position: Point
    status: str
    elevation: str = "floor"


@dataclass(frozen=True)
class LocalGrid:
    """Patch of the occupancy grid as seen from the robot.

    ``values[ix, iy]`` is -1 (unseen), 0 (free) or 1 (occupied) for the cell
    ``(offset[0] + ix, offset[1] + iy)`` of the scene grid.
    """

    offset: tuple[int, int]
    values: np.ndarray
    resolution: float
    origin: Point


class Observation:
    """Idealised observation of one robot.

    Cheap channels are filled eagerly; ray-cast channels (``visible_objects``,
    ``local_grid``) are computed on first access from a snapshot of the pose.
    """

    def __init__(self, state: SimState, i: int):
        r = state.robots[i]
        self.robot_index = i
        self.step = state.tau
        self.clock = state.clock
        self.pose = r.pose
        self.lin_vel = r.lin_vel
        self.ang_vel = r.ang_vel
        self.mode = r.mode
        self.carrying = r.carrying
        self.grasp_active = r.grasp_target is not None
        self.grasp_timer = r.grasp_timer
        self.scene = state.scene
        self.teammates = tuple(o.pose for j, o in enumerate(state.robots) if j != i)
        x, y, th = r.pose
        prop = [x, y, math.sin(th), math.cos(th), r.lin_vel, r.ang_vel]
        for k in range(2):
            prop.extend(self.teammates[k] if k < len(self.teammates) else (0.0, 0.0, 0.0))
        self.proprioception = tuple(prop)
        infos = [TargetInfo(t.id, "sweep", t.position, state.status[t.id]) for t in state.scene.sweep_targets]
        infos += [TargetInfo(t.id, "grasp", t.position, state.status[t.id], t.elevation_tag)
                  for t in state.scene.grasp_targets]
        self.task_status = tuple(infos)
        rng = state.scene.robot.sensor_range
        self.movers = tuple((m.id, m.position_at(state.clock), m.size) for m in state.scene.movers
                            if math.dist(m.position_at(state.clock), (x, y)) <= rng)

    @cached_property
    def visible_objects(self) -> tuple[str, ...]:
        x, y, _ = self.pose
        rng = self.scene.robot.sensor_range
        polys = self.scene.collider.polys
        out = []
        for t in self.task_status:
            if math.dist(t.position, (x, y)) > rng:
                continue
            blocked = False
            for poly in polys:
                if t.elevation == "surface" and geo.point_in_convex(t.position[0], t.position[1], poly):
                    continue
                if geo.segment_hits_convex((x, y), t.position, poly):
                    blocked = True
                    break
            if not blocked:
                out.append(t.id)
        return tuple(out)

    @cached_property
    def local_grid(self) -> LocalGrid:
        return visible_cells(self.scene, self.pose, self.scene.robot.sensor_range)


def visible_cells(scene: SceneSpec, pose: Pose, sensor_range: float, resolution: float = 0.1) -> LocalGrid:
    """Line-of-sight visibility of grid cells from ``pose`` within ``sensor_range``."""
    grid = scene.grid(resolution)
    free = grid.free
    nx, ny = free.shape
    r = grid.resolution
    x, y = pose[0], pose[1]
    k = int(math.ceil(sensor_range / r)) + 1
    cx, cy = grid.cell_of(x, y)
    i0, i1 = max(0, cx - k), min(nx, cx + k + 1)
    j0, j1 = max(0, cy - k), min(ny, cy + k + 1)
    I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    X = grid.origin[0] + (I + 0.5) * r
    Y = grid.origin[1] + (J + 0.5) * r
    D = np.hypot(X - x, Y - y)
    in_range = D <= sensor_range
    n_samples = int(math.ceil(sensor_range / (0.5 * r))) + 1
    seen = np.zeros(I.shape, dtype=bool)
    idx = np.flatnonzero(in_range.ravel())
    if len(idx):
        tx, ty, td = X.ravel()[idx], Y.ravel()[idx], D.ravel()[idx]
        ti, tj = I.ravel()[idx], J.ravel()[idx]
        s = np.linspace(0.0, 1.0, n_samples)[None, :]
        sx = x + (tx[:, None] - x) * s
        sy = y + (ty[:, None] - y) * s
        si = np.clip(np.floor((sx - grid.origin[0]) / r).astype(int), 0, nx - 1)
        sj = np.clip(np.floor((sy - grid.origin[1]) / r).astype(int), 0, ny - 1)
        own = (si == ti[:, None]) & (sj == tj[:, None])
        # only samples along the ray before reaching the target distance block it
        along = s * td[:, None]
        blocking = (~free[si, sj]) & ~own & (along < td[:, None])
        seen_flat = ~blocking.any(axis=1)
        seen.ravel()[idx] = seen_flat
    values = np.full(I.shape, -1, dtype=np.int8)
    sub_free = free[i0:i1, j0:j1]
    values[seen & sub_free] = 0
    values[seen & ~sub_free] = 1
    return LocalGrid((i0, j0), values, r, grid.origin)


def sense(state: SimState, i: int) -> Observation:
    if not 0 <= i < len(state.robots):
        raise IndexError(f"no robot {i}")
    return Observation(state, i)
