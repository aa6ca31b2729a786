"""Waypoint tracking and path following with local avoidance of moving things."""
from __future__ import annotations

import math
from collections import deque
from typing import NamedTuple, Sequence

import numpy as np

from .. import geometry as geo
from ..geometry import AABB, Point, Pose
from ..world import RobotSpec, SceneSpec
from .planning import (SEGMENT_CLEARANCE, PlanningGrid, astar_path, bfs_field, simplify_collinear, smooth_path,
                       tree_path)

ALIGN_TOL = 0.02        # rad; rotate in place above this heading error
ARRIVE_TOL = 0.005      # m
LOOKAHEAD = 1.0         # m of path checked against moving hazards
HAZARD_MARGIN = 0.1
REPLAN_COOLDOWN = 10    # control steps between detour attempts
FILLET_RADIUS = 0.25    # half the lane pitch: a lane-to-lane U-turn becomes one semicircle
FILLET_MIN_TURN = 0.2   # rad; gentler corners are taken by the tracker directly
FILLET_MAX_TURN = 0.5 * math.pi + 0.05
ARC_SAMPLE = 0.02       # m between clearance checks along an arc
REFUGE_DISTANCE = 1.2   # m a yielding robot keeps from the robot it gives way to
REFUGE_LANE = 0.8       # m kept from the straight line ahead of that robot


def track(spec: RobotSpec, dt: float, pose: Pose, target: Point) -> tuple[float, float]:
    """Turn toward ``target`` in place, then drive straight onto it.

    Commands are sized so a reachable heading or waypoint is hit exactly
    within one control step instead of overshooting.
    """
    dx, dy = target[0] - pose[0], target[1] - pose[1]
    d = math.hypot(dx, dy)
    if d <= ARRIVE_TOL:
        return 0.0, 0.0
    e = geo.wrap_angle(math.atan2(dy, dx) - pose[2])
    w = max(-1.0, min(1.0, e / (spec.max_ang_vel * dt)))
    if abs(e) > ALIGN_TOL:
        return 0.0, w
    return min(1.0, d / (spec.max_lin_vel * dt)), w


def turn_to(spec: RobotSpec, dt: float, pose: Pose, heading: float) -> tuple[float, float, bool]:
    e = geo.wrap_angle(heading - pose[2])
    if abs(e) <= 1e-3:
        return 0.0, 0.0, True
    return 0.0, max(-1.0, min(1.0, e / (spec.max_ang_vel * dt))), False


def box_polygon(box: AABB):
    return geo.rect_polygon(*box)


class Arc(NamedTuple):
    """Constant-curvature leg ending at ``end`` with heading ``heading``."""

    center: Point
    radius: float
    direction: int      # +1 counter-clockwise, -1 clockwise
    end: Point
    heading: float


def _xy(wp) -> Point:
    return wp.end if isinstance(wp, Arc) else wp


def fillet(scene: SceneSpec, here: Point, corner: Point, after: Point,
           radius: float = FILLET_RADIUS) -> tuple[Point, Arc] | None:
    """Replace the corner ``here -> corner -> after`` by a tangent arc.

    Returns the tangent point on the incoming leg and the arc, or None when
    the turn is too gentle or too sharp, a leg is too short, or the arc's
    center path loses planning clearance.
    """
    d1 = (corner[0] - here[0], corner[1] - here[1])
    d2 = (after[0] - corner[0], after[1] - corner[1])
    l1, l2 = math.hypot(*d1), math.hypot(*d2)
    if l1 < 1e-9 or l2 < 1e-9:
        return None
    h1, h2 = math.atan2(d1[1], d1[0]), math.atan2(d2[1], d2[0])
    turn = geo.wrap_angle(h2 - h1)
    if not FILLET_MIN_TURN <= abs(turn) <= FILLET_MAX_TURN:
        return None
    t = radius * math.tan(0.5 * abs(turn))
    if l1 < t + ARRIVE_TOL or l2 < t - 1e-9:
        return None
    u1 = (d1[0] / l1, d1[1] / l1)
    u2 = (d2[0] / l2, d2[1] / l2)
    start = (corner[0] - t * u1[0], corner[1] - t * u1[1])
    end = (corner[0] + t * u2[0], corner[1] + t * u2[1])
    sgn = 1 if turn > 0 else -1
    center = (start[0] - sgn * radius * u1[1], start[1] + sgn * radius * u1[0])
    n = max(2, int(math.ceil(abs(turn) * radius / ARC_SAMPLE)) + 1)
    a0 = math.atan2(start[1] - center[1], start[0] - center[0])
    ang = a0 + sgn * np.linspace(0.0, abs(turn), n)
    pts = np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])
    if scene.collider.clearance(pts, include_restricted=True).min() < SEGMENT_CLEARANCE:
        return None
    return start, Arc(center, radius, sgn, end, h2)


class Navigator:
    """Follows a queue of waypoints planned on a :class:`PlanningGrid`."""

    def __init__(self, scene: SceneSpec, plan: PlanningGrid, dt: float = 0.1,
                 connectivity: int = 4, heuristic: str | None = None):
        self.scene = scene
        self.plan = plan
        self.spec = scene.robot
        self.dt = dt
        self.connectivity = connectivity
        self.heuristic = heuristic
        self.queue: deque[Point] = deque()
        self.cooldown = 0
        self.waiting = 0
        self._tried = None

    @property
    def idle(self) -> bool:
        return not self.queue

    def clear(self) -> None:
        self.queue.clear()

    def follow(self, points: Sequence[Point]) -> None:
        self.queue.extend(tuple(p) for p in points)

    def _tail(self, pose: Pose) -> Point:
        return _xy(self.queue[-1]) if self.queue else (pose[0], pose[1])

    def waypoints(self) -> list[Point]:
        return [_xy(wp) for wp in self.queue]

    def plan_to(self, pose: Pose, goal: tuple[int, int], mask: np.ndarray | None = None) -> bool:
        """Append a collision-free route from the end of the queue to ``goal`` cell."""
        start_xy = self._tail(pose)
        goal_xy = self.plan.center(*goal)
        col = self.scene.collider
        if math.dist(start_xy, goal_xy) <= ARRIVE_TOL:
            return True
        if col.segment_clearance(start_xy, goal_xy, cap=SEGMENT_CLEARANCE + 0.01) >= SEGMENT_CLEARANCE:
            self.queue.append(goal_xy)
            return True
        m = self.plan.navigable if mask is None else mask
        start = self.plan.nearest_cell(*start_xy, mask=m)
        if start is None:
            return False
        path = astar_path(m, start, goal, self.connectivity, self.heuristic)
        if path is None:
            return False
        pts = [start_xy] + [self.plan.center(*c) for c in path[1:]]
        self.queue.extend(smooth_path(self.scene, pts)[1:])
        return True

    def _blocked(self, pose: Pose, hazards: Sequence[AABB]) -> bool:
        if not hazards or not self.queue:
            return False
        pts = [(pose[0], pose[1])]
        left = LOOKAHEAD
        for q in self.waypoints():
            seg = math.dist(pts[-1], q)
            if seg >= left:
                t = left / seg if seg > 0 else 0.0
                pts.append((pts[-1][0] + t * (q[0] - pts[-1][0]), pts[-1][1] + t * (q[1] - pts[-1][1])))
                break
            pts.append(q)
            left -= seg
        limit = self.spec.half_diagonal + HAZARD_MARGIN
        for box in hazards:
            poly = box_polygon(box)
            for a, b in zip(pts[:-1], pts[1:]):
                if geo.convex_gap((a, b), poly) < limit:
                    return True
        return False

    def _detour(self, pose: Pose, hazards: Sequence[AABB]) -> bool:
        plan = self.plan
        mask = self._free_mask(hazards)
        start = plan.nearest_cell(pose[0], pose[1])
        if start is None:
            return False
        mask[start] = True
        q = self.waypoints()
        for k, wp in enumerate(q):
            goal = plan.cell_of(*wp)
            if not plan.in_bounds(*goal) or not mask[goal]:
                continue
            path = astar_path(mask, start, goal, 8)
            if path is None:
                return False
            pts = simplify_collinear([plan.center(*c) for c in path])
            self.queue = deque(pts[1:] + q[k:])
            return True
        return False

    def _round_corner(self, pose: Pose) -> None:
        """Fillet the corner at the head of the queue once the next leg is known."""
        if len(self.queue) < 2 or isinstance(self.queue[0], Arc) or isinstance(self.queue[1], Arc):
            return
        key = (self.queue[0], self.queue[1])
        if key == self._tried:
            return
        self._tried = key
        f = fillet(self.scene, (pose[0], pose[1]), self.queue[0], self.queue[1])
        if f is not None:
            start, arc = f
            self.queue.popleft()
            self.queue.appendleft(arc)
            self.queue.appendleft(start)

    def _arc(self, pose: Pose, arc: Arc) -> tuple[float, float] | None:
        """Commands along ``arc``; None once it is finished or no longer applies."""
        e = arc.direction * geo.wrap_angle(arc.heading - pose[2])
        if e <= 1e-3:
            return None
        off = math.dist((pose[0], pose[1]), arc.center) - arc.radius
        if abs(off) > 0.03 or e > math.pi:
            return None
        w = min(self.spec.max_ang_vel, e / self.dt)
        u = w * arc.radius / self.spec.max_lin_vel
        if u > 1.0:
            w /= u
            u = 1.0
        return u, arc.direction * w / self.spec.max_ang_vel

    def _free_mask(self, hazards: Sequence[AABB]) -> np.ndarray:
        C = self.plan.centers()
        mask = self.plan.navigable.copy()
        keep_out = self.spec.half_diagonal + HAZARD_MARGIN + 0.05
        for x0, y0, x1, y1 in hazards:
            dx = np.maximum(np.maximum(x0 - C[..., 0], C[..., 0] - x1), 0.0)
            dy = np.maximum(np.maximum(y0 - C[..., 1], C[..., 1] - y1), 0.0)
            mask &= np.hypot(dx, dy) >= keep_out
        return mask

    def retreat(self, pose: Pose, hazards: Sequence[AABB], leaders: Sequence[Pose],
                come_back: bool = True) -> bool:
        """Give way: go to the nearest cell clear of the leaders' way, then come back.

        A refuge keeps ``REFUGE_DISTANCE`` from every leader and
        ``REFUGE_LANE`` from the ray ahead of each leader.  The robot returns
        along the same cells and then resumes its queue.
        """
        plan = self.plan
        start = plan.nearest_cell(pose[0], pose[1])
        if start is None:
            return False
        mask = self._free_mask(hazards)
        mask[start] = True
        dist, parent = bfs_field(mask, start)
        C = plan.centers()
        ok = dist >= 0
        for lx, ly, lth in leaders:
            ok &= np.hypot(C[..., 0] - lx, C[..., 1] - ly) >= REFUGE_DISTANCE
            ux, uy = math.cos(lth), math.sin(lth)
            along = np.clip((C[..., 0] - lx) * ux + (C[..., 1] - ly) * uy, 0.0, 3.0)
            ok &= np.hypot(C[..., 0] - (lx + along * ux), C[..., 1] - (ly + along * uy)) >= REFUGE_LANE
        if not ok.any():
            return False
        d = np.where(ok, dist, np.iinfo(np.int64).max).ravel()
        goal = divmod(int(np.argmin(d)), plan.shape[1])
        cells = tree_path(parent, goal, plan.shape[1])
        out = simplify_collinear([(pose[0], pose[1])] + [plan.center(*c) for c in cells[1:]])
        back = simplify_collinear(out[::-1])[1:] if come_back else []
        self.queue = deque(out[1:] + back + self.waypoints())
        self._tried = None
        self.waiting = 0
        return True

    def command(self, pose: Pose, hazards: Sequence[AABB] = ()) -> tuple[float, float]:
        while self.queue:
            head = self.queue[0]
            if isinstance(head, Arc):
                if self._arc(pose, head) is not None:
                    break
                self.queue.popleft()
                if math.dist((pose[0], pose[1]), head.end) > ARRIVE_TOL:
                    self.queue.appendleft(head.end)
                    break
            elif math.dist((pose[0], pose[1]), head) <= ARRIVE_TOL:
                self.queue.popleft()
            else:
                break
        if not self.queue:
            return 0.0, 0.0
        if self.cooldown > 0:
            self.cooldown -= 1
        if self._blocked(pose, hazards):
            if self.cooldown == 0:
                self.cooldown = REPLAN_COOLDOWN
                if self._detour(pose, hazards) and not self._blocked(pose, hazards):
                    return track(self.spec, self.dt, pose, self.queue[0])
            self.waiting += 1
            return 0.0, 0.0
        self.waiting = 0
        self._round_corner(pose)
        head = self.queue[0]
        if isinstance(head, Arc):
            return self._arc(pose, head)
        return track(self.spec, self.dt, pose, head)
