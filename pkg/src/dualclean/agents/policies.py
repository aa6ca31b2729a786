"""Baseline policies behind one interface: ``reset(scene, ...)`` then ``act(obs)``.

Coverage baselines sweep the whole time.  ``vertical`` / ``horizontal`` run
boustrophedon lanes; ``manhattan`` / ``chebyshev`` greedily visit the nearest
unvisited node of a lane-pitch lattice under their distance metric.
``frontier`` explores from its own sensed map only.  ``dual`` first fetches
every grasp target (nearest first) to a collection zone, then sweeps with the
horizontal lane plan and finally picks off any sweep target it missed.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from ..geometry import AABB, Pose
from ..sim import Action, Observation
from ..world import SceneSpec
from .control import Navigator, turn_to
from .planning import (LANE_PITCH, PlanningGrid, bfs_field, grasp_approach_cells, lane_runs, lattice_nodes,
                       nearest_unvisited, order_runs, planning_grid, simplify_collinear, sweep_standoff_cells,
                       tree_path)

COVERAGE_VARIANTS = ("manhattan", "chebyshev", "vertical", "horizontal")
GRASP_MARGIN = 0.05
TEAMMATE_HALF = 0.32
RETREAT_AFTER = 20      # control steps stuck before giving way
YIELD_RANGE = 2.0


class Policy:
    """Uniform policy interface."""

    name = "policy"
    sweep_only = True

    def reset(self, scene: SceneSpec, seed: int = 0, robot: int = 0,
              regions: Sequence[np.ndarray] | None = None, dt: float = 0.1) -> None:
        self.scene = scene
        self.seed = seed
        self.robot = robot
        self.dt = dt
        self.rng = np.random.default_rng(seed)
        self.regions = regions
        self.plan = planning_grid(scene)
        self.region = (self.plan.navigable & regions[robot]) if regions is not None else self.plan.navigable

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError

    def hazards(self, obs: Observation) -> tuple[list[AABB], list[Pose]]:
        """Boxes to route around and the poses of nearby teammates with priority.

        Every teammate is avoided.  Ties are broken by index: a lower index has
        priority, and a robot that is stuck next to a priority teammate gives
        way (see :meth:`drive`).
        """
        out = []
        for _, (x, y), (w, h) in obs.movers:
            out.append((x - w / 2, y - h / 2, x + w / 2, y + h / 2))
        leaders = []
        still = getattr(self, "_still", {})
        last = getattr(self, "_last_seen", {})
        fresh = getattr(self, "_seen_step", None) != obs.step
        self._seen_step = obs.step
        for k, pose in enumerate(obs.teammates):
            j = k if k < self.robot else k + 1
            if fresh:
                still[j] = still.get(j, 0) + 1 if last.get(j) == pose else 0
                last[j] = pose
            x, y = pose[0], pose[1]
            out.append((x - TEAMMATE_HALF, y - TEAMMATE_HALF, x + TEAMMATE_HALF, y + TEAMMATE_HALF))
            if j < self.robot and math.dist((x, y), obs.pose[:2]) < YIELD_RANGE:
                leaders.append((pose, still[j]))
        self._still, self._last_seen = still, last
        return out, leaders

    def drive(self, obs: Observation, nav: Navigator) -> tuple[float, float]:
        """Navigator command; after waiting too long beside a priority teammate, give way."""
        hz, leaders = self.hazards(obs)
        u = nav.command(obs.pose, hz)
        if nav.waiting > RETREAT_AFTER and leaders:
            if nav.retreat(obs.pose, hz, [p for p, _ in leaders]):
                u = nav.command(obs.pose, hz)
        return u

    def park(self, obs: Observation, nav: Navigator) -> tuple[float, float]:
        """Command for a robot with nothing left to do: stay, unless a priority
        teammate has been stuck beside it, then move out of the way."""
        hz, leaders = self.hazards(obs)
        if nav.idle and any(n >= RETREAT_AFTER for _, n in leaders):
            nav.retreat(obs.pose, hz, [p for p, _ in leaders], come_back=False)
        return nav.command(obs.pose, hz) if not nav.idle else (0.0, 0.0)

    def owner_of(self, cells: np.ndarray) -> bool:
        """Whether this robot's region holds the lowest-index cell of ``cells`` (flat indices)."""
        if self.regions is None or not len(cells):
            return True
        ny = self.plan.shape[1]
        for k in np.sort(cells):
            c = divmod(int(k), ny)
            for j, reg in enumerate(self.regions):
                if reg[c]:
                    return j == self.robot
        return False


class IdlePolicy(Policy):
    name = "idle"

    def act(self, obs: Observation) -> Action:
        return Action("navigate", (0.0, 0.0))


class CoveragePolicy(Policy):
    """Sweep-only systematic coverage."""

    def __init__(self, variant: str = "vertical", pitch: float = LANE_PITCH):
        if variant not in COVERAGE_VARIANTS:
            raise ValueError(f"unknown coverage variant {variant!r}")
        self.variant = variant
        self.name = variant
        self.pitch = pitch

    def reset(self, scene, seed=0, robot=0, regions=None, dt=0.1):
        super().reset(scene, seed, robot, regions, dt)
        conn = 8 if self.variant == "chebyshev" else 4
        self.nav = Navigator(scene, self.plan, dt, connectivity=conn)
        self.started = False
        self.finished = False
        self.exhausted = False
        self.goals: list = []
        self.nodes: set = set()
        self.current = None
        if not self.region.any():
            self.finished = True
            return
        if self.variant in ("vertical", "horizontal"):
            self.runs = lane_runs(self.plan, self.variant, self.pitch, mask=self.region)
        else:
            step = max(1, int(round(self.pitch / self.plan.resolution)))
            self.nodes = set(lattice_nodes(self.region, step))

    def _next_goal(self, pose: Pose) -> bool:
        plan = self.plan
        if self.variant in ("vertical", "horizontal"):
            while self.goals:
                run, rev = self.goals.pop(0)
                a, b = (run.end, run.start) if rev else (run.start, run.end)
                if self.nav.plan_to(pose, a, self.plan.navigable):
                    self.nav.follow([plan.center(*b)])
                    return True
            return False
        metric = self.variant
        while self.nodes:
            nxt = nearest_unvisited(self.current, self.nodes, metric)
            self.nodes.discard(nxt)
            self.current = nxt
            if self.nav.plan_to(pose, nxt):
                return True
        return False

    def _mark_passed(self, pose: Pose) -> None:
        if not self.nodes:
            return
        c = self.plan.cell_of(pose[0], pose[1])
        if c in self.nodes and math.dist(self.plan.center(*c), pose[:2]) <= 0.1:
            self.nodes.discard(c)

    def act(self, obs: Observation) -> Action:
        pose = obs.pose
        if self.finished:
            return Action("sweep", self.park(obs, self.nav))
        if not self.started:
            self.started = True
            if self.variant in ("vertical", "horizontal"):
                self.goals = order_runs(self.runs, pose[:2], self.plan.center)
            else:
                self.current = self.plan.nearest_cell(pose[0], pose[1]) or (0, 0)
        self._mark_passed(pose)
        # plan one leg ahead so the navigator can round the corner between legs
        if not self.exhausted and len(self.nav.queue) <= 1 and not self._next_goal(pose):
            self.exhausted = True
        if self.nav.idle:
            self.finished = True
            return Action("sweep", self.park(obs, self.nav))
        u = self.drive(obs, self.nav)
        return Action("sweep", u)


class FrontierPolicy(Policy):
    """Nearest-frontier exploration over a map built from its own observations.

    The static geometry of the scene is never consulted; traversable cells
    are known-free cells whose center keeps ``inflation`` from any cell that
    is occupied, unknown or outside the bounds.
    """

    name = "frontier"
    inflation = 0.55
    view_radius = 0.8
    refresh_every = 25

    def reset(self, scene, seed=0, robot=0, regions=None, dt=0.1):
        super().reset(scene, seed, robot, regions, dt)
        shape = scene.grid().shape
        self.known = np.full(shape, -1, dtype=np.int8)
        self.nav = Navigator(scene, self.plan, dt)
        self.since_refresh = 0
        self.goal = None
        self.blacklist = np.zeros(shape, dtype=bool)
        self.done = False

    def integrate(self, obs: Observation) -> None:
        lg = obs.local_grid
        i0, j0 = lg.offset
        w, h = lg.values.shape
        sub = self.known[i0:i0 + w, j0:j0 + h]
        seen = lg.values >= 0
        sub[seen] = lg.values[seen]

    def traversable(self) -> np.ndarray:
        blocked = np.pad(self.known != 0, 1, constant_values=True)
        dist = ndimage.distance_transform_edt(~blocked) * self.scene.grid().resolution
        return (self.known == 0) & (dist[1:-1, 1:-1] >= self.inflation)

    def frontiers(self) -> np.ndarray:
        free = self.known == 0
        unknown = np.pad(self.known < 0, 1, constant_values=False)
        adj = unknown[:-2, 1:-1] | unknown[2:, 1:-1] | unknown[1:-1, :-2] | unknown[1:-1, 2:]
        return free & adj & ~self.blacklist

    def _select(self, pose: Pose):
        trav = self.traversable()
        front = self.frontiers()
        if not front.any():
            return None, None
        r = self.scene.grid().resolution
        near = ndimage.distance_transform_edt(~front) * r <= self.view_radius
        cand = trav & near
        start = self.plan.nearest_cell(pose[0], pose[1], mask=trav) if trav.any() else None
        if start is None:
            return None, None
        dist, parent = bfs_field(trav, start)
        ok = cand & (dist >= 0)
        if not ok.any():
            return None, None
        d = np.where(ok, dist, np.iinfo(np.int64).max).ravel()
        k = int(np.argmin(d))          # argmin returns the lowest index among ties
        goal = divmod(k, trav.shape[1])
        return goal, tree_path(parent, goal, trav.shape[1])

    def _start_leg(self, pose: Pose) -> None:
        self.nav.clear()
        goal, path = self._select(pose)
        if goal is None:
            self.done = True
            return
        grid = self.scene.grid()
        pts = [grid.center(*c) for c in path[1:]]
        self.nav.follow(simplify_collinear([pose[:2]] + pts)[1:])
        self.goal = goal

    def act(self, obs: Observation) -> Action:
        pose = obs.pose
        if self.done:
            return Action("sweep", self.park(obs, self.nav))
        self.since_refresh += 1
        if self.goal is None or self.nav.idle or self.since_refresh >= self.refresh_every:
            self.integrate(obs)
            self.since_refresh = 0
            if self.goal is not None and self.nav.idle:
                # arrived: whatever frontier is still in view cannot be resolved from here
                r = self.scene.grid().resolution
                gx, gy = self.goal
                k = int(math.ceil(self.view_radius / r))
                sl = (slice(max(0, gx - k), gx + k + 1), slice(max(0, gy - k), gy + k + 1))
                self.blacklist[sl] |= self.frontiers()[sl]
            if self.goal is None or self.nav.idle or not self.frontiers()[self.goal_view()].any():
                self._start_leg(pose)
                if self.done:
                    return Action("sweep", self.park(obs, self.nav))
        u = self.drive(obs, self.nav)
        return Action("sweep", u)

    def goal_view(self):
        r = self.scene.grid().resolution
        gx, gy = self.goal
        k = int(math.ceil(self.view_radius / r))
        return (slice(max(0, gx - k), gx + k + 1), slice(max(0, gy - k), gy + k + 1))


class DualModePolicy(Policy):
    """Scripted reference agent using both modes."""

    name = "dual"
    sweep_only = False

    def reset(self, scene, seed=0, robot=0, regions=None, dt=0.1):
        super().reset(scene, seed, robot, regions, dt)
        self.nav = Navigator(scene, self.plan, dt)
        self.sweeper = CoveragePolicy("horizontal")
        self.sweeper.reset(scene, seed, robot, regions, dt)
        reach = scene.robot.arm_reach - GRASP_MARGIN
        self.approach = {}
        for t in scene.grasp_targets:
            cells = grasp_approach_cells(self.plan, t.position, reach)
            if self.owner_of(cells):
                self.approach[t.id] = cells
        self.standoff = {}
        for t in scene.sweep_targets:
            cells = sweep_standoff_cells(self.plan, t.position)
            if self.owner_of(cells):
                self.standoff[t.id] = cells
        self.positions = {t.id: t.position for t in scene.sweep_targets + scene.grasp_targets}
        C = self.plan.centers().reshape(-1, 2)
        zone_cells = np.zeros(self.plan.shape, dtype=bool).ravel()
        for z in scene.collection_zones:
            x0, y0, x1, y1 = z.region
            zone_cells |= (C[:, 0] >= x0 + 0.02) & (C[:, 0] <= x1 - 0.02) & (C[:, 1] >= y0 + 0.02) & (C[:, 1] <= y1 - 0.02)
        self.zone_cells = np.flatnonzero(zone_cells & self.plan.navigable.ravel())
        self.has_zones = bool(scene.collection_zones)
        self.skipped: set[str] = set()
        self.phase = "grasp"
        self.state = "select"
        self.target = None
        self.tries = 0

    def _cell(self, pose: Pose):
        return self.plan.nearest_cell(pose[0], pose[1])

    def _best(self, pose: Pose, options: dict[str, np.ndarray]):
        """(target id, goal cell) with the lowest BFS cost; ties to the earlier target."""
        start = self._cell(pose)
        if start is None:
            return None, None
        dist, _ = bfs_field(self.plan.navigable, start)
        flat = dist.ravel()
        best = None
        for tid, cells in options.items():
            if not len(cells):
                continue
            d = flat[cells]
            ok = d >= 0
            if not ok.any():
                continue
            k = int(cells[ok][np.argmin(d[ok])])
            cost = int(flat[k])
            if best is None or cost < best[0]:
                best = (cost, tid, divmod(k, self.plan.shape[1]))
        if best is None:
            return None, None
        return best[1], best[2]

    def _status(self, obs: Observation) -> dict[str, str]:
        return {t.id: t.status for t in obs.task_status}

    def _grasp_phase(self, obs: Observation) -> Action | None:
        pose = obs.pose
        status = self._status(obs)
        if self.state == "select":
            pending = {tid: c for tid, c in self.approach.items()
                       if status.get(tid) == "pending" and tid not in self.skipped}
            if self.has_zones and not len(self.zone_cells):
                pending = {}
            tid, goal = self._best(pose, pending)
            if tid is None:
                self.skipped.update(pending)
                return None
            self.nav.clear()
            if not self.nav.plan_to(pose, goal):
                self.skipped.add(tid)
                return Action("sweep", (0.0, 0.0))
            self.target, self.state, self.tries = tid, "approach", 0
        if self.state == "approach":
            if not self.nav.idle:
                return Action("sweep", self.drive(obs, self.nav))
            self.state = "grasp"
        if self.state == "grasp":
            if obs.carrying == self.target or status.get(self.target) == "completed":
                self.state = "deliver" if status.get(self.target) != "completed" else "select"
                if self.state == "deliver":
                    zones = {"zone": self.zone_cells}
                    _, goal = self._best(pose, zones)
                    if goal is None or not self.nav.plan_to(pose, goal):
                        self.state = "stuck"
                return self._grasp_phase(obs) if self.state == "select" else Action("grasp", (0.0, 0.0))
            if obs.grasp_active:
                return Action("grasp", (0.0, 0.0), None)
            self.tries += 1
            if self.tries > 3:
                self.skipped.add(self.target)
                self.state = "select"
                return Action("grasp", (0.0, 0.0))
            return Action("grasp", (0.0, 0.0), self.target)
        if self.state == "deliver":
            if status.get(self.target) == "completed":
                self.state = "select"
                return self._grasp_phase(obs)
            if self.nav.idle:
                return Action("grasp", (0.0, 0.0))
            return Action("grasp", self.drive(obs, self.nav))
        # stuck holding an object with no reachable zone
        return Action("grasp", (0.0, 0.0))

    def _mop_up(self, obs: Observation) -> Action:
        pose = obs.pose
        status = self._status(obs)
        if self.state == "mop_select":
            pending = {tid: c for tid, c in self.standoff.items()
                       if status.get(tid) == "pending" and tid not in self.skipped}
            tid, goal = self._best(pose, pending)
            if tid is None:
                self.state = "done"
                return Action("sweep", self.park(obs, self.nav))
            self.nav.clear()
            if not self.nav.plan_to(pose, goal):
                self.skipped.add(tid)
                return Action("sweep", (0.0, 0.0))
            self.target, self.state = tid, "mop_go"
        if self.state == "mop_go":
            if status.get(self.target) != "pending":
                self.nav.clear()
                self.state = "mop_select"
                return self._mop_up(obs)
            if not self.nav.idle:
                return Action("sweep", self.drive(obs, self.nav))
            tx, ty = self.positions[self.target]
            u_lin, u_ang, aligned = turn_to(self.scene.robot, self.dt, pose, math.atan2(ty - pose[1], tx - pose[0]))
            if aligned:
                self.skipped.add(self.target)
                self.state = "mop_select"
                return self._mop_up(obs)
            return Action("sweep", (u_lin, u_ang))
        return Action("sweep", self.park(obs, self.nav))

    def act(self, obs: Observation) -> Action:
        if self.phase == "grasp":
            a = self._grasp_phase(obs)
            if a is not None:
                return a
            self.phase = "sweep"
            self.nav.clear()
        if self.phase == "sweep":
            if not self.sweeper.finished:
                a = self.sweeper.act(obs)
                if not self.sweeper.finished:
                    return a
            self.phase = "mop"
            self.state = "mop_select"
        return self._mop_up(obs)


_REGISTRY: dict[str, Callable[[], Policy]] = {
    "idle": IdlePolicy,
    "manhattan": lambda: CoveragePolicy("manhattan"),
    "chebyshev": lambda: CoveragePolicy("chebyshev"),
    "vertical": lambda: CoveragePolicy("vertical"),
    "horizontal": lambda: CoveragePolicy("horizontal"),
    "frontier": FrontierPolicy,
    "dual": DualModePolicy,
}
SWEEP_ONLY = ("manhattan", "chebyshev", "vertical", "horizontal", "frontier")


def policy_ids() -> list[str]:
    return sorted(_REGISTRY)


def register_policy(name: str, factory: Callable[[], Policy]) -> None:
    _REGISTRY[name] = factory


def make_policy(name: str) -> Policy:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown policy {name!r} (choose from {', '.join(policy_ids())})") from None
