"""Shared scene builders and synthetic-log helpers for the test suite."""
from __future__ import annotations

import math
from collections import deque

import numpy as np
import pytest

from dualclean.agents.policies import Policy, register_policy
from dualclean.sim import Action
from dualclean.trajectory import TrajectoryLog
from dualclean.world import GraspTarget, SceneSpec, StaticObstacle, SweepTarget, TaskZone, validate_scene


def empty_room(w: float = 10.0, h: float = 10.0, spawn=(1.0, 1.0, 0.0), **kw) -> SceneSpec:
    return SceneSpec(kw.pop("id", "room"), (0.0, 0.0, w, h), spawns=(spawn,), **kw)


def micro_scene() -> SceneSpec:
    """5 x 4 m room, one box, a collection bin, 4 sweep and 2 grasp targets."""
    sweep = tuple(SweepTarget(f"s{k}", p) for k, p in enumerate([(1.0, 1.0), (4.0, 1.0), (1.0, 3.0), (4.0, 3.0)]))
    grasp = tuple(GraspTarget(f"g{k}", p) for k, p in enumerate([(2.5, 3.2), (3.5, 0.8)]))
    return validate_scene(SceneSpec(
        "micro", (0.0, 0.0, 5.0, 4.0), (StaticObstacle.from_rect("box", 2.2, 1.7, 2.8, 2.3),),
        sweep_targets=sweep, grasp_targets=grasp,
        zones=(TaskZone("bin", "collection", (0.1, 1.5, 1.1, 2.5)),), spawns=((0.6, 0.6, 0.0),)))


def make_log(poses, dt: float = 0.1, events=None, t_comp=None, robot: int = 0, log: TrajectoryLog | None = None,
             mode: str = "sweep") -> TrajectoryLog:
    """Log with one record per pose; ``events[k]`` are tokens attached to step k."""
    log = log or TrajectoryLog(meta={"dt": dt})
    for k, p in enumerate(poses):
        ev = (events or {}).get(k, ())
        tc = 0.0 if t_comp is None or k == 0 else t_comp[k]
        log.append(k, k * dt, robot, p, mode, ev, tc)
    return log


def flood_fill(free: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    """Plain BFS over 4-neighbour cell adjacency."""
    out = np.zeros_like(free, dtype=bool)
    if not free[seed]:
        return out
    q = deque([seed])
    out[seed] = True
    while q:
        i, j = q.popleft()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < free.shape[0] and 0 <= b < free.shape[1] and free[a, b] and not out[a, b]:
                out[a, b] = True
                q.append((a, b))
    return out


def footprint_contains(spec, pose, pts: np.ndarray) -> np.ndarray:
    """Points inside the rotated chassis rectangle (independent of the package code)."""
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    dx, dy = pts[:, 0] - x, pts[:, 1] - y
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= spec.length / 2 + 1e-9) & (np.abs(v) <= spec.width / 2 + 1e-9)


class WallDriver(Policy):
    """Always drives straight ahead at full speed."""

    name = "wall_driver"

    def act(self, obs):
        return Action("sweep", (1.0, 0.0))


register_policy("wall_driver", WallDriver)


@pytest.fixture
def room():
    return empty_room()


def brute_visits(scene, log: TrajectoryLog, counting: str, resolution: float = 0.1) -> np.ndarray:
    """Per-cell visit table: every cell center tested against every footprint."""
    grid = scene.grid(resolution)
    C = grid.centers().reshape(-1, 2)
    nav = grid.navigable.ravel()
    nu = np.zeros(len(C), dtype=int)
    prev = np.zeros(len(C), dtype=bool)
    steps = sorted({r.step for r in log.records})
    for s in steps:
        cur = np.zeros(len(C), dtype=bool)
        for r in log.records:
            if r.step == s:
                cur |= footprint_contains(scene.robot, (r.x, r.y, r.theta), C)
        if counting == "steps":
            nu += cur
        else:
            nu += cur & ~prev
        prev = cur
    return np.where(nav, nu, 0)
