"""End-to-end acceptance criteria, each with its tolerance and runtime limit.

Every test prints one ``criterion N: PASS|FAIL`` line (shown even without -s).
"""
from __future__ import annotations

import contextlib
import itertools
import math
import time

import numpy as np
import pytest

from conftest import brute_visits, footprint_contains, make_log, micro_scene
from dualclean.harness import EpisodeConfig, run_episode, spawn_poses
from dualclean.metrics import combine_tcr, coverage_ratio, kinematics, sweep_redundancy, task_completion
from dualclean.procgen import LAYOUTS, PATTERNS, GenParams, density_of, generate_scene, targets_accessible, \
    verify_connectivity
from dualclean.scenes import builtin_scene
from dualclean.sim import Action, SimConfig, SimState, step
from dualclean.trajectory import TrajectoryLog
from dualclean.world import GraspTarget, SceneSpec, SweepTarget, validate_scene

COVERAGE_POLICIES = ("manhattan", "chebyshev", "vertical", "horizontal")
SWEEP_ONLY = COVERAGE_POLICIES + ("frontier",)


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(n: int, title: str, limit_s: float):
        t0 = time.perf_counter()
        ok, detail = False, ""
        try:
            yield
            elapsed = time.perf_counter() - t0
            ok = elapsed < limit_s
            detail = f"{elapsed:.1f} s (limit {limit_s:.0f} s)"
            assert ok, f"runtime {elapsed:.1f} s exceeds {limit_s} s"
        except AssertionError as exc:
            detail = detail or str(exc).splitlines()[0]
            raise
        finally:
            with capsys.disabled():
                print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
    return run


# --- shared random trajectories for criteria 2 and 3 ----------------------------

def _random_trajectories(n: int = 50, seed: int = 2024) -> list[TrajectoryLog]:
    scene = builtin_scene(1)
    rng = np.random.default_rng(seed)
    logs = []
    for k in range(n):
        steps = int(rng.integers(20, 201))
        pose = spawn_poses(scene, 1, rng)[0]
        state = SimState(scene, [pose], SimConfig(time_budget=1e6, idle_timeout=None, collision_limit=10 ** 6))
        log = TrajectoryLog(meta={"dt": 0.1})
        log.append(0, 0.0, 0, pose, "sweep")
        u, w = 1.0, 0.0
        for t in range(1, steps + 1):
            if rng.random() < 0.15:
                u, w = float(rng.uniform(-0.3, 1.0)), float(rng.uniform(-1.0, 1.0))
            step(state, [Action("sweep", (u, w))])
            log.append(t, state.clock, 0, state.robots[0].pose, "sweep")
        logs.append(log)
    return logs


@pytest.fixture(scope="module")
def trajectories():
    return _random_trajectories()


# --- 1 -------------------------------------------------------------------------

def test_criterion_1_tcr_identity(criterion):
    with criterion(1, "TCR decomposition identity", 1.0):
        sweep = tuple(SweepTarget(f"s{k}", (0.5 + 0.8 * k, 1.0)) for k in range(10))
        grasp = tuple(GraspTarget(f"g{k}", (0.5 + 0.8 * k, 3.0)) for k in range(10))
        scene = SceneSpec("table", (0.0, 0.0, 9.0, 4.0), sweep_targets=sweep, grasp_targets=grasp,
                          spawns=((4.5, 2.0, 0.0),))

        def events(ns, ng):
            return ([(1, 0, "sweep_success", f"s{k}") for k in range(ns)]
                    + [(1, 0, "grasp_success", f"g{k}") for k in range(ng)])

        for ns, ng, expect in ((3, 0, 0.15), (5, 7, 0.60), (0, 6, 0.30)):
            tcr, s, g, _ = task_completion(events(ns, ng), scene)
            assert tcr == pytest.approx(expect, abs=1e-12)
            assert abs(tcr - (0.5 * s + 0.5 * g)) <= 1e-12
            assert combine_tcr(s, g) == pytest.approx(expect, abs=1e-12)
        rng = np.random.default_rng(1)
        for _ in range(2000):
            ns, ng = int(rng.integers(0, 11)), int(rng.integers(0, 11))
            tcr, s, g, _ = task_completion(events(ns, ng), scene)
            assert abs(tcr - (0.5 * s + 0.5 * g)) <= 1e-12
            assert (s, g) == (ns / 10, ng / 10)


# --- 2 -------------------------------------------------------------------------

def _mc_coverage(scene, grid, log: TrajectoryLog, pts: np.ndarray, nav_pt: np.ndarray, buckets) -> float:
    """Covered fraction of Monte-Carlo points lying on navigable floor."""
    order, starts, b, shape = buckets
    hit = np.zeros(len(pts), dtype=bool)
    R = scene.robot.half_diagonal
    for rec in log.records:
        i0, i1 = int((rec.x - R) / b), int((rec.x + R) / b)
        j0, j1 = int((rec.y - R) / b), int((rec.y + R) / b)
        idx = []
        for i in range(max(0, i0), min(shape[0] - 1, i1) + 1):
            lo = i * shape[1] + max(0, j0)
            hi = i * shape[1] + min(shape[1] - 1, j1)
            idx.append(order[starts[lo]:starts[hi + 1]])
        idx = np.concatenate(idx)
        hit[idx[footprint_contains(scene.robot, (rec.x, rec.y, rec.theta), pts[idx])]] = True
    return float((hit & nav_pt).sum()) / float(nav_pt.sum())


def test_criterion_2_coverage_oracle(criterion, trajectories):
    with criterion(2, "grid CR vs Monte-Carlo area oracle", 60.0):
        scene = builtin_scene(1)
        grid = scene.grid(0.1)
        rng = np.random.default_rng(7)
        x0, y0, x1, y1 = scene.bounds
        pts = np.column_stack([rng.uniform(x0, x1, 10 ** 6), rng.uniform(y0, y1, 10 ** 6)])
        # navigable floor: outside every obstacle (independent half-plane test on the rectangles)
        solid = np.zeros(len(pts), dtype=bool)
        for o in scene.obstacles:
            ox0, oy0, ox1, oy1 = o.rect
            solid |= (pts[:, 0] >= ox0) & (pts[:, 0] <= ox1) & (pts[:, 1] >= oy0) & (pts[:, 1] <= oy1)
        nav_pt = ~solid
        b = 0.25
        shape = (int(math.ceil((x1 - x0) / b)), int(math.ceil((y1 - y0) / b)))
        key = np.minimum((pts[:, 0] / b).astype(int), shape[0] - 1) * shape[1] + np.minimum(
            (pts[:, 1] / b).astype(int), shape[1] - 1)
        order = np.argsort(key, kind="stable")
        starts = np.searchsorted(key[order], np.arange(shape[0] * shape[1] + 1))
        worst = 0.0
        for log in trajectories:
            cr = coverage_ratio(log, scene, 0.1)
            mc = _mc_coverage(scene, grid, log, pts, nav_pt, (order, starts, b, shape))
            worst = max(worst, abs(cr - mc))
            assert abs(cr - mc) <= 0.02, (cr, mc)
        print(f"worst |CR - MC| = {worst:.4f}")


# --- 3 -------------------------------------------------------------------------

def test_criterion_3_sr_oracle(criterion, trajectories):
    with criterion(3, "SR vs brute-force per-cell recount", 30.0):
        scene = builtin_scene(1)
        for log in trajectories:
            for counting in ("entries", "steps"):
                nu = brute_visits(scene, log, counting)
                visited = (nu >= 1).sum()
                expect = (nu > 1).sum() / visited
                sr, flag = sweep_redundancy(log, scene, 0.1, counting)
                assert not flag
                assert sr == expect


# --- 4 -------------------------------------------------------------------------

def empty_room_with_targets() -> SceneSpec:
    sw = tuple(SweepTarget(f"s{k}", p) for k, p in enumerate([(1.5, 1.5), (4.5, 1.5), (1.5, 4.5), (4.5, 4.5)]))
    gr = tuple(GraspTarget(f"g{k}", p) for k, p in enumerate([(3.1, 3.1), (2.0, 5.0), (5.0, 2.0)]))
    return validate_scene(SceneSpec("empty", (0.0, 0.0, 6.2, 6.2), (), sweep_targets=sw, grasp_targets=gr,
                                    spawns=((0.45, 0.45, 0.0),)))


def test_criterion_4_heuristic_pattern(criterion):
    with criterion(4, "coverage heuristics: SR <= 0.05, CR >= 0.90, TCR_G = 0", 120.0):
        scene = empty_room_with_targets()
        for p in COVERAGE_POLICIES:
            r = run_episode(EpisodeConfig(scene=scene, policies=(p,), time_budget=900, spawn_mode="fixed",
                                          jitter=0, seed=0, clock="none", idle_timeout=None))
            m = r.report
            print(f"{p}: CR={m.cr:.3f} SR={m.sr:.4f} TCR_G={m.tcr_grasp}")
            assert m.sr <= 0.05, (p, m.sr)
            assert m.cr >= 0.90, (p, m.cr)
            assert m.tcr_grasp == 0.0


# --- 5 -------------------------------------------------------------------------

def test_criterion_5_dual_superiority(criterion):
    with criterion(5, "dual TCR = 1.0, sweep-only TCR <= 0.5", 60.0):
        scene = micro_scene()
        for p in ("dual",) + SWEEP_ONLY:
            r = run_episode(EpisodeConfig(scene=scene, policies=(p,), time_budget=300, spawn_mode="fixed",
                                          seed=0, clock="none"))
            print(f"{p}: TCR={r.report.tcr} ({r.termination})")
            if p == "dual":
                assert r.report.tcr == 1.0
                assert r.termination == "completed"
            else:
                assert r.report.tcr <= 0.5
                assert r.report.tcr_grasp == 0.0


# --- 6 -------------------------------------------------------------------------

def test_criterion_6_kinematics(criterion):
    with criterion(6, "kinematic metrics on synthetic trajectories", 1.0):
        dt = 0.1
        # 0.05 m per step along (3, 4)/5: exact on the log's six-decimal grid
        line = [(1.0 + 0.03 * k, 2.0 + 0.04 * k, 0.0) for k in range(60)]
        v, a, j = kinematics(make_log(line, dt), dt)
        assert v == pytest.approx(0.5, abs=1e-9)
        assert a == 0.0 and j == 0.0
        for c in (0.2, 0.8, 2.0):
            quad = [(0.5 * c * (k * dt) ** 2, 1.0, 0.0) for k in range(40)]
            _, a, j = kinematics(make_log(quad, dt), dt)
            # central second differences of a quadratic are exact up to the 1e-6 log rounding
            assert abs(a - c) <= dt * c
            assert abs(a - c) <= 4e-6 / dt ** 2


# --- 7 -------------------------------------------------------------------------

def test_criterion_7_procgen(criterion):
    with criterion(7, "100 generations: connected, accessible, density +/- 0.05", 120.0):
        bands = (0.15, 0.30, 0.45, 0.60, 0.75)
        combos = list(itertools.product(LAYOUTS, bands, PATTERNS))
        worst = 0.0
        for k in range(100):
            layout, rho, pattern = combos[k % len(combos)]
            scene = generate_scene(GenParams(layout, rho, pattern, seed=k))
            validate_scene(scene)
            grid = scene.grid(0.1)
            spawn = grid.cell_of(*scene.spawns[0][:2])
            assert verify_connectivity(grid, spawn)
            assert targets_accessible(scene) == []
            err = abs(density_of(scene) - rho)
            worst = max(worst, err)
            assert err <= 0.05, (layout, rho, pattern, k, err)
        print(f"worst density error {worst:.4f}")


# --- 8 -------------------------------------------------------------------------

def test_criterion_8_determinism(criterion):
    with criterion(8, "20 (scene, policy, seed) triples reproduce byte-identically", 120.0):
        rng = np.random.default_rng(8)
        scenes = [f"builtin:{k}" for k in range(1, 6)]
        policies = ("manhattan", "chebyshev", "vertical", "horizontal", "frontier", "dual")
        for _ in range(20):
            cfg = EpisodeConfig(scene=scenes[int(rng.integers(5))], policies=(policies[int(rng.integers(6))],),
                                seed=int(rng.integers(0, 10 ** 6)), time_budget=150.0)
            a, b = run_episode(cfg), run_episode(cfg)
            assert a.log.to_text(include_timing=False) == b.log.to_text(include_timing=False)
            ra, rb = a.report.to_record(), b.report.to_record()
            ra.pop("ct")
            rb.pop("ct")
            assert ra == rb


# --- 9 -------------------------------------------------------------------------

def test_criterion_9_astar_safety(criterion):
    with criterion(9, "planned policies on built-in static scenes: 0 collisions", 120.0):
        for k in range(1, 6):
            for p in ("manhattan", "chebyshev", "vertical", "horizontal", "frontier", "dual"):
                r = run_episode(EpisodeConfig(scene=f"builtin:{k}", policies=(p,), spawn_mode="fixed", seed=0,
                                              clock="none"))
                assert r.report.collision == 0, (k, p)


# --- 10 ------------------------------------------------------------------------

def test_criterion_10_termination(criterion):
    with criterion(10, "timeout, completed and collision_limit terminations", 30.0):
        budget = 20.0
        r = run_episode(EpisodeConfig(scene="builtin:1", policies=("idle",), time_budget=budget, idle_timeout=None,
                                      seed=0, clock="none"))
        assert r.termination == "timeout"
        assert abs(r.report.ft - budget) <= 0.1

        r = run_episode(EpisodeConfig(scene=micro_scene(), policies=("dual",), spawn_mode="fixed", seed=0,
                                      clock="none"))
        assert r.termination == "completed"
        assert r.report.tcr_sweep == 1.0 and r.report.tcr_grasp == 1.0

        for limit in (1, 7):
            r = run_episode(EpisodeConfig(scene="builtin:1", policies=("wall_driver",), collision_limit=limit,
                                          seed=3, clock="none"))
            assert r.termination == "collision_limit"
            assert r.report.collision == limit
