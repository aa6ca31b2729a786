"""Episode runner, seeded randomisation and multi-run aggregation.

One episode: resolve the scene, jitter target positions, spawn the robots,
then loop sense -> timed act -> step until the simulator reports a
termination cause, and finally compile the metric report from the log.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .agents.planning import (grasp_accessible, partition_regions, planning_grid, region_mask,
                              sweep_accessible)
from .agents.policies import make_policy, policy_ids
from .errors import BenchError, ConfigError, SceneError
from .metrics import SR_COUNTING, TABLE_COLUMNS, VACUOUS_MODES, MetricConfig, MetricReport, compile_report
from .procgen import GenParams, generate_scene
from .scenes import builtin_scene
from .sim import SimConfig, SimState, sense, step
from .trajectory import SCHEMA_VERSION, TrajectoryLog
from .world import SceneSpec, check_pose, load_scene, scene_from_dict, scene_to_dict, validate_scene

STREAMS = ("spawn", "jitter", "procgen", "policy")
SPAWN_MODES = ("random", "fixed")
CLOCKS = ("perf", "none")
JITTER_RETRIES = 10
MIN_ROBOT_SEPARATION = 1.0


@dataclass
class EpisodeConfig:
    scene: Any = "builtin:1"
    policies: tuple[str, ...] = ("dual",)
    n_robots: int = 1
    time_budget: float = 300.0
    collision_limit: int = 100
    seed: int = 0
    alpha: float = 0.5
    beta: float = 0.5
    resolution: float = 0.1
    dt: float = 0.1
    spawn_mode: str = "random"
    jitter: float = 0.2
    idle_timeout: float | None = 30.0
    sr_counting: str = "entries"
    vacuous: str = "one"
    clock: str = "perf"
    label: str | None = None

    def __post_init__(self):
        if isinstance(self.policies, str):
            self.policies = (self.policies,)
        self.policies = tuple(self.policies)
        if not 1 <= int(self.n_robots) <= 3:
            raise ConfigError("n_robots must be in 1..3")
        if len(self.policies) not in (1, self.n_robots):
            raise ConfigError("give one policy id or one per robot")
        for p in self.policies:
            if p not in policy_ids():
                raise ConfigError(f"unknown policy {p!r} (choose from {', '.join(policy_ids())})")
        if not self.time_budget > 0:
            raise ConfigError("time_budget must be > 0")
        if self.collision_limit < 1:
            raise ConfigError("collision_limit must be >= 1")
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ConfigError("alpha and beta must be non-negative and sum to 1")
        if not self.resolution > 0 or not self.dt > 0:
            raise ConfigError("resolution and dt must be > 0")
        if self.spawn_mode not in SPAWN_MODES:
            raise ConfigError(f"spawn_mode must be one of {SPAWN_MODES}")
        if self.jitter < 0:
            raise ConfigError("jitter must be >= 0")
        if self.sr_counting not in SR_COUNTING:
            raise ConfigError(f"sr_counting must be one of {SR_COUNTING}")
        if self.vacuous not in VACUOUS_MODES:
            raise ConfigError(f"vacuous must be one of {VACUOUS_MODES}")
        if self.clock not in CLOCKS:
            raise ConfigError(f"clock must be one of {CLOCKS}")

    @property
    def robot_policies(self) -> tuple[str, ...]:
        return self.policies * self.n_robots if len(self.policies) == 1 else self.policies

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if isinstance(self.scene, str):
            src = self.scene
        elif isinstance(self.scene, SceneSpec):
            src = self.scene.id
        elif isinstance(self.scene, GenParams):
            src = f"gen:{self.scene.layout}:{self.scene.density}:{self.scene.pattern}:{self.scene.seed}"
        else:
            src = str(self.scene.get("id", "scene")) if isinstance(self.scene, dict) else "scene"
        return f"{src}|{'+'.join(self.policies)}|n{self.n_robots}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self) if not isinstance(self.scene, (SceneSpec, GenParams)) else {
            k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(self.scene, SceneSpec):
            d["scene"] = scene_to_dict(self.scene)
        elif isinstance(self.scene, GenParams):
            d["scene"] = {"generate": asdict(self.scene)}
        d["policies"] = list(self.policies)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EpisodeConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        src = d.get("scene")
        if isinstance(src, dict) and "generate" in src:
            try:
                d["scene"] = GenParams(**src["generate"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad generation parameters: {exc}") from exc
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class EpisodeResult:
    report: MetricReport
    log: TrajectoryLog
    termination: str
    seed: int
    scene: SceneSpec = field(repr=False)


def seed_streams(base_seed: int) -> dict[str, np.random.Generator]:
    """Independent generators keyed by purpose.

    Stream ``k`` is ``PCG64(SeedSequence(base_seed, spawn_key=(k,)))``, the
    same construction ``SeedSequence.spawn`` uses, so streams never overlap and
    adding a stream does not disturb the others.
    """
    base = int(base_seed) & ((1 << 64) - 1)
    return {name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(base, spawn_key=(k,))))
            for k, name in enumerate(STREAMS)}


def resolve_scene(source: Any, procgen_rng: np.random.Generator | None = None) -> SceneSpec:
    """Scene from a built-in id (``builtin:K``), a file path, a dict, GenParams or a SceneSpec."""
    if isinstance(source, SceneSpec):
        return source
    if isinstance(source, GenParams):
        return generate_scene(source)
    if isinstance(source, dict):
        return validate_scene(scene_from_dict(source))
    if isinstance(source, str):
        if source.startswith("builtin:"):
            try:
                return builtin_scene(int(source.split(":", 1)[1]))
            except ValueError:
                raise ConfigError(f"bad built-in scene id {source!r}") from None
        if Path(source).exists():
            return load_scene(source)
        raise ConfigError(f"scene {source!r} is neither a built-in id nor an existing file")
    raise ConfigError(f"unsupported scene source {type(source).__name__}")


def _target_ok(scene: SceneSpec, plan, t, pos) -> bool:
    x, y = pos
    b = scene.bounds
    if not (b[0] <= x <= b[2] and b[1] <= y <= b[3]):
        return False
    inside = bool(scene.collider.inside_obstacle(np.array([pos]))[0])
    if t.kind == "sweep":
        return not inside and sweep_accessible(plan, pos)
    if (t.elevation_tag == "surface") != inside:
        return False
    return grasp_accessible(plan, pos, scene.robot.arm_reach)


def jitter_targets(scene: SceneSpec, rng: np.random.Generator, radius: float = 0.2) -> SceneSpec:
    """Move every target uniformly within a disc of ``radius``, keeping it serviceable.

    A draw that breaks accessibility is retried; after ``JITTER_RETRIES``
    failures the target keeps its authored position.
    """
    if radius <= 0 or not (scene.sweep_targets or scene.grasp_targets):
        return scene
    plan = planning_grid(scene)
    taken: list[tuple[float, float]] = []

    def move(t):
        for _ in range(JITTER_RETRIES):
            r = radius * math.sqrt(rng.uniform())
            a = rng.uniform(0.0, 2 * math.pi)
            pos = (round(t.position[0] + r * math.cos(a), 6), round(t.position[1] + r * math.sin(a), 6))
            if pos not in taken and _target_ok(scene, plan, t, pos):
                taken.append(pos)
                return replace(t, position=pos)
        taken.append(tuple(t.position))
        return t

    sweep = [move(t) for t in scene.sweep_targets]
    grasp = [move(t) for t in scene.grasp_targets]
    return scene.with_targets(sweep, grasp)


def spawn_poses(scene: SceneSpec, n: int, rng: np.random.Generator, mode: str = "random"):
    """``n`` collision-free start poses at least 1 m apart."""
    if mode == "fixed":
        if len(scene.spawns) < n:
            raise SceneError(f"scene lists {len(scene.spawns)} spawn poses, {n} needed")
        return [tuple(map(float, p)) for p in scene.spawns[:n]]
    plan = planning_grid(scene)
    cells = np.flatnonzero(plan.navigable.ravel())
    if not len(cells):
        raise SceneError("no navigable cell to spawn on")
    C = plan.centers().reshape(-1, 2)
    poses: list[tuple[float, float, float]] = []
    for _ in range(1000 * n):
        if len(poses) == n:
            break
        k = int(cells[rng.integers(len(cells))])
        x, y = float(C[k, 0]), float(C[k, 1])
        th = float(rng.uniform(-math.pi, math.pi))
        if any(math.dist((x, y), p[:2]) < MIN_ROBOT_SEPARATION for p in poses):
            continue
        if check_pose(scene, (x, y, th)):
            continue
        poses.append((round(x, 6), round(y, 6), round(th, 6)))
    if len(poses) < n:
        raise SceneError(f"could not place {n} robots at least {MIN_ROBOT_SEPARATION} m apart")
    return poses


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    streams = seed_streams(cfg.seed)
    scene = resolve_scene(cfg.scene, streams["procgen"])
    scene = jitter_targets(scene, streams["jitter"], cfg.jitter)
    poses = spawn_poses(scene, cfg.n_robots, streams["spawn"], cfg.spawn_mode)
    regions = None
    if cfg.n_robots > 1:
        plan = planning_grid(scene)
        regions = [region_mask(plan.shape, cells) for cells in partition_regions(plan, cfg.n_robots)]
    policies = []
    for i, pid in enumerate(cfg.robot_policies):
        p = make_policy(pid)
        p.reset(scene, int(streams["policy"].integers(1 << 63)), robot=i, regions=regions, dt=cfg.dt)
        policies.append(p)
    sim_cfg = SimConfig(dt=cfg.dt, time_budget=cfg.time_budget, collision_limit=cfg.collision_limit,
                        idle_timeout=cfg.idle_timeout)
    state = SimState(scene, poses, sim_cfg)
    meta = {"schema": SCHEMA_VERSION, "dt": cfg.dt, "time_budget": cfg.time_budget, "seed": cfg.seed,
            "policies": list(cfg.robot_policies), "n_robots": cfg.n_robots, "alpha": cfg.alpha,
            "beta": cfg.beta, "resolution": cfg.resolution, "sr_counting": cfg.sr_counting,
            "vacuous": cfg.vacuous, "spawn_mode": cfg.spawn_mode, "jitter": cfg.jitter,
            "collision_limit": cfg.collision_limit, "scene": scene_to_dict(scene)}
    log = TrajectoryLog(meta=meta)
    for i, r in enumerate(state.robots):
        log.append(0, 0.0, i, r.pose, r.mode)
    timed = cfg.clock == "perf"
    while state.terminal is None:
        actions, costs = [], []
        for i, p in enumerate(policies):
            obs = sense(state, i)
            t0 = time.perf_counter() if timed else 0.0
            actions.append(p.act(obs))
            costs.append(time.perf_counter() - t0 if timed else 0.0)
        _, events = step(state, actions)
        for i, r in enumerate(state.robots):
            toks = [e.kind if e.object_id is None else f"{e.kind}:{e.object_id}" for e in events if e.robot == i]
            log.append(state.tau, state.clock, i, r.pose, r.mode, toks, costs[i])
    mcfg = MetricConfig(cfg.alpha, cfg.beta, cfg.resolution, cfg.vacuous, cfg.sr_counting, cfg.time_budget)
    report = compile_report(log, scene, mcfg)
    return EpisodeResult(report, log, state.terminal, cfg.seed, scene)


# --- benchmarks -----------------------------------------------------------------

@dataclass
class AggregateRow:
    config: str
    runs: int
    failed: int
    mean: dict[str, float]
    std: dict[str, float]
    terminations: dict[str, int]


@dataclass
class BenchmarkResult:
    rows: list[AggregateRow]
    episodes: list[dict[str, Any]]

    def table(self, sep: str = "\t") -> str:
        head = ["config", "runs", "failed"] + [f"{c}_mean" for c in TABLE_COLUMNS] + [f"{c}_std" for c in TABLE_COLUMNS]
        lines = [sep.join(head)]
        for r in self.rows:
            vals = [r.config, str(r.runs), str(r.failed)]
            vals += [f"{r.mean[c]:.6f}" for c in TABLE_COLUMNS] + [f"{r.std[c]:.6f}" for c in TABLE_COLUMNS]
            lines.append(sep.join(vals))
        return "\n".join(lines) + "\n"

    def records(self) -> str:
        return json.dumps({"schema": SCHEMA_VERSION, "aggregate": [asdict(r) for r in self.rows],
                           "episodes": self.episodes}, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _episode_job(args: tuple[int, int, EpisodeConfig]) -> dict[str, Any]:
    ci, run, cfg = args
    out: dict[str, Any] = {"config": ci, "run": run, "seed": cfg.seed, "label": cfg.name}
    try:
        res = run_episode(cfg)
    except BenchError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    out["termination"] = res.termination
    out["report"] = res.report.to_record()
    return out


def aggregate(values: Sequence[dict[str, float]]) -> tuple[dict[str, float], dict[str, float]]:
    """Per-column mean and sample standard deviation (0 for a single run).

    Undefined entries (NaN, e.g. ME with nothing completed) are skipped; a
    column with no defined entry aggregates to NaN.
    """
    mean, std = {}, {}
    for c in TABLE_COLUMNS:
        v = np.array([row[c] for row in values], dtype=float)
        v = v[~np.isnan(v)]
        mean[c] = float(v.mean()) if len(v) else math.nan
        std[c] = float(v.std(ddof=1)) if len(v) > 1 else (0.0 if len(v) else math.nan)
    return mean, std


def run_benchmark(suite: Sequence[EpisodeConfig], runs_per_cfg: int = 5, jobs: int = 1) -> BenchmarkResult:
    """Run ``runs_per_cfg`` seeds (``base + i``) of every config and aggregate."""
    if runs_per_cfg < 1:
        raise ConfigError("runs_per_cfg must be >= 1")
    work = [(ci, i, replace(cfg, seed=cfg.seed + i)) for ci, cfg in enumerate(suite) for i in range(runs_per_cfg)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            episodes = list(pool.map(_episode_job, work))
    else:
        episodes = [_episode_job(w) for w in work]
    episodes.sort(key=lambda e: (e["config"], e["run"]))
    rows = []
    for ci, cfg in enumerate(suite):
        eps = [e for e in episodes if e["config"] == ci]
        ok = [e for e in eps if "report" in e]
        mean, std = aggregate([MetricReport.from_record(e["report"]).table_row() for e in ok])
        terms: dict[str, int] = {}
        for e in ok:
            terms[e["termination"]] = terms.get(e["termination"], 0) + 1
        rows.append(AggregateRow(cfg.name, len(eps), len(eps) - len(ok), mean, std, terms))
    return BenchmarkResult(rows, episodes)


def load_suite(path: str | Path) -> tuple[list[EpisodeConfig], int]:
    """Read a JSON suite: ``{"runs": N, "defaults": {...}, "episodes": [{...}, ...]}``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read suite {path}: {exc}") from exc
    if isinstance(data, list):
        data = {"episodes": data}
    if not isinstance(data, dict) or not isinstance(data.get("episodes"), list):
        raise ConfigError("suite must hold an 'episodes' list")
    defaults = data.get("defaults", {})
    runs = int(data.get("runs", 5))
    return [EpisodeConfig.from_dict({**defaults, **e}) for e in data["episodes"]], runs
