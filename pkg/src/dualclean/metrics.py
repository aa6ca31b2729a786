"""Episode metric suite computed from a trajectory log and its scene.

Coverage and redundancy are evaluated on the scene's navigable grid: a cell
is touched by a footprint when its center lies inside the rotated chassis
rectangle.  Everything else is a direct reduction over the log records.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import BadWeights, EmptyLog, TooShort
from .trajectory import TrajectoryLog
from .world import DEFAULT_RESOLUTION, OccupancyGrid, RobotSpec, SceneSpec

SR_COUNTING = ("entries", "steps")
VACUOUS_MODES = ("one", "renormalize")
TABLE_COLUMNS = ("TCR", "TCR_S", "TCR_G", "ME", "SR", "CR", "FT", "CT", "Vel_avg", "Col")
REPORT_SCHEMA = 1


@dataclass
class MetricConfig:
    alpha: float = 0.5
    beta: float = 0.5
    resolution: float = DEFAULT_RESOLUTION
    vacuous: str = "one"
    sr_counting: str = "entries"
    time_budget: float | None = None


@dataclass
class MetricReport:
    cr: float
    tcr: float
    tcr_sweep: float
    tcr_grasp: float
    sr: float
    me: float | None
    collision: int
    collision_dedup: int
    ct: float
    ft: float
    vel_avg: float
    acc_avg: float
    jerk_avg: float | None
    l_total: float
    n_sweep_success: int = 0
    n_sweep_total: int = 0
    n_grasp_success: int = 0
    n_grasp_total: int = 0
    flags: tuple[str, ...] = ()

    def to_record(self) -> dict[str, Any]:
        d = asdict(self)
        d["flags"] = list(self.flags)
        d["schema"] = REPORT_SCHEMA
        return d

    @classmethod
    def from_record(cls, d: dict[str, Any]) -> "MetricReport":
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        d["flags"] = tuple(d.get("flags", ()))
        return cls(**d)

    def table_row(self) -> dict[str, float]:
        """Values under the benchmark table's column names."""
        return {"TCR": self.tcr, "TCR_S": self.tcr_sweep, "TCR_G": self.tcr_grasp,
                "ME": math.nan if self.me is None else self.me, "SR": self.sr, "CR": self.cr,
                "FT": self.ft, "CT": self.ct, "Vel_avg": self.vel_avg, "Col": float(self.collision)}


# --- footprint rasterisation --------------------------------------------------

def footprint_cells(grid: OccupancyGrid, spec: RobotSpec, pose) -> np.ndarray:
    """Flat indices (``ix * ny + iy``) of cells whose center lies in the footprint."""
    x, y, th = pose
    r = grid.resolution
    nx, ny = grid.shape
    R = spec.half_diagonal
    i0 = max(0, int(math.floor((x - R - grid.origin[0]) / r)))
    i1 = min(nx - 1, int(math.ceil((x + R - grid.origin[0]) / r)))
    j0 = max(0, int(math.floor((y - R - grid.origin[1]) / r)))
    j1 = min(ny - 1, int(math.ceil((y + R - grid.origin[1]) / r)))
    if i1 < i0 or j1 < j0:
        return np.zeros(0, dtype=np.int64)
    I, J = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    dx = grid.origin[0] + (I + 0.5) * r - x
    dy = grid.origin[1] + (J + 0.5) * r - y
    c, s = math.cos(th), math.sin(th)
    bx = c * dx + s * dy
    by = -s * dx + c * dy
    eps = 1e-9
    m = (np.abs(bx) <= 0.5 * spec.length + eps) & (np.abs(by) <= 0.5 * spec.width + eps)
    return (I[m] * ny + J[m]).astype(np.int64)


def _steps(log: TrajectoryLog) -> dict[int, list]:
    by_step: dict[int, list] = defaultdict(list)
    for rec in log.records:
        by_step[rec.step].append(rec)
    return dict(sorted(by_step.items()))


def covered_mask(log: TrajectoryLog, scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION) -> np.ndarray:
    log.require_nonempty()
    grid = scene.grid(resolution)
    hit = np.zeros(grid.free.size, dtype=bool)
    for rec in log.records:
        hit[footprint_cells(grid, scene.robot, (rec.x, rec.y, rec.theta))] = True
    return hit.reshape(grid.shape) & grid.navigable


def coverage_ratio(log: TrajectoryLog, scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION) -> float:
    grid = scene.grid(resolution)
    return float(covered_mask(log, scene, resolution).sum()) / float(grid.navigable.sum())


def visit_counts(log: TrajectoryLog, scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION,
                 counting: str = "entries") -> np.ndarray:
    """Per-cell visit counts over navigable cells.

    ``steps`` adds one per control step in which any robot footprint touches
    the cell.  ``entries`` adds one per maximal run of consecutive touched
    steps, i.e. each time the union footprint re-enters the cell.
    """
    if counting not in SR_COUNTING:
        raise ValueError(f"counting must be one of {SR_COUNTING}")
    log.require_nonempty()
    grid = scene.grid(resolution)
    n = grid.free.size
    nu = np.zeros(n, dtype=np.int64)
    last = np.full(n, -10, dtype=np.int64)
    for step, recs in _steps(log).items():
        idx = np.unique(np.concatenate([footprint_cells(grid, scene.robot, (r.x, r.y, r.theta)) for r in recs]))
        if counting == "steps":
            nu[idx] += 1
        else:
            nu[idx] += (last[idx] != step - 1)
            last[idx] = step
    nu = nu.reshape(grid.shape)
    nu[~grid.navigable] = 0
    return nu


def sweep_redundancy(log: TrajectoryLog, scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION,
                     counting: str = "entries") -> tuple[float, bool]:
    """(SR, nothing_visited_flag)."""
    nu = visit_counts(log, scene, resolution, counting)
    visited = int((nu >= 1).sum())
    if visited == 0:
        return 0.0, True
    return float((nu > 1).sum()) / visited, False


# --- task completion --------------------------------------------------------------

def _check_weights(alpha: float, beta: float) -> None:
    if alpha < 0 or beta < 0 or abs(alpha + beta - 1.0) > 1e-9:
        raise BadWeights(f"weights must be non-negative and sum to 1 (got {alpha}, {beta})")


def combine_tcr(tcr_sweep: float, tcr_grasp: float, alpha: float = 0.5, beta: float = 0.5) -> float:
    _check_weights(alpha, beta)
    return alpha * tcr_sweep + beta * tcr_grasp


def task_completion(events: Iterable[tuple], scene: SceneSpec, alpha: float = 0.5, beta: float = 0.5,
                    vacuous: str = "one") -> tuple[float, float, float, tuple[str, ...]]:
    """(tcr, tcr_sweep, tcr_grasp, flags) from ``(step, robot, kind, object_id)`` events.

    A mode with no targets scores 1.0 (``vacuous="one"``) or borrows the other
    mode's ratio (``"renormalize"``, equivalent to re-weighting onto the
    populated mode); both keep ``tcr = alpha*tcr_sweep + beta*tcr_grasp``.
    """
    _check_weights(alpha, beta)
    if vacuous not in VACUOUS_MODES:
        raise ValueError(f"vacuous must be one of {VACUOUS_MODES}")
    events = list(events)
    swept = {e[3] for e in events if e[2] == "sweep_success"}
    grasped = {e[3] for e in events if e[2] == "grasp_success"}
    ns_tot, ng_tot = len(scene.sweep_targets), len(scene.grasp_targets)
    flags = []
    s = len(swept) / ns_tot if ns_tot else None
    g = len(grasped) / ng_tot if ng_tot else None
    if s is None:
        flags.append("sweep_vacuous")
    if g is None:
        flags.append("grasp_vacuous")
    if s is None and g is None:
        s = g = 1.0
    elif vacuous == "one":
        s = 1.0 if s is None else s
        g = 1.0 if g is None else g
    else:
        s = g if s is None else s
        g = s if g is None else g
    return alpha * s + beta * g, s, g, tuple(flags)


def motion_efficiency(log: TrajectoryLog, events: Iterable[tuple]) -> tuple[float | None, float]:
    """(ME, L_total); ME is None when nothing was completed."""
    log.require_nonempty()
    events = list(events)
    L = 0.0
    for rid in log.robots:
        P = log.positions(rid)
        if len(P) > 1:
            L += float(np.sqrt((np.diff(P, axis=0) ** 2).sum(axis=1)).sum())
    n = len({(e[2], e[3]) for e in events if e[2] in ("sweep_success", "grasp_success")})
    return (L / n if n else None), L


def collision_count(events: Iterable[tuple]) -> tuple[int, int]:
    """(contact steps, contiguous contact intervals) summed over robots."""
    steps: dict[int, set[int]] = defaultdict(set)
    for e in events:
        if e[2] == "collision":
            steps[e[1]].add(e[0])
    total = dedup = 0
    for s in steps.values():
        ordered = sorted(s)
        total += len(ordered)
        dedup += sum(1 for k, t in enumerate(ordered) if k == 0 or t != ordered[k - 1] + 1)
    return total, dedup


def timing(log: TrajectoryLog) -> tuple[float, float]:
    """(CT mean seconds per decision, FT simulated seconds)."""
    log.require_nonempty()
    decisions = [r.t_comp for r in log.records if r.step >= 1]
    ct = float(np.mean(decisions)) if decisions else 0.0
    times = [r.time for r in log.records]
    return ct, max(times) - min(times)


def velocity_average(P: np.ndarray, dt: float) -> float:
    if len(P) < 2:
        raise TooShort("velocity needs at least 2 poses")
    return float(np.mean(np.linalg.norm(np.diff(P, axis=0), axis=1) / dt))


def acceleration_average(P: np.ndarray, dt: float) -> float:
    if len(P) < 3:
        raise TooShort("acceleration needs at least 3 poses")
    return float(np.mean(np.linalg.norm(P[2:] - 2 * P[1:-1] + P[:-2], axis=1) / dt ** 2))


def jerk_average(P: np.ndarray, dt: float) -> float:
    if len(P) < 4:
        raise TooShort("jerk needs at least 4 poses")
    a = (P[2:] - 2 * P[1:-1] + P[:-2]) / dt ** 2
    return float(np.mean(np.linalg.norm(np.diff(a, axis=0), axis=1) / dt))


def kinematics(log: TrajectoryLog, dt: float | None = None) -> tuple[float, float, float | None]:
    """Per-robot finite-difference speed, acceleration and jerk, averaged over robots.

    Jerk is ``None`` when a robot has fewer than four poses.
    """
    log.require_nonempty()
    dt = log.dt if dt is None else dt
    vel, acc, jerk = [], [], []
    for rid in log.robots:
        # logged positions carry six decimals: differencing whole micrometres is exact
        P = np.rint(log.positions(rid) * 1e6).astype(np.int64)
        vel.append(velocity_average(P, dt) * 1e-6 if len(P) >= 2 else 0.0)
        acc.append(acceleration_average(P, dt) * 1e-6 if len(P) >= 3 else 0.0)
        jerk.append(jerk_average(P, dt) * 1e-6 if len(P) >= 4 else None)
    j = None if any(v is None for v in jerk) else float(np.mean(jerk))
    return float(np.mean(vel)), float(np.mean(acc)), j


def compile_report(log: TrajectoryLog, scene: SceneSpec, config: MetricConfig | None = None) -> MetricReport:
    cfg = config or MetricConfig()
    log.require_nonempty()
    events = log.events()
    flags: list[str] = []
    tcr, ts, tg, f = task_completion(events, scene, cfg.alpha, cfg.beta, cfg.vacuous)
    flags.extend(f)
    cr = coverage_ratio(log, scene, cfg.resolution)
    sr, none_visited = sweep_redundancy(log, scene, cfg.resolution, cfg.sr_counting)
    if none_visited:
        flags.append("sr_undefined")
    me, L = motion_efficiency(log, events)
    if me is None:
        flags.append("me_undefined")
    col, col_d = collision_count(events)
    ct, ft = timing(log)
    vel, acc, jerk = kinematics(log, log.dt)
    if jerk is None:
        flags.append("jerk_too_short")
    ns = len({e[3] for e in events if e[2] == "sweep_success"})
    ng = len({e[3] for e in events if e[2] == "grasp_success"})
    budget = cfg.time_budget if cfg.time_budget is not None else log.meta.get("time_budget")
    if budget is not None:
        assert ft <= float(budget) + log.dt + 1e-9, "finish time exceeds budget"
    assert abs(tcr - (cfg.alpha * ts + cfg.beta * tg)) <= 1e-12
    return MetricReport(cr=cr, tcr=tcr, tcr_sweep=ts, tcr_grasp=tg, sr=sr, me=me, collision=col,
                        collision_dedup=col_d, ct=ct, ft=ft, vel_avg=vel, acc_avg=acc, jerk_avg=jerk,
                        l_total=L, n_sweep_success=ns, n_sweep_total=len(scene.sweep_targets),
                        n_grasp_success=ng, n_grasp_total=len(scene.grasp_targets), flags=tuple(flags))
