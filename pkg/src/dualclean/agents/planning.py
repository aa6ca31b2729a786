"""Grid planning: inflated planning grids, A*, BFS fields, path smoothing,
boustrophedon lanes and multi-robot region partitioning.

Cells are ``(ix, iy)`` tuples into arrays indexed ``[ix, iy]``; flat indices
are ``ix * ny + iy`` (row-major), which is also the tie-break order wherever
a "lowest cell index" rule applies.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from ..errors import NoNavigableSpace
from ..geometry import Point
from ..world import DEFAULT_RESOLUTION, SceneSpec, grid_centers

# Half footprint diagonal (0.312 m) plus the 0.01 m contact tolerance and a
# small tracking margin.
INFLATION = 0.34
SEGMENT_CLEARANCE = INFLATION - 0.005
LANE_PITCH = 0.5            # smallest multiple of the grid step >= chassis width

MOVES4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
MOVES8 = MOVES4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))
Cell = tuple[int, int]


@dataclass(frozen=True, eq=False)
class PlanningGrid:
    """Cells whose centers keep ``inflation`` clearance and are reachable from a spawn."""

    origin: Point
    resolution: float
    navigable: np.ndarray
    clearance: np.ndarray
    inflation: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.navigable.shape

    def center(self, ix: int, iy: int) -> Point:
        r = self.resolution
        return (self.origin[0] + (ix + 0.5) * r, self.origin[1] + (iy + 0.5) * r)

    def cell_of(self, x: float, y: float) -> Cell:
        r = self.resolution
        return (int(math.floor((x - self.origin[0]) / r)), int(math.floor((y - self.origin[1]) / r)))

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.shape[0] and 0 <= iy < self.shape[1]

    def centers(self) -> np.ndarray:
        return grid_centers(self.origin, self.resolution, self.shape)

    def nearest_cell(self, x: float, y: float, mask: np.ndarray | None = None) -> Cell | None:
        """Navigable cell whose center is closest to (x, y); lowest index on ties."""
        m = self.navigable if mask is None else mask
        ix, iy = self.cell_of(x, y)
        if self.in_bounds(ix, iy) and m[ix, iy]:
            return (ix, iy)
        idx = np.flatnonzero(m.ravel())
        if not len(idx):
            return None
        C = self.centers().reshape(-1, 2)[idx]
        d = np.hypot(C[:, 0] - x, C[:, 1] - y)
        k = int(idx[int(np.argmin(d))])
        return divmod(k, self.shape[1])


def planning_grid(scene: SceneSpec, resolution: float = DEFAULT_RESOLUTION,
                  inflation: float = INFLATION) -> PlanningGrid:
    """Cached inflated planning grid of ``scene`` (restricted zones count as obstacles)."""
    key = ("plan", round(resolution, 12), round(inflation, 12))
    cache = scene._grids
    if key in cache:
        return cache[key]
    base = scene.grid(resolution)
    C = base.centers().reshape(-1, 2)
    clear = scene.collider.clearance(C, include_restricted=True).reshape(base.shape)
    free = (clear >= inflation) & base.navigable
    labels, _ = ndimage.label(free)
    keep = set()
    probe = PlanningGrid(base.origin, resolution, free, clear, inflation)
    for sx, sy, _ in scene.spawns:
        c = probe.nearest_cell(sx, sy)
        if c is not None and math.dist(probe.center(*c), (sx, sy)) <= 1.0:
            keep.add(int(labels[c]))
    nav = np.isin(labels, sorted(keep)) & free if keep else np.zeros_like(free)
    nav.setflags(write=False)
    clear.setflags(write=False)
    g = PlanningGrid(base.origin, resolution, nav, clear, inflation)
    cache[key] = g
    return g


def _mask(grid) -> np.ndarray:
    if isinstance(grid, np.ndarray):
        return grid.astype(bool, copy=False)
    return np.asarray(grid.navigable, dtype=bool)


def _moves(connectivity: int):
    if connectivity == 4:
        return MOVES4
    if connectivity == 8:
        return MOVES8
    raise ValueError("connectivity must be 4 or 8")


def astar_path(grid, start: Cell, goal: Cell, connectivity: int = 4,
               heuristic: str | None = None) -> list[Cell] | None:
    """Unit-cost A* over navigable cells.

    Diagonal moves (8-connectivity) cost 1, matching the Chebyshev metric,
    and may not cut a blocked corner.  The default heuristic follows the
    connectivity (manhattan for 4, chebyshev for 8).  Returns the cell list
    from start to goal, or None when unreachable.
    """
    mask = _mask(grid)
    nx, ny = mask.shape
    moves = _moves(connectivity)
    heuristic = heuristic or ("manhattan" if connectivity == 4 else "chebyshev")
    if heuristic not in ("manhattan", "chebyshev"):
        raise ValueError(f"unknown heuristic {heuristic!r}")
    for c in (start, goal):
        if not (0 <= c[0] < nx and 0 <= c[1] < ny) or not mask[c]:
            return None
    gx, gy = goal
    if heuristic == "manhattan":
        h = lambda x, y: abs(x - gx) + abs(y - gy)  # noqa: E731
    else:
        h = lambda x, y: max(abs(x - gx), abs(y - gy))  # noqa: E731
    free = mask.tolist()
    g_cost = {start: 0}
    parent: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    counter = 0
    heap = [(h(*start), h(*start), counter, start)]
    while heap:
        _, _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        x, y = cur
        gc = g_cost[cur] + 1
        for dx, dy in moves:
            a, b = x + dx, y + dy
            if not (0 <= a < nx and 0 <= b < ny) or not free[a][b]:
                continue
            if dx and dy and not (free[x + dx][y] and free[x][y + dy]):
                continue
            nb = (a, b)
            if gc < g_cost.get(nb, 1 << 60):
                g_cost[nb] = gc
                parent[nb] = cur
                counter += 1
                hn = h(a, b)
                heapq.heappush(heap, (gc + hn, hn, counter, nb))
    return None


def bfs_field(grid, start: Cell, connectivity: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Unit-cost distances from ``start`` (-1 unreachable) and flat parent indices."""
    mask = _mask(grid)
    nx, ny = mask.shape
    dist = np.full(nx * ny, -1, dtype=np.int64)
    parent = np.full(nx * ny, -1, dtype=np.int64)
    if not (0 <= start[0] < nx and 0 <= start[1] < ny) or not mask[start]:
        return dist.reshape(nx, ny), parent
    free = mask.ravel().tolist()
    moves = _moves(connectivity)
    d = dist.tolist()
    par = parent.tolist()
    s = start[0] * ny + start[1]
    d[s] = 0
    q = deque([s])
    while q:
        k = q.popleft()
        x, y = divmod(k, ny)
        for dx, dy in moves:
            a, b = x + dx, y + dy
            if not (0 <= a < nx and 0 <= b < ny):
                continue
            j = a * ny + b
            if not free[j] or d[j] >= 0:
                continue
            if dx and dy and not (free[(x + dx) * ny + y] and free[x * ny + y + dy]):
                continue
            d[j] = d[k] + 1
            par[j] = k
            q.append(j)
    return np.array(d, dtype=np.int64).reshape(nx, ny), np.array(par, dtype=np.int64)


def tree_path(parent: np.ndarray, goal: Cell, ny: int) -> list[Cell]:
    k = goal[0] * ny + goal[1]
    path = []
    while k >= 0:
        path.append(divmod(int(k), ny))
        k = parent[k]
    return path[::-1]


def smooth_path(scene: SceneSpec, points: Sequence[Point], clearance: float = SEGMENT_CLEARANCE) -> list[Point]:
    """String-pull a polyline: skip intermediate points while the shortcut keeps ``clearance``.

    The first point is the anchor; consecutive input points are always kept
    reachable from each other.
    """
    pts = [tuple(p) for p in points]
    if len(pts) <= 2:
        return pts
    col = scene.collider
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = i + 1
        while j + 1 < len(pts) and col.segment_clearance(pts[i], pts[j + 1], cap=clearance + 0.01) >= clearance:
            j += 1
        out.append(pts[j])
        i = j
    return out


def simplify_collinear(points: Sequence[Point], eps: float = 1e-9) -> list[Point]:
    out: list[Point] = []
    for p in points:
        if out and math.dist(out[-1], p) <= eps:
            continue
        if len(out) >= 2:
            a, b = out[-2], out[-1]
            cross = (b[0] - a[0]) * (p[1] - b[1]) - (b[1] - a[1]) * (p[0] - b[0])
            dot = (b[0] - a[0]) * (p[0] - b[0]) + (b[1] - a[1]) * (p[1] - b[1])
            if abs(cross) <= eps and dot > 0:
                out[-1] = p
                continue
        out.append(p)
    return out


# --- boustrophedon lanes ---------------------------------------------------------

@dataclass(frozen=True)
class LaneRun:
    lane: int
    run: int
    start: Cell
    end: Cell


def lane_runs(grid, orientation: str, pitch: float = 0.35, mask: np.ndarray | None = None) -> list[LaneRun]:
    """Maximal straight runs of navigable cells along evenly spaced lanes.

    ``vertical`` lanes run along y and are spaced along x; ``horizontal`` the
    reverse.  Lanes start at the first navigable coordinate and repeat every
    ``pitch`` until the last one, i.e. ``floor(span / pitch) + 1`` lanes.
    """
    if not pitch > 0:
        raise ValueError("pitch must be > 0")
    if orientation not in ("vertical", "horizontal"):
        raise ValueError("orientation must be vertical or horizontal")
    m = _mask(grid) if mask is None else mask
    if not m.any():
        raise NoNavigableSpace("no navigable cell to cover")
    r = grid.resolution if not isinstance(grid, np.ndarray) else 1.0
    axis_cells = m if orientation == "vertical" else m.T   # rows = lane axis index
    used = np.flatnonzero(axis_cells.any(axis=1))
    first, last = int(used[0]), int(used[-1])
    span = (last - first) * r
    n_lanes = int(math.floor(span / pitch + 1e-9)) + 1
    runs: list[LaneRun] = []
    for k in range(n_lanes):
        row = first + int(math.floor(k * pitch / r + 1e-9))
        if row > last:
            break
        line = axis_cells[row]
        idx = np.flatnonzero(line)
        if not len(idx):
            continue
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate([[idx[0]], idx[breaks + 1]])
        ends = np.concatenate([idx[breaks], [idx[-1]]])
        for n, (a, b) in enumerate(zip(starts.tolist(), ends.tolist())):
            if orientation == "vertical":
                runs.append(LaneRun(k, n, (row, a), (row, b)))
            else:
                runs.append(LaneRun(k, n, (a, row), (b, row)))
    return runs


def order_runs(runs: Sequence[LaneRun], start: Point, center) -> list[tuple[LaneRun, bool]]:
    """Greedy tour over runs: always enter the run with the nearest endpoint.

    Returns ``(run, reversed)`` pairs; ties go to the lower lane, then run
    index, then the run's start end.  ``center`` maps a cell to its point.
    """
    left = list(runs)
    pos = start
    out = []
    while left:
        best = None
        for run in left:
            for rev, cell in ((False, run.start), (True, run.end)):
                d = math.dist(pos, center(*cell))
                key = (round(d, 9), run.lane, run.run, rev)
                if best is None or key < best[0]:
                    best = (key, run, rev)
        _, run, rev = best
        left.remove(run)
        out.append((run, rev))
        pos = center(*(run.start if rev else run.end))
    return out


def boustrophedon_plan(grid, orientation: str = "vertical", pitch: float = 0.35,
                       connectivity: int = 4) -> list[Point]:
    """Waypoints of a back-and-forth coverage of ``grid``'s navigable cells.

    Lanes come from :func:`lane_runs`; runs are chained greedily from the
    first lane's start and transitions that are not a straight hop between
    adjacent cells are routed with :func:`astar_path`.
    """
    runs = lane_runs(grid, orientation, pitch)
    center = grid.center
    ordered = order_runs(runs, center(*runs[0].start), center)
    pts: list[Point] = []
    prev: Cell | None = None
    for run, rev in ordered:
        a, b = (run.end, run.start) if rev else (run.start, run.end)
        if prev is not None and prev != a:
            path = astar_path(grid, prev, a, connectivity)
            if path is not None:
                pts.extend(center(*c) for c in path[1:-1])
        pts.append(center(*a))
        pts.append(center(*b))
        prev = b
    return simplify_collinear(pts)


# --- lattice for greedy coverage -------------------------------------------------

def lattice_nodes(mask: np.ndarray, step: int) -> list[Cell]:
    """Navigable cells on a square lattice of ``step`` cells anchored at the mask's minimum corner."""
    idx = np.argwhere(mask)
    if not len(idx):
        return []
    ax, ay = int(idx[:, 0].min()), int(idx[:, 1].min())
    keep = ((idx[:, 0] - ax) % step == 0) & ((idx[:, 1] - ay) % step == 0)
    return [(int(a), int(b)) for a, b in idx[keep]]


def metric_distance(a: Cell, b: Cell, metric: str) -> int:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return dx + dy if metric == "manhattan" else max(dx, dy)


def nearest_unvisited(current: Cell, nodes: Iterable[Cell], metric: str) -> Cell | None:
    """Greedy rule: metric distance, then Euclidean distance, then lowest (iy, ix)."""
    best, key = None, None
    for n in nodes:
        k = (metric_distance(current, n, metric), (n[0] - current[0]) ** 2 + (n[1] - current[1]) ** 2, n[1], n[0])
        if key is None or k < key:
            best, key = n, k
    return best


# --- multi-robot partition ------------------------------------------------------

def _farthest_seeds(mask: np.ndarray, n: int) -> list[Cell]:
    idx = np.argwhere(mask)
    first = (int(idx[0, 0]), int(idx[0, 1]))
    d0, _ = bfs_field(mask, first)
    k = int(np.argmax(d0))
    seeds = [divmod(k, mask.shape[1])]
    best = np.full(mask.shape, np.iinfo(np.int64).max, dtype=np.int64)
    while len(seeds) < n:
        d, _ = bfs_field(mask, seeds[-1])
        d = np.where(d < 0, np.iinfo(np.int64).max, d)
        best = np.minimum(best, d)
        cand = np.where(mask, best, -1)
        k = int(np.argmax(cand))
        c = divmod(k, mask.shape[1])
        if c in seeds:
            break
        seeds.append(c)
    return seeds


def partition_regions(grid, n_robots: int) -> list[set[Cell]]:
    """Split navigable cells into ``n_robots`` connected, size-balanced regions.

    Seeds are spread by farthest-point sampling on BFS distance; regions then
    grow one cell at a time, always extending the currently smallest region
    that can still grow (multi-source BFS).
    """
    if n_robots < 1:
        raise ValueError("n_robots must be >= 1")
    mask = _mask(grid)
    if not mask.any():
        raise NoNavigableSpace("no navigable cell to partition")
    cells = {(int(a), int(b)) for a, b in np.argwhere(mask)}
    if n_robots == 1:
        return [cells]
    nx, ny = mask.shape
    owner = np.full(mask.shape, -1, dtype=np.int64)
    seeds = _farthest_seeds(mask, n_robots)
    regions: list[set[Cell]] = [set() for _ in range(n_robots)]
    queues: list[deque] = [deque() for _ in range(n_robots)]
    for i, s in enumerate(seeds):
        owner[s] = i
        regions[i].add(s)
        queues[i].append(s)
    remaining = len(cells) - len(seeds)
    active = set(range(len(seeds)))
    while remaining > 0 and active:
        i = min(active, key=lambda k: (len(regions[k]), k))
        q = queues[i]
        grown = False
        while q and not grown:
            x, y = q[0]
            for dx, dy in MOVES4:
                a, b = x + dx, y + dy
                if 0 <= a < nx and 0 <= b < ny and mask[a, b] and owner[a, b] < 0:
                    owner[a, b] = i
                    regions[i].add((a, b))
                    q.append((a, b))
                    remaining -= 1
                    grown = True
                    break
            if not grown:
                q.popleft()
        if not grown:
            active.discard(i)
    # cells unreachable from every seed (disconnected input) go to region 0
    for c in cells:
        if owner[c] < 0:
            owner[c] = 0
            regions[0].add(c)
    _rebalance(owner, regions)
    return regions


def _keeps_connected(owner: np.ndarray, c: Cell, i: int) -> bool:
    """Sufficient local test: the 4-neighbours of ``c`` owned by ``i`` stay
    4-connected through the 3x3 ring around ``c`` once ``c`` is removed."""
    x, y = c
    nx, ny = owner.shape
    ring = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)]
    inside = [0 <= x + dx < nx and 0 <= y + dy < ny and owner[x + dx, y + dy] == i for dx, dy in ring]
    if sum(inside) == 8:
        return True
    # walk the ring: owned runs that contain a 4-neighbour must be a single run
    start = inside.index(False)
    runs, cur = 0, False
    for k in range(1, 9):
        j = (start + k) % 8
        if inside[j] and not cur:
            cur, has_edge = True, False
        if inside[j] and j % 2 == 1:
            has_edge = True
        if cur and (not inside[j] or k == 8):
            runs += has_edge
            cur = False
        if not inside[j]:
            cur = False
    return runs == 1


def _rebalance(owner: np.ndarray, regions: list[set[Cell]]) -> None:
    """Move boundary cells from larger to smaller adjacent regions.

    Each move shrinks the size spread and keeps every region connected, so
    the loop ends; it stops once sizes differ by at most one cell or no
    admissible move remains.
    """
    nx, ny = owner.shape
    n = len(regions)
    while True:
        sizes = [len(r) for r in regions]
        if max(sizes) - min(sizes) <= 1:
            return
        moved = False
        pairs = sorted(((sizes[a] - sizes[b], a, b) for a in range(n) for b in range(n) if sizes[a] - sizes[b] >= 2),
                       reverse=True)
        for gap, a, b in pairs:
            want = gap // 2
            for c in sorted(regions[a]):
                if want == 0:
                    break
                x, y = c
                if not any(0 <= x + dx < nx and 0 <= y + dy < ny and owner[x + dx, y + dy] == b
                           for dx, dy in MOVES4):
                    continue
                if len(regions[a]) <= 1 or not _keeps_connected(owner, c, a):
                    continue
                owner[c] = b
                regions[a].discard(c)
                regions[b].add(c)
                want -= 1
                moved = True
            if moved:
                break
        if not moved:
            return


def region_mask(shape: tuple[int, int], cells: Iterable[Cell]) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    for c in cells:
        m[c] = True
    return m


# --- accessibility ----------------------------------------------------------------

SWEEP_STANDOFF = (0.21, 0.35)   # center-to-target distances that put a target in the brush strip
ACCESS_EPS = 1e-9               # keeps exact cell-spacing distances on the inclusive side


def sweep_standoff_cells(plan: PlanningGrid, pos: Point) -> np.ndarray:
    """Flat indices of planning cells from which facing ``pos`` puts it in the brush strip."""
    lo, hi = SWEEP_STANDOFF
    C = _local_centers(plan, pos, hi)
    if C is None:
        return np.zeros(0, dtype=np.int64)
    idx, pts = C
    d = np.hypot(pts[:, 0] - pos[0], pts[:, 1] - pos[1])
    return idx[(d >= lo - ACCESS_EPS) & (d <= hi + ACCESS_EPS)]


def grasp_approach_cells(plan: PlanningGrid, pos: Point, reach: float) -> np.ndarray:
    C = _local_centers(plan, pos, reach)
    if C is None:
        return np.zeros(0, dtype=np.int64)
    idx, pts = C
    d = np.hypot(pts[:, 0] - pos[0], pts[:, 1] - pos[1])
    return idx[d <= reach + ACCESS_EPS]


def _local_centers(plan: PlanningGrid, pos: Point, radius: float):
    r = plan.resolution
    nx, ny = plan.shape
    i0 = max(0, int(math.floor((pos[0] - radius - plan.origin[0]) / r)))
    i1 = min(nx - 1, int(math.ceil((pos[0] + radius - plan.origin[0]) / r)))
    j0 = max(0, int(math.floor((pos[1] - radius - plan.origin[1]) / r)))
    j1 = min(ny - 1, int(math.ceil((pos[1] + radius - plan.origin[1]) / r)))
    if i1 < i0 or j1 < j0:
        return None
    I, J = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    keep = plan.navigable[I, J]
    I, J = I[keep], J[keep]
    pts = np.stack([plan.origin[0] + (I + 0.5) * r, plan.origin[1] + (J + 0.5) * r], axis=1)
    return (I * ny + J).astype(np.int64), pts


def _ring_reachable(plan: PlanningGrid, lo: float, hi: float) -> np.ndarray:
    """Cells whose center has a navigable planning cell center at a distance in [lo, hi]."""
    r = plan.resolution
    k = int(math.ceil(hi / r)) + 1
    off = np.arange(-k, k + 1) * r
    D = np.hypot(off[:, None], off[None, :])
    kernel = ((D >= lo - ACCESS_EPS) & (D <= hi + ACCESS_EPS)).astype(np.int32)
    return ndimage.convolve(plan.navigable.astype(np.int32), kernel, mode="constant", cval=0) > 0


def sweep_accessible_mask(plan: PlanningGrid) -> np.ndarray:
    """``sweep_accessible`` evaluated at every cell center of ``plan``."""
    return _ring_reachable(plan, *SWEEP_STANDOFF)


def grasp_accessible_mask(plan: PlanningGrid, reach: float, margin: float = 0.05) -> np.ndarray:
    """``grasp_accessible`` evaluated at every cell center of ``plan``."""
    return _ring_reachable(plan, -1.0, reach - margin)


def sweep_accessible(plan: PlanningGrid, pos: Point) -> bool:
    return len(sweep_standoff_cells(plan, pos)) > 0


def grasp_accessible(plan: PlanningGrid, pos: Point, reach: float, margin: float = 0.05) -> bool:
    return len(grasp_approach_cells(plan, pos, reach - margin)) > 0
