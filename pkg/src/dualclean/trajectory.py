"""Per-step trajectory records and their tab-separated file format.

File layout::

    # dualclean-trajectory {"schema": 1, "dt": 0.1, ...}
    step  time  robot  x  y  theta  mode  events  t_comp
    0     0.000000  0  1.000000 ...

Columns are tab separated; floats carry six decimals; ``events`` is ``-`` or
a ``;``-joined list of ``kind`` / ``kind:object_id`` tokens.  One record per
robot per control step, step 0 holding the spawn poses.  ``t_comp`` is the
wall-clock seconds the policy spent producing the action that led to the
record's pose (0 at step 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, NamedTuple

import numpy as np

from .errors import EmptyLog, ParseError

MAGIC = "# dualclean-trajectory"
COLUMNS = ("step", "time", "robot", "x", "y", "theta", "mode", "events", "t_comp")
SCHEMA_VERSION = 1


class Record(NamedTuple):
    step: int
    time: float
    robot: int
    x: float
    y: float
    theta: float
    mode: str
    events: tuple[str, ...]
    t_comp: float


def _q(v: float) -> float:
    """Quantise to the file precision so online and replayed metrics agree."""
    return float(f"{v:.6f}")


@dataclass
class TrajectoryLog:
    meta: dict[str, Any] = field(default_factory=dict)
    records: list[Record] = field(default_factory=list)

    def append(self, step: int, time: float, robot: int, pose, mode: str,
               events: Iterable[str] = (), t_comp: float = 0.0) -> None:
        self.records.append(Record(int(step), _q(time), int(robot), _q(pose[0]), _q(pose[1]),
                                   _q(pose[2]), mode, tuple(events), _q(t_comp)))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def dt(self) -> float:
        return float(self.meta.get("dt", 0.1))

    @property
    def robots(self) -> list[int]:
        return sorted({r.robot for r in self.records})

    @property
    def n_steps(self) -> int:
        """Index of the last recorded control step."""
        return max((r.step for r in self.records), default=-1)

    def positions(self, robot: int) -> np.ndarray:
        rows = [(r.x, r.y) for r in self.records if r.robot == robot]
        return np.array(rows, dtype=float).reshape(-1, 2)

    def poses(self, robot: int) -> np.ndarray:
        rows = [(r.step, r.x, r.y, r.theta) for r in self.records if r.robot == robot]
        return np.array(rows, dtype=float).reshape(-1, 4)

    def events(self) -> list[tuple[int, int, str, str | None]]:
        """(step, robot, kind, object_id) for every event token."""
        out = []
        for r in self.records:
            for tok in r.events:
                kind, _, obj = tok.partition(":")
                out.append((r.step, r.robot, kind, obj or None))
        return out

    def require_nonempty(self) -> None:
        if not self.records:
            raise EmptyLog("trajectory log has no records")

    def to_text(self, include_timing: bool = True) -> str:
        meta = json.dumps(self.meta, sort_keys=True)
        lines = [f"{MAGIC} {meta}", "\t".join(COLUMNS)]
        for r in self.records:
            ev = ";".join(r.events) if r.events else "-"
            tc = r.t_comp if include_timing else 0.0
            lines.append(f"{r.step}\t{r.time:.6f}\t{r.robot}\t{r.x:.6f}\t{r.y:.6f}\t{r.theta:.6f}"
                         f"\t{r.mode}\t{ev}\t{tc:.6f}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def parse_log(text: str) -> TrajectoryLog:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ParseError("not a trajectory log (missing header)")
    try:
        meta = json.loads(lines[0][len(MAGIC):].strip() or "{}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad log metadata: {exc}") from exc
    if meta.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ParseError(f"unsupported log schema {meta.get('schema')!r}")
    if len(lines) < 2 or tuple(lines[1].split("\t")) != COLUMNS:
        raise ParseError("column header mismatch")
    log = TrajectoryLog(meta=meta)
    for n, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(COLUMNS):
            raise ParseError(f"line {n}: expected {len(COLUMNS)} fields, got {len(parts)}")
        try:
            ev = () if parts[7] == "-" else tuple(parts[7].split(";"))
            log.records.append(Record(int(parts[0]), float(parts[1]), int(parts[2]), float(parts[3]),
                                      float(parts[4]), float(parts[5]), parts[6], ev, float(parts[8])))
        except ValueError as exc:
            raise ParseError(f"line {n}: {exc}") from exc
    return log


def load_log(path: str | Path) -> TrajectoryLog:
    try:
        return parse_log(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
