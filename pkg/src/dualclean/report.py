"""Text tables and figures for episode reports and benchmark aggregates."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch, Rectangle  # noqa: E402

from .errors import ParseError  # noqa: E402
from .metrics import TABLE_COLUMNS, MetricReport  # noqa: E402
from .trajectory import TrajectoryLog  # noqa: E402
from .world import SceneSpec  # noqa: E402

PLOT_COLUMNS = ("TCR", "TCR_S", "TCR_G", "CR", "SR")


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"


def text_table(rows: Sequence[tuple[str, dict[str, float]]], std: Sequence[dict[str, float]] | None = None) -> str:
    """Aligned table in benchmark column order; ``mean ± std`` cells when ``std`` is given."""
    head = ["config"] + list(TABLE_COLUMNS)
    body = []
    for k, (name, vals) in enumerate(rows):
        cells = [name]
        for c in TABLE_COLUMNS:
            cell = _fmt(vals[c])
            if std is not None:
                cell += f" ± {_fmt(std[k][c])}"
            cells.append(cell)
        body.append(cells)
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


def delimited_table(rows: Sequence[tuple[str, dict[str, float]]], sep: str = "\t") -> str:
    lines = [sep.join(["config"] + list(TABLE_COLUMNS))]
    for name, vals in rows:
        lines.append(sep.join([name] + [_fmt(vals[c]) for c in TABLE_COLUMNS]))
    return "\n".join(lines) + "\n"


def load_rows(path: str | Path) -> tuple[list[tuple[str, dict[str, float]]], list[dict[str, float]] | None]:
    """Rows from a benchmark record file or a single episode report file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if isinstance(data, dict) and "aggregate" in data:
        rows = [(r["config"], r["mean"]) for r in data["aggregate"]]
        return rows, [r["std"] for r in data["aggregate"]]
    if isinstance(data, dict) and "tcr" in data:
        p = Path(path)
        name = p.parent.name if p.stem == "report" and p.parent.name else p.stem
        return [(name, MetricReport.from_record(data).table_row())], None
    raise ParseError(f"{path}: neither a benchmark record nor a metric report")


def plot_metrics(rows: Sequence[tuple[str, dict[str, float]]], path: str | Path,
                 std: Sequence[dict[str, float]] | None = None) -> None:
    """Grouped bar chart of the ratio metrics, one group per config."""
    n = len(rows)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * n * len(PLOT_COLUMNS) / 3), 4.0))
    width = 0.8 / max(1, n)
    for k, (name, vals) in enumerate(rows):
        xs = [i + (k - (n - 1) / 2) * width for i in range(len(PLOT_COLUMNS))]
        ys = [vals[c] for c in PLOT_COLUMNS]
        err = [std[k][c] for c in PLOT_COLUMNS] if std is not None else None
        ax.bar(xs, ys, width, yerr=err, label=name, capsize=2)
    ax.set_xticks(range(len(PLOT_COLUMNS)))
    ax.set_xticklabels(PLOT_COLUMNS)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("ratio")
    ax.legend(fontsize="small", loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(log: TrajectoryLog, scene: SceneSpec, path: str | Path) -> None:
    """Scene geometry with every robot's path and the target positions."""
    x0, y0, x1, y1 = scene.bounds
    fig, ax = plt.subplots(figsize=(6.0, 6.0 * (y1 - y0) / max(1e-9, x1 - x0) + 0.5))
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, lw=1.5))
    for o in scene.obstacles:
        ax.add_patch(PolygonPatch(o.polygon, closed=True, color="0.55" if o.material_tag == "wall" else "0.75"))
    for z in scene.zones:
        zx0, zy0, zx1, zy1 = z.region
        color = "tab:green" if z.kind == "collection" else "tab:red"
        ax.add_patch(Rectangle((zx0, zy0), zx1 - zx0, zy1 - zy0, color=color, alpha=0.25))
    if scene.sweep_targets:
        ax.scatter(*zip(*[t.position for t in scene.sweep_targets]), s=10, c="tab:orange", label="sweep")
    if scene.grasp_targets:
        ax.scatter(*zip(*[t.position for t in scene.grasp_targets]), s=18, c="tab:purple", marker="s",
                   label="grasp")
    for rid in log.robots:
        P = log.positions(rid)
        ax.plot(P[:, 0], P[:, 1], lw=0.8, label=f"robot {rid}")
        ax.plot(P[0, 0], P[0, 1], "k^", ms=5)
    ax.set_xlim(x0 - 0.2, x1 + 0.2)
    ax.set_ylim(y0 - 0.2, y1 + 0.2)
    ax.set_aspect("equal")
    ax.legend(fontsize="small", loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(rows: Sequence[tuple[str, dict[str, float]]], out_dir: str | Path,
                 std: Sequence[dict[str, float]] | None = None) -> list[Path]:
    """Write ``summary.txt``, ``summary.tsv`` and ``metrics.png``; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "summary.txt", out / "summary.tsv", out / "metrics.png"]
    paths[0].write_text(text_table(rows, std), encoding="utf-8")
    paths[1].write_text(delimited_table(rows), encoding="utf-8")
    plot_metrics(rows, paths[2], std)
    return paths


def summary_line(report: MetricReport, termination: str | None = None) -> str:
    parts = [f"{c}={_fmt(v)}" for c, v in report.table_row().items()]
    if termination:
        parts.insert(0, f"termination={termination}")
    return " ".join(parts)


def records_of(reports: Sequence[MetricReport]) -> list[dict[str, Any]]:
    return [r.to_record() for r in reports]
