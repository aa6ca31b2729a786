"""Command line: ``dualclean {run,bench,gen,eval,report}``.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.
Output directories default to ``$DUALCLEAN_OUT`` (else ``./runs``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .agents.policies import policy_ids
from .errors import (BenchError, ConfigError, EmptyLog, ParseError, SceneError, UnknownScene,
                     ValidationError)
from .harness import EpisodeConfig, load_suite, run_benchmark, run_episode
from .metrics import MetricConfig, compile_report
from .procgen import DENSITY_RANGE, LAYOUT_ALIASES, PATTERNS, GenParams, generate_scene
from .report import load_rows, plot_trajectory, summary_line, write_report
from .trajectory import load_log
from .world import load_scene, save_scene, scene_from_dict

OUT_ENV = "DUALCLEAN_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
CONFIG_ERRORS = (ConfigError, ValidationError, ParseError, UnknownScene, SceneError)


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _episode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", default="builtin:1", help="builtin:1..5 or a scene file")
    p.add_argument("--policy", action="append", choices=policy_ids(),
                   help="policy id; repeat once per robot to mix policies (default dual)")
    p.add_argument("--robots", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=300.0, help="time budget in simulated seconds")
    p.add_argument("--collision-limit", type=int, default=100)
    p.add_argument("--idle-timeout", type=float, default=30.0, help="seconds without progress; 0 disables")
    p.add_argument("--spawn", choices=("random", "fixed"), default="random")
    p.add_argument("--jitter", type=float, default=0.2, help="target position jitter radius in m")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--resolution", type=float, default=0.1, help="metric grid cell size in m")
    p.add_argument("--sr-counting", choices=("entries", "steps"), default="entries")
    p.add_argument("--clock", choices=("perf", "none"), default="perf",
                   help="'none' records zero compute time, making output files byte-reproducible")


def _config(a: argparse.Namespace) -> EpisodeConfig:
    return EpisodeConfig(scene=a.scene, policies=tuple(a.policy or ["dual"]), n_robots=a.robots,
                         time_budget=a.budget, collision_limit=a.collision_limit, seed=a.seed,
                         alpha=a.alpha, beta=a.beta, resolution=a.resolution, spawn_mode=a.spawn,
                         jitter=a.jitter, idle_timeout=a.idle_timeout or None, sr_counting=a.sr_counting,
                         clock=a.clock)


def cmd_run(a: argparse.Namespace) -> int:
    cfg = _config(a)
    res = run_episode(cfg)
    out = _out_dir(a.out)
    out.mkdir(parents=True, exist_ok=True)
    res.log.save(out / "trajectory.tsv")
    _write_json(out / "report.json", {**res.report.to_record(), "termination": res.termination,
                                      "seed": res.seed})
    if a.plot:
        plot_trajectory(res.log, res.scene, out / "trajectory.png")
    print(summary_line(res.report, res.termination))
    return EXIT_OK


def cmd_bench(a: argparse.Namespace) -> int:
    if a.suite:
        suite, runs = load_suite(a.suite)
        runs = a.runs if a.runs is not None else runs
    else:
        scenes = a.scenes or ["builtin:1", "builtin:2", "builtin:3", "builtin:4", "builtin:5"]
        pols = a.policy or ["manhattan", "chebyshev", "vertical", "horizontal", "frontier", "dual"]
        suite = [EpisodeConfig(scene=s, policies=(p,), n_robots=a.robots, time_budget=a.budget, seed=a.seed,
                               spawn_mode=a.spawn, clock=a.clock) for s in scenes for p in pols]
        runs = a.runs if a.runs is not None else 5
    result = run_benchmark(suite, runs, jobs=a.jobs)
    out = _out_dir(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.tsv").write_text(result.table(), encoding="utf-8")
    (out / "bench.json").write_text(result.records(), encoding="utf-8")
    sys.stdout.write(result.table())
    failed = sum(r.failed for r in result.rows)
    if failed:
        print(f"{failed} episode(s) failed; see bench.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_gen(a: argparse.Namespace) -> int:
    size = (a.width, a.height) if a.width and a.height else None
    params = GenParams(layout=a.layout, density=a.density, pattern=a.pattern, n_sweep=a.n_sweep,
                       n_grasp=a.n_grasp, seed=a.seed, size=size)
    scene = generate_scene(params)
    out = Path(a.out) if a.out else _out_dir(None) / f"scene_{params.layout}_{a.seed}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out)
    print(out)
    return EXIT_OK


def cmd_eval(a: argparse.Namespace) -> int:
    log = load_log(a.log)
    log.require_nonempty()
    meta = log.meta
    if a.scene:
        scene = load_scene(a.scene)
    elif "scene" in meta:
        scene = scene_from_dict(meta["scene"])
    else:
        raise ConfigError("log carries no scene; pass --scene")
    cfg = MetricConfig(alpha=meta.get("alpha", 0.5), beta=meta.get("beta", 0.5),
                       resolution=meta.get("resolution", 0.1), vacuous=meta.get("vacuous", "one"),
                       sr_counting=meta.get("sr_counting", "entries"), time_budget=meta.get("time_budget"))
    report = compile_report(log, scene, cfg)
    record = report.to_record()
    if a.out:
        _write_json(Path(a.out), record)
    else:
        sys.stdout.write(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(a: argparse.Namespace) -> int:
    rows, std, spread = [], [], False
    for path in a.inputs:
        r, s = load_rows(path)
        rows += r
        spread |= s is not None
        std += s if s is not None else [{k: 0.0 for k in vals} for _, vals in r]
    out = _out_dir(a.out)
    paths = write_report(rows, out, std if spread else None)
    sys.stdout.write(paths[0].read_text(encoding="utf-8"))
    if a.log:
        log = load_log(a.log)
        plot_trajectory(log, scene_from_dict(log.meta["scene"]), out / "trajectory.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualclean", description="Dual-mode cleaning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode")
    _episode_flags(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
    p.add_argument("--plot", action="store_true", help="also render trajectory.png")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", help="JSON suite file")
    p.add_argument("--scene", dest="scenes", action="append", help="scene for the default suite (repeatable)")
    p.add_argument("--policy", action="append", choices=policy_ids())
    p.add_argument("--robots", type=int, default=1)
    p.add_argument("--runs", type=int, default=None, help="runs per config (default 5)")
    p.add_argument("--seed", type=int, default=0, help="base seed; run i uses seed + i")
    p.add_argument("--budget", type=float, default=300.0)
    p.add_argument("--spawn", choices=("random", "fixed"), default="random")
    p.add_argument("--clock", choices=("perf", "none"), default="perf")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate a scene file")
    p.add_argument("--layout", choices=sorted(LAYOUT_ALIASES), default="rectangular")
    p.add_argument("--density", type=float, default=0.15,
                   help=f"obstacle density in [{DENSITY_RANGE[0]}, {DENSITY_RANGE[1]}]")
    p.add_argument("--pattern", choices=PATTERNS, default="random")
    p.add_argument("--n-sweep", type=int, default=10)
    p.add_argument("--n-grasp", type=int, default=5)
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="scene file path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="recompute metrics from a trajectory log")
    p.add_argument("--log", required=True)
    p.add_argument("--scene", help="scene file (default: the scene embedded in the log)")
    p.add_argument("--out", help="report file (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="tables and figures from reports or benchmark records")
    p.add_argument("inputs", nargs="+", help="report.json or bench.json files")
    p.add_argument("--log", help="trajectory log to draw")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptyLog as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
