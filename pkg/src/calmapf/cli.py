"""Command-line entry point: ``calmapf run``, ``calmapf sweep`` and ``calmapf verify``.

Exit codes: 0 success, 1 the run (or verification) failed, 2 bad usage or
invalid configuration.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .cachestore import Policy
from .errors import CalMapfError, ConfigError, RunError
from .gridmap import load_map
from .sim import (
    DISTRIBUTIONS,
    RunMetrics,
    SimConfig,
    format_path_log,
    heatmap,
    parse_path_log,
    prepare,
    run,
    verify_paths,
    write_event_log_csv,
    write_heatmap_csv,
    write_task_log_csv,
)

log = logging.getLogger("calmapf")

POLICIES = [p.value for p in Policy]
U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _choice_list(choices: Sequence[str]):
    def parse(text: str) -> list[str]:
        items = [x for x in text.split(",") if x]
        bad = [x for x in items if x not in choices]
        if bad:
            raise argparse.ArgumentTypeError(
                f"invalid choice(s) {', '.join(bad)} (choose from {', '.join(choices)})"
            )
        return items

    return parse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", default="warehouse-single",
                   help="built-in map name (toy, warehouse-single, warehouse-multi) or a map file")
    p.add_argument("--groups", choices=("single", "multi"),
                   help="agent grouping (default: single for one port, multi otherwise)")
    p.add_argument("--mk-m", type=int, default=200, help="M-K window length")
    p.add_argument("--mk-k", type=int, default=20, help="M-K kinds per window")
    p.add_argument("--dist-file", help="frequency CSV for --dist file")
    p.add_argument("--queue-len", type=int, default=1000,
                   help="total tasks, split evenly across groups")
    p.add_argument("--queue-per-group", action="store_true",
                   help="give every group --queue-len tasks instead of splitting")
    p.add_argument("--step-cap", type=int, help="abort as livelocked after this many steps")
    p.add_argument("--time-budget-ms", type=_nonneg, default=0, help="wall-clock budget, 0 = off")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--heatmap", action="store_true", help="write the wait heatmap CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calmapf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one simulation and print its metrics JSON")
    _add_common(r)
    r.add_argument("--agents", type=int, default=32)
    r.add_argument("--caches", type=int, help="active cache grids (default: all)")
    r.add_argument("--policy", choices=POLICIES, default="lru")
    r.add_argument("--dist", choices=DISTRIBUTIONS, default="mk")
    r.add_argument("--seed", type=_u64, default=0)
    r.add_argument("--log-paths", action="store_true", help="write paths.log (needs --out)")
    r.add_argument("--log-events", action="store_true",
                   help="write tasks.csv and events.csv (needs --out)")

    s = sub.add_parser("sweep", help="run the cross product of parameter lists")
    _add_common(s)
    s.add_argument("--agents", type=_int_list, default=[32])
    s.add_argument("--caches", type=_int_list, help="default: all caches")
    s.add_argument("--policies", type=_choice_list(POLICIES), default=["lru"])
    s.add_argument("--dists", type=_choice_list(DISTRIBUTIONS), default=["mk"])
    s.add_argument("--seeds", type=_int_list, default=[0])
    s.add_argument("--jobs", type=int, default=1, help="parallel simulations")

    v = sub.add_parser("verify", help="re-check a path log for collisions")
    v.add_argument("path_log", type=Path)
    v.add_argument("--map", default="warehouse-single")
    return parser


def _config(args, **overrides) -> SimConfig:
    fields = dict(
        map=args.map,
        groups=args.groups,
        mk_m=args.mk_m,
        mk_k=args.mk_k,
        dist_file=args.dist_file,
        queue_len=args.queue_len,
        queue_per_group=args.queue_per_group,
        step_cap=args.step_cap,
        time_budget_ms=args.time_budget_ms,
    )
    fields.update(overrides)
    return SimConfig(**fields)


def cmd_run(args) -> int:
    if (args.log_paths or args.log_events or args.heatmap) and args.out is None:
        raise ConfigError("--heatmap, --log-paths and --log-events need --out")
    cfg = _config(
        args,
        agents=args.agents,
        caches=args.caches,
        policy=args.policy,
        dist=args.dist,
        seed=args.seed,
        record_paths=args.log_paths,
        record_events=args.log_events,
    )
    metrics = run(cfg)
    text = metrics.to_json()
    print(text)
    if args.out is not None:
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text + "\n", encoding="utf-8")
        if args.heatmap:
            write_heatmap_csv(out / "heatmap.csv", heatmap(metrics))
        if args.log_paths:
            (out / "paths.log").write_text(format_path_log(metrics.paths), encoding="utf-8")
        if args.log_events:
            write_task_log_csv(out / "tasks.csv", metrics.per_task_log)
            write_event_log_csv(out / "events.csv", metrics.events)
    return 0


def sweep_configs(args) -> list[SimConfig]:
    caches = args.caches if args.caches else [None]
    combos = itertools.product(args.agents, caches, args.policies, args.dists, args.seeds)
    configs = [
        _config(args, agents=a, caches=c, policy=p, dist=d, seed=s)
        for a, c, p, d, s in combos
    ]
    if not configs:
        raise ConfigError("the sweep is empty")
    for cfg in configs:
        prepare(cfg)  # surface invalid combinations before anything runs
    return configs


def _run_one(cfg: SimConfig) -> RunMetrics:
    return run(cfg)


def _heatmap_name(i: int, cfg: SimConfig) -> str:
    caches = "all" if cfg.caches is None else cfg.caches
    return f"{i:04d}_a{cfg.agents}_c{caches}_{cfg.policy}_{cfg.dist}_s{cfg.seed}.csv"


def cmd_sweep(args) -> int:
    if args.out is None:
        raise ConfigError("sweep needs --out")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    configs = sweep_configs(args)
    out: Path = args.out
    (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    log.info("sweep: %d runs, %d jobs", len(configs), args.jobs)

    results: Iterable[RunMetrics]
    if args.jobs == 1:
        results = map(_run_one, configs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=args.jobs)
        results = pool.map(_run_one, configs)
    try:
        with open(out / "sweep.jsonl", "w", encoding="utf-8") as f:
            for i, (cfg, metrics) in enumerate(zip(configs, results)):
                name = _heatmap_name(i, cfg)
                write_heatmap_csv(out / "heatmaps" / name, heatmap(metrics))
                record = {"run": i, "heatmap": f"heatmaps/{name}", **metrics.to_dict()}
                f.write(json.dumps(record, sort_keys=True) + "\n")
                f.flush()
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return 0


def cmd_verify(args) -> int:
    try:
        paths = parse_path_log(args.path_log.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        print(f"calmapf: cannot read {args.path_log}: {e}", file=sys.stderr)
        return 2
    m = load_map(args.map)
    found = verify_paths(m, paths)
    if found is None:
        print(f"ok: {len(paths) - 1} steps, no conflicts")
        return 0
    t, report = found
    print(f"step {t}: {report}", file=sys.stderr)
    return 1


def _setup_logging() -> None:
    level = os.environ.get("CALMAPF_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (ConfigError, OSError) as e:
        print(f"calmapf: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (RunError, CalMapfError) as e:
        print(f"calmapf: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
