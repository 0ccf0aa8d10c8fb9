"""The lifelong simulation loop and its metrics.

Each timestep the planner moves every agent one step (or keeps it in place),
the step is validated, waits are tallied, and the task assigner processes the
new positions. The run ends once every queued task has reached its port.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .assigner import CACHE_READ, Delivery, TaskAssigner
from .cachestore import CacheStore, Policy
from .errors import (
    ConfigError,
    InvalidParams,
    InvariantViolation,
    LivelockSuspected,
    TimeoutExceeded,
)
from .gridmap import (
    GridMap,
    Position,
    assign_items,
    build_groups,
    default_group_mode,
    load_map,
    select_cache_subset,
)
from .seeding import rng_for, substream
from .solver import JointStep, PIBTPlanner, validate_step
from .taskgen import (
    Task,
    gen_empirical,
    gen_mk,
    load_frequency_csv,
    zhang_table,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DISTRIBUTIONS = ("mk", "zhang", "file")
GROUP_MODES = {"single": "single_port", "multi": "multi_port"}


@dataclass
class SimConfig:
    map: Union[str, GridMap] = "warehouse-single"
    caches: Optional[int] = None
    agents: int = 32
    groups: Optional[str] = None
    policy: str = "lru"
    dist: str = "mk"
    mk_m: int = 200
    mk_k: int = 20
    dist_file: Optional[str] = None
    queue_len: int = 1000
    queue_per_group: bool = False
    seed: int = 0
    step_cap: Optional[int] = None
    time_budget_ms: int = 0
    # Test hooks: fixed starts, fixed per-group item lists, fixed shelf placement.
    starts: Optional[Sequence[Position]] = None
    tasks: Optional[Sequence[Sequence[int]]] = None
    placement: Optional[Sequence[int]] = None
    validate: bool = True
    check_invariants: bool = False
    record_paths: bool = False
    record_events: bool = False

    def echo(self) -> dict:
        """JSON-safe summary of the parameters that define the run."""
        return {
            "map": self.map if isinstance(self.map, str) else "<inline>",
            "caches": self.caches,
            "agents": self.agents,
            "groups": self.groups,
            "policy": self.policy,
            "dist": self.dist,
            "mk_m": self.mk_m,
            "mk_k": self.mk_k,
            "dist_file": self.dist_file,
            "queue_len": self.queue_len,
            "queue_per_group": self.queue_per_group,
            "seed": self.seed,
        }


@dataclass
class RunMetrics:
    makespan: int
    cache_hits: int
    cache_misses: int
    deliveries: int
    total_waits: int
    wait_counts: np.ndarray
    per_task_log: list[Delivery]
    transitions: dict[str, int]
    config: dict = field(default_factory=dict)
    paths: Optional[list[tuple[Position, ...]]] = None
    events: Optional[list[tuple]] = None

    @property
    def hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "config": self.config,
            "makespan": self.makespan,
            "hit_rate": self.hit_rate,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "deliveries": self.deliveries,
            "total_waits": self.total_waits,
            "transitions": dict(sorted(self.transitions.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def hit_accounting(fulfillment: str) -> str:
    return "hit" if fulfillment == CACHE_READ else "miss"


def heatmap(metrics: RunMetrics) -> np.ndarray:
    """Per-cell wait frequency: waits at the cell divided by the makespan."""
    if metrics.makespan == 0:
        return np.zeros(metrics.wait_counts.shape)
    return metrics.wait_counts / metrics.makespan


@dataclass
class Prepared:
    """Everything a run needs, built and validated before the first step."""

    map: GridMap
    groups: list
    stores: list[CacheStore]
    starts: list[Position]
    total_tasks: int
    step_cap: int


def prepare(config: SimConfig) -> Prepared:
    m = config.map if isinstance(config.map, GridMap) else load_map(config.map)
    if config.caches is not None:
        m = select_cache_subset(m, config.caches)
    if config.placement is not None:
        if sorted(config.placement) != list(range(len(m.shelves))):
            raise ConfigError("placement must be a permutation of the item indices")
        m = GridMap(m.rows, m.cols, m.kinds, m.shelves, m.caches, m.ports, tuple(config.placement))
    else:
        m = assign_items(m, substream(config.seed, "placement"))
    if config.agents < 1:
        raise ConfigError("need at least one agent")
    try:
        policy = Policy(config.policy)
    except ValueError:
        raise ConfigError(f"unknown policy {config.policy!r}") from None
    mode = GROUP_MODES.get(config.groups, config.groups) if config.groups else default_group_mode(m)
    groups = build_groups(m, mode, config.agents)

    lengths = _queue_lengths(config, len(groups))
    item_lists = _item_lists(config, m, lengths)
    for g, items in zip(groups, item_lists):
        if len(items) < len(g.agent_ids):
            raise ConfigError(
                f"group {g.id} has {len(items)} tasks for {len(g.agent_ids)} agents"
            )
        g.queue = [Task(int(it), g.port, seq, g.id) for seq, it in enumerate(items)]

    if config.starts is not None:
        starts = [tuple(s) for s in config.starts]
        if len(starts) != config.agents or len(set(starts)) != len(starts):
            raise ConfigError("starts must list one distinct cell per agent")
        for s in starts:
            if not m.is_traversable(s):
                raise ConfigError(f"start {s} is not traversable")
    else:
        aisles = m.aisles
        if config.agents > len(aisles):
            raise ConfigError(f"{config.agents} agents do not fit on {len(aisles)} aisle cells")
        pick = rng_for(config.seed, "starts").choice(len(aisles), size=config.agents, replace=False)
        starts = [aisles[int(i)] for i in pick]

    stores = [
        CacheStore(g.cache_positions, policy, seed=substream(config.seed, "policy", g.id))
        for g in groups
    ]
    total = sum(len(g.queue) for g in groups)
    cap = config.step_cap
    if cap is None:
        cap = 100 * (m.rows + m.cols) * max(total, 1)
    return Prepared(m, groups, stores, starts, total, cap)


def _queue_lengths(config: SimConfig, ngroups: int) -> list[int]:
    if config.tasks is not None:
        if len(config.tasks) != ngroups:
            raise ConfigError(f"tasks given for {len(config.tasks)} groups, map has {ngroups}")
        return [len(t) for t in config.tasks]
    if config.queue_len < 1:
        raise ConfigError("queue length must be positive")
    if config.queue_per_group:
        return [config.queue_len] * ngroups
    base, extra = divmod(config.queue_len, ngroups)
    return [base + (g < extra) for g in range(ngroups)]


def _item_lists(config: SimConfig, m: GridMap, lengths: list[int]) -> list[list[int]]:
    universe = m.num_items
    if config.tasks is not None:
        for items in config.tasks:
            if any(not 0 <= it < universe for it in items):
                raise ConfigError("task item outside the item range")
        return [list(t) for t in config.tasks]
    seed = config.seed
    if config.dist == "mk":
        return [
            gen_mk(config.mk_m, config.mk_k, n, universe, substream(seed, "tasks", g))
            for g, n in enumerate(lengths)
        ]
    if config.dist == "zhang":
        table = zhang_table(universe, substream(seed, "distribution"))
    elif config.dist == "file":
        if not config.dist_file:
            raise ConfigError("--dist file needs --dist-file")
        table = load_frequency_csv(config.dist_file, universe)
    else:
        raise InvalidParams(f"unknown distribution {config.dist!r}")
    return [gen_empirical(table, n, substream(seed, "tasks", g)) for g, n in enumerate(lengths)]


def run(config: SimConfig) -> RunMetrics:
    prep = prepare(config)
    m = prep.map
    events: Optional[list[tuple]] = [] if config.record_events else None
    ta = TaskAssigner(
        m,
        prep.groups,
        prep.stores,
        on_event=(lambda *e: events.append(e)) if events is not None else None,
    )
    ta.init_agents(prep.starts)
    planner = PIBTPlanner(m, config.agents)
    config_now: tuple[Position, ...] = tuple(prep.starts)
    paths = [config_now] if config.record_paths else None
    waits = np.zeros((m.rows, m.cols), dtype=np.int64)
    total_waits = 0
    deadline = time.monotonic() + config.time_budget_ms / 1000 if config.time_budget_ms else None
    t = 0
    log.info("run start: %d agents, %d tasks", config.agents, prep.total_tasks)
    while len(ta.deliveries) < prep.total_tasks:
        if t >= prep.step_cap:
            raise LivelockSuspected(
                f"{len(ta.deliveries)}/{prep.total_tasks} tasks delivered after {t} steps"
            )
        if deadline is not None and time.monotonic() > deadline:
            raise TimeoutExceeded(f"time budget of {config.time_budget_ms} ms exhausted at step {t}")
        targets = [a.target for a in ta.agents]
        step = planner.step(config_now, targets)
        if config.validate:
            report = validate_step(m, step)
            if report is not None:
                raise InvariantViolation(f"step {t + 1}: {report}")
        t += 1
        for a, (u, v) in zip(ta.agents, zip(step.frm, step.to)):
            if u == v and not a.retired:
                waits[u] += 1
                total_waits += 1
        config_now = step.to
        if paths is not None:
            paths.append(config_now)
        ta.event(config_now, t)
        if config.check_invariants:
            ta.check_invariants()
    hits = sum(1 for d in ta.deliveries if hit_accounting(d.fulfillment) == "hit")
    makespan = max((d.delivered_at for d in ta.deliveries), default=0)
    log.info("run done: makespan %d, %d hits", makespan, hits)
    return RunMetrics(
        makespan=makespan,
        cache_hits=hits,
        cache_misses=len(ta.deliveries) - hits,
        deliveries=len(ta.deliveries),
        total_waits=total_waits,
        wait_counts=waits,
        per_task_log=list(ta.deliveries),
        transitions=dict(ta.transitions),
        config=config.echo(),
        paths=paths,
        events=events,
    )


def write_heatmap_csv(path, grid: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in grid:
            f.write(",".join(repr(float(x)) for x in row) + "\n")


def write_task_log_csv(path, deliveries: Sequence[Delivery]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("group,seq,item,agent,assigned_at,delivered_at,fulfillment\n")
        for d in deliveries:
            f.write(
                f"{d.task.group},{d.task.seq},{d.task.item},{d.agent},"
                f"{d.assigned_at},{d.delivered_at},{d.fulfillment}\n"
            )


def write_event_log_csv(path, events: Sequence[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("timestep,agent,old_status,new_status,target\n")
        for now, agent, old, new, target in events:
            where = "-" if target is None else f"{target[0]}:{target[1]}"
            f.write(f"{now},{agent},{old},{new},{where}\n")


PATH_HEADER = "# calmapf paths agents="
PATH_FOOTER = "# end steps="


def format_path_log(paths: Sequence[Sequence[Position]]) -> str:
    n = len(paths[0]) if paths else 0
    lines = [f"{PATH_HEADER}{n}"]
    lines.extend(",".join(f"{r}:{c}" for r, c in conf) for conf in paths)
    lines.append(f"{PATH_FOOTER}{max(len(paths) - 1, 0)}")
    return "\n".join(lines) + "\n"


def parse_path_log(text: str) -> list[tuple[Position, ...]]:
    """Inverse of :func:`format_path_log`; raises ``ValueError`` on damage."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith(PATH_HEADER):
        raise ValueError("missing path log header")
    n = int(lines[0][len(PATH_HEADER):])
    if len(lines) < 2 or not lines[-1].startswith(PATH_FOOTER):
        raise ValueError("path log is truncated (no end marker)")
    steps = int(lines[-1][len(PATH_FOOTER):])
    body = lines[1:-1]
    if len(body) != steps + 1:
        raise ValueError(f"expected {steps + 1} configurations, found {len(body)}")
    out = []
    for t, line in enumerate(body):
        cells = line.split(",") if line else []
        if len(cells) != n:
            raise ValueError(f"line {t + 2}: expected {n} positions, found {len(cells)}")
        conf = []
        for cell in cells:
            r, sep, c = cell.partition(":")
            if not sep:
                raise ValueError(f"line {t + 2}: bad position {cell!r}")
            conf.append((int(r), int(c)))
        out.append(tuple(conf))
    return out


def verify_paths(m: GridMap, paths: Sequence[Sequence[Position]]):
    """First conflict in a recorded run as ``(timestep, report)``, or ``None``."""
    for t in range(1, len(paths)):
        report = validate_step(m, JointStep(tuple(paths[t - 1]), tuple(paths[t])))
        if report is not None:
            return t, report
    return None

