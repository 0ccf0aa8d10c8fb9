"""One-timestep collision-free joint moves (PIBT) and a step validator.

Agents are handled in descending priority. Each tries its successors in order
of distance to its target and may push the occupant of the chosen cell, which
then plans recursively (priority inheritance); a pushed agent that cannot move
makes its parent try the next successor (backtracking).

Shelves are treated as pockets: an agent only ever steps onto the shelf it is
heading for, and distance fields never cut through other shelves. Otherwise
pushed agents dodge into shelves and the one-cell-wide aisles outside them
jam solid once the fleet is large.

Off-target agents standing in a dead end (a shelf cell, or any cell with a
single exit) are planned before everyone else. Without this, an agent waiting
outside a shelf and the agent inside it block each other forever.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import NoStep
from .gridmap import CellKind, GridMap, MoveGraph, Position, neighbors

Configuration = tuple[Position, ...]


@dataclass(frozen=True)
class JointStep:
    frm: Configuration
    to: Configuration


@dataclass(frozen=True)
class ConflictReport:
    rule: str  # "move", "vertex" or "swap"
    agents: tuple[int, ...]
    detail: str = ""

    def __str__(self) -> str:
        who = ", ".join(str(a) for a in self.agents)
        return f"{self.rule} conflict between agents {who}" + (f": {self.detail}" if self.detail else "")


def validate_step(m: GridMap, step: JointStep) -> Optional[ConflictReport]:
    """``None`` when ``step`` is legal, else a report of the first violation."""
    frm, to = step.frm, step.to
    if len(frm) != len(to):
        return ConflictReport("move", (), f"{len(frm)} agents before, {len(to)} after")
    for i, (a, b) in enumerate(zip(frm, to)):
        if not m.is_traversable(a) or b not in neighbors(m, a):
            return ConflictReport("move", (i,), f"{a} -> {b} is not a legal move")
    seen: dict[Position, int] = {}
    for i, b in enumerate(to):
        if b in seen:
            return ConflictReport("vertex", (seen[b], i), f"both at {b}")
        seen[b] = i
    start_of = {a: i for i, a in enumerate(frm)}
    for i, (a, b) in enumerate(zip(frm, to)):
        j = start_of.get(b)
        if j is not None and j != i and to[j] == a:
            return ConflictReport("swap", (min(i, j), max(i, j)), f"{a} <-> {b}")
    return None


class PriorityState:
    """Per-agent priorities: ``id / N`` plus the number of steps spent off target."""

    def __init__(self, n: int, values: Optional[Sequence[float]] = None):
        self.n = n
        self.values = list(values) if values is not None else [self.base(i) for i in range(n)]

    def base(self, i: int) -> float:
        return i / self.n if self.n else 0.0


def update_priorities(
    prio: PriorityState, config: Sequence[Position], targets: Sequence[Optional[Position]]
) -> PriorityState:
    values = [
        prio.values[i] + 1 if t is not None and v != t else prio.base(i)
        for i, (v, t) in enumerate(zip(config, targets))
    ]
    return PriorityState(prio.n, values)


def plan_step(
    m: GridMap,
    config: Sequence[Position],
    targets: Sequence[Optional[Position]],
    prio: PriorityState,
    graph: Optional[MoveGraph] = None,
) -> JointStep:
    """Next joint move toward ``targets``; ``None`` targets mean "stay if possible"."""
    g = graph or m.graph
    n = len(config)
    cols = m.cols
    adj = g.adj
    shelves = g.shelves
    occ_now = {v: i for i, v in enumerate(config)}
    if len(occ_now) != n:
        raise NoStep("two agents share a cell in the current configuration")
    nxt: list[Optional[Position]] = [None] * n
    reserved: dict[Position, int] = {}

    def candidates(i: int) -> list[Position]:
        v = config[i]
        t = targets[i]
        if t is None:
            return [v, *(u for u in adj[v] if u not in shelves)]
        d = g.route_distances(t)
        ranked = [
            (d[u[0] * cols + u[1]], k, u)
            for k, u in enumerate(adj[v])
            if u == t or u not in shelves
        ]
        ranked.append((d[v[0] * cols + v[1]], 4, v))
        ranked.sort()
        return [u for _, _, u in ranked]

    def pibt(i: int) -> bool:
        v = config[i]
        for u in candidates(i):
            if u in reserved:
                continue
            j = occ_now.get(u)
            if j is not None and j != i and nxt[j] == v:
                continue
            reserved[u] = i
            nxt[i] = u
            if j is not None and j != i and nxt[j] is None and not pibt(j):
                continue
            return True
        nxt[i] = v
        reserved[v] = i
        return False

    def stuck_in_dead_end(i: int) -> bool:
        v, t = config[i], targets[i]
        return t is not None and v != t and (m.kind(v) is CellKind.SHELF or len(adj[v]) <= 1)

    order = sorted(range(n), key=lambda i: (not stuck_in_dead_end(i), -prio.values[i]))
    limit = sys.getrecursionlimit()
    if n + 100 > limit:
        sys.setrecursionlimit(n + 100)
    for i in order:
        if nxt[i] is None:
            pibt(i)
    return JointStep(tuple(config), tuple(nxt))  # type: ignore[arg-type]


class PIBTPlanner:
    """Stateful wrapper that carries priorities from one step to the next."""

    def __init__(self, m: GridMap, n_agents: int):
        self.map = m
        self.priorities = PriorityState(n_agents)

    def step(self, config: Sequence[Position], targets: Sequence[Optional[Position]]) -> JointStep:
        self.priorities = update_priorities(self.priorities, config, targets)
        return plan_step(self.map, config, targets, self.priorities)
