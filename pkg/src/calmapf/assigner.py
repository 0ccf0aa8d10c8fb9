"""Task assigner: agent statuses 0-4 and every interaction with the cache stores.

Status meanings:

    0  fetching the task item from its shelf
    1  fetching the item from a cache grid (read lock held)
    2  carrying the item to a cache grid to insert it (write lock held)
    3  carrying the item straight to the port (no writable grid was free)
    4  carrying the item from a cache grid to the port

A cache miss sends an agent to the item's shelf and a refused insert sends it
to the port; the stores signal both with ``None``.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .cachestore import CacheStore
from .errors import EmptyQueue, InvariantViolation
from .gridmap import GridMap, Group, Position
from .taskgen import Task

SHELF_DIRECT = "shelf_direct"
SHELF_THEN_CACHE_WRITE = "shelf_then_cache_write"
CACHE_READ = "cache_read"


@dataclass
class AgentState:
    id: int
    start: Position
    target: Optional[Position]
    status: int
    task: Optional[Task]
    group: int
    assigned_at: int = 0
    read_cache: bool = False
    wrote_cache: bool = False

    @property
    def retired(self) -> bool:
        return self.task is None

    @property
    def fulfillment(self) -> str:
        if self.read_cache:
            return CACHE_READ
        if self.wrote_cache:
            return SHELF_THEN_CACHE_WRITE
        return SHELF_DIRECT


@dataclass(frozen=True)
class Delivery:
    task: Task
    agent: int
    assigned_at: int
    delivered_at: int
    fulfillment: str


class TaskAssigner:
    def __init__(
        self,
        m: GridMap,
        groups: Sequence[Group],
        stores: Sequence[CacheStore],
        on_event: Optional[Callable[[int, int, int, int, Optional[Position]], None]] = None,
    ):
        self.map = m
        self.groups = list(groups)
        self.stores = list(stores)
        self.queues = [deque(g.queue) for g in self.groups]
        self.agents: list[AgentState] = []
        self.deliveries: list[Delivery] = []
        self.transitions: Counter[str] = Counter()
        self.on_event = on_event

    def init_agents(self, starts: Sequence[Position]) -> None:
        group_of = {}
        for g in self.groups:
            for a in g.agent_ids:
                group_of[a] = g.id
        self.agents = []
        for i, start in enumerate(starts):
            gid = group_of[i]
            if not self.queues[gid]:
                raise EmptyQueue(f"group {gid} has fewer tasks than agents")
            task = self.queues[gid].popleft()
            self.agents.append(
                AgentState(i, start, self.map.shelf_of(task.item), 0, task, gid)
            )

    @property
    def pending(self) -> int:
        """Tasks not yet delivered: still queued or in flight."""
        return sum(len(q) for q in self.queues) + sum(1 for a in self.agents if not a.retired)

    def event(self, config: Sequence[Position], now: int) -> None:
        """Process one TA event after the agents moved to ``config``."""
        for a, v in zip(self.agents, config):
            a.start = v
        self.agent_release_locks(now)
        self.agent_get_locks(now)

    def agent_release_locks(self, now: int) -> None:
        for a in self.agents:
            if a.status in (1, 2) and a.start == a.target:
                self.stores[a.group].release_all_locks(a.id, a.task.item, a.start, now)
                self._set(a, 4, self.groups[a.group].port, now)

    def agent_get_locks(self, now: int) -> None:
        for a in self.agents:
            if a.retired:
                continue
            store = self.stores[a.group]
            arrived = a.start == a.target
            if a.status == 0:
                if arrived:
                    loc = store.insert(a.id, a.task.item, now)
                    self.check_target(a, loc, 3, 2, now)
                else:
                    loc = store.check(a.id, a.task.item, now, recheck=True)
                    self.check_target(a, loc, 0, 1, now)
            elif a.status == 3:
                if arrived:
                    self.agent_reach_port(a, now)
                else:
                    loc = store.insert(a.id, a.task.item, now)
                    self.check_target(a, loc, 3, 2, now)
            elif a.status == 4 and arrived:
                self.agent_reach_port(a, now)

    def agent_reach_port(self, a: AgentState, now: int) -> None:
        self.deliveries.append(Delivery(a.task, a.id, a.assigned_at, now, a.fulfillment))
        queue = self.queues[a.group]
        if not queue:
            a.task = None
            a.target = None
            return
        a.task = queue.popleft()
        a.assigned_at = now
        a.read_cache = a.wrote_cache = False
        loc = self.stores[a.group].check(a.id, a.task.item, now)
        self.check_target(a, loc, 0, 1, now)

    def check_target(
        self, a: AgentState, loc: Optional[Position], status_a: int, status_b: int, now: int
    ) -> None:
        """Apply a check/insert result: ``None`` selects ``status_a``, a grid ``status_b``."""
        if loc is None:
            target = self.map.shelf_of(a.task.item) if status_a == 0 else self.groups[a.group].port
            self._set(a, status_a, target, now)
            return
        if status_b == 1:
            a.read_cache = True
        elif status_b == 2:
            a.wrote_cache = True
        self._set(a, status_b, loc, now)

    def _set(self, a: AgentState, status: int, target: Position, now: int) -> None:
        old = a.status
        if old != status:
            self.transitions[f"{old}->{status}"] += 1
            if self.on_event is not None:
                self.on_event(now, a.id, old, status, target)
        a.status = status
        a.target = target

    def check_invariants(self) -> None:
        for store in self.stores:
            store.check_invariants()
        for a in self.agents:
            lock = self.stores[a.group].lock_of(a.id)
            if a.retired:
                if lock is not None:
                    raise InvariantViolation(f"retired agent {a.id} holds {lock}")
                continue
            want = {1: "read", 2: "write"}.get(a.status)
            if want is None:
                if lock is not None:
                    raise InvariantViolation(f"agent {a.id} in status {a.status} holds {lock}")
            elif lock != (a.target, want):
                raise InvariantViolation(
                    f"agent {a.id} in status {a.status} targets {a.target} but holds {lock}"
                )
            if a.status == 0 and a.target != self.map.shelf_of(a.task.item):
                raise InvariantViolation(f"agent {a.id} in status 0 is not headed to its shelf")
            if a.status in (3, 4) and a.target != self.groups[a.group].port:
                raise InvariantViolation(f"agent {a.id} in status {a.status} is not headed to port")
            if a.status == 1 and self.stores[a.group].grid_at(a.target).item != a.task.item:
                raise InvariantViolation(f"cache {a.target} lost the item agent {a.id} is reading")
