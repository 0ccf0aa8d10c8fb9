"""Lock-protected cache grids for one group.

Each grid stores at most one item kind. Agents fetching a cached item hold a
shared read lock on its grid; an agent inserting an item holds the exclusive
write lock until it physically reaches the grid, at which point the new item
replaces whatever was there.

``check`` and ``insert`` return the grid position on success and ``None`` for
a miss / "go straight to the port"; the task assigner decides what ``None``
means for the agent's next target.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InvariantViolation, LockNotHeld
from .gridmap import Position


class Policy(str, enum.Enum):
    LRU = "lru"
    FIFO = "fifo"
    RANDOM = "random"
    NONE = "none"


@dataclass
class CacheGrid:
    position: Position
    item: Optional[int] = None
    read_locks: set[int] = field(default_factory=set)
    write_lock: Optional[int] = None
    inserted_at: int = -1
    last_used: int = -1

    @property
    def unlocked(self) -> bool:
        return self.write_lock is None and not self.read_locks


def evict_order(policy: Policy, grids: list[CacheGrid], rng: random.Random) -> list[CacheGrid]:
    """Occupied grids ordered from first to last eviction candidate.

    Ties keep list order (``sorted`` is stable).
    """
    if policy is Policy.LRU:
        return sorted(grids, key=lambda g: g.last_used)
    if policy is Policy.FIFO:
        return sorted(grids, key=lambda g: g.inserted_at)
    if policy is Policy.RANDOM:
        order = list(grids)
        rng.shuffle(order)
        return order
    return []


class CacheStore:
    def __init__(
        self,
        positions: Iterable[Position],
        policy: Policy | str = Policy.LRU,
        seed: int = 0,
        log: Optional[list] = None,
    ):
        self.policy = Policy(policy)
        self.grids = [CacheGrid(p) for p in positions]
        self.incoming: set[int] = set()
        self.rng = random.Random(seed)
        self.hits = 0
        self.misses = 0
        self.log = log
        self._index = {g.position: i for i, g in enumerate(self.grids)}
        self._where: dict[int, int] = {}
        self._held: dict[int, int] = {}

    def __contains__(self, pos: Position) -> bool:
        return pos in self._index

    def grid_at(self, pos: Position) -> CacheGrid:
        return self.grids[self._index[pos]]

    def stored_items(self) -> list[int]:
        return [g.item for g in self.grids if g.item is not None]

    def lock_of(self, agent: int) -> Optional[tuple[Position, str]]:
        """``(position, "read" | "write")`` for the lock ``agent`` holds, if any."""
        i = self._held.get(agent)
        if i is None:
            return None
        g = self.grids[i]
        return g.position, ("write" if g.write_lock == agent else "read")

    def check(self, agent: int, item: int, now: int, recheck: bool = False) -> Optional[Position]:
        """Take a read lock on the grid holding ``item``; ``None`` on a miss.

        Misses are counted only for first checks, not ``recheck`` calls made
        while an agent is already on its way to a shelf.
        """
        self._require_free(agent)
        i = self._where.get(item) if self.policy is not Policy.NONE else None
        if i is not None and self.grids[i].write_lock is None:
            g = self.grids[i]
            g.read_locks.add(agent)
            g.last_used = now
            self._held[agent] = i
            self.hits += 1
            self._record(now, "check", agent, item, g.position, "hit")
            return g.position
        if not recheck:
            self.misses += 1
        self._record(now, "check", agent, item, None, "miss")
        return None

    def insert(self, agent: int, item: int, now: int) -> Optional[Position]:
        """Take a write lock on a grid to place ``item`` in; ``None`` means go to port."""
        self._require_free(agent)
        target = None
        if self.policy is not Policy.NONE and item not in self._where and item not in self.incoming:
            for i, g in enumerate(self.grids):
                if g.item is None and g.unlocked:
                    target = i
                    break
            else:
                occupied = [g for g in self.grids if g.item is not None]
                for g in evict_order(self.policy, occupied, self.rng):
                    if g.unlocked:
                        target = self._index[g.position]
                        break
        if target is None:
            self._record(now, "insert", agent, item, None, "direct")
            return None
        g = self.grids[target]
        g.write_lock = agent
        self.incoming.add(item)
        self._held[agent] = target
        self._record(now, "insert", agent, item, g.position, "write")
        return g.position

    def release_all_locks(self, agent: int, item: int, at: Position, now: int) -> None:
        i = self._index.get(at)
        if i is None or self._held.get(agent) != i:
            raise LockNotHeld(f"agent {agent} holds no lock on cache {at}")
        g = self.grids[i]
        if g.write_lock == agent:
            if g.item is not None:
                del self._where[g.item]
            g.item = item
            self._where[item] = i
            g.inserted_at = now
            g.last_used = now
            g.write_lock = None
        else:
            g.read_locks.discard(agent)
        self.incoming.discard(item)
        del self._held[agent]
        self._record(now, "release", agent, item, at, "ok")

    def check_invariants(self) -> None:
        seen: set[int] = set()
        for g in self.grids:
            if g.write_lock is not None and g.read_locks:
                raise InvariantViolation(f"cache {g.position} is read- and write-locked")
            if g.item is None and g.read_locks:
                raise InvariantViolation(f"empty cache {g.position} has readers")
            if g.item is not None:
                if g.item in seen:
                    raise InvariantViolation(f"item {g.item} is cached twice")
                seen.add(g.item)
        if seen & self.incoming:
            raise InvariantViolation(f"items {sorted(seen & self.incoming)} both cached and incoming")

    def _require_free(self, agent: int) -> None:
        if agent in self._held:
            raise ValueError(f"agent {agent} already holds a cache lock")

    def _record(self, now, op, agent, item, pos, outcome) -> None:
        if self.log is not None:
            self.log.append((now, op, agent, item, pos, outcome))


def format_op(entry: tuple) -> str:
    now, op, agent, item, pos, outcome = entry
    grid = "-" if pos is None else f"{pos[0]}:{pos[1]}"
    return f"{now},{op},{agent},{item},{grid},{outcome}"
