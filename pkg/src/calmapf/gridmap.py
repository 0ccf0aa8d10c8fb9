"""Warehouse grid maps: parsing, the movement graph, groups and cache ablation.

Map text uses one character per cell::

    @  obstacle      .  aisle      S  shelf      C  cache      U  unloading port

Agents may step onto a shelf only from an aisle cell and leave it only into an
aisle cell. Caches and ports are crossed like aisles.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    IndivisibleAgents,
    InvalidCacheCount,
    MalformedMap,
    UnreachableCell,
)

Position = tuple[int, int]

INF = float("inf")

# Clockwise from north. The solver relies on this order for tie-breaking.
DIRECTIONS: tuple[Position, ...] = ((-1, 0), (0, 1), (1, 0), (0, -1))


class CellKind(enum.Enum):
    OBSTACLE = "@"
    AISLE = "."
    SHELF = "S"
    CACHE = "C"
    PORT = "U"


_KIND_OF_CHAR = {k.value: k for k in CellKind}


@dataclass(frozen=True)
class Cell:
    kind: CellKind
    position: Position


class MoveGraph:
    """Legal single-step moves and BFS distance fields for one map layout.

    Instances are shared between maps whose movement rules coincide (cache
    ablation only relabels caches as aisles), so distance fields computed for
    one run are reused by the next.
    """

    def __init__(self, rows: int, cols: int, layout: str):
        self.rows = rows
        self.cols = cols
        self.adj: dict[Position, tuple[Position, ...]] = {}
        for r in range(rows):
            for c in range(cols):
                here = layout[r * cols + c]
                if here == "@":
                    continue
                out = []
                for dr, dc in DIRECTIONS:
                    nr, nc = r + dr, c + dc
                    if not (0 <= nr < rows and 0 <= nc < cols):
                        continue
                    there = layout[nr * cols + nc]
                    if there == "@":
                        continue
                    if (here == "S" or there == "S") and not _shelf_move_ok(here, there):
                        continue
                    out.append((nr, nc))
                self.adj[(r, c)] = tuple(out)
        radj: dict[Position, list[Position]] = {v: [] for v in self.adj}
        for v, succ in self.adj.items():
            for u in succ:
                radj[u].append(v)
        self.radj = {v: tuple(p) for v, p in radj.items()}
        self._dist: dict[Position, list[float]] = {}
        self._route: dict[Position, list[float]] = {}
        self.shelves = frozenset(
            divmod(k, cols) for k, ch in enumerate(layout) if ch == "S"
        )

    def distances(self, target: Position) -> list[float]:
        """Flat row-major list of move counts from each cell to ``target``."""
        d = self._dist.get(target)
        if d is None:
            d = self._bfs(target)
            self._dist[target] = d
        return d

    def route_distances(self, target: Position) -> list[float]:
        """Like :meth:`distances` but never routing through a shelf other than ``target``.

        A shelf cell still gets a finite value (the cost of walking out of it),
        it just never serves as a shortcut between aisles.
        """
        d = self._route.get(target)
        if d is None:
            d = self._bfs(target, through_shelves=False)
            self._route[target] = d
        return d

    def _bfs(self, target: Position, through_shelves: bool = True) -> list[float]:
        cols = self.cols
        dist = [INF] * (self.rows * cols)
        dist[target[0] * cols + target[1]] = 0
        queue = deque([target])
        radj = self.radj
        while queue:
            v = queue.popleft()
            nd = dist[v[0] * cols + v[1]] + 1
            for u in radj[v]:
                k = u[0] * cols + u[1]
                if dist[k] == INF:
                    dist[k] = nd
                    if through_shelves or u not in self.shelves:
                        queue.append(u)
        return dist


def _shelf_move_ok(here: str, there: str) -> bool:
    # Shelves connect to plain aisles only ("." in the layout key).
    return {here, there} == {"S", "."}


@lru_cache(maxsize=16)
def _move_graph(rows: int, cols: int, layout: str) -> MoveGraph:
    return MoveGraph(rows, cols, layout)


@dataclass(frozen=True)
class GridMap:
    rows: int
    cols: int
    kinds: tuple[CellKind, ...]
    shelves: tuple[Position, ...]
    caches: tuple[Position, ...]
    ports: tuple[Position, ...]
    # item_of_shelf[i] is the item stored on shelves[i]; None until assigned.
    item_of_shelf: tuple[int, ...] | None = None

    def kind(self, pos: Position) -> CellKind:
        r, c = pos
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            return CellKind.OBSTACLE
        return self.kinds[r * self.cols + c]

    def cell(self, pos: Position) -> Cell:
        return Cell(self.kind(pos), pos)

    def is_traversable(self, pos: Position) -> bool:
        return self.kind(pos) is not CellKind.OBSTACLE

    @property
    def dimensions(self) -> Position:
        return (self.rows, self.cols)

    @cached_property
    def aisles(self) -> tuple[Position, ...]:
        return tuple(self._positions_of(CellKind.AISLE))

    @property
    def num_items(self) -> int:
        return len(self.shelves)

    @cached_property
    def _shelf_of_item(self) -> dict[int, Position]:
        if self.item_of_shelf is None:
            raise ValueError("items have not been assigned to shelves")
        return {item: s for s, item in zip(self.shelves, self.item_of_shelf)}

    def shelf_of(self, item: int) -> Position:
        return self._shelf_of_item[item]

    def item_at(self, shelf: Position) -> int:
        if self.item_of_shelf is None:
            raise ValueError("items have not been assigned to shelves")
        return self.item_of_shelf[self.shelves.index(shelf)]

    @cached_property
    def graph(self) -> MoveGraph:
        key = []
        for r in range(self.rows):
            for c in range(self.cols):
                k = self.kinds[r * self.cols + c]
                if k is CellKind.OBSTACLE:
                    key.append("@")
                elif k is CellKind.SHELF:
                    key.append("S")
                elif k is CellKind.AISLE:
                    key.append(".")
                elif any(self.kind((r + dr, c + dc)) is CellKind.SHELF for dr, dc in DIRECTIONS):
                    # A cache/port next to a shelf blocks that shelf, unlike an aisle.
                    key.append("o")
                else:
                    key.append(".")
        return _move_graph(self.rows, self.cols, "".join(key))

    def to_text(self) -> str:
        lines = []
        for r in range(self.rows):
            lines.append("".join(self.kinds[r * self.cols + c].value for c in range(self.cols)))
        return "\n".join(lines) + "\n"

    def _positions_of(self, kind: CellKind) -> Iterable[Position]:
        for i, k in enumerate(self.kinds):
            if k is kind:
                yield divmod(i, self.cols)


@dataclass
class Group:
    id: int
    port: Position
    cache_positions: tuple[Position, ...]
    agent_ids: tuple[int, ...]
    queue: list = field(default_factory=list)


def parse_map(text: str) -> GridMap:
    lines = text.splitlines()
    while lines and lines[0].startswith("#"):
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]
    if not lines:
        raise MalformedMap("map has no rows")
    width = len(lines[0])
    if width == 0:
        raise MalformedMap("map has an empty first row")
    kinds: list[CellKind] = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MalformedMap(f"row {r} has {len(line)} cells, expected {width}")
        for c, ch in enumerate(line):
            try:
                kinds.append(_KIND_OF_CHAR[ch])
            except KeyError:
                raise MalformedMap(f"unknown character {ch!r} at ({r}, {c})") from None
    rows = len(lines)

    def collect(kind: CellKind) -> tuple[Position, ...]:
        return tuple(divmod(i, width) for i, k in enumerate(kinds) if k is kind)

    m = GridMap(
        rows=rows,
        cols=width,
        kinds=tuple(kinds),
        shelves=collect(CellKind.SHELF),
        caches=collect(CellKind.CACHE),
        ports=collect(CellKind.PORT),
    )
    if not m.ports:
        raise MalformedMap("map has no unloading port")
    if not m.shelves:
        raise MalformedMap("map has no shelf")
    _check_connected(m)
    return m


def _check_connected(m: GridMap) -> None:
    if not m.aisles:
        raise UnreachableCell("map has no aisle cell to reach anything from")
    dist = m.graph.distances(m.aisles[0])
    for i, k in enumerate(m.kinds):
        if k is not CellKind.OBSTACLE and dist[i] == INF:
            raise UnreachableCell(f"{k.name.lower()} at {divmod(i, m.cols)} is unreachable")


def read_map(path) -> GridMap:
    with open(path, encoding="utf-8") as f:
        return parse_map(f.read())


BUILTIN_MAPS = ("toy", "warehouse-single", "warehouse-multi")


def load_builtin(name: str) -> GridMap:
    if name not in BUILTIN_MAPS:
        raise KeyError(f"no built-in map named {name!r}; choose from {', '.join(BUILTIN_MAPS)}")
    text = resources.files("calmapf.maps").joinpath(f"{name}.map").read_text(encoding="utf-8")
    return parse_map(text)


def load_map(spec: str) -> GridMap:
    """Load a built-in map by name, or a map file by path."""
    if spec in BUILTIN_MAPS:
        return load_builtin(spec)
    return read_map(spec)


def neighbors(m: GridMap, v: Position) -> list[Position]:
    """``v`` itself (waiting) followed by every legal move out of ``v``."""
    return [v, *m.graph.adj[v]]


def shortest_dist(m: GridMap, target: Position) -> np.ndarray:
    """Distance to ``target`` from every cell; ``inf`` where unreachable."""
    if not m.is_traversable(target):
        raise ValueError(f"target {target} is not traversable")
    return np.asarray(m.graph.distances(target), dtype=float).reshape(m.rows, m.cols)


def assign_items(m: GridMap, seed: int) -> GridMap:
    perm = np.random.default_rng(seed).permutation(len(m.shelves))
    return replace(m, item_of_shelf=tuple(int(i) for i in perm))


def nearest_port(m: GridMap, pos: Position) -> int:
    """Index of the port closest to ``pos``; ties go to the lower index."""
    best, best_d = 0, INF
    idx = pos[0] * m.cols + pos[1]
    for i, port in enumerate(m.ports):
        d = m.graph.distances(port)[idx]
        if d < best_d:
            best, best_d = i, d
    return best


def cache_blocks(m: GridMap) -> list[list[Position]]:
    """Active caches partitioned by nearest port, one list per port."""
    blocks: list[list[Position]] = [[] for _ in m.ports]
    for c in m.caches:
        blocks[nearest_port(m, c)].append(c)
    return blocks


def select_cache_subset(m: GridMap, n: int) -> GridMap:
    """Keep ``n`` caches by turning whole cache columns into aisle, right to left.

    Each port's cache block loses columns independently and must end up with
    ``n / #ports`` caches.
    """
    total = len(m.caches)
    if not 0 <= n <= total:
        raise InvalidCacheCount(f"cache count {n} outside [0, {total}]")
    if n == total:
        return m
    nports = len(m.ports)
    if n % nports:
        raise InvalidCacheCount(f"{n} caches cannot be split evenly over {nports} ports")
    per_group = n // nports
    removed: set[Position] = set()
    for gid, block in enumerate(cache_blocks(m)):
        keep = len(block)
        for col in sorted({c for _, c in block}, reverse=True):
            if keep <= per_group:
                break
            column = [p for p in block if p[1] == col]
            removed.update(column)
            keep -= len(column)
        if keep != per_group:
            raise InvalidCacheCount(
                f"group {gid} cannot keep exactly {per_group} caches by removing whole columns"
            )
    kinds = list(m.kinds)
    for r, c in removed:
        kinds[r * m.cols + c] = CellKind.AISLE
    return replace(
        m,
        kinds=tuple(kinds),
        caches=tuple(p for p in m.caches if p not in removed),
    )


def build_groups(m: GridMap, mode: str, agent_count: int) -> list[Group]:
    if mode == "single_port":
        if len(m.ports) != 1:
            raise ConfigError(
                f"single_port mode needs a map with one port, this map has {len(m.ports)}"
            )
        return [Group(0, m.ports[0], tuple(m.caches), tuple(range(agent_count)))]
    if mode != "multi_port":
        raise ValueError(f"unknown group mode {mode!r}")
    nports = len(m.ports)
    if agent_count % nports:
        raise IndivisibleAgents(f"{agent_count} agents cannot be split evenly over {nports} ports")
    blocks = cache_blocks(m)
    return [
        Group(
            gid,
            port,
            tuple(blocks[gid]),
            tuple(i for i in range(agent_count) if i % nports == gid),
        )
        for gid, port in enumerate(m.ports)
    ]


def default_group_mode(m: GridMap) -> str:
    return "single_port" if len(m.ports) == 1 else "multi_port"


def warehouse_text(ports: int) -> str:
    """Generate the full-scale warehouse: 1600 shelves, 80 caches, 1 or 4 ports.

    Shelves sit in 2-deep rows of ten between aisle rows and columns. The port
    area occupies the five columns left of the shelving; caches surround each
    port in a 5-column block that is ablated from its right edge.
    """
    if ports not in (1, 4):
        raise ValueError("the warehouse layout has either 1 or 4 ports")
    rows, cols = 27, 118
    grid = [["@"] * cols for _ in range(rows)]
    for r in range(1, rows - 1):
        inner = r - 1
        for c in range(1, cols - 1):
            if c >= 7 and (c - 7) % 11 != 10 and inner % 3 != 0:
                grid[r][c] = "S"
            else:
                grid[r][c] = "."
    port_rows = (4, 10, 16, 22) if ports == 4 else (13,)
    reach = 2 if ports == 4 else 8
    for pr in port_rows:
        for r in range(pr - reach, pr + reach + 1):
            for c in range(1, 6):
                grid[r][c] = "C" if r != pr else "."
        grid[pr][1] = "U"
    return "\n".join("".join(row) for row in grid) + "\n"


def format_positions(ps: Sequence[Position]) -> str:
    return ",".join(f"{r}:{c}" for r, c in ps)
