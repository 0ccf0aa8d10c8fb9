"""Seeded task-queue generators and frequency-table ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyTable, InvalidParams, MalformedCsv
from .gridmap import Position


@dataclass(frozen=True)
class Task:
    item: int
    destination: Position
    seq: int
    group: int = 0


@dataclass(frozen=True)
class FrequencyTable:
    items: tuple[int, ...]
    probs: tuple[float, ...]
    # labels[i] is the external identifier ranked i-th; empty for synthetic tables
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.items) != len(self.probs):
            raise InvalidParams("items and probabilities differ in length")
        if not self.items:
            raise EmptyTable("frequency table has no entries")
        if any(p < 0 for p in self.probs):
            raise InvalidParams("negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise InvalidParams(f"probabilities sum to {sum(self.probs)!r}, not 1")

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.items, self.probs))


def gen_mk(window: int, kinds: int, length: int, universe: int, seed: int) -> list[int]:
    """Items such that every ``window`` consecutive tasks use at most ``kinds`` kinds.

    A working set of ``kinds`` items is sampled uniformly. Each step, with
    probability ``1/window``, the working-set member seen least recently is
    scheduled for retirement: it is no longer drawn, and once it has been
    absent for ``window`` steps a fresh kind takes its slot. Every kind that
    occurs inside a window is therefore still in the working set at the
    window's end, which bounds the window to ``kinds`` distinct items.
    """
    if length < 1 or window < 1 or not 1 <= kinds <= min(window, universe):
        raise InvalidParams(
            f"need 1 <= K <= min(M, universe) and len >= 1, got M={window} K={kinds} "
            f"universe={universe} len={length}"
        )
    rng = np.random.default_rng(seed)
    active = [int(x) for x in rng.choice(universe, size=kinds, replace=False)]
    last = {k: -math.inf for k in active}
    retiring: int | None = None  # slot index
    out: list[int] = []
    for t in range(length):
        rotate = rng.random() < 1.0 / window
        if retiring is not None and t - last[active[retiring]] >= window:
            fresh = _fresh_kind(rng, universe, active)
            del last[active[retiring]]
            active[retiring] = fresh
            last[fresh] = -math.inf
            retiring = None
        if rotate and retiring is None and 1 < kinds < universe:
            retiring = min(range(kinds), key=lambda s: (last[active[s]], s))
        if retiring is None:
            k = active[int(rng.integers(kinds))]
        else:
            s = int(rng.integers(kinds - 1))
            k = active[s + (s >= retiring)]
        out.append(k)
        last[k] = t
    return out


def _fresh_kind(rng: np.random.Generator, universe: int, active: Sequence[int]) -> int:
    taken = set(active)
    while True:
        k = int(rng.integers(universe))
        if k not in taken:
            return k


def zhang_partition(universe: int, seed: int) -> tuple[list[int], list[int], list[int]]:
    """Shuffle the kinds into (hot, warm, cold) groups of 10%, 20% and 70%."""
    if universe < 10:
        raise InvalidParams(f"the 7:2:1 distribution needs at least 10 kinds, got {universe}")
    order = [int(k) for k in np.random.default_rng(seed).permutation(universe)]
    n_hot = universe // 10
    n_warm = universe // 5
    return order[:n_hot], order[n_hot:n_hot + n_warm], order[n_hot + n_warm:]


def zhang_table(universe: int, seed: int) -> FrequencyTable:
    """7:2:1 popularity: 10% of kinds carry 70% of the mass, 20% carry 20%, 70% carry 10%."""
    probs = np.empty(universe)
    for kinds, mass in zip(zhang_partition(universe, seed), (0.70, 0.20, 0.10)):
        probs[kinds] = mass / len(kinds)
    probs /= probs.sum()
    return FrequencyTable(tuple(range(universe)), tuple(float(p) for p in probs))


def gen_zhang(length: int, universe: int, seed: int) -> list[int]:
    # The partition and the draws come from independent streams.
    return gen_empirical(zhang_table(universe, seed), length, seed + 1)


def gen_empirical(table: FrequencyTable, length: int, seed: int) -> list[int]:
    """Inverse-CDF sampling of ``length`` i.i.d. items from ``table``."""
    cdf = np.cumsum(table.probs)
    cdf[-1] = 1.0
    u = np.random.default_rng(seed).random(length)
    idx = np.searchsorted(cdf, u, side="right")
    items = np.asarray(table.items)
    return [int(i) for i in items[np.minimum(idx, len(items) - 1)]]


def load_frequency_csv(path, universe: int | None = None) -> FrequencyTable:
    """Read an ``item,count`` CSV; the most frequent item becomes item 0.

    Equal counts keep file order. With ``universe`` set, only the ``universe``
    most frequent items are kept and the table is renormalized.
    """
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or [h.strip().lower() for h in rows[0]] != ["item", "count"]:
        raise MalformedCsv("expected header 'item,count'")
    counts: list[tuple[str, float]] = []
    seen: set[str] = set()
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not x.strip() for x in row):
            continue
        if len(row) != 2:
            raise MalformedCsv(f"line {n}: expected 2 fields, got {len(row)}")
        label = row[0].strip()
        try:
            count = float(row[1])
        except ValueError:
            raise MalformedCsv(f"line {n}: count {row[1]!r} is not a number") from None
        if not math.isfinite(count) or count < 0:
            raise MalformedCsv(f"line {n}: count must be a nonnegative number")
        if label in seen:
            raise MalformedCsv(f"line {n}: duplicate item {label!r}")
        seen.add(label)
        counts.append((label, count))
    return table_from_counts(counts, universe)


def table_from_counts(counts: Iterable[tuple[str, float]], universe: int | None = None) -> FrequencyTable:
    ranked = sorted(counts, key=lambda lc: -lc[1])
    if universe is not None:
        ranked = ranked[:universe]
    total = sum(c for _, c in ranked)
    if not ranked or total <= 0:
        raise EmptyTable("frequency table has no positive counts")
    return FrequencyTable(
        items=tuple(range(len(ranked))),
        probs=tuple(c / total for _, c in ranked),
        labels=tuple(label for label, _ in ranked),
    )


def write_queue_csv(path, tasks: Iterable[Task]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["seq", "item", "group"])
        for t in tasks:
            w.writerow([t.seq, t.item, t.group])


def read_queue_csv(path) -> list[tuple[int, int, int]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["seq", "item", "group"]:
        raise MalformedCsv("expected header 'seq,item,group'")
    try:
        return [(int(s), int(i), int(g)) for s, i, g in rows[1:]]
    except ValueError as e:
        raise MalformedCsv(str(e)) from None
