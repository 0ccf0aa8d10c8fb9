from dataclasses import replace

import pytest

from calmapf.assigner import CACHE_READ, SHELF_DIRECT, SHELF_THEN_CACHE_WRITE, TaskAssigner
from calmapf.cachestore import CacheStore
from calmapf.errors import EmptyQueue
from calmapf.gridmap import build_groups
from calmapf.taskgen import Task

PORT = (1, 5)
SHELF = {0: (1, 1), 1: (2, 1), 2: (3, 1)}
CACHE_A, CACHE_B = (1, 3), (3, 3)


def make(toy, items, n_agents, policy="lru"):
    m = replace(toy, item_of_shelf=(0, 1, 2))
    (g,) = build_groups(m, "single_port", n_agents)
    g.queue = [Task(it, g.port, seq) for seq, it in enumerate(items)]
    store = CacheStore(g.cache_positions, policy)
    return TaskAssigner(m, [g], [store]), store


def test_init_cold_caches(toy):
    ta, _ = make(toy, [0, 1, 2, 0, 1], 4)
    ta.init_agents([(1, 2), (2, 2), (3, 2), (2, 3)])
    assert [a.status for a in ta.agents] == [0, 0, 0, 0]
    assert [a.target for a in ta.agents] == [SHELF[0], SHELF[1], SHELF[2], SHELF[0]]
    assert ta.pending == 5


def test_init_same_item_shares_shelf(toy):
    ta, _ = make(toy, [2, 2], 2)
    ta.init_agents([(1, 2), (2, 2)])
    assert ta.agents[0].target == ta.agents[1].target == SHELF[2]


def test_init_short_queue(toy):
    ta, _ = make(toy, [0], 2)
    with pytest.raises(EmptyQueue):
        ta.init_agents([(1, 2), (2, 2)])


def test_shelf_arrival_takes_write_lock_then_commits(toy):
    ta, store = make(toy, [1], 1)
    ta.init_agents([(2, 2)])
    ta.event([SHELF[1]], now=1)
    a = ta.agents[0]
    assert (a.status, a.target) == (2, CACHE_A)
    assert store.lock_of(0) == (CACHE_A, "write")
    ta.event([CACHE_A], now=4)
    assert (a.status, a.target) == (4, PORT)
    assert store.grid_at(CACHE_A).item == 1
    assert store.lock_of(0) is None
    ta.event([PORT], now=6)
    assert a.retired and a.target is None
    (d,) = ta.deliveries
    assert (d.delivered_at, d.fulfillment) == (6, SHELF_THEN_CACHE_WRITE)
    ta.check_invariants()


def test_reader_release_and_untouched_en_route(toy):
    ta, store = make(toy, [0, 0], 2)
    ta.init_agents([(1, 2), (3, 2)])
    ta.event([SHELF[0], (3, 2)], now=1)
    # agent 0 write-locked CACHE_A; agent 1 cannot read it yet
    assert ta.agents[1].status == 0
    ta.event([(1, 2), (2, 2)], now=2)
    ta.event([CACHE_A, (2, 3)], now=3)
    # committed this event; agent 1 rechecks en route and switches to a read
    assert ta.agents[1].status == 1
    assert ta.agents[1].target == CACHE_A
    assert store.lock_of(1) == (CACHE_A, "read")
    ta.event([(1, 4), (2, 3)], now=4)  # reader not there yet
    assert ta.agents[1].status == 1
    ta.event([PORT, CACHE_A], now=5)
    assert ta.agents[1].status == 4
    assert store.grid_at(CACHE_A).item == 0
    assert store.lock_of(1) is None
    assert ta.agents[1].fulfillment == CACHE_READ
    ta.check_invariants()


def test_direct_to_port_then_retry(toy):
    ta, store = make(toy, [0, 1, 2], 3)
    ta.init_agents([(1, 2), (2, 2), (3, 2)])
    # two readers pin both grids, so the third insert is refused
    for who, item, now in ((90, 5, 0), (91, 6, 0)):
        pos = store.insert(who, item, now)
        store.release_all_locks(who, item, pos, now)
    store.check(92, 5, 0)
    store.check(93, 6, 0)
    ta.event([SHELF[0], (2, 2), (3, 2)], now=1)
    a = ta.agents[0]
    assert (a.status, a.target) == (3, PORT)
    store.release_all_locks(92, 5, CACHE_A, 2)
    ta.event([(1, 2), (2, 2), (3, 2)], now=2)  # retry succeeds mid-route
    assert (a.status, a.target) == (2, CACHE_A)


def test_status3_at_port_delivers_and_pops(toy):
    ta, store = make(toy, [0, 1, 2], 1, policy="none")
    ta.init_agents([(1, 2)])
    ta.event([SHELF[0]], now=1)
    a = ta.agents[0]
    assert a.status == 3
    ta.event([PORT], now=7)
    assert ta.deliveries[0].fulfillment == SHELF_DIRECT
    assert (a.status, a.target, a.task.item, a.assigned_at) == (0, SHELF[1], 1, 7)


def test_reach_port_hit_goes_straight_to_cache(toy):
    ta, store = make(toy, [0, 2, 0], 2)
    ta.init_agents([(1, 2), (3, 2)])
    ta.event([SHELF[0], (3, 2)], now=1)
    ta.event([CACHE_A, (3, 2)], now=3)  # item 0 committed
    ta.event([PORT, (3, 2)], now=5)
    # agent 0's next task is item 0 again: cached and unlocked
    a = ta.agents[0]
    assert (a.status, a.target) == (1, CACHE_A)


def test_check_target_examples(toy):
    ta, _ = make(toy, [2], 1)
    ta.init_agents([(2, 2)])
    a = ta.agents[0]
    ta.check_target(a, None, 0, 1, now=0)
    assert (a.status, a.target) == (0, SHELF[2])
    ta.check_target(a, CACHE_B, 0, 1, now=0)
    assert (a.status, a.target) == (1, CACHE_B)
    ta.check_target(a, None, 3, 2, now=0)
    assert (a.status, a.target) == (3, PORT)
    assert ta.transitions == {"0->1": 1, "1->3": 1}


def test_event_callback(toy):
    seen = []
    ta, _ = make(toy, [1], 1)
    ta.on_event = lambda *e: seen.append(e)
    ta.init_agents([(2, 2)])
    ta.event([SHELF[1]], now=1)
    assert seen == [(1, 0, 0, 2, CACHE_A)]
