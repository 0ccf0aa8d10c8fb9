import random

import pytest
from hypothesis import given, settings, strategies as st

from calmapf.gridmap import load_builtin, neighbors, parse_map
from calmapf.solver import (
    JointStep,
    PIBTPlanner,
    PriorityState,
    plan_step,
    update_priorities,
    validate_step,
)

from conftest import TOY

# Five-cell corridor (row 1) with a two-cell pocket hanging off column 2.
CORRIDOR = """\
@@@@@@@
@.....@
@@.@@S@
@@U@@@@
@@@@@@@
"""


def drive(m, starts, targets, limit):
    planner = PIBTPlanner(m, len(starts))
    conf = tuple(starts)
    log = []
    for t in range(limit):
        if list(conf) == list(targets):
            return t, log
        step = planner.step(conf, targets)
        log.append(step)
        conf = step.to
    return None, log


def test_single_agent_straight_aisle():
    m = parse_map(CORRIDOR)
    planner = PIBTPlanner(m, 1)
    step = planner.step(((1, 1),), [(1, 4)])
    assert step.to == ((1, 2),)
    t, _ = drive(m, [(1, 1)], [(1, 4)], 10)
    assert t == 3


def test_head_on_in_corridor_uses_pocket():
    m = parse_map(CORRIDOR)
    t, log = drive(m, [(1, 1), (1, 5)], [(1, 5), (1, 1)], 4 * 5)
    assert t is not None and t <= 20
    for step in log:
        assert validate_step(m, step) is None


def test_all_at_target_is_identity(toy):
    conf = ((1, 2), (2, 4), (3, 5))
    step = plan_step(toy, conf, list(conf), PriorityState(3))
    assert step.to == conf


def test_retired_agents_stay_unless_pushed(toy):
    step = plan_step(toy, ((2, 2), (2, 4)), [None, None], PriorityState(2))
    assert step.to == ((2, 2), (2, 4))


def test_validator_reports():
    m = parse_map(TOY)
    swap = JointStep(((2, 2), (2, 3)), ((2, 3), (2, 2)))
    r = validate_step(m, swap)
    assert (r.rule, r.agents) == ("swap", (0, 1))
    vertex = JointStep(((2, 2), (2, 4)), ((2, 3), (2, 3)))
    r = validate_step(m, vertex)
    assert (r.rule, r.agents) == ("vertex", (0, 1))
    jump = JointStep(((2, 2),), ((2, 4),))
    assert validate_step(m, jump).rule == "move"
    assert validate_step(m, JointStep(((1, 2),), ((1, 1),))) is None
    # shelf to shelf is never a move
    assert validate_step(m, JointStep(((1, 1),), ((2, 1),))).rule == "move"


def test_validator_allows_follow_the_leader(toy):
    # agent 0 moves into the cell agent 1 is leaving: legal, not a swap
    assert validate_step(toy, JointStep(((2, 2), (2, 3)), ((2, 3), (2, 4)))) is None


def _traversable(m):
    return [v for v in m.graph.adj]


@pytest.mark.parametrize("name", ["toy", "warehouse-multi"])
def test_fuzz_plan_step_always_valid(name):
    m = load_builtin(name)
    cells = _traversable(m)
    rng = random.Random(11)
    trials = 6000 if name == "toy" else 4000
    for _ in range(trials):
        n = rng.randint(1, min(len(cells) - 1, 40))
        conf = tuple(rng.sample(cells, n))
        targets = [rng.choice(cells) if rng.random() > 0.1 else None for _ in range(n)]
        prio = PriorityState(n, [rng.random() * 5 for _ in range(n)])
        step = plan_step(m, conf, targets, prio)
        assert validate_step(m, step) is None


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_plan_step_valid_property(data):
    m = parse_map(CORRIDOR)
    cells = _traversable(m)
    n = data.draw(st.integers(1, len(cells)))
    conf = tuple(data.draw(st.permutations(cells))[:n])
    targets = [data.draw(st.sampled_from(cells)) for _ in range(n)]
    step = plan_step(m, conf, targets, PriorityState(n))
    assert validate_step(m, step) is None
    assert all(b in neighbors(m, a) for a, b in zip(step.frm, step.to))


def test_priority_rules():
    p = PriorityState(4)
    conf = [(1, 1), (1, 2), (1, 3), (1, 4)]
    targets = [(2, 2), (2, 2), (1, 3), None]
    for _ in range(3):
        p = update_priorities(p, conf, targets)
    assert p.values[0] == pytest.approx(0 + 3)
    assert p.values[1] == pytest.approx(0.25 + 3)
    assert p.values[2] == pytest.approx(0.5)
    assert p.values[3] == pytest.approx(0.75)
    p = update_priorities(p, [(2, 2)] + conf[1:], targets)
    assert p.values[0] == pytest.approx(0.0)
    assert p.values[1] > p.values[0]


def test_planner_deterministic():
    m = load_builtin("warehouse-single")
    rng = random.Random(3)
    cells = list(m.aisles)
    starts = rng.sample(cells, 20)
    targets = rng.sample(cells, 20)
    _, a = drive(m, starts, targets, 200)
    _, b = drive(m, starts, targets, 200)
    assert [s.to for s in a] == [s.to for s in b]


def test_planner_never_parks_on_foreign_shelf():
    m = load_builtin("warehouse-single")
    rng = random.Random(5)
    cells = list(m.aisles)
    starts = rng.sample(cells, 60)
    targets = rng.sample(cells, 60)
    _, log = drive(m, starts, targets, 300)
    shelves = set(m.shelves)
    for step in log:
        assert not shelves.intersection(step.to)
