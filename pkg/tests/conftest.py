import sys
from collections import deque

import pytest

from calmapf.gridmap import parse_map

TOY = """\
@@@@@@@
@S.C.U@
@S....@
@S.C..@
@@@@@@@
"""


@pytest.fixture
def toy():
    return parse_map(TOY)


def oracle_bfs(text, target):
    """Independent move-count BFS straight off the map text."""
    grid = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]

    def legal(a, b):
        ka, kb = grid[a[0]][a[1]], grid[b[0]][b[1]]
        if "@" in (ka, kb):
            return False
        if ka == "S" or kb == "S":
            return {ka, kb} == {"S", "."}
        return True

    dist = {target: 0}
    q = deque([target])
    while q:
        v = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            u = (v[0] + dr, v[1] + dc)
            if 0 <= u[0] < len(grid) and 0 <= u[1] < len(grid[0]) and u not in dist and legal(u, v):
                dist[u] = dist[v] + 1
                q.append(u)
    return dist


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.REPORT):
        terminalreporter.write_line(acceptance.REPORT[n])
