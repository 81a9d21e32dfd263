from pathlib import Path

from sfepoa.costs import Linear
from sfepoa.network import Line, Network, make_market

DATA = Path(__file__).parent / "data"


def t3_market(f=10.0, costs=(1.0, 1.5, 2.0)):
    """Triangle with unit loads, capacity 3 per generator and uniform limit ``f``."""
    return make_market(
        [1, 2, 3],
        [(1, 2, 1.0, f), (2, 3, 1.0, f), (1, 3, 1.0, f)],
        {1: 1.0, 2: 1.0, 3: 1.0},
        {b: (0.0, 3.0, Linear(c)) for b, c in zip((1, 2, 3), costs)},
    )


def network_from_edges(edges, b=1.0):
    buses = sorted({x for e in edges for x in e})
    return Network(tuple(buses), tuple(Line(u, v, b) for u, v in edges))


TEST_NETWORKS = {
    "star4": [(1, 2), (1, 3), (1, 4)],
    "path5": [(1, 2), (2, 3), (3, 4), (4, 5)],
    "tri_pendant": [(1, 2), (1, 3), (1, 4), (2, 3)],
    "ten": [(1, 2), (2, 3), (3, 1), (1, 4), (4, 5), (5, 6), (6, 4), (6, 7), (7, 8), (8, 9), (9, 7), (5, 10)],
}

# one (criterion, PASS/FAIL, detail) entry per acceptance criterion, printed
# in the terminal summary by conftest.py
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
