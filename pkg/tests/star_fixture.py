"""The 80-tuple four-dimensional star instance used by the heavy/light tests.

x1: A and B appear 30 times each, C 10 times, D..M once each.
x2: X appears 40 times, Y 35 times, everything else once.
x3 and x4 are unique per tuple.
"""

from cqdyn.engine import StarEngine
from cqdyn.model import StarQuerySpec, UpdateEvent

SPEC = StarQuerySpec(4, 3, 3)
A, B, C, D = 1, 2, 3, 4
LETTERS = {name: i + 1 for i, name in enumerate("ABCDEFGHIJKLM")}
X, Y = 101, 102

_counter = [10_000]


def fresh() -> int:
    _counter[0] += 1
    return _counter[0]


def center_rows():
    rows = []
    for key in (A, B):
        rows += [(key, X, fresh(), fresh()) for _ in range(20)]
        rows += [(key, Y, fresh(), fresh()) for _ in range(10)]
    rows += [(C, Y, fresh(), fresh()) for _ in range(10)]
    for name in "DEFGH":
        rows.append((LETTERS[name], Y, fresh(), fresh()))
    for name in "IJKLM":
        rows.append((LETTERS[name], fresh(), fresh(), fresh()))
    return rows


def loaded_engine():
    """Engine holding the instance, rebuilt once so thresholds reflect it."""
    engine = StarEngine(SPEC)
    rows = center_rows()
    for row in rows:
        engine.apply(UpdateEvent("+", "R1", row))
    engine.global_rebuild()
    return engine, rows


def populate_satellites(engine, rows):
    """R3 holds X and Y, R4 every x3 value, so the views are non-empty."""
    for t in rows:
        engine.apply(UpdateEvent("+", "R4", (t[2],)))
    for v in (X, Y):
        engine.apply(UpdateEvent("+", "R3", (v,)))
