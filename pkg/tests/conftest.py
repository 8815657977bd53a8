from __future__ import annotations

import pytest

from dynzone.floorgraph import JUNCTION, WS_ANCHOR, CriticalPoint, FloorGraph, Workstation
from dynzone.zoning import Zone, ZonePartition


def build_graph(points, segments, workstations, threshold):
    pts = [CriticalPoint(pid, x, y, kind) for pid, x, y, kind in points]
    ws = [Workstation(i, anchor, minutes) for i, anchor, minutes in workstations]
    return FloorGraph(pts, segments, ws, threshold)


@pytest.fixture
def line_graph():
    """Three workstations on a straight aisle: A --10-- B --20-- C."""
    return build_graph(
        points=[
            ("A", 0, 0, WS_ANCHOR),
            ("B", 10, 0, WS_ANCHOR),
            ("C", 30, 0, WS_ANCHOR),
        ],
        segments=[("A", "B"), ("B", "C")],
        workstations=[(1, "A", 1.0), (2, "B", 1.0), (3, "C", 1.0)],
        threshold=20,
    )


@pytest.fixture
def twozone_graph():
    """Two-zone example floor: a forked zone next to a short chain zone.

    Zone 1 (WS1, WS4, WS5) hangs off junction N; zone 2 (WS2, WS3, WS6)
    is the chain A-F-C. Junctions D and I sit on the unassigned corridor
    connecting the zones. WS1 and WS2 are the only cross-zone adjacent
    tips (Manhattan 30 at threshold 30).
    """
    return build_graph(
        points=[
            ("A", 0, 20, WS_ANCHOR),
            ("F", 10, 20, WS_ANCHOR),
            ("C", 20, 20, WS_ANCHOR),
            ("D", 30, 20, JUNCTION),
            ("I", 40, 20, JUNCTION),
            ("H", 40, 30, WS_ANCHOR),
            ("N", 40, 10, JUNCTION),
            ("O", 40, 0, WS_ANCHOR),
            ("S", 50, 10, JUNCTION),
            ("R", 60, 10, WS_ANCHOR),
        ],
        segments=[
            ("A", "F"),
            ("F", "C"),
            ("C", "D"),
            ("D", "I"),
            ("H", "I"),
            ("I", "N"),
            ("N", "O"),
            ("N", "S"),
            ("S", "R"),
        ],
        workstations=[
            (1, "H", 1.0),
            (2, "C", 1.0),
            (3, "A", 1.0),
            (4, "O", 1.0),
            (5, "R", 1.0),
            (6, "F", 1.0),
        ],
        threshold=30,
    )


@pytest.fixture
def twozone_partition():
    zone1 = Zone(1, (1, 4, 5), frozenset({"H|I", "I|N", "N|O", "N|S", "R|S"}))
    zone2 = Zone(2, (2, 3, 6), frozenset({"A|F", "C|F"}))
    return ZonePartition((zone1, zone2))
