#!/usr/bin/env python3
"""Regenerate the JSON data files shipped in src/dynzone/data/."""

from __future__ import annotations

import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "dynzone" / "data"

XS = [0, 40, 80, 120, 160, 200]
YS = [0, 40, 80, 120]

# Workstation id -> junction its spur stub attaches to. Stations hang off
# the aisle grid by a single stub segment, so each one is attached to its
# zone by exactly one branch and can be exchanged between adjacent zones.
WS_JUNCTION = {
    1: (1, 3),
    2: (2, 3),
    3: (3, 3),
    4: (4, 3),
    5: (5, 3),
    6: (0, 2),
    7: (2, 2),
    8: (4, 2),
    9: (1, 1),
    10: (2, 1),
    11: (4, 1),
    12: (0, 0),
    13: (1, 0),
    14: (3, 0),
    15: (4, 0),
    16: (5, 0),
    17: (0, 1),
    18: (5, 1),
}

PROCESSING = {
    1: 6, 5: 6, 15: 6,
    2: 4, 7: 4, 9: 4,
    3: 3, 6: 3, 8: 3,
    4: 5, 10: 5, 17: 5, 18: 5,
    11: 1, 12: 1, 13: 1, 14: 1, 16: 1,
}

ROUTES = [
    ("A", [4, 2, 1, 3, 14], 30),
    ("B", [5, 6, 7, 13, 17], 30),
    ("C", [11, 8, 9, 10, 18], 20),
    ("D", [14, 11, 13, 11, 8, 10, 14, 15], 20),
]


def jname(c, r):
    return f"J{c}{r}"


def make_layout18():
    points = []
    segments = []
    for r in range(len(YS)):
        for c in range(len(XS)):
            points.append({"id": jname(c, r), "x": XS[c], "y": YS[r], "kind": "junction"})

    edges = set()
    for r in range(len(YS)):
        for c in range(len(XS)):
            if c + 1 < len(XS):
                edges.add(((c, r), (c + 1, r)))
            if r + 1 < len(YS):
                edges.add(((c, r), (c, r + 1)))

    workstations = []
    for ws_id, (c, r) in sorted(WS_JUNCTION.items()):
        anchor = f"W{ws_id}"
        points.append(
            {"id": anchor, "x": XS[c] + 10, "y": YS[r] + 10, "kind": "workstation-anchor"}
        )
        segments.append([jname(c, r), anchor])
        workstations.append(
            {"id": ws_id, "anchor": anchor, "processing_time_minutes": PROCESSING[ws_id]}
        )

    for edge in sorted(edges):
        (c1, r1), (c2, r2) = edge
        segments.append([jname(c1, r1), jname(c2, r2)])

    return {
        "schema_version": 1,
        "adjacency_threshold_feet": 80,
        "points": points,
        "segments": segments,
        "workstations": workstations,
    }


def make_fig2():
    # Two-zone example floor: forked zone (WS1, WS4, WS5) and chain zone
    # (WS2, WS3, WS6), joined by an unassigned corridor through D and I.
    points = [
        {"id": "A", "x": 0, "y": 20, "kind": "workstation-anchor"},
        {"id": "F", "x": 10, "y": 20, "kind": "workstation-anchor"},
        {"id": "C", "x": 20, "y": 20, "kind": "workstation-anchor"},
        {"id": "D", "x": 30, "y": 20, "kind": "junction"},
        {"id": "I", "x": 40, "y": 20, "kind": "junction"},
        {"id": "H", "x": 40, "y": 30, "kind": "workstation-anchor"},
        {"id": "N", "x": 40, "y": 10, "kind": "junction"},
        {"id": "O", "x": 40, "y": 0, "kind": "workstation-anchor"},
        {"id": "S", "x": 50, "y": 10, "kind": "junction"},
        {"id": "R", "x": 60, "y": 10, "kind": "workstation-anchor"},
    ]
    segments = [
        ["A", "F"], ["F", "C"], ["C", "D"], ["D", "I"],
        ["H", "I"], ["I", "N"], ["N", "O"], ["N", "S"], ["S", "R"],
    ]
    workstations = [
        {"id": 1, "anchor": "H", "processing_time_minutes": 1},
        {"id": 2, "anchor": "C", "processing_time_minutes": 1},
        {"id": 3, "anchor": "A", "processing_time_minutes": 1},
        {"id": 4, "anchor": "O", "processing_time_minutes": 1},
        {"id": 5, "anchor": "R", "processing_time_minutes": 1},
        {"id": 6, "anchor": "F", "processing_time_minutes": 1},
    ]
    return {
        "schema_version": 1,
        "adjacency_threshold_feet": 30,
        "points": points,
        "segments": segments,
        "workstations": workstations,
    }


def make_dumbbell():
    # Two mirror-image clusters of three workstations joined by one bridge.
    points = []
    for i, x in enumerate([0, 20, 40, 80, 100, 120], start=1):
        points.append({"id": f"W{i}", "x": x, "y": 0, "kind": "workstation-anchor"})
    segments = [["W1", "W2"], ["W2", "W3"], ["W3", "W4"], ["W4", "W5"], ["W5", "W6"]]
    workstations = [
        {"id": i, "anchor": f"W{i}", "processing_time_minutes": 1} for i in range(1, 7)
    ]
    return {
        "schema_version": 1,
        "adjacency_threshold_feet": 40,
        "points": points,
        "segments": segments,
        "workstations": workstations,
    }


def make_scenario():
    return {
        "schema_version": 1,
        "name": "shipped-100-parts",
        "parts": [
            {"type": t, "route": route, "qty": qty} for t, route, qty in ROUTES
        ],
        "release": "simultaneous",
    }


def make_config():
    return {
        "schema_version": 1,
        "velocity_feet_per_min": 200.0,
        "unload_minutes": 0.25,
        "load_minutes": 0.25,
        "n_robots": 3,
        "comm_range_feet": 250.0,
        "l_tol_minutes": 5.0,
        "t_lt_minutes": 5.0,
        "t_ac_minutes": 2.0,
        "rolling_window_minutes": 20.0,
        "c_age": 1.0,
        "c_dist": 1.0,
        "consensus": {"eps": 1e-4, "max_steps": 500},
        "schedule": {"t_initial": 10.0, "t_freeze": 0.1, "reductions": 60, "k": 1.0},
        "ddz": {
            "episodes": 0,
            "iterations": 40,
            "iteration_minutes": 0.02,
            "temperature_resets_per_episode": False,
        },
        "ga": {
            "population": 16,
            "generations": 20,
            "crossover": 0.8,
            "mutation": 0.15,
            "elitism": 2,
        },
        "sa": {"iterations": 120},
        "time_cap_minutes": 2000.0,
    }


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name, data in [
        ("layout18", make_layout18()),
        ("fig2", make_fig2()),
        ("dumbbell", make_dumbbell()),
        ("scenario100", make_scenario()),
        ("config_default", make_config()),
    ]:
        path = DATA / f"{name}.json"
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
