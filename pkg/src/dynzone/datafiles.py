"""Access to the layout, scenario, and config files shipped with the package.

The 18-workstation layout is a rectilinear aisle-grid approximation of a
manufacturing floor: a 6x4 junction grid at 40-ft spacing with each
workstation hanging off a junction on its own 20-ft stub, so every station
joins its zone by exactly one branch. It is an approximation, not a survey
of any real floor.
"""

from __future__ import annotations

import json
from importlib import resources

from .floorgraph import FloorGraph

LAYOUTS = ("layout18", "fig2", "dumbbell")


def data_text(name: str) -> str:
    return resources.files("dynzone.data").joinpath(f"{name}.json").read_text()


def load_json(name: str) -> dict:
    return json.loads(data_text(name))


def load_layout(name: str) -> FloorGraph:
    return FloorGraph.from_json(load_json(name))


def load_scenario(name: str = "scenario100") -> dict:
    return load_json(name)


def load_config(name: str = "config_default") -> dict:
    return load_json(name)
