"""Weighted average consensus over a range-limited robot communication graph.

Robots within communication range exchange load estimates; each step mixes
a robot's value with its neighbors' using Metropolis weights, which keeps
the weight matrix symmetric and doubly stochastic so the fleet-wide mean
is preserved while every estimate converges toward it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class CommGraph:
    """Snapshot of who can talk to whom at one instant."""

    positions: np.ndarray  # shape (n, 2), feet
    range: float
    edges: tuple[tuple[int, int], ...]  # i < j pairs within range
    degrees: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.positions)


def comm_graph(positions: Sequence[Sequence[float]], comm_range: float) -> CommGraph:
    q = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(q)
    edges = []
    degrees = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if float(np.linalg.norm(q[j] - q[i])) <= comm_range:
                edges.append((i, j))
                degrees[i] += 1
                degrees[j] += 1
    return CommGraph(q, float(comm_range), tuple(edges), tuple(degrees))


def metropolis_weights(graph: CommGraph) -> np.ndarray:
    """Mixing matrix: W_ij = 1/(1 + max(d_i, d_j)) on edges, diagonal fills
    each row to sum 1. Symmetric, row-stochastic, entrywise in [0, 1]."""
    n = graph.n
    w = np.zeros((n, n))
    for i, j in graph.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(graph.degrees[i], graph.degrees[j]))
    for i in range(n):
        w[i, i] = 1.0 - w[i].sum()
    return w


@dataclass(frozen=True)
class ConsensusState:
    values: np.ndarray  # per-robot load estimates, minutes
    iteration: int = 0


def consensus_step(state: ConsensusState, graph: CommGraph) -> ConsensusState:
    if len(state.values) != graph.n:
        raise DimensionMismatch(
            f"state has {len(state.values)} values, graph has {graph.n} nodes"
        )
    w = metropolis_weights(graph)
    return ConsensusState(w @ state.values, state.iteration + 1)


@dataclass(frozen=True)
class ConsensusResult:
    values: np.ndarray
    steps: int
    spread: float  # max |x_i - mean(initial loads)| at exit
    converged: bool


def run_consensus(
    loads: Sequence[float],
    positions_at: Callable[[int], Sequence[Sequence[float]]],
    comm_range: float,
    eps: float = 1e-4,
    max_steps: int = 500,
) -> ConsensusResult:
    """Iterate consensus steps, re-sampling robot positions each step.

    positions_at(step) supplies the fleet positions used to rebuild the
    communication graph for that step. Stops once every estimate is
    within eps of the true mean load, or at max_steps; non-convergence
    is reported through the returned spread, never raised.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    state = ConsensusState(np.asarray(loads, dtype=float))
    mean = float(state.values.mean()) if len(state.values) else 0.0
    spread = float(np.abs(state.values - mean).max()) if len(state.values) else 0.0
    steps = 0
    while spread >= eps and steps < max_steps:
        graph = comm_graph(positions_at(steps), comm_range)
        state = consensus_step(state, graph)
        steps += 1
        spread = float(np.abs(state.values - mean).max())
    return ConsensusResult(state.values, steps, spread, spread < eps)
