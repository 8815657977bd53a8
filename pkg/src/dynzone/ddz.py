"""Decentralized dynamic zoning: imbalance detection, leader rotation, and
the per-leader annealing search over tip-workstation exchanges.

Each robot owns the zone with its own id. When a robot's load stays out of
tolerance against the consensus average for long enough, it signals its
neighbors, the signal floods through the communication graph, and the
connected component runs leader-rotating annealing: the leader repeatedly
trades a random tip workstation with a random neighbor, re-queues the
affected parts, and accepts or rejects the move against the local load
standard deviation under a geometric cooling schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    NoNeighbors,
    NotATip,
    WouldDisconnect,
    WouldEmptyZone,
)
from .floorgraph import FloorGraph
from .zoning import (
    FlowMatrix,
    HandlingTimes,
    ZonePartition,
    assign_transfer_stations,
    plan_delivery,
    tip_workstations,
    transfer_tip,
    validate_partition,
    zone_load,
)


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric cooling from an initial to a freezing temperature."""

    t_initial: float = 10.0
    t_freeze: float = 0.1
    reductions: int = 60  # temperature steps from t_initial down to t_freeze
    k: float = 1.0  # weight temperature constant in the acceptance probability

    def __post_init__(self) -> None:
        if not (self.t_initial > self.t_freeze > 0):
            raise ValueError("require t_initial > t_freeze > 0")
        if self.reductions < 1:
            raise ValueError("reductions must be >= 1")
        if self.k <= 0:
            raise ValueError("k must be > 0")


def temperature(schedule: AnnealingSchedule, n: int) -> float:
    """Temperature after n reductions; t_initial at n = 0, t_freeze at n = reductions."""
    if n < 0:
        raise ValueError("iteration must be >= 0")
    return schedule.t_initial * (schedule.t_freeze / schedule.t_initial) ** (
        n / schedule.reductions
    )


def load_sigma(
    own_load: float,
    consensus_value: float,
    neighbor_loads: Sequence[float],
    literal_sign: bool = False,
) -> float:
    """Standard deviation of the local loads against the consensus average.

    The default uses (own_load - consensus_value)^2 so a perfectly balanced
    neighborhood scores zero. literal_sign=True flips the own-load term to
    (own_load + consensus_value)^2 for comparison runs.
    """
    own = own_load + consensus_value if literal_sign else own_load - consensus_value
    total = own * own + sum((lj - consensus_value) ** 2 for lj in neighbor_loads)
    return math.sqrt(total / (len(neighbor_loads) + 1))


def detect_imbalance(
    history: Sequence[tuple[float, float, float]],
    l_tol: float,
    t_lt: float,
    now: float,
) -> bool:
    """True iff |load - consensus| > l_tol has held without interruption for
    the trailing t_lt minutes.

    history holds (time, load, consensus_value) samples in time order; any
    in-tolerance sample resets the violation timer.
    """
    streak_start: float | None = None
    for t, load, x in reversed(history):
        if t > now:
            continue
        if abs(load - x) > l_tol:
            streak_start = t
        else:
            break
    return streak_start is not None and now - streak_start >= t_lt


def propagate_start(
    origin: int,
    positions: Mapping[int, tuple[float, float]],
    comm_range: float,
) -> frozenset[int]:
    """Robots reached by flood-filling the start signal from origin."""
    reached = {origin}
    frontier = [origin]
    while frontier:
        cur = frontier.pop()
        qx, qy = positions[cur]
        for other, (ox, oy) in positions.items():
            if other in reached:
                continue
            if math.hypot(ox - qx, oy - qy) <= comm_range:
                reached.add(other)
                frontier.append(other)
    return frozenset(reached)


@dataclass(frozen=True)
class DdzConfig:
    """Protocol parameters; zeros mean "derive from the fleet and schedule"."""

    l_tol: float = 5.0  # tolerable |load - consensus| gap, minutes
    t_lt: float = 5.0  # violation duration that triggers redesign, minutes
    t_ac: float = 2.0  # consensus cadence, minutes
    comm_range: float = 250.0  # feet
    episodes: int = 0  # 0: one episode per participating robot
    iterations: int = 0  # 0: spread the cooling schedule across all episodes
    iteration_minutes: float = 0.02  # simulated communication cost per iteration
    temperature_resets_per_episode: bool = False
    literal_sigma: bool = False

    def __post_init__(self) -> None:
        if min(self.l_tol, self.t_lt, self.t_ac, self.comm_range) <= 0:
            raise ValueError("l_tol, t_lt, t_ac, and comm_range must be positive")
        if self.episodes < 0 or self.iterations < 0 or self.iteration_minutes < 0:
            raise ValueError("episodes, iterations, iteration_minutes must be >= 0")


@dataclass(frozen=True)
class QueuedPart:
    """A part awaiting delivery: where it sits now and where it goes next."""

    part_id: int
    location: int  # workstation the part is waiting at
    destination: int  # next processing workstation


def queue_flows(
    partition: ZonePartition,
    graph: FloorGraph,
    tasks: Sequence[QueuedPart],
) -> dict[int, FlowMatrix]:
    """Per-zone flows from the parts currently waiting, re-queued under the
    given partition: each part contributes its next delivery leg to the
    zone serving that leg."""
    flows: dict[int, FlowMatrix] = {z.id: FlowMatrix() for z in partition.zones}
    for task in tasks:
        legs = plan_delivery(graph, partition, task.location, task.destination)
        if legs:
            pickup, dropoff, zone_id = legs[0]
            flows[zone_id].add(pickup, dropoff, 1.0)
    return flows


def fleet_loads(
    graph: FloorGraph,
    partition: ZonePartition,
    tasks: Sequence[QueuedPart],
    velocity: float,
    handling: HandlingTimes,
) -> dict[int, float]:
    flows = queue_flows(partition, graph, tasks)
    return {
        z.id: zone_load(graph, partition, z.id, flows[z.id], velocity, handling).load
        for z in partition.zones
    }


@dataclass
class DdzResult:
    partition: ZonePartition
    participants: tuple[int, ...]
    leaders: tuple[int, ...]
    sigma_initial: float
    sigma_final: float
    iterations_run: int
    trace: list[dict] = field(default_factory=list)


def ddz_optimize(
    graph: FloorGraph,
    partition: ZonePartition,
    positions: Mapping[int, tuple[float, float]],
    tasks: Sequence[QueuedPart],
    consensus_values: Mapping[int, float],
    origin: int,
    config: DdzConfig,
    schedule: AnnealingSchedule,
    rng,
    velocity: float,
    handling: HandlingTimes,
) -> DdzResult:
    """Run the leader-rotating annealing search and return the adopted design.

    rng is the run's seeded random stream; every proposal, tip draw, and
    acceptance draw comes from it, so a fixed seed replays bit-identically.
    The trace records one entry per proposal with sigma before/after, the
    acceptance probability, and the drawn uniform.
    """
    participants = sorted(propagate_start(origin, positions, config.comm_range))
    if len(participants) < 2:
        raise NoNeighbors(f"robot {origin} has no neighbors in range")

    def neighbors_of(robot: int) -> list[int]:
        qx, qy = positions[robot]
        return [
            other
            for other in participants
            if other != robot
            and math.hypot(positions[other][0] - qx, positions[other][1] - qy)
            <= config.comm_range
        ]

    episodes = config.episodes or len(participants)
    iterations = config.iterations or max(1, -(-(schedule.reductions + 1) // episodes))

    current = partition
    loads = fleet_loads(graph, partition, tasks, velocity, handling)

    def sigma_at(robot: int, zone_loads: Mapping[int, float]) -> float:
        return load_sigma(
            zone_loads[robot],
            consensus_values[robot],
            [zone_loads[j] for j in neighbors_of(robot)],
            literal_sign=config.literal_sigma,
        )

    sigma_initial = sigma_at(origin, loads)
    trace: list[dict] = []
    leaders: list[int] = []
    leader = origin
    n_global = 0
    iterations_run = 0

    for episode in range(episodes):
        leaders.append(leader)
        best_p, best_loads = current, loads
        best_sigma = sigma_at(leader, loads)
        nbrs = neighbors_of(leader)
        for it in range(iterations):
            n = it if config.temperature_resets_per_episode else n_global
            n_global += 1
            iterations_run += 1
            sigma_cur = sigma_at(leader, loads)
            j = rng.choice(nbrs)
            giver, receiver = (leader, j) if loads[leader] >= loads[j] else (j, leader)

            candidate = None
            tips = list(tip_workstations(graph, current.zone(giver)))
            while tips:
                ws = rng.choice(sorted(tips))
                tips.remove(ws)
                try:
                    moved = transfer_tip(graph, current, giver, receiver, ws)
                except (NotATip, WouldDisconnect, WouldEmptyZone):
                    continue
                moved = assign_transfer_stations(graph, moved, loads, participants)
                if validate_partition(graph, moved):
                    continue
                candidate = (ws, moved)
                break
            if candidate is None:
                trace.append(
                    {
                        "episode": episode,
                        "leader": leader,
                        "kind": "invalid-move",
                        "giver": giver,
                        "receiver": receiver,
                    }
                )
                continue

            ws, moved = candidate
            new_loads = fleet_loads(graph, moved, tasks, velocity, handling)
            sigma_new = sigma_at(leader, new_loads)
            energy = sigma_cur - sigma_new
            t_c = temperature(schedule, n)
            if energy >= 0:
                prob = 1.0
            else:
                denom = schedule.k * t_c
                # k * t_c can underflow to zero; a worsening move at zero
                # weighted temperature is never accepted.
                prob = math.exp(energy / denom) if denom > 0 else 0.0
            draw = rng.random()
            accepted = sigma_new <= sigma_cur or draw <= prob
            trace.append(
                {
                    "episode": episode,
                    "leader": leader,
                    "kind": "proposal",
                    "giver": giver,
                    "receiver": receiver,
                    "ws": ws,
                    "sigma_before": sigma_cur,
                    "sigma_after": sigma_new,
                    "temperature": t_c,
                    "p": prob,
                    "draw": draw,
                    "accepted": accepted,
                }
            )
            if accepted:
                current, loads = moved, new_loads
            if sigma_new < best_sigma:
                best_p, best_loads, best_sigma = moved, new_loads, sigma_new

        current, loads = best_p, best_loads
        trace.append(
            {
                "episode": episode,
                "leader": leader,
                "kind": "episode-adopt",
                "sigma": best_sigma,
            }
        )
        leader = participants[(participants.index(leader) + 1) % len(participants)]

    return DdzResult(
        partition=current,
        participants=tuple(participants),
        leaders=tuple(leaders),
        sigma_initial=sigma_initial,
        sigma_final=sigma_at(leaders[-1], loads),
        iterations_run=iterations_run,
        trace=trace,
    )
