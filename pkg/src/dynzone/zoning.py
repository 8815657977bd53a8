"""Zone partitions: tip workstations, transfer stations, and the load model.

A zone is a connected set of critical segments serving a set of
workstations, operated by exactly one robot. Zones exchange work at
transfer stations: a tip workstation of one zone that the neighboring
zone can reach over a connecting path. All types here are immutable
values; every operation returns a fresh partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    LayoutError,
    NoFeasiblePath,
    NotATip,
    WouldDisconnect,
    WouldEmptyZone,
    ZeroVelocity,
    ZoneViolation,
)
from .floorgraph import FloorGraph, Path

PARTITION_SCHEMA_MAJOR = 1


@dataclass(frozen=True)
class TransferStation:
    """A shared workstation where parts cross between two zones.

    `ws` primarily belongs to `station_zone`; `path_zone` absorbed the
    connecting path and reaches the station over it.
    """

    ws: int
    path: tuple[str, ...]
    station_zone: int
    path_zone: int

    def connects(self, a: int, b: int) -> bool:
        return {self.station_zone, self.path_zone} == {a, b}

    def zones(self) -> tuple[int, int]:
        return (self.station_zone, self.path_zone)


@dataclass(frozen=True)
class Zone:
    id: int
    workstations: tuple[int, ...]
    segments: frozenset[str]


@dataclass(frozen=True)
class ZonePartition:
    zones: tuple[Zone, ...]
    transfer_stations: tuple[TransferStation, ...] = ()
    design_id: int = 0

    @property
    def nz(self) -> int:
        return len(self.zones)

    def zone(self, zone_id: int) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise KeyError(f"no zone {zone_id}")

    def zone_of_ws(self, ws: int) -> int | None:
        for z in self.zones:
            if ws in z.workstations:
                return z.id
        return None

    def assigned_segments(self) -> frozenset[str]:
        out: set[str] = set()
        for z in self.zones:
            out |= z.segments
        return frozenset(out)

    def unassigned_segments(self, graph: FloorGraph) -> frozenset[str]:
        return frozenset(graph.segments) - self.assigned_segments()

    def stations_of_zone(self, zone_id: int) -> tuple[int, ...]:
        """Primary workstations plus the zone's transfer stations."""
        z = self.zone(zone_id)
        extra = [
            ts.ws
            for ts in self.transfer_stations
            if ts.path_zone == zone_id and ts.ws not in z.workstations
        ]
        return tuple(list(z.workstations) + sorted(set(extra)))

    def allowed_segments(self, graph: FloorGraph, zone_id: int) -> frozenset[str]:
        """Segments a robot confined to this zone may traverse.

        Its own primary segments, connecting paths it absorbed, and
        segments not claimed by any zone.
        """
        z = self.zone(zone_id)
        allowed = set(z.segments) | set(self.unassigned_segments(graph))
        for ts in self.transfer_stations:
            if ts.path_zone == zone_id:
                allowed.update(ts.path)
        return frozenset(allowed)

    def transfer_stations_between(self, a: int, b: int) -> tuple[TransferStation, ...]:
        return tuple(ts for ts in self.transfer_stations if ts.connects(a, b))

    def neighbor_zones(self, zone_id: int) -> tuple[int, ...]:
        out = set()
        for ts in self.transfer_stations:
            if zone_id in ts.zones():
                out.add(ts.station_zone if ts.path_zone == zone_id else ts.path_zone)
        return tuple(sorted(out))


@dataclass(frozen=True)
class HandlingTimes:
    """Per-part unload and load durations at a workstation, in minutes."""

    unload: float = 0.0
    load: float = 0.0

    def __post_init__(self) -> None:
        if self.unload < 0 or self.load < 0:
            raise ValueError("handling times must be non-negative")

    @property
    def total(self) -> float:
        return self.unload + self.load


class FlowMatrix:
    """Counts of loaded trips between workstation pairs.

    Entries are non-negative; the diagonal is identically zero.
    """

    def __init__(self, entries: Mapping[tuple[int, int], float] | None = None) -> None:
        self._f: dict[tuple[int, int], float] = {}
        if entries:
            for (i, j), c in entries.items():
                self.add(i, j, c)

    def add(self, i: int, j: int, count: float = 1.0) -> None:
        if i == j:
            return
        if count < 0:
            raise ValueError("flow counts must be non-negative")
        if count:
            self._f[(i, j)] = self._f.get((i, j), 0.0) + count

    def get(self, i: int, j: int) -> float:
        return self._f.get((i, j), 0.0)

    def total(self) -> float:
        return sum(self._f.values())

    def inflow(self, i: int) -> float:
        return sum(c for (src, dst), c in self._f.items() if dst == i)

    def outflow(self, i: int) -> float:
        return sum(c for (src, dst), c in self._f.items() if src == i)

    def stations(self) -> tuple[int, ...]:
        ids = set()
        for i, j in self._f:
            ids.add(i)
            ids.add(j)
        return tuple(sorted(ids))

    def items(self):
        return self._f.items()

    def copy(self) -> "FlowMatrix":
        return FlowMatrix(self._f)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FlowMatrix) and self._f == other._f

    def __repr__(self) -> str:
        return f"FlowMatrix({self._f!r})"


@dataclass(frozen=True)
class LoadBreakdown:
    """Per-pair distance and trip terms behind a zone's load figure."""

    stations: tuple[int, ...]
    d: dict[tuple[int, int], float]  # path distances, feet
    g: dict[tuple[int, int], float]  # expected empty trips
    empty_distance: dict[tuple[int, int], float]  # g * d, feet
    loaded_distance: dict[tuple[int, int], float]  # f * d, feet
    total_flow: float
    load: float  # minutes


# ── Tip workstations ─────────────────────────────────────────────────


def _zone_degrees(zone: Zone, graph: FloorGraph) -> dict[str, int]:
    deg: dict[str, int] = {}
    for sid in zone.segments:
        seg = graph.segments[sid]
        deg[seg.a] = deg.get(seg.a, 0) + 1
        deg[seg.b] = deg.get(seg.b, 0) + 1
    return deg


def tip_workstations(graph: FloorGraph, zone: Zone) -> tuple[int, ...]:
    """Workstations attached to the zone by a single branch.

    A lone workstation is its own tip. A workstation with two or more
    incident zone segments is never a tip.
    """
    if len(zone.workstations) == 1:
        return tuple(zone.workstations)
    deg = _zone_degrees(zone, graph)
    tips = [
        ws
        for ws in zone.workstations
        if deg.get(graph.anchor_of(ws), 0) <= 1
    ]
    return tuple(sorted(tips))


def remove_tip(graph: FloorGraph, zone: Zone, ws: int) -> tuple[Zone, frozenset[str]]:
    """Drop a tip workstation and its sole connecting branch from the zone.

    Returns the shrunk zone and the freed segments. The walk stops at the
    first point that still serves the zone (another anchor or a junction
    with remaining degree >= 2).
    """
    anchors = {graph.anchor_of(w) for w in zone.workstations if w != ws}
    segments = set(zone.segments)
    deg = _zone_degrees(zone, graph)
    freed: set[str] = set()
    cur = graph.anchor_of(ws)
    while cur not in anchors and deg.get(cur, 0) == 1:
        sid = next(
            s for s in sorted(segments)
            if cur in (graph.segments[s].a, graph.segments[s].b)
        )
        segments.discard(sid)
        freed.add(sid)
        seg = graph.segments[sid]
        deg[seg.a] -= 1
        deg[seg.b] -= 1
        cur = seg.other(cur)
    new_ws = tuple(sorted(w for w in zone.workstations if w != ws))
    return Zone(zone.id, new_ws, frozenset(segments)), frozenset(freed)


def _zone_points(graph: FloorGraph, zone: Zone) -> set[str]:
    pts = {graph.anchor_of(w) for w in zone.workstations}
    for sid in zone.segments:
        seg = graph.segments[sid]
        pts.add(seg.a)
        pts.add(seg.b)
    return pts


def _zone_connected(graph: FloorGraph, zone: Zone) -> bool:
    """True iff all workstation anchors are mutually reachable over zone segments."""
    anchors = {graph.anchor_of(w) for w in zone.workstations}
    if len(anchors) <= 1 and not zone.segments:
        return True
    adj: dict[str, list[str]] = {}
    for sid in zone.segments:
        seg = graph.segments[sid]
        adj.setdefault(seg.a, []).append(seg.b)
        adj.setdefault(seg.b, []).append(seg.a)
    pts = _zone_points(graph, zone)
    start = next(iter(sorted(pts)))
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for nbr in adj.get(cur, ()):
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    return pts <= seen


def transfer_tip(
    graph: FloorGraph,
    partition: ZonePartition,
    from_zone: int,
    to_zone: int,
    ws: int,
) -> ZonePartition:
    """Move a tip workstation (with its branch) from one zone to another.

    The receiving zone gains the workstation plus a minimal connecting
    path over its own and unassigned segments. Transfer stations touching
    either zone are dropped; callers re-run transfer-station discovery.
    """
    fz = partition.zone(from_zone)
    tz = partition.zone(to_zone)
    if from_zone == to_zone:
        raise ValueError("from_zone and to_zone must differ")
    if ws not in fz.workstations:
        raise NotATip(f"WS{ws} is not a member of zone {from_zone}")
    if ws not in tip_workstations(graph, fz):
        raise NotATip(f"WS{ws} is not a tip of zone {from_zone}")
    if len(fz.workstations) == 1:
        raise WouldEmptyZone(f"zone {from_zone} would lose its last workstation")

    new_fz, _freed = remove_tip(graph, fz, ws)
    if not _zone_connected(graph, new_fz):
        raise WouldDisconnect(f"removing WS{ws} disconnects zone {from_zone}")

    other_primary: set[str] = set()
    for z in partition.zones:
        if z.id == from_zone:
            other_primary |= new_fz.segments
        elif z.id != to_zone:
            other_primary |= z.segments
    allowed = frozenset(set(graph.segments) - other_primary)

    targets = _zone_points(graph, tz)
    found = graph.shortest_path_points(graph.anchor_of(ws), targets, allowed)
    if found is None:
        raise WouldDisconnect(f"WS{ws} cannot connect to zone {to_zone}")
    new_tz = Zone(
        tz.id,
        tuple(sorted(tz.workstations + (ws,))),
        frozenset(tz.segments | set(found.segments)),
    )

    zones = tuple(
        new_fz if z.id == from_zone else new_tz if z.id == to_zone else z
        for z in partition.zones
    )
    kept = tuple(
        ts
        for ts in partition.transfer_stations
        if from_zone not in ts.zones() and to_zone not in ts.zones()
    )
    return ZonePartition(zones, kept, partition.design_id + 1)


# ── Transfer stations ────────────────────────────────────────────────


def find_transfer_stations(
    graph: FloorGraph,
    partition: ZonePartition,
    zone_a: int,
    zone_b: int,
    loads: Mapping[int, float],
) -> tuple[TransferStation, ...]:
    """Discover the shared stations between two zones.

    Candidate pairs are adjacent tips of the two zones. Pairs are
    consumed shortest-connecting-path first; in each pair the
    higher-load zone contributes the station and the lower-load zone
    absorbs the connecting path. Ties on load go to the lower zone id.
    Returns an empty tuple when the zones share no adjacent tips.
    """
    if zone_a == zone_b:
        raise ValueError("zones must differ")
    alpha, beta = (zone_a, zone_b) if zone_a < zone_b else (zone_b, zone_a)
    za, zb = partition.zone(alpha), partition.zone(beta)
    tips_a = tip_workstations(graph, za)
    tips_b = tip_workstations(graph, zb)
    pairs = [
        (wa, wb)
        for wa in tips_a
        for wb in tips_b
        if graph.adjacent(wa, wb)
    ]
    abp = frozenset(
        set(za.segments) | set(zb.segments) | set(partition.unassigned_segments(graph))
    )
    used: set[int] = set()
    out: list[TransferStation] = []
    while True:
        best: tuple[float, int, int, tuple[str, ...], int, int] | None = None
        for wa, wb in pairs:
            if wa in used or wb in used:
                continue
            try:
                path = graph.shortest_path(wa, wb, abp)
            except NoFeasiblePath:
                continue
            key = (path.distance, min(wa, wb), max(wa, wb), path.segments, wa, wb)
            if best is None or key < best:
                best = key
        if best is None:
            break
        _, _, _, path_segs, wa, wb = best
        used.add(wa)
        used.add(wb)
        if loads.get(alpha, 0.0) >= loads.get(beta, 0.0):
            station, station_zone, path_zone = wa, alpha, beta
        else:
            station, station_zone, path_zone = wb, beta, alpha
        out.append(TransferStation(station, path_segs, station_zone, path_zone))
    return tuple(out)


def assign_transfer_stations(
    graph: FloorGraph,
    partition: ZonePartition,
    loads: Mapping[int, float] | None = None,
    zone_ids: Iterable[int] | None = None,
) -> ZonePartition:
    """Recompute transfer stations for every zone pair (or pairs touching zone_ids)."""
    loads = dict(loads or {})
    ids = sorted(z.id for z in partition.zones)
    touch = set(ids) if zone_ids is None else set(zone_ids)
    kept = [
        ts
        for ts in partition.transfer_stations
        if not (ts.station_zone in touch or ts.path_zone in touch)
    ]
    base = ZonePartition(partition.zones, tuple(kept), partition.design_id)
    found: list[TransferStation] = list(kept)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if a not in touch and b not in touch:
                continue
            found.extend(find_transfer_stations(graph, base, a, b, loads))
    return ZonePartition(partition.zones, tuple(found), partition.design_id)


# ── Shortest feasible path ───────────────────────────────────────────


def shortest_feasible_path(
    graph: FloorGraph,
    partition: ZonePartition,
    src: int,
    dst: int,
) -> Path:
    """Minimal path confined to the endpoint zones plus unassigned segments."""
    zs = partition.zone_of_ws(src)
    zd = partition.zone_of_ws(dst)
    if zs is None:
        raise ZoneViolation(f"WS{src} belongs to no zone")
    if zd is None:
        raise ZoneViolation(f"WS{dst} belongs to no zone")
    allowed = frozenset(
        set(partition.zone(zs).segments)
        | set(partition.zone(zd).segments)
        | set(partition.unassigned_segments(graph))
    )
    return graph.shortest_path(src, dst, allowed)


# ── Zone load (expected service minutes) ─────────────────────────────


def zone_load(
    graph: FloorGraph,
    partition: ZonePartition,
    zone_id: int,
    flows: FlowMatrix,
    velocity: float,
    handling: HandlingTimes,
) -> LoadBreakdown:
    """Minutes the zone's robot needs for its loaded trips, expected empty
    trips, and handling, over the zone's workstations and transfer stations.

    Expected empty trips from i to j scale with the loaded inflow at i
    times the loaded outflow at j, normalized by total flow; with zero
    total flow there are no expected empty trips.
    """
    if velocity <= 0:
        raise ZeroVelocity("velocity must be > 0")
    stations = partition.stations_of_zone(zone_id)
    allowed = partition.allowed_segments(graph, zone_id)

    anchors = {i: graph.anchor_of(i) for i in stations}
    targets = frozenset(anchors.values())
    d: dict[tuple[int, int], float] = {}
    for i in stations:
        reached = graph.distances_from(anchors[i], targets, allowed)
        for j in stations:
            if anchors[j] not in reached:
                raise NoFeasiblePath(
                    f"stations WS{i} and WS{j} are disconnected inside zone {zone_id}"
                )
            d[(i, j)] = reached[anchors[j]]

    total = flows.total()
    inflow = {i: flows.inflow(i) for i in stations}
    outflow = {i: flows.outflow(i) for i in stations}
    g: dict[tuple[int, int], float] = {}
    da: dict[tuple[int, int], float] = {}
    db: dict[tuple[int, int], float] = {}
    for i in stations:
        for j in stations:
            gij = (inflow[i] * outflow[j] / total) if total > 0 else 0.0
            g[(i, j)] = gij
            da[(i, j)] = gij * d[(i, j)]
            db[(i, j)] = flows.get(i, j) * d[(i, j)]
    load = (sum(da.values()) + sum(db.values())) / velocity + total * handling.total
    return LoadBreakdown(stations, d, g, da, db, total, load)


# ── Validation ───────────────────────────────────────────────────────


def validate_partition(graph: FloorGraph, partition: ZonePartition) -> list[str]:
    """All invariant violations of a partition, empty when it is valid."""
    violations: list[str] = []
    if not partition.zones:
        return ["partition has no zones"]
    ids = [z.id for z in partition.zones]
    if len(set(ids)) != len(ids):
        violations.append("duplicate zone ids")

    seen_ws: dict[int, int] = {}
    for z in partition.zones:
        for ws in z.workstations:
            if ws not in graph.workstations:
                violations.append(f"zone {z.id} references unknown WS{ws}")
            elif ws in seen_ws:
                violations.append(f"WS{ws} belongs to zones {seen_ws[ws]} and {z.id}")
            else:
                seen_ws[ws] = z.id
    for ws in graph.workstations:
        if ws not in seen_ws:
            violations.append(f"WS{ws} belongs to no zone")

    claimed: dict[str, int] = {}
    for z in partition.zones:
        if not z.workstations:
            violations.append(f"zone {z.id} has no workstations")
        for sid in z.segments:
            if sid not in graph.segments:
                violations.append(f"zone {z.id} references unknown segment {sid}")
            elif sid in claimed:
                violations.append(f"segment {sid} claimed by zones {claimed[sid]} and {z.id}")
            else:
                claimed[sid] = z.id
        if z.workstations and not _zone_connected(graph, z):
            violations.append(f"zone {z.id} is not connected")

    for z in partition.zones:
        if z.workstations and not tip_workstations(graph, z):
            violations.append(f"zone {z.id} has no available tip workstation")

    for ts in partition.transfer_stations:
        if ts.ws not in graph.workstations:
            violations.append(f"transfer station references unknown WS{ts.ws}")
            continue
        for zid in ts.zones():
            if zid not in ids:
                violations.append(f"transfer station WS{ts.ws} references unknown zone {zid}")
        for sid in ts.path:
            owner = claimed.get(sid)
            if owner is not None and owner not in ts.zones():
                violations.append(
                    f"connecting path of transfer station WS{ts.ws} crosses zone {owner}"
                )

    if partition.nz > 1 and not violations:
        for z in partition.zones:
            if not partition.neighbor_zones(z.id):
                violations.append(f"zone {z.id} reaches no neighbor via a transfer station")
        # All zones must be mutually reachable through the transfer graph,
        # otherwise cross-zone deliveries cannot be planned.
        reach = {partition.zones[0].id}
        frontier = [partition.zones[0].id]
        while frontier:
            cur = frontier.pop()
            for nbr in partition.neighbor_zones(cur):
                if nbr not in reach:
                    reach.add(nbr)
                    frontier.append(nbr)
        for z in partition.zones:
            if z.id not in reach:
                violations.append(f"zone {z.id} is unreachable through transfer stations")
    return violations


# ── Delivery planning ────────────────────────────────────────────────


def plan_delivery(
    graph: FloorGraph,
    partition: ZonePartition,
    src: int,
    dst: int,
) -> list[tuple[int, int, int]]:
    """Legs (pickup, dropoff, serving zone) moving a part from src to dst.

    Cross-zone deliveries hop between zones at transfer stations; each
    leg is served by the robot of the zone being traversed.
    """
    if src == dst:
        return []
    zs = partition.zone_of_ws(src)
    zd = partition.zone_of_ws(dst)
    if zs is None or zd is None:
        raise ZoneViolation(f"WS{src if zs is None else dst} belongs to no zone")
    if zs == zd:
        return [(src, dst, zs)]

    # BFS over the zone graph, deterministic by zone id.
    prev: dict[int, int] = {zs: zs}
    frontier = [zs]
    while frontier and zd not in prev:
        nxt: list[int] = []
        for cur in frontier:
            for nbr in partition.neighbor_zones(cur):
                if nbr not in prev:
                    prev[nbr] = cur
                    nxt.append(nbr)
        frontier = nxt
    if zd not in prev:
        raise NoFeasiblePath(f"zones {zs} and {zd} share no transfer-station route")
    chain = [zd]
    while chain[-1] != zs:
        chain.append(prev[chain[-1]])
    chain.reverse()

    legs: list[tuple[int, int, int]] = []
    cur_ws = src
    for a, b in zip(chain, chain[1:]):
        stations = partition.transfer_stations_between(a, b)
        ts = min(stations, key=lambda t: t.ws)
        if cur_ws != ts.ws:
            legs.append((cur_ws, ts.ws, a))
        cur_ws = ts.ws
    if cur_ws != dst:
        legs.append((cur_ws, dst, zd))
    return legs


# ── Serialization ────────────────────────────────────────────────────


def partition_to_json(partition: ZonePartition) -> dict:
    return {
        "schema_version": PARTITION_SCHEMA_MAJOR,
        "design_id": partition.design_id,
        "zones": [
            {
                "id": z.id,
                "workstations": list(z.workstations),
                "segments": sorted(z.segments),
            }
            for z in partition.zones
        ],
        "transfer_stations": [
            {
                "ws": ts.ws,
                "path": list(ts.path),
                "station_zone": ts.station_zone,
                "path_zone": ts.path_zone,
            }
            for ts in partition.transfer_stations
        ],
    }


def partition_from_json(data: Mapping) -> ZonePartition:
    major = data.get("schema_version")
    if major != PARTITION_SCHEMA_MAJOR:
        raise LayoutError(f"unsupported partition schema_version {major!r}")
    try:
        zones = tuple(
            Zone(
                int(z["id"]),
                tuple(sorted(int(w) for w in z["workstations"])),
                frozenset(str(s) for s in z["segments"]),
            )
            for z in data["zones"]
        )
        stations = tuple(
            TransferStation(
                int(t["ws"]),
                tuple(str(s) for s in t["path"]),
                int(t["station_zone"]),
                int(t["path_zone"]),
            )
            for t in data.get("transfer_stations", [])
        )
        design_id = int(data.get("design_id", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"malformed partition file: {exc}") from exc
    return ZonePartition(zones, stations, design_id)


def save_partition(partition: ZonePartition, path) -> None:
    with open(path, "w") as fh:
        json.dump(partition_to_json(partition), fh, indent=2)
        fh.write("\n")


def load_partition(path) -> ZonePartition:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LayoutError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return partition_from_json(data)
