"""Floor graph: critical points, critical segments, and workstations.

The manufacturing floor is a graph of critical points (aisle junctions and
workstation anchors) joined by critical segments (straight aisle stretches).
All distances are rectilinear feet measured along segments. The graph is
immutable after loading; every query here is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Iterable, Mapping

from .errors import LayoutError, NoFeasiblePath, UnknownWorkstation

JUNCTION = "junction"
WS_ANCHOR = "workstation-anchor"

LAYOUT_SCHEMA_MAJOR = 1


def segment_id(a: str, b: str) -> str:
    """Canonical id for the undirected segment between points a and b."""
    return f"{a}|{b}" if a < b else f"{b}|{a}"


@dataclass(frozen=True)
class CriticalPoint:
    id: str
    x: float
    y: float
    kind: str  # JUNCTION or WS_ANCHOR


@dataclass(frozen=True)
class CriticalSegment:
    id: str
    a: str
    b: str
    length: float

    def other(self, point: str) -> str:
        return self.b if point == self.a else self.a


@dataclass(frozen=True)
class Workstation:
    id: int
    anchor: str
    processing_time: float  # minutes per part


@dataclass(frozen=True)
class Path:
    """An ordered segment walk with its total rectilinear length in feet."""

    segments: tuple[str, ...]
    distance: float
    points: tuple[str, ...]  # visited points, including both endpoints


class FloorGraph:
    """Immutable floor graph with deterministic shortest-path queries.

    Ties between equal-length paths are broken by the lexicographic order
    of the visited point-id sequence, so repeated runs are reproducible.
    """

    def __init__(
        self,
        points: Iterable[CriticalPoint],
        segments: Iterable[tuple[str, str]],
        workstations: Iterable[Workstation],
        adjacency_threshold: float,
    ) -> None:
        self.points: dict[str, CriticalPoint] = {}
        for p in points:
            if p.id in self.points:
                raise LayoutError(f"duplicate point id {p.id!r}")
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise LayoutError(f"point {p.id!r} has non-finite position")
            if p.kind not in (JUNCTION, WS_ANCHOR):
                raise LayoutError(f"point {p.id!r} has unknown kind {p.kind!r}")
            self.points[p.id] = p
        seen_pos = {}
        for p in self.points.values():
            key = (p.x, p.y)
            if key in seen_pos:
                raise LayoutError(f"points {seen_pos[key]!r} and {p.id!r} share a position")
            seen_pos[key] = p.id

        self.segments: dict[str, CriticalSegment] = {}
        for a, b in segments:
            for end in (a, b):
                if end not in self.points:
                    raise LayoutError(f"segment endpoint {end!r} is not a point")
            if a == b:
                raise LayoutError(f"segment {a!r}-{b!r} is a self-loop")
            sid = segment_id(a, b)
            if sid in self.segments:
                raise LayoutError(f"duplicate segment {sid!r}")
            pa, pb = self.points[a], self.points[b]
            length = abs(pa.x - pb.x) + abs(pa.y - pb.y)
            if length <= 0:
                raise LayoutError(f"segment {sid!r} has non-positive length")
            lo, hi = (a, b) if a < b else (b, a)
            self.segments[sid] = CriticalSegment(sid, lo, hi, length)

        self.workstations: dict[int, Workstation] = {}
        for ws in workstations:
            if ws.id in self.workstations:
                raise LayoutError(f"duplicate workstation id {ws.id}")
            anchor = self.points.get(ws.anchor)
            if anchor is None:
                raise LayoutError(f"workstation {ws.id} anchor {ws.anchor!r} is not a point")
            if anchor.kind != WS_ANCHOR:
                raise LayoutError(f"workstation {ws.id} anchor {ws.anchor!r} is not a workstation-anchor")
            if ws.processing_time < 0:
                raise LayoutError(f"workstation {ws.id} has negative processing time")
            self.workstations[ws.id] = ws
        anchors = [ws.anchor for ws in self.workstations.values()]
        if len(set(anchors)) != len(anchors):
            raise LayoutError("two workstations share an anchor point")

        if adjacency_threshold <= 0:
            raise LayoutError("adjacency_threshold must be positive")
        self.adjacency_threshold = float(adjacency_threshold)

        # Adjacency lists sorted by neighbor id for deterministic expansion.
        self._adj: dict[str, list[tuple[str, str, float]]] = {pid: [] for pid in self.points}
        for seg in self.segments.values():
            self._adj[seg.a].append((seg.b, seg.id, seg.length))
            self._adj[seg.b].append((seg.a, seg.id, seg.length))
        for lst in self._adj.values():
            lst.sort()

        self._validate_connected()
        for ws in self.workstations.values():
            if not self._adj[ws.anchor]:
                raise LayoutError(f"workstation {ws.id} anchor has no incident segment")

    def _validate_connected(self) -> None:
        if not self.points:
            raise LayoutError("graph has no points")
        start = next(iter(self.points))
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nbr, _, _ in self._adj[cur]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if len(seen) != len(self.points):
            missing = sorted(set(self.points) - seen)
            raise LayoutError(f"graph is disconnected; unreachable points: {missing[:5]}")

    # ── Basic queries ────────────────────────────────────────────────

    def workstation(self, ws_id: int) -> Workstation:
        try:
            return self.workstations[ws_id]
        except KeyError:
            raise UnknownWorkstation(f"workstation {ws_id} does not exist") from None

    def anchor_of(self, ws_id: int) -> str:
        return self.workstation(ws_id).anchor

    def manhattan(self, a: str, b: str) -> float:
        """Manhattan distance between two points, straight-line (not along aisles)."""
        pa, pb = self.points[a], self.points[b]
        return abs(pa.x - pb.x) + abs(pa.y - pb.y)

    def adjacent(self, a: int, b: int) -> bool:
        """True iff the two workstations' anchors are within the adjacency threshold."""
        return self.manhattan(self.anchor_of(a), self.anchor_of(b)) <= self.adjacency_threshold

    # ── Shortest paths ───────────────────────────────────────────────

    def shortest_path_points(
        self,
        source: str,
        targets: set[str] | frozenset[str],
        allowed_segments: set[str] | frozenset[str] | None = None,
    ) -> Path | None:
        """Deterministic Dijkstra from a point to the nearest of a point set.

        Restricted to allowed_segments when given. Returns None if every
        target is unreachable. Equal-length ties resolve to the
        lexicographically smallest point-id route.
        """
        if source not in self.points:
            raise LayoutError(f"unknown point {source!r}")
        if source in targets:
            return Path((), 0.0, (source,))
        dist: dict[str, float] = {source: 0.0}
        route: dict[str, tuple[str, ...]] = {source: (source,)}
        segs: dict[str, tuple[str, ...]] = {source: ()}
        done: set[str] = set()
        heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (source,))]
        while heap:
            d, r = heapq.heappop(heap)
            cur = r[-1]
            if cur in done or r != route.get(cur):
                continue
            done.add(cur)
            if cur in targets:
                return Path(segs[cur], d, route[cur])
            for nbr, sid, length in self._adj[cur]:
                if allowed_segments is not None and sid not in allowed_segments:
                    continue
                if nbr in done:
                    continue
                nd = d + length
                old = dist.get(nbr)
                nr = route[cur] + (nbr,)
                if old is None or nd < old - 1e-9 or (abs(nd - old) <= 1e-9 and nr < route[nbr]):
                    dist[nbr] = nd
                    route[nbr] = nr
                    segs[nbr] = segs[cur] + (sid,)
                    heapq.heappush(heap, (nd, nr))
        return None

    def shortest_path(
        self,
        src: int,
        dst: int,
        allowed_segments: set[str] | frozenset[str] | None = None,
    ) -> Path:
        """Minimum-length aisle path between two workstations.

        Uses only allowed_segments when given. Raises NoFeasiblePath if the
        endpoints are disconnected under the restriction.
        """
        a = self.anchor_of(src)
        b = self.anchor_of(dst)
        if src == dst:
            return Path((), 0.0, (a,))
        found = self.shortest_path_points(a, {b}, allowed_segments)
        if found is None:
            raise NoFeasiblePath(f"no path from WS{src} to WS{dst} under the segment restriction")
        return found

    def distance(
        self,
        src: int,
        dst: int,
        allowed_segments: set[str] | frozenset[str] | None = None,
    ) -> float:
        return self.shortest_path(src, dst, allowed_segments).distance

    def distances_from(
        self,
        source: str,
        targets: set[str] | frozenset[str],
        allowed_segments: set[str] | frozenset[str] | None = None,
    ) -> dict[str, float]:
        """Shortest-path lengths from one point to every reachable target.

        One Dijkstra sweep serving all targets at once; unreachable targets
        are simply absent from the result.
        """
        if source not in self.points:
            raise LayoutError(f"unknown point {source!r}")
        remaining = set(targets)
        out: dict[str, float] = {}
        if source in remaining:
            out[source] = 0.0
            remaining.discard(source)
        dist: dict[str, float] = {source: 0.0}
        heap: list[tuple[float, str]] = [(0.0, source)]
        done: set[str] = set()
        while heap and remaining:
            d, cur = heapq.heappop(heap)
            if cur in done:
                continue
            done.add(cur)
            if cur in remaining:
                out[cur] = d
                remaining.discard(cur)
            for nbr, sid, length in self._adj[cur]:
                if allowed_segments is not None and sid not in allowed_segments:
                    continue
                nd = d + length
                if nbr not in done and nd < dist.get(nbr, math.inf):
                    dist[nbr] = nd
                    heapq.heappush(heap, (nd, nbr))
        return out

    # ── Serialization ────────────────────────────────────────────────

    def to_json(self) -> dict:
        return {
            "schema_version": LAYOUT_SCHEMA_MAJOR,
            "adjacency_threshold_feet": self.adjacency_threshold,
            "points": [
                {"id": p.id, "x": p.x, "y": p.y, "kind": p.kind}
                for p in self.points.values()
            ],
            "segments": [[s.a, s.b] for s in self.segments.values()],
            "workstations": [
                {
                    "id": w.id,
                    "anchor": w.anchor,
                    "processing_time_minutes": w.processing_time,
                }
                for w in self.workstations.values()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "FloorGraph":
        major = data.get("schema_version")
        if major != LAYOUT_SCHEMA_MAJOR:
            raise LayoutError(f"unsupported layout schema_version {major!r}")
        try:
            points = [
                CriticalPoint(str(p["id"]), float(p["x"]), float(p["y"]), str(p["kind"]))
                for p in data["points"]
            ]
            segments = [(str(a), str(b)) for a, b in data["segments"]]
            workstations = [
                Workstation(int(w["id"]), str(w["anchor"]), float(w["processing_time_minutes"]))
                for w in data["workstations"]
            ]
            threshold = float(data["adjacency_threshold_feet"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"malformed layout file: {exc}") from exc
        return cls(points, segments, workstations, threshold)

    @classmethod
    def load(cls, path: str | FilePath) -> "FloorGraph":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise LayoutError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_json(data)

    def save(self, path: str | FilePath) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")
