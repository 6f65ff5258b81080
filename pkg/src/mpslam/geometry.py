"""Planar floorplan geometry and virtual-anchor construction.

A specular reflection of an anchor's signal at a flat wall is modelled as a
line-of-sight path from a virtual anchor, the mirror image of the anchor
across the wall's supporting line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

# distances below this are treated as zero
GEOM_EPS = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate geometric input (zero-length wall, coincident points)."""


class Point2(NamedTuple):
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def as_point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"non-finite point {p!r}")
    return Point2(x, y)


@dataclass(frozen=True)
class WallSegment:
    a: Point2
    b: Point2

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        object.__setattr__(self, "b", as_point(self.b))

    @property
    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)

    def check(self) -> None:
        if self.length <= GEOM_EPS:
            raise GeometryError(f"zero-length wall {self}")


@dataclass(frozen=True)
class Floorplan:
    walls: tuple[WallSegment, ...]

    def __post_init__(self):
        walls = tuple(w if isinstance(w, WallSegment) else WallSegment(*w) for w in self.walls)
        if not walls:
            raise GeometryError("floorplan has no walls")
        for w in walls:
            w.check()
        object.__setattr__(self, "walls", walls)


@dataclass(frozen=True)
class Anchor:
    anchor_id: int
    position: Point2

    def __post_init__(self):
        object.__setattr__(self, "position", as_point(self.position))


@dataclass(frozen=True)
class VirtualAnchor:
    parent_anchor: int
    wall: int
    position: Point2
    order: int = 1
    # wall indices of the reflection sequence, first bounce first
    path: tuple[int, ...] = field(default=())


TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def mirror_point(p, wall: WallSegment) -> Point2:
    """Reflect ``p`` across the infinite line through ``wall``."""
    wall.check()
    ax, ay = wall.a
    dx, dy = wall.b.x - ax, wall.b.y - ay
    px, py = float(p[0]) - ax, float(p[1]) - ay
    t = (px * dx + py * dy) / (dx * dx + dy * dy)
    fx, fy = ax + t * dx, ay + t * dy  # foot of perpendicular
    return Point2(2.0 * fx - float(p[0]), 2.0 * fy - float(p[1]))


def distance_to_line(p, wall: WallSegment) -> float:
    wall.check()
    dx, dy = wall.b.x - wall.a.x, wall.b.y - wall.a.y
    return abs(dx * (float(p[1]) - wall.a.y) - dy * (float(p[0]) - wall.a.x)) / wall.length


def enumerate_vas(anchor: Anchor, floorplan: Floorplan, max_order: int = 1) -> list[VirtualAnchor]:
    """Mirror images of ``anchor`` across the floorplan walls.

    Order-``o`` images are obtained by mirroring order-``o-1`` images across
    every wall other than the last one used. A source lying on a wall's
    supporting line has no image across it (grazing incidence), so that wall
    is skipped for that source.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    vas: list[VirtualAnchor] = []
    frontier = [(anchor.position, ())]
    for order in range(1, max_order + 1):
        nxt = []
        for src, path in frontier:
            for w_idx, wall in enumerate(floorplan.walls):
                if path and path[-1] == w_idx:
                    continue
                if distance_to_line(src, wall) <= 1e-9:
                    continue
                pos = mirror_point(src, wall)
                new_path = path + (w_idx,)
                vas.append(VirtualAnchor(anchor.anchor_id, w_idx, pos, order, new_path))
                nxt.append((pos, new_path))
        frontier = nxt
    return vas


def range_aoa(agent_pos, orientation: float, feature_pos) -> tuple[float, float]:
    dx = float(feature_pos[0]) - float(agent_pos[0])
    dy = float(feature_pos[1]) - float(agent_pos[1])
    d = math.hypot(dx, dy)
    if d <= GEOM_EPS:
        raise GeometryError("agent and feature coincide; angle undefined")
    return d, float(wrap_angle(math.atan2(dy, dx) - orientation))


def range_aoa_batch(agent_pos: np.ndarray, orientation: float, feature_pos: np.ndarray):
    """Vectorised :func:`range_aoa` over broadcastable ``(..., 2)`` arrays.

    Coincident points are not checked; callers keep agent and features apart.
    """
    diff = np.asarray(feature_pos) - np.asarray(agent_pos)
    d = np.hypot(diff[..., 0], diff[..., 1])
    phi = wrap_angle(np.arctan2(diff[..., 1], diff[..., 0]) - orientation)
    return d, phi


def amplitude_from_distance(d: float, u_ref: float, d_ref: float = 1.0) -> float:
    """Free-space decay of the normalized amplitude, ``u_ref`` at ``d_ref``."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    if u_ref <= 0 or d_ref <= 0:
        raise ValueError("u_ref and d_ref must be positive")
    return max(0.0, u_ref * d_ref / d)


def _segment_intersection_param(p, q, a, b):
    """Return (t, s) with p + t(q-p) = a + s(b-a), or None if parallel."""
    rx, ry = q[0] - p[0], q[1] - p[1]
    sx, sy = b[0] - a[0], b[1] - a[1]
    denom = rx * sy - ry * sx
    if abs(denom) <= GEOM_EPS:
        return None
    qpx, qpy = a[0] - p[0], a[1] - p[1]
    t = (qpx * sy - qpy * sx) / denom
    s = (qpx * ry - qpy * rx) / denom
    return t, s


def reflection_point(agent_pos, va: VirtualAnchor, floorplan: Floorplan) -> Point2 | None:
    """Specular point on the generating wall for an order-1 VA, or None if off-segment."""
    wall = floorplan.walls[va.wall]
    hit = _segment_intersection_param(agent_pos, va.position, wall.a, wall.b)
    if hit is None:
        return None
    t, s = hit
    tol = 1e-12
    if -tol <= t <= 1 + tol and -tol <= s <= 1 + tol:
        return Point2(wall.a.x + s * (wall.b.x - wall.a.x), wall.a.y + s * (wall.b.y - wall.a.y))
    return None


def reflection_visible(agent_pos, va: VirtualAnchor, floorplan: Floorplan) -> bool:
    """True iff the segment agent -> VA crosses the generating wall within its extent.

    Endpoints count as hits. Higher-order images are checked bounce by bounce,
    unfolding the path from the agent back towards the anchor.
    """
    if va.order == 1 or not va.path:
        return reflection_point(agent_pos, va, floorplan) is not None
    # The last wall in the path is hit first on the way out from the agent;
    # chain holds the image targeted by each leg.
    chain = [va.position]
    pos = va.position
    for w_idx in reversed(va.path[1:]):
        pos = mirror_point(pos, floorplan.walls[w_idx])
        chain.append(pos)
    start = as_point(agent_pos)
    for w_idx, img in zip(reversed(va.path), chain):
        wall = floorplan.walls[w_idx]
        hit = _segment_intersection_param(start, img, wall.a, wall.b)
        if hit is None:
            return False
        t, s = hit
        if not (-1e-12 <= t <= 1 + 1e-12 and -1e-12 <= s <= 1 + 1e-12):
            return False
        start = Point2(wall.a.x + s * (wall.b.x - wall.a.x), wall.a.y + s * (wall.b.y - wall.a.y))
    return True


def path_length_via_reflection(agent_pos, anchor_pos, va: VirtualAnchor, floorplan: Floorplan) -> float:
    """Length of the two-leg specular path agent -> wall -> anchor (order 1)."""
    rp = reflection_point(agent_pos, va, floorplan)
    if rp is None:
        raise GeometryError("reflection point not on wall segment")
    return math.dist(agent_pos, rp) + math.dist(rp, anchor_pos)


def visible_from(agent_pos, vas: Sequence[VirtualAnchor], floorplan: Floorplan) -> list[VirtualAnchor]:
    """The VAs of ``vas`` whose reflection path is valid from ``agent_pos``."""
    return [va for va in vas if reflection_visible(agent_pos, va, floorplan)]
