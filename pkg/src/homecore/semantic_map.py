"""Semantic map: named room, furniture and door contours on a 2D floor plan.

Contours are stored counter-clockwise. Point location uses a cross-product
winding number; points within ``BOUNDARY_TOL`` of an edge count as inside,
so a robot standing in a doorway still resolves to a room.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InvalidPolygon,
    NoFeasibleEdge,
    ParseError,
    UnknownTarget,
    ValidationError,
)

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9
DEFAULT_STANDOFF = 0.6
DEFAULT_RESOLUTION = 0.05
MIN_COLOR_DISTANCE = 32.0

Point2 = tuple[float, float]


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _segment_distance(px, py, x0, y0, x1, y1) -> float:
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    t = ((px - x0) * dx + (py - y0) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def _orient(a, b, c) -> int:
    v = _cross(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1])
    return (v > 0) - (v < 0)


def _on_segment(a, b, c) -> bool:
    # c collinear with a-b: is it within the segment's bounding box
    return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if d1 != d2 and d3 != d4:
        return True
    return ((d1 == 0 and _on_segment(q1, q2, p1))
            or (d2 == 0 and _on_segment(q1, q2, p2))
            or (d3 == 0 and _on_segment(p1, p2, q1))
            or (d4 == 0 and _on_segment(p1, p2, q2)))


def signed_area(vertices: Sequence[Point2]) -> float:
    n = len(vertices)
    total = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


@dataclass(frozen=True)
class Polygon2:
    """Simple polygon with vertices normalized to counter-clockwise order."""

    vertices: tuple[Point2, ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise InvalidPolygon(f"polygon needs at least 3 vertices, got {len(verts)}")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise InvalidPolygon("polygon vertices must be finite")
        n = len(verts)
        for i in range(n):
            if verts[i] == verts[(i + 1) % n]:
                raise InvalidPolygon(f"zero-length edge at vertex {i}")
        if not _is_simple(verts):
            raise InvalidPolygon("polygon is self-intersecting")
        area = signed_area(verts)
        if area == 0.0:
            raise InvalidPolygon("polygon has zero area")
        if area < 0:
            verts = verts[::-1]
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def centroid(self) -> Point2:
        a = 0.0
        cx = cy = 0.0
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            c = x0 * y1 - x1 * y0
            a += c
            cx += (x0 + x1) * c
            cy += (y0 + y1) * c
        a *= 0.5
        return (cx / (6 * a), cy / (6 * a))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def edges(self) -> list[tuple[Point2, Point2]]:
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


def _is_simple(verts: tuple[Point2, ...]) -> bool:
    n = len(verts)
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a0, a1 = edges[i]
        for j in range(i + 1, n):
            b0, b1 = edges[j]
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                # shared vertex is fine; overlapping collinear edges are not
                shared = a1 if j == i + 1 else a0
                other_a = a0 if j == i + 1 else a1
                other_b = b1 if j == i + 1 else b0
                if _orient(shared, other_a, other_b) == 0:
                    ax, ay = other_a[0] - shared[0], other_a[1] - shared[1]
                    bx, by = other_b[0] - shared[0], other_b[1] - shared[1]
                    if ax * bx + ay * by > 0:
                        return False
                continue
            if _segments_intersect(a0, a1, b0, b1):
                return False
    return True


def as_polygon(polygon) -> Polygon2:
    return polygon if isinstance(polygon, Polygon2) else Polygon2(tuple(polygon))


def contains_point(polygon, p: Point2, tol: float = BOUNDARY_TOL) -> bool:
    """Winding-number containment; points within ``tol`` of an edge are inside."""
    poly = as_polygon(polygon)
    px, py = float(p[0]), float(p[1])
    verts = poly.vertices
    n = len(verts)
    winding = 0
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if _segment_distance(px, py, x0, y0, x1, y1) <= tol:
            return True
        side = _cross(x1 - x0, y1 - y0, px - x0, py - y0)
        if y0 <= py:
            if y1 > py and side > 0:
                winding += 1
        elif y1 <= py and side < 0:
            winding -= 1
    return winding != 0


def contains_points(polygon, points: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Vectorized :func:`contains_point` over an ``(N, 2)`` array."""
    poly = as_polygon(polygon)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    px, py = pts[:, 0], pts[:, 1]
    verts = poly.as_array()
    winding = np.zeros(len(pts), dtype=int)
    on_edge = np.zeros(len(pts), dtype=bool)
    for (x0, y0), (x1, y1) in zip(verts, np.roll(verts, -1, axis=0)):
        dx, dy = x1 - x0, y1 - y0
        t = np.clip(((px - x0) * dx + (py - y0) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        on_edge |= np.hypot(px - (x0 + t * dx), py - (y0 + t * dy)) <= tol
        side = dx * (py - y0) - (px - x0) * dy
        up = (y0 <= py) & (y1 > py) & (side > 0)
        down = (y0 > py) & (y1 <= py) & (side < 0)
        winding += up.astype(int) - down.astype(int)
    return on_edge | (winding != 0)


def distance_to_boundary(polygon, p: Point2) -> float:
    poly = as_polygon(polygon)
    return min(_segment_distance(p[0], p[1], a[0], a[1], b[0], b[1]) for a, b in poly.edges())


# --------------------------------------------------------------------------- map types


@dataclass(frozen=True)
class Room:
    name: str
    contour: Polygon2


@dataclass(frozen=True)
class Furniture:
    name: str
    room: str
    contour: Polygon2


@dataclass(frozen=True)
class Door:
    name: str
    rooms: tuple[str, str]
    contour: Polygon2


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def position(self) -> Point2:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "yaw": self.yaw}


def normalize_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    theta = math.atan2(math.sin(theta), math.cos(theta)) if abs(theta) > math.pi else theta
    return math.pi if theta == -math.pi else theta


@dataclass(frozen=True)
class SemanticMap:
    rooms: tuple[Room, ...] = ()
    furniture: tuple[Furniture, ...] = ()
    doors: tuple[Door, ...] = ()

    def __post_init__(self):
        for name in ("rooms", "furniture", "doors"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        for category in ("rooms", "furniture", "doors"):
            seen = set()
            for item in getattr(self, category):
                if item.name in seen:
                    raise ValidationError(
                        f"duplicate name {item.name!r} in {category}",
                        invariant="unique-names", category=category, name=item.name)
                seen.add(item.name)
        rooms = {r.name: r for r in self.rooms}
        for f in self.furniture:
            if f.room not in rooms:
                raise ValidationError(
                    f"furniture {f.name!r} references missing room {f.room!r}",
                    invariant="furniture-room-exists", name=f.name)
            if not contains_point(rooms[f.room].contour, f.contour.centroid):
                raise ValidationError(
                    f"furniture {f.name!r} centroid lies outside room {f.room!r}",
                    invariant="furniture-centroid-in-room", name=f.name)
        for d in self.doors:
            a, b = d.rooms
            if a == b:
                raise ValidationError(f"door {d.name!r} connects room {a!r} to itself",
                                      invariant="door-rooms-distinct", name=d.name)
            for r in d.rooms:
                if r not in rooms:
                    raise ValidationError(f"door {d.name!r} references missing room {r!r}",
                                          invariant="door-rooms-exist", name=d.name)

    def room(self, name: str) -> Room | None:
        return next((r for r in self.rooms if r.name == name), None)

    def furniture_named(self, name: str) -> Furniture | None:
        return next((f for f in self.furniture if f.name == name), None)

    def door(self, name: str) -> Door | None:
        return next((d for d in self.doors if d.name == name), None)

    def areas(self) -> list[tuple[str, Polygon2]]:
        """All named contours in paint order: rooms, furniture, doors."""
        return ([(r.name, r.contour) for r in self.rooms]
                + [(f.name, f.contour) for f in self.furniture]
                + [(d.name, d.contour) for d in self.doors])

    def bounds(self) -> tuple[float, float, float, float]:
        boxes = [poly.bounds for _, poly in self.areas()]
        if not boxes:
            return (0.0, 0.0, 1.0, 1.0)
        return (min(b[0] for b in boxes), min(b[1] for b in boxes),
                max(b[2] for b in boxes), max(b[3] for b in boxes))


# --------------------------------------------------------------------------- queries


def locate_candidates(smap: SemanticMap, p: Point2) -> list[str]:
    """Rooms containing ``p``, ordered by area then file order."""
    hits = [(r.contour.area, i, r.name) for i, r in enumerate(smap.rooms)
            if contains_point(r.contour, p)]
    return [name for _, _, name in sorted(hits)]


def locate(smap: SemanticMap, p: Point2) -> str | None:
    candidates = locate_candidates(smap, p)
    if not candidates:
        return None
    if len(candidates) > 1:
        log.warning("point %s lies in %d rooms %s; choosing %r",
                    tuple(p), len(candidates), candidates, candidates[0])
    return candidates[0]


@dataclass(frozen=True)
class EdgeCandidate:
    index: int
    midpoint: Point2
    normal: Point2
    length: float
    goal: Point2
    feasible: bool
    reason: str = ""


def navigation_candidates(smap: SemanticMap, target: str,
                          standoff: float = DEFAULT_STANDOFF) -> list[EdgeCandidate]:
    furniture = smap.furniture_named(target)
    if furniture is None:
        raise UnknownTarget(f"no furniture named {target!r}", target=target)
    if not standoff > 0:
        raise ValueError("standoff must be positive")
    room = smap.room(furniture.room)
    out = []
    for i, ((x0, y0), (x1, y1)) in enumerate(furniture.contour.edges()):
        length = math.hypot(x1 - x0, y1 - y0)
        # counter-clockwise contour: outward normal is the edge direction turned right
        nx, ny = (y1 - y0) / length, -(x1 - x0) / length
        mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        goal = (mx + standoff * nx, my + standoff * ny)
        reason = ""
        if not contains_point(room.contour, goal):
            reason = f"outside room {room.name!r}"
        else:
            blocker = next((f.name for f in smap.furniture if contains_point(f.contour, goal)), None)
            if blocker is not None:
                reason = f"inside furniture {blocker!r}"
        out.append(EdgeCandidate(i, (mx, my), (nx, ny), length, goal, not reason, reason))
    return out


def navigation_point(smap: SemanticMap, target: str,
                     standoff: float = DEFAULT_STANDOFF) -> Pose2:
    """Standoff pose on the outward normal of the longest feasible edge of ``target``."""
    best = None
    for cand in navigation_candidates(smap, target, standoff):
        if cand.feasible and (best is None or cand.length > best.length + BOUNDARY_TOL):
            best = cand
    if best is None:
        raise NoFeasibleEdge(f"no edge of {target!r} admits a goal at standoff {standoff} m",
                             target=target, standoff=standoff)
    gx, gy = best.goal
    yaw = math.atan2(best.midpoint[1] - gy, best.midpoint[0] - gx)
    return Pose2(gx, gy, yaw)


def selected_edge(smap: SemanticMap, target: str, standoff: float = DEFAULT_STANDOFF) -> EdgeCandidate:
    pose = navigation_point(smap, target, standoff)
    return next(c for c in navigation_candidates(smap, target, standoff)
                if c.feasible and c.goal == pose.position)


# --------------------------------------------------------------------------- occupancy grid


@dataclass(eq=False)
class OccupancyGrid:
    """Row-major occupancy flags; row ``j`` covers ``origin.y + j*resolution``."""

    origin: Point2
    resolution: float
    width: int
    height: int
    cells: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width), dtype=bool)
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.shape != (self.height, self.width):
            raise ValueError(f"cells shape {self.cells.shape} != ({self.height}, {self.width})")

    @classmethod
    def covering(cls, smap: SemanticMap, resolution: float = DEFAULT_RESOLUTION,
                 margin: float = 0.0) -> "OccupancyGrid":
        x0, y0, x1, y1 = smap.bounds()
        width = max(1, int(math.ceil(round((x1 - x0 + 2 * margin) / resolution, 9))))
        height = max(1, int(math.ceil(round((y1 - y0 + 2 * margin) / resolution, 9))))
        return cls((x0 - margin, y0 - margin), resolution, width, height)

    def cell_centers(self) -> np.ndarray:
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.resolution
        ys = oy + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def occupied_count(self) -> int:
        return int(self.cells.sum())

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.origin == other.origin and self.resolution == other.resolution
                and self.width == other.width and self.height == other.height
                and np.array_equal(self.cells, other.cells))


def inject_obstacles(smap: SemanticMap, grid: OccupancyGrid) -> OccupancyGrid:
    """Mark every cell whose center is inside a furniture contour; never clears cells."""
    cells = grid.cells.copy()
    centers = grid.cell_centers()
    for f in smap.furniture:
        inside = contains_points(f.contour, centers.reshape(-1, 2)).reshape(cells.shape)
        cells |= inside
    return OccupancyGrid(grid.origin, grid.resolution, grid.width, grid.height, cells)


# --------------------------------------------------------------------------- colors and rendering


def assign_colors(smap: SemanticMap, seed: int = 0) -> dict[str, tuple[int, int, int]]:
    rng = np.random.default_rng(seed)
    table: dict[str, tuple[int, int, int]] = {}
    for name, _ in smap.areas():
        if name in table:
            continue
        for _ in range(10_000):
            rgb = tuple(int(c) for c in rng.integers(0, 256, size=3))
            if all(math.dist(rgb, other) >= MIN_COLOR_DISTANCE for other in table.values()):
                break
        else:
            raise ValueError("could not find a distinct color; too many areas")
        table[name] = rgb
    return table


def render_raster(smap: SemanticMap, table: dict, resolution: float = 0.02,
                  margin: float = 0.1, background=(255, 255, 255)) -> np.ndarray:
    """Paint areas onto an RGB image, north up."""
    grid = OccupancyGrid.covering(smap, resolution, margin)
    image = np.empty((grid.height, grid.width, 3), dtype=np.uint8)
    image[:] = background
    centers = grid.cell_centers().reshape(-1, 2)
    for name, poly in smap.areas():
        inside = contains_points(poly, centers).reshape(grid.height, grid.width)
        image[inside] = table.get(name, (128, 128, 128))
    return image[::-1].copy()


def render_svg(smap: SemanticMap, table: dict, scale: float = 100.0, margin: float = 0.1) -> str:
    x0, y0, x1, y1 = smap.bounds()
    w = (x1 - x0 + 2 * margin) * scale
    h = (y1 - y0 + 2 * margin) * scale

    def tx(x, y):
        return (x - x0 + margin) * scale, (y1 + margin - y) * scale

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
             f'viewBox="0 0 {w:.1f} {h:.1f}">',
             f'<rect width="{w:.1f}" height="{h:.1f}" fill="white"/>']
    for name, poly in smap.areas():
        r, g, b = table.get(name, (128, 128, 128))
        pts = " ".join("%.2f,%.2f" % tx(*v) for v in poly.vertices)
        lines.append(f'<polygon points="{pts}" fill="rgb({r},{g},{b})" stroke="black" '
                     f'stroke-width="1"><title>{_xml_escape(name)}</title></polygon>')
        cx, cy = tx(*poly.centroid)
        lines.append(f'<text x="{cx:.2f}" y="{cy:.2f}" font-size="12" text-anchor="middle">'
                     f'{_xml_escape(name)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render(smap: SemanticMap, table: dict, path) -> Path:
    """Write a visualization; format chosen by extension (.ppm, .svg, or a matplotlib format)."""
    from . import formats

    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        formats.write_ppm(path, render_raster(smap, table))
    elif suffix == ".svg":
        path.write_text(render_svg(smap, table))
    else:
        from .plotting import plot_semantic_map, save_figure

        save_figure(plot_semantic_map(smap, table), path)
    return path


# --------------------------------------------------------------------------- serialization


def _require(obj, key, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object", field=where)
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}", field=f"{where}.{key}")
    return obj[key]


def _parse_contour(raw, where) -> Polygon2:
    if not isinstance(raw, list):
        raise ParseError(f"{where}: contour must be a list of [x, y] pairs", field=where)
    pts = []
    for i, v in enumerate(raw):
        if (not isinstance(v, list) or len(v) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise ParseError(f"{where}[{i}]: expected [x, y] numbers", field=f"{where}[{i}]")
        pts.append((float(v[0]), float(v[1])))
    try:
        return Polygon2(tuple(pts))
    except InvalidPolygon as exc:
        raise ValidationError(f"{where}: {exc}", invariant="simple-polygon", field=where) from exc


def _name(obj, where) -> str:
    name = _require(obj, "name", where)
    if not isinstance(name, str) or not name:
        raise ParseError(f"{where}.name must be a nonempty string", field=f"{where}.name")
    return name


def map_from_dict(data) -> SemanticMap:
    if not isinstance(data, dict):
        raise ParseError("map file must contain a JSON object", field="$")
    rooms, furniture, doors = [], [], []
    for i, r in enumerate(data.get("rooms", [])):
        where = f"rooms[{i}]"
        rooms.append(Room(_name(r, where), _parse_contour(_require(r, "contour", where), f"{where}.contour")))
    for i, f in enumerate(data.get("furniture", [])):
        where = f"furniture[{i}]"
        room = _require(f, "room", where)
        if not isinstance(room, str):
            raise ParseError(f"{where}.room must be a string", field=f"{where}.room")
        furniture.append(Furniture(_name(f, where), room,
                                   _parse_contour(_require(f, "contour", where), f"{where}.contour")))
    for i, d in enumerate(data.get("doors", [])):
        where = f"doors[{i}]"
        pair = _require(d, "rooms", where)
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
            raise ParseError(f"{where}.rooms must be a pair of room names", field=f"{where}.rooms")
        doors.append(Door(_name(d, where), (pair[0], pair[1]),
                          _parse_contour(_require(d, "contour", where), f"{where}.contour")))
    return SemanticMap(tuple(rooms), tuple(furniture), tuple(doors))


def map_to_dict(smap: SemanticMap) -> dict:
    def contour(poly):
        return [[x, y] for x, y in poly.vertices]

    return {
        "rooms": [{"name": r.name, "contour": contour(r.contour)} for r in smap.rooms],
        "furniture": [{"name": f.name, "room": f.room, "contour": contour(f.contour)}
                      for f in smap.furniture],
        "doors": [{"name": d.name, "rooms": list(d.rooms), "contour": contour(d.contour)}
                  for d in smap.doors],
    }


def load_map(data: bytes | str) -> SemanticMap:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                         line=exc.lineno, column=exc.colno) from exc
    return map_from_dict(raw)


def save_map(smap: SemanticMap) -> bytes:
    return (json.dumps(map_to_dict(smap), indent=2) + "\n").encode("utf-8")


def read_map(path) -> SemanticMap:
    return load_map(Path(path).read_bytes())


def square(x0: float, y0: float, x1: float, y1: float) -> Polygon2:
    """Axis-aligned rectangle helper."""
    return Polygon2(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

