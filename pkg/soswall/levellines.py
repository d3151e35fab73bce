"""Level-line loops of an SOS height field.

The h-level line is the set of dual bonds crossing a primal bond (x, y) with
eta_x >= h > eta_y (or vice versa), boundary bonds to the external zero layer included.
Those bonds are split into edge-disjoint closed loops; where four of them meet at a dual
vertex, North is paired with East and South with West (the two sides of the NW-oriented
diagonal through the vertex).

Coordinates: site (x, y) is the unit cell [x - 1/2, x + 1/2] x [y - 1/2, y + 1/2]; dual
vertex (a, b), 0 <= a, b <= L, is the point (a + 1/2, b + 1/2).
"""

import dataclasses
import math
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from soswall.errors import ConfigError, EmptyGeometryError, InvariantError
from soswall.lattice import HeightField, H_of_L
from soswall.logging import logger as log

NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
_STEP = {NORTH: (0, 1), EAST: (1, 0), SOUTH: (0, -1), WEST: (-1, 0)}
_OPPOSITE = {NORTH: SOUTH, SOUTH: NORTH, EAST: WEST, WEST: EAST}
_NW_PAIRING = {NORTH: EAST, EAST: NORTH, SOUTH: WEST, WEST: SOUTH}


@dataclasses.dataclass
class DualEdgeSet:
    """Crossing bonds of one level.

    vertical[a, y] is the dual edge from (a + 1/2, y - 1/2) to (a + 1/2, y + 1/2), between
    cells (a, y) and (a + 1, y); horizontal[x, b] runs from (x - 1/2, b + 1/2) to
    (x + 1/2, b + 1/2), between cells (x, b) and (x, b + 1). Row/column 0 and L + 1 stand
    for the external zero layer.
    """

    level: int
    side_length: int
    vertical: np.ndarray
    horizontal: np.ndarray
    inside: np.ndarray

    def __len__(self) -> int:
        return int(self.vertical.sum() + self.horizontal.sum())

    @property
    def edges(self) -> frozenset:
        """Edges as (midpoint, axis) pairs, axis "v" or "h", midpoints in half-integers."""
        vertical = {((a + 0.5, float(y)), "v") for a, y in zip(*np.nonzero(self.vertical))}
        horizontal = {((float(x), b + 0.5), "h") for x, b in zip(*np.nonzero(self.horizontal))}
        return frozenset(vertical | horizontal)

    def vertex_degrees(self) -> np.ndarray:
        """Degree of every dual vertex (a, b), array shape (L + 1, L + 1)."""
        v = self.vertical.astype(np.int64)
        h = self.horizontal.astype(np.int64)
        return v[:, 1:] + v[:, :-1] + h[1:, :] + h[:-1, :]

    def _present(self, a: int, b: int, direction: int) -> bool:
        if direction == NORTH:
            return bool(self.vertical[a, b + 1])
        if direction == SOUTH:
            return bool(self.vertical[a, b])
        if direction == EAST:
            return bool(self.horizontal[a + 1, b])
        return bool(self.horizontal[a, b])


def _level_indicator(field: HeightField, h: int) -> np.ndarray:
    return field.padded() >= h


def edge_set(field: HeightField, h: int) -> DualEdgeSet:
    """All dual bonds separating cells at height >= h from cells below h.

    Raises:
        ConfigError: If h < 1.
    """
    if h < 1:
        raise ConfigError(f"level must be >= 1, got {h}")
    inside = _level_indicator(field, h)
    vertical = inside[:-1, :] != inside[1:, :]
    horizontal = inside[:, :-1] != inside[:, 1:]
    return DualEdgeSet(h, field.side_length, vertical, horizontal, inside)


@dataclasses.dataclass
class LevelLoop:
    level: int
    sign: int
    vertices: np.ndarray
    area: float
    macroscopic: bool = False

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def edges(self) -> np.ndarray:
        """Edge segments, shape (length, 2, 2)."""
        return np.stack([self.vertices[:-1], self.vertices[1:]], axis=1)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = self.vertices[:, 0], self.vertices[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def representative_cell(self) -> tuple[int, int]:
        """Cell immediately inside the loop's leftmost-lowest vertical edge."""
        segments = self.edges
        vertical = segments[segments[:, 0, 0] == segments[:, 1, 0]]
        lower = vertical[:, :, 1].min(axis=1)
        order = np.lexsort((lower, vertical[:, 0, 0]))
        x = vertical[order[0], 0, 0]
        y = lower[order[0]]
        return int(round(x + 0.5)), int(round(y + 0.5))

    def contains_point(self, px: float, py: float) -> bool:
        """Even-odd rule against the vertical edges (points never lie on the dual lattice)."""
        segments = self.edges
        vertical = segments[segments[:, 0, 0] == segments[:, 1, 0]]
        x = vertical[:, 0, 0]
        y_low = vertical[:, :, 1].min(axis=1)
        y_high = vertical[:, :, 1].max(axis=1)
        crossings = np.count_nonzero((x < px) & (y_low < py) & (py < y_high))
        return bool(crossings % 2)

    def to_record(self) -> dict:
        return {
            "level": int(self.level),
            "sign": int(self.sign),
            "area": float(self.area),
            "length": int(self.length),
            "macroscopic": bool(self.macroscopic),
            "vertices": self.vertices.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "LevelLoop":
        return cls(
            level=int(record["level"]),
            sign=int(record["sign"]),
            vertices=np.asarray(record["vertices"], dtype=np.float64).reshape(-1, 2),
            area=float(record["area"]),
            macroscopic=bool(record.get("macroscopic", False)),
        )


def _shoelace_twice_area(doubled: np.ndarray) -> int:
    """Shoelace sum over a closed polygon in doubled integer coordinates (8x its signed area)."""
    x, y = doubled[:-1, 0], doubled[:-1, 1]
    xn, yn = doubled[1:, 0], doubled[1:, 1]
    return int((x * yn - xn * y).sum())


def _exit_direction(edges: DualEdgeSet, a: int, b: int, arrival: int) -> int:
    present = [d for d in (NORTH, EAST, SOUTH, WEST) if edges._present(a, b, d)]
    if len(present) == 2:
        return present[0] if present[1] == arrival else present[1]
    if len(present) == 4:
        return _NW_PAIRING[arrival]
    raise InvariantError(
        f"dual vertex ({a + 0.5}, {b + 0.5}) has odd degree {len(present)} at level {edges.level}"
    )


def _mark(visited_v: np.ndarray, visited_h: np.ndarray, a: int, b: int, direction: int) -> bool:
    """Mark the edge leaving (a, b) in direction as visited; return whether it was already."""
    if direction == NORTH:
        seen, visited_v[a, b + 1] = visited_v[a, b + 1], True
    elif direction == SOUTH:
        seen, visited_v[a, b] = visited_v[a, b], True
    elif direction == EAST:
        seen, visited_h[a + 1, b] = visited_h[a + 1, b], True
    else:
        seen, visited_h[a, b] = visited_h[a, b], True
    return bool(seen)


def trace_loops(edges: DualEdgeSet) -> list[LevelLoop]:
    """Partition the edge set into closed loops using the NW splitting rule.

    Loops are returned in the order of their starting vertical edge (x, then y). Each loop
    carries its shoelace area in unit cells and the sign of the cell just inside its
    leftmost-lowest edge (+1 when that cell is at height >= level).

    Raises:
        InvariantError: If a dual vertex has odd degree.
    """
    visited_v = np.zeros_like(edges.vertical)
    visited_h = np.zeros_like(edges.horizontal)
    loops = []
    for a0, y0 in zip(*np.nonzero(edges.vertical)):
        if visited_v[a0, y0]:
            continue
        a, b = int(a0), int(y0) - 1
        direction = NORTH
        path = [(a, b)]
        _mark(visited_v, visited_h, a, b, direction)
        while True:
            da, db = _STEP[direction]
            a, b = a + da, b + db
            path.append((a, b))
            direction = _exit_direction(edges, a, b, _OPPOSITE[direction])
            if _mark(visited_v, visited_h, a, b, direction):
                if (a, b) != path[0]:
                    raise InvariantError(f"loop at level {edges.level} re-entered an edge away from its start")
                break
        doubled = 2 * np.asarray(path, dtype=np.int64) + 1
        area = abs(_shoelace_twice_area(doubled)) / 8.0
        if area < 1:
            raise InvariantError(f"loop at level {edges.level} encloses area {area} < 1")
        # The start edge is the leftmost-lowest vertical edge of its loop, cell (a0 + 1, y0) is inside
        sign = 1 if edges.inside[a0 + 1, y0] else -1
        vertices = np.asarray(path, dtype=np.float64) + 0.5
        loops.append(LevelLoop(level=edges.level, sign=sign, vertices=vertices, area=area))
    log.debug(f"Traced {len(loops)} loops from {len(edges)} edges at level {edges.level}")
    return loops


def macroscopic_cutoff(L: int) -> float:
    """Area threshold (ln L)^2 separating macroscopic from microscopic loops."""
    return math.log(L) ** 2


@dataclasses.dataclass
class LoopEnsemble:
    side_length: int
    beta: Optional[float]
    cutoff: float
    levels: dict[int, list[LevelLoop]]

    @property
    def floor_H(self) -> Optional[int]:
        if self.beta is None:
            return None
        return math.floor(H_of_L(self.side_length, self.beta))

    @property
    def loops(self) -> list[LevelLoop]:
        return [loop for h in sorted(self.levels) for loop in self.levels[h]]

    def macroscopic(self, h: int) -> list[LevelLoop]:
        return [loop for loop in self.levels.get(h, []) if loop.macroscopic]

    def collection(self, i: int, top: Optional[int] = None) -> list[LevelLoop]:
        """Macroscopic loops at height top - i, where top defaults to floor(H)."""
        top = self.floor_H if top is None else top
        if top is None:
            raise ConfigError("collection index needs beta or an explicit top level")
        h = top - i
        return self.macroscopic(h) if h >= 1 else []

    def collections(self, top: Optional[int] = None) -> dict[int, list[LevelLoop]]:
        """The views L_0, L_1, ... for every index whose height is at least 1."""
        top = self.floor_H if top is None else top
        return {i: self.collection(i, top) for i in range(0, max(top, 0))}

    def signed_area(self, h: int) -> float:
        return float(sum(loop.sign * loop.area for loop in self.levels.get(h, [])))


def extract_ensemble(field: HeightField, beta: Optional[float] = None) -> LoopEnsemble:
    """Trace every level 1..max height and flag loops with area >= (ln L)^2 as macroscopic."""
    L = field.side_length
    cutoff = macroscopic_cutoff(L)
    top = int(field.heights.max(initial=0))
    levels = {}
    for h in range(1, top + 1):
        loops = trace_loops(edge_set(field, h))
        for loop in loops:
            loop.macroscopic = loop.area >= cutoff
        levels[h] = loops
    return LoopEnsemble(side_length=L, beta=beta, cutoff=cutoff, levels=levels)


@dataclasses.dataclass
class NestingForest:
    loops: list[LevelLoop]
    parents: list[Optional[int]]

    @property
    def roots(self) -> list[int]:
        return [i for i, p in enumerate(self.parents) if p is None]

    def children(self, index: int) -> list[int]:
        return [i for i, p in enumerate(self.parents) if p == index]

    def ancestors(self, index: int) -> list[int]:
        chain = []
        parent = self.parents[index]
        while parent is not None:
            chain.append(parent)
            parent = self.parents[parent]
        return chain


def _outer_key(loop: LevelLoop) -> tuple:
    # Larger area is outer; equal polygons at different levels order by which region contains which
    return (-loop.area, loop.level if loop.sign > 0 else -loop.level)


def nesting_forest(ensemble: Union[LoopEnsemble, Sequence[LevelLoop]]) -> NestingForest:
    """Containment forest: each loop's parent is the smallest loop strictly containing it."""
    loops = ensemble.loops if isinstance(ensemble, LoopEnsemble) else list(ensemble)
    order = sorted(range(len(loops)), key=lambda i: _outer_key(loops[i]))
    rank = {index: position for position, index in enumerate(order)}
    bounds = np.array([loop.bounds for loop in loops]).reshape(-1, 4)
    parents: list[Optional[int]] = [None] * len(loops)
    for i, loop in enumerate(loops):
        cx, cy = loop.representative_cell()
        candidates = np.nonzero(
            (bounds[:, 0] < cx) & (bounds[:, 1] < cy) & (bounds[:, 2] > cx) & (bounds[:, 3] > cy)
        )[0]
        best = None
        for j in candidates:
            j = int(j)
            if j == i or rank[j] >= rank[i]:
                continue
            if not loops[j].contains_point(cx, cy):
                continue
            if best is None or rank[j] > rank[best]:
                best = j
        parents[i] = best
    return NestingForest(loops, parents)


def _edge_columns(loops: Iterable[LevelLoop]) -> tuple[np.ndarray, ...]:
    """Horizontal edges as (x_min, x_max, y) and vertical edges as (x, y_min)."""
    horizontal, vertical = [], []
    for loop in loops:
        segments = loop.edges
        is_vertical = segments[:, 0, 0] == segments[:, 1, 0]
        horizontal.append(segments[~is_vertical])
        vertical.append(segments[is_vertical])
    h = np.concatenate(horizontal) if horizontal else np.empty((0, 2, 2))
    v = np.concatenate(vertical) if vertical else np.empty((0, 2, 2))
    return h[:, :, 0].min(axis=1), h[:, :, 0].max(axis=1), h[:, 0, 1], v[:, 0, 0], v[:, :, 1].min(axis=1)


def rho_profile(loops: Sequence[LevelLoop], columns) -> np.ndarray:
    """Lowest y of a loop collection over each column; NaN where no loop point has that x."""
    columns = np.atleast_1d(np.asarray(columns, dtype=np.float64))
    if not loops:
        return np.full(columns.shape, np.nan)
    h_lo, h_hi, h_y, v_x, v_y = _edge_columns(loops)
    profile = np.full(columns.shape, np.inf)
    for k, x in enumerate(columns):
        hits = h_y[(h_lo <= x) & (x <= h_hi)]
        if hits.size:
            profile[k] = hits.min()
        vhits = v_y[v_x == x]
        if vhits.size:
            profile[k] = min(profile[k], vhits.min())
    profile[np.isinf(profile)] = np.nan
    return profile


def rho(loop: Union[LevelLoop, Sequence[LevelLoop]], x: float) -> Optional[float]:
    """Vertical distance from y = 0 to the loop at column x, or None outside its span."""
    loops = [loop] if isinstance(loop, LevelLoop) else list(loop)
    value = rho_profile(loops, [x])[0]
    return None if np.isnan(value) else float(value)


def sup_rho(loops: Sequence[LevelLoop], L: int) -> Optional[float]:
    """Largest rho over the integer columns of the middle half [L/4, 3L/4] of the bottom side."""
    columns = np.arange(math.ceil(L / 4), math.floor(3 * L / 4) + 1)
    profile = rho_profile(loops, columns)
    if np.all(np.isnan(profile)):
        return None
    return float(np.nanmax(profile))


def _as_polygons(shape) -> list[np.ndarray]:
    if isinstance(shape, LevelLoop):
        return [shape.vertices]
    if isinstance(shape, np.ndarray):
        return [shape] if shape.ndim == 2 else list(shape)
    polygons = []
    for item in shape:
        polygons.extend(_as_polygons(item))
    return polygons


def densify(polygon: np.ndarray, resolution: float) -> np.ndarray:
    """Points along a closed or open polyline, no two consecutive ones further apart than resolution."""
    polygon = np.asarray(polygon, dtype=np.float64)
    if len(polygon) == 1:
        return polygon
    start, end = polygon[:-1], polygon[1:]
    lengths = np.hypot(*(end - start).T)
    pieces = np.maximum(np.ceil(lengths / resolution).astype(np.int64), 1)
    points = [polygon[-1:]]
    for p, q, n in zip(start, end, pieces):
        t = np.arange(n)[:, None] / n
        points.append(p + t * (q - p))
    return np.concatenate(points)


def hausdorff(a, b, resolution: float = 1e-3) -> float:
    """Hausdorff distance between two polygons or polygon collections, edges densified first.

    Raises:
        EmptyGeometryError: If either side has no points.
        ConfigError: If resolution is not positive.
    """
    if resolution <= 0:
        raise ConfigError(f"resolution must be positive, got {resolution}")
    polygons_a, polygons_b = _as_polygons(a), _as_polygons(b)
    if not polygons_a or not polygons_b or any(len(p) == 0 for p in polygons_a + polygons_b):
        raise EmptyGeometryError("hausdorff needs two nonempty point sets")
    points_a = np.concatenate([densify(p, resolution) for p in polygons_a])
    points_b = np.concatenate([densify(p, resolution) for p in polygons_b])
    forward = directed_hausdorff(points_a, points_b, seed=0)[0]
    backward = directed_hausdorff(points_b, points_a, seed=0)[0]
    return float(max(forward, backward))


def rescale(loops: Sequence[LevelLoop], L: int) -> list[np.ndarray]:
    """Map loops from box coordinates [1/2, L + 1/2]^2 to the unit square."""
    return [(loop.vertices - 0.5) / L for loop in loops]
