"""Wulff bodies and the predicted limit curves of the level-line ensemble.

A Wulff body is the intersection of the half-planes {x . n(theta) <= tau(theta)} over K
equally spaced directions, rescaled to area 1. A limit curve is the boundary of the union
of all translates of an r-dilated body inside the unit square, computed exactly as the
opening (S - B) + B with convex-polygon Minkowski arithmetic.
"""

import dataclasses
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull

from soswall.errors import ConfigError, CriticalPointError, DegenerateShapeError, EmptyGeometryError
from soswall.levellines import hausdorff
from soswall.logging import logger as log

BUILTIN_TENSIONS = ("constant", "l1", "numeric-sos")
SYMMETRY_TOLERANCE = 1e-6
FIT_RESOLUTION = 1e-4
FIT_TOLERANCE = 1e-4
FIT_MIN_RADIUS = 1e-3


def _log_partition(lam: float, beta: float) -> float:
    """log of sum_k exp(-beta |k| + lam k) over integer steps k, for |lam| < beta."""
    up = math.exp(lam - beta)
    down = math.exp(-lam - beta)
    return math.log(1.0 + up / (1.0 - up) + down / (1.0 - down))


def _step_rate(slope: float, beta: float) -> float:
    """Legendre transform sup_lam [lam * slope - log g(lam)] for the step walk, slope >= 0."""
    if slope == 0.0:
        return -_log_partition(0.0, beta)
    result = minimize_scalar(
        lambda lam: _log_partition(lam, beta) - lam * slope,
        bounds=(0.0, beta * (1.0 - 1e-12)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(-result.fun)


def _reduce_angle(theta: np.ndarray) -> np.ndarray:
    """Fold any angle into [0, pi/4] using the square's symmetries."""
    folded = np.mod(theta, np.pi / 2)
    return np.where(folded > np.pi / 4, np.pi / 2 - folded, folded)


@dataclasses.dataclass(frozen=True)
class SurfaceTension:
    """Positive, square-symmetric function of the normal direction theta.

    Named built-ins are evaluated in closed form; tables (including "numeric-sos") are
    interpolated periodically.
    """

    name: str
    angles: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.angles is None:
            if self.name not in ("constant", "l1"):
                raise ConfigError(f"tension '{self.name}' needs a table of samples")
            return
        angles = np.asarray(self.angles, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if angles.shape != values.shape or angles.ndim != 1 or len(angles) < 4:
            raise ConfigError("tension table needs matching 1D angle and value arrays of length >= 4")
        if np.any(values <= 0):
            raise ConfigError(f"tension '{self.name}' has non-positive samples")
        object.__setattr__(self, "angles", np.mod(angles, 2 * np.pi))
        object.__setattr__(self, "values", values)
        wrapped = np.mod(angles, 2 * np.pi)
        base = self(wrapped)
        for image in (wrapped + np.pi / 2, -wrapped):
            if np.max(np.abs(self(image) - base)) > SYMMETRY_TOLERANCE * np.max(base):
                raise ConfigError(f"tension '{self.name}' is not invariant under the square's symmetries")

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if self.angles is None:
            if self.name == "constant":
                return np.ones_like(theta)
            return np.abs(np.cos(theta)) + np.abs(np.sin(theta))
        order = np.argsort(self.angles)
        return np.interp(np.mod(theta, 2 * np.pi), self.angles[order], self.values[order], period=2 * np.pi)

    @classmethod
    def constant(cls) -> "SurfaceTension":
        return cls("constant")

    @classmethod
    def l1(cls) -> "SurfaceTension":
        return cls("l1")

    @classmethod
    def from_table(cls, angles, values, name: str = "table") -> "SurfaceTension":
        return cls(name, np.asarray(angles, dtype=np.float64), np.asarray(values, dtype=np.float64))

    @classmethod
    def numeric_sos(cls, beta: float, samples: int = 720) -> "SurfaceTension":
        """Tension of a one-dimensional level-line walk with step weights exp(-beta |k|).

        Per unit horizontal step the walk pays beta plus the Legendre rate of its vertical
        increments; dividing by the length per step gives tau(theta) = cos(theta) (beta + I(tan theta))
        on [0, pi/4], extended by the square's symmetries. Experimental.

        Raises:
            ConfigError: If beta is so small that the tension is not positive.
        """
        if beta <= 0 or samples < 8 or samples % 8:
            raise ConfigError(f"numeric-sos needs beta > 0 and a multiple of 8 samples, got {beta}, {samples}")
        angles = 2 * np.pi * np.arange(samples) / samples
        folded = _reduce_angle(angles)
        cache: dict[float, float] = {}
        values = np.empty(samples)
        for k, theta in enumerate(folded):
            key = round(float(theta), 12)
            if key not in cache:
                cache[key] = math.cos(theta) * (beta + _step_rate(math.tan(theta), beta))
            values[k] = cache[key]
        if np.any(values <= 0):
            raise ConfigError(f"numeric-sos tension is not positive at beta={beta}")
        log.debug(f"numeric-sos tension at beta={beta}: tau(0)={values[0]:.6f}, range [{values.min():.6f}, {values.max():.6f}]")
        return cls("numeric-sos", angles, values, beta)


def tension_by_name(name: str, beta: Optional[float] = None) -> SurfaceTension:
    if name == "constant":
        return SurfaceTension.constant()
    if name == "l1":
        return SurfaceTension.l1()
    if name == "numeric-sos":
        if beta is None:
            raise ConfigError("numeric-sos tension needs beta")
        return SurfaceTension.numeric_sos(beta)
    raise ConfigError(f"unknown tension '{name}', expected one of {BUILTIN_TENSIONS}")


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area of a polygon (open or closed ring)."""
    v = np.asarray(vertices, dtype=np.float64)
    nxt = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))


def _open_ring(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) > 1 and np.allclose(v[0], v[-1]):
        return v[:-1]
    return v


def _closed_ring(vertices: np.ndarray) -> np.ndarray:
    v = _open_ring(vertices)
    return np.vstack([v, v[:1]])


def _clip_half_plane(polygon: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon with x . normal <= offset."""
    s = polygon @ normal - offset
    following = np.roll(polygon, -1, axis=0)
    s_next = np.roll(s, -1)
    keep = s <= 0
    crosses = s * s_next < 0
    t = np.divide(s, s - s_next, out=np.zeros_like(s), where=crosses)
    crossing_points = polygon + t[:, None] * (following - polygon)
    points = np.stack([polygon, crossing_points], axis=1).reshape(-1, 2)
    mask = np.stack([keep, crosses], axis=1).reshape(-1)
    return points[mask]


def _drop_duplicates(polygon: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    following = np.roll(polygon, -1, axis=0)
    distinct = np.hypot(*(following - polygon).T) > tol
    return polygon[distinct]


@dataclasses.dataclass
class WulffBody:
    vertices: np.ndarray
    tension_name: str
    K: int
    dilation: float = 1.0

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        cross = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        area = 0.5 * cross.sum()
        return np.array([((v[:, 0] + nxt[:, 0]) * cross).sum(), ((v[:, 1] + nxt[:, 1]) * cross).sum()]) / (6 * area)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def extents(self) -> Tuple[float, float, float, float]:
        """(min x, max x, min y, max y) of the body."""
        xs, ys = self.vertices[:, 0], self.vertices[:, 1]
        return float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())

    @property
    def width(self) -> float:
        lo_x, hi_x, lo_y, hi_y = self.extents
        return max(hi_x - lo_x, hi_y - lo_y)

    def is_convex(self, tol: float = 1e-12) -> bool:
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        following = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]
        return bool(np.all(turns >= -tol) or np.all(turns <= tol))

    def is_centrally_symmetric(self, tol: float = 1e-9) -> bool:
        centred = self.vertices - self.centroid
        mirrored = -centred
        distances = np.min(np.hypot(*(centred[:, None, :] - mirrored[None, :, :]).transpose(2, 0, 1)), axis=1)
        return bool(np.all(distances <= tol))

    def boundary(self) -> np.ndarray:
        return _closed_ring(self.vertices)


def wulff_body(tension: SurfaceTension, K: int = 512) -> WulffBody:
    """Area-1 convex polygon {x : x . n(theta_k) <= tau(theta_k)} over K directions.

    Raises:
        ConfigError: If K < 8 or a tension sample is not positive.
    """
    if K < 8:
        raise ConfigError(f"K must be >= 8, got {K}")
    theta = 2 * np.pi * np.arange(K) / K
    tau = np.asarray(tension(theta), dtype=np.float64)
    if np.any(tau <= 0):
        raise ConfigError(f"tension '{tension.name}' has non-positive samples")
    bound = 2.0 * float(tau.max())
    polygon = np.array([[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]])
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    for normal, offset in zip(normals, tau):
        polygon = _drop_duplicates(_clip_half_plane(polygon, normal, offset))
    area = polygon_area(polygon)
    polygon = polygon / math.sqrt(area)
    body = WulffBody(vertices=polygon, tension_name=tension.name, K=K)
    body.vertices = body.vertices - body.centroid
    return body


def dilate(body: WulffBody, r: float) -> WulffBody:
    """Scale the body by r about its centroid.

    Raises:
        ConfigError: If r is outside (0, 1].
    """
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"dilation factor must lie in (0, 1], got {r}")
    centre = body.centroid
    return dataclasses.replace(
        body, vertices=centre + r * (body.vertices - centre), dilation=body.dilation * r
    )


def refinement_defect(tension: SurfaceTension, K: int, resolution: float = 1e-4) -> float:
    """Hausdorff distance between the K-direction and 2K-direction bodies."""
    coarse = wulff_body(tension, K)
    fine = wulff_body(tension, 2 * K)
    return hausdorff(coarse.boundary(), fine.boundary(), resolution)


def opening_boundary(body: WulffBody, tol: float = 1e-9) -> np.ndarray:
    """Boundary of the union of all translates of body inside the unit square.

    The admissible translations form the rectangle [-min x, 1 - max x] x [-min y, 1 - max y];
    the union of translates is that rectangle Minkowski-summed with the body.

    Returns:
        np.ndarray: Closed counter-clockwise curve, first vertex repeated at the end.

    Raises:
        ConfigError: If the body does not fit in the unit square.
    """
    lo_x, hi_x, lo_y, hi_y = body.extents
    x0, x1 = -lo_x, 1.0 - hi_x
    y0, y1 = -lo_y, 1.0 - hi_y
    if x0 > x1 + tol or y0 > y1 + tol:
        raise ConfigError(f"body of extent {hi_x - lo_x:.6f} x {hi_y - lo_y:.6f} does not fit in the unit square")
    if x0 > x1:
        x0 = x1 = 0.5 * (x0 + x1)
    if y0 > y1:
        y0 = y1 = 0.5 * (y0 + y1)
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    points = (corners[:, None, :] + body.vertices[None, :, :]).reshape(-1, 2)
    hull = ConvexHull(points)
    return _closed_ring(points[hull.vertices])


def enclosed_area(curve: np.ndarray) -> float:
    return abs(polygon_area(_open_ring(curve)))


def side_overlaps(curve: np.ndarray, tol: float = 1e-9) -> dict[str, float]:
    """Length of the segment each side of the unit square shares with the curve."""
    v = _open_ring(curve)
    overlaps = {}
    for side, axis, value in (("bottom", 1, 0.0), ("top", 1, 1.0), ("left", 0, 0.0), ("right", 0, 1.0)):
        on_side = v[np.abs(v[:, axis] - value) <= tol]
        other = on_side[:, 1 - axis]
        overlaps[side] = float(other.max() - other.min()) if len(other) >= 2 else 0.0
    return overlaps


def _point_segment_distances(point: np.ndarray, curve: np.ndarray) -> np.ndarray:
    start, end = curve[:-1], curve[1:]
    direction = end - start
    length2 = np.einsum("ij,ij->i", direction, direction)
    t = np.divide(np.einsum("ij,ij->i", point - start, direction), length2, out=np.zeros_like(length2), where=length2 > 0)
    nearest = start + np.clip(t, 0.0, 1.0)[:, None] * direction
    return np.hypot(*(nearest - point).T)


def corner_distances(curve: np.ndarray) -> dict[str, float]:
    """Distance from each corner of the unit square to the curve."""
    closed = _closed_ring(curve)
    corners = {"lower_left": (0.0, 0.0), "lower_right": (1.0, 0.0), "upper_right": (1.0, 1.0), "upper_left": (0.0, 1.0)}
    return {name: float(_point_segment_distances(np.array(c), closed).min()) for name, c in corners.items()}


def _rotate_about_centre(curve: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    centred = np.asarray(curve) - 0.5
    return centred @ np.array([[c, s], [-s, c]]) + 0.5


def symmetry_report(curve: np.ndarray, resolution: float = 1e-3) -> dict[str, float]:
    """Hausdorff defect of the curve under pi/2 and pi/4 rotations about the square's centre."""
    closed = _closed_ring(curve)
    return {
        "quarter_turn": hausdorff(closed, _rotate_about_centre(closed, math.pi / 2), resolution),
        "eighth_turn": hausdorff(closed, _rotate_about_centre(closed, math.pi / 4), resolution),
    }


def _contains_convex(outer: np.ndarray, inner: np.ndarray, tol: float = 1e-9) -> bool:
    ring = _open_ring(outer)
    if polygon_area(ring) < 0:
        ring = ring[::-1]
    edges = np.roll(ring, -1, axis=0) - ring
    relative = _open_ring(inner)[:, None, :] - ring[None, :, :]
    cross = edges[None, :, 0] * relative[:, :, 1] - edges[None, :, 1] * relative[:, :, 0]
    return bool(np.all(cross >= -tol))


@dataclasses.dataclass
class LimitShape:
    curves: list[np.ndarray]
    radii: list[float]
    start_index: int
    tension_name: str
    K: int

    @property
    def indices(self) -> list[int]:
        return list(range(self.start_index, self.start_index + len(self.curves)))

    def curve(self, i: int) -> Optional[np.ndarray]:
        """The curve W_i, or None when that index is absent."""
        k = i - self.start_index
        return self.curves[k] if 0 <= k < len(self.curves) else None

    def radius(self, i: int) -> Optional[float]:
        k = i - self.start_index
        return self.radii[k] if 0 <= k < len(self.radii) else None

    def is_nested(self) -> bool:
        """Every curve with the larger radius lies inside the region of the one with the smaller."""
        for a in range(len(self.curves)):
            for b in range(len(self.curves)):
                if self.radii[a] > self.radii[b] and not _contains_convex(self.curves[b], self.curves[a]):
                    return False
        return True


def predicted_ensemble(
    alpha_star: float,
    alpha_c: float,
    radii: Sequence[float],
    tension: SurfaceTension,
    K: int = 512,
    body: Optional[WulffBody] = None,
) -> LimitShape:
    """Limit curves W_i = opening_boundary(dilate(wulff_body(tension, K), r_i)).

    The list starts at W_0 when alpha_star > alpha_c and at W_1 otherwise.

    Raises:
        CriticalPointError: If alpha_star equals alpha_c.
        DegenerateShapeError: If two radii coincide.
        ConfigError: If a radius is outside (0, 1).
    """
    if math.isclose(alpha_star, alpha_c, rel_tol=0.0, abs_tol=1e-12):
        raise CriticalPointError(f"alpha_star = alpha_c = {alpha_c}: the level lines have no scaling limit")
    radii = [float(r) for r in radii]
    if not radii:
        raise ConfigError("predicted_ensemble needs at least one radius")
    if any(not 0.0 < r < 1.0 for r in radii):
        raise ConfigError(f"radii must lie strictly in (0, 1), got {radii}")
    if len(set(radii)) != len(radii):
        raise DegenerateShapeError(f"radii must be distinct so the limit loops are distinct, got {radii}")
    body = wulff_body(tension, K) if body is None else body
    start = 0 if alpha_star > alpha_c else 1
    curves = [opening_boundary(dilate(body, r)) for r in radii]
    log.debug(f"Predicted {len(curves)} limit curves from index {start} ({tension.name}, K={K})")
    return LimitShape(curves=curves, radii=radii, start_index=start, tension_name=tension.name, K=K)


def fit_radius(
    observed,
    tension: SurfaceTension,
    K: int = 512,
    body: Optional[WulffBody] = None,
    resolution: float = FIT_RESOLUTION,
) -> Tuple[float, float]:
    """Dilation r minimizing the Hausdorff distance between observed and the predicted curve.

    Args:
        observed: Loop(s) already rescaled to the unit square, as vertex arrays.
        tension: Surface tension defining the body.
        K: Direction count for the body.
        body: Precomputed area-1 body (overrides tension and K).
        resolution: Edge densification for the Hausdorff distance.

    Returns:
        Tuple[float, float]: Fitted r and the Hausdorff residual at r.

    Raises:
        EmptyGeometryError: If observed is empty.
    """
    if observed is None or len(observed) == 0:
        raise EmptyGeometryError("fit_radius needs an observed loop")
    body = wulff_body(tension, K) if body is None else body
    upper = min(1.0, 1.0 / body.width)
    objective: Callable[[float], float] = lambda r: hausdorff(observed, opening_boundary(dilate(body, r)), resolution)
    result = minimize_scalar(
        objective, bounds=(FIT_MIN_RADIUS, upper), method="bounded", options={"xatol": FIT_TOLERANCE}
    )
    r_hat = float(result.x)
    return r_hat, float(objective(r_hat))
