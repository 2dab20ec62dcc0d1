"""Polygon primitives used by label generation, the losses and detection.

Coordinates are image pixels with x to the right and y down. Under that
convention a screen-clockwise vertex order has a *positive* shoelace area,
and :class:`Polygon` normalizes every input to that order.

Masks are plain ``(resolution, resolution)`` float arrays indexed
``[row, col]``, row following y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from numba import njit

from .errors import InvalidArgumentError, InvalidInputError

__all__ = [
    "Polygon",
    "Frame",
    "signed_area",
    "perimeter",
    "contains",
    "contains_points",
    "resample",
    "polygon_iou",
    "convex_iou",
    "is_convex",
    "is_simple",
    "rasterize_hard",
    "rasterize_soft",
    "bounding_frame",
]

class Polygon:
    """Immutable closed polygon with at least three finite vertices.

    Reversed (counter-clockwise on screen) input is flipped to clockwise while
    keeping the first vertex in place. Pass ``normalize=False`` to keep the
    given order verbatim.
    """

    __slots__ = ("_v",)

    def __init__(self, vertices, *, normalize: bool = True):
        v = _coords(vertices)
        if normalize and _shoelace(v) < 0:
            v = np.concatenate([v[:1], v[:0:-1]])
        v = v.copy()
        v.setflags(write=False)
        self._v = v

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    def __len__(self):
        return len(self._v)

    def __iter__(self):
        return iter(map(tuple, self._v.tolist()))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._v
        return self._v.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Polygon):
            return NotImplemented
        return self._v.shape == other._v.shape and bool(np.array_equal(self._v, other._v))

    __hash__ = None

    def __repr__(self):
        pts = ", ".join(f"({x:g}, {y:g})" for x, y in self._v.tolist())
        return f"Polygon([{pts}])"

    @property
    def signed_area(self) -> float:
        return signed_area(self._v)

    @property
    def area(self) -> float:
        return abs(signed_area(self._v))

    @property
    def perimeter(self) -> float:
        return perimeter(self._v)

    @property
    def bounds(self):
        """``(xmin, ymin, xmax, ymax)``."""
        lo = self._v.min(axis=0)
        hi = self._v.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def is_simple(self) -> bool:
        return is_simple(self._v)

    def is_convex(self) -> bool:
        return is_convex(self._v)

    def rotated(self, shift: int) -> "Polygon":
        """Same polygon with the vertex list cyclically shifted to start at ``shift``."""
        return Polygon(np.roll(self._v, -shift, axis=0), normalize=False)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self._v + (dx, dy), normalize=False)


PolygonLike = Union[Polygon, np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True)
class Frame:
    """Axis-aligned window sampled on a ``resolution x resolution`` grid."""

    origin: tuple
    width: float
    height: float
    resolution: int = 64

    def __post_init__(self):
        ox, oy = self.origin
        if not (math.isfinite(ox) and math.isfinite(oy)):
            raise InvalidInputError("frame origin must be finite")
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError(f"frame extent must be positive, got {self.width} x {self.height}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise InvalidInputError(f"frame resolution must be an integer >= 2, got {self.resolution}")
        object.__setattr__(self, "origin", (float(ox), float(oy)))
        object.__setattr__(self, "resolution", int(self.resolution))

    @property
    def cell_size(self):
        return self.width / self.resolution, self.height / self.resolution

    def cell_centers(self) -> np.ndarray:
        """Array of shape ``(resolution * resolution, 2)``, row-major."""
        return self._centers

    @cached_property
    def _centers(self) -> np.ndarray:
        cw, ch = self.cell_size
        idx = np.arange(self.resolution) + 0.5
        res = self.resolution
        out = np.empty((res, res, 2))
        out[:, :, 0] = self.origin[0] + idx[None, :] * cw
        out[:, :, 1] = self.origin[1] + idx[:, None] * ch
        out = out.reshape(-1, 2)
        out.setflags(write=False)
        return out


def _coords(poly) -> np.ndarray:
    if isinstance(poly, Polygon):
        return poly.vertices
    v = np.asarray(poly, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 2:
        raise InvalidInputError(f"expected an (n, 2) vertex array, got shape {v.shape}")
    if len(v) < 3:
        raise InvalidInputError(f"a polygon needs at least 3 vertices, got {len(v)}")
    if not np.isfinite(v).all():
        raise InvalidInputError("polygon coordinates must be finite")
    return v


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    s = np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]) + x[-1] * y[0] - x[0] * y[-1]
    return 0.5 * float(s)


def _edges(v: np.ndarray) -> np.ndarray:
    e = np.empty_like(v)
    e[:-1] = v[1:] - v[:-1]
    e[-1] = v[0] - v[-1]
    return e


def signed_area(poly: PolygonLike) -> float:
    """Shoelace area; positive for screen-clockwise order in y-down coordinates."""
    return _shoelace(_coords(poly))


def perimeter(poly: PolygonLike) -> float:
    v = _coords(poly)
    return float(np.linalg.norm(_edges(v), axis=1).sum())


def _boundary_eps(v: np.ndarray) -> float:
    span = float((v.max(axis=0) - v.min(axis=0)).max()) if len(v) else 0.0
    return 1e-9 * max(1.0, span)


@njit(cache=True)
def _edge_tables(vx, vy):
    n = vx.shape[0]
    ex = np.empty(n)
    ey = np.empty(n)
    slope = np.zeros(n)
    inv_len2 = np.zeros(n)
    for i in range(n):
        k = i + 1 if i + 1 < n else 0
        ex[i] = vx[k] - vx[i]
        ey[i] = vy[k] - vy[i]
        if ey[i] != 0:
            slope[i] = ex[i] / ey[i]
        ee = ex[i] * ex[i] + ey[i] * ey[i]
        if ee > 0:
            inv_len2[i] = 1.0 / ee
    return ex, ey, slope, inv_len2


@njit(cache=True)
def _query_kernel(px, py, vx, vy):
    m, n = px.shape[0], vx.shape[0]
    ex, ey, slope, inv_len2 = _edge_tables(vx, vy)
    parity = np.zeros(m, dtype=np.bool_)
    dist = np.empty(m)
    edge = np.zeros(m, dtype=np.int64)
    tpar = np.zeros(m)
    offx = np.zeros(m)
    offy = np.zeros(m)
    for p in range(m):
        x, y = px[p], py[p]
        inside = False
        best = np.inf
        for i in range(n):
            dx, dy = x - vx[i], y - vy[i]
            # edge straddles the horizontal ray and crosses it right of the point
            if (dy < 0) != (dy < ey[i]) and dx < dy * slope[i]:
                inside = not inside
            t = min(1.0, max(0.0, (dx * ex[i] + dy * ey[i]) * inv_len2[i]))
            ux, uy = dx - t * ex[i], dy - t * ey[i]
            d2 = ux * ux + uy * uy
            if d2 < best:
                best = d2
                edge[p] = i
                tpar[p] = t
                offx[p] = ux
                offy[p] = uy
        parity[p] = inside
        dist[p] = np.sqrt(best)
    return parity, dist, edge, tpar, offx, offy


@njit(cache=True)
def _contains_kernel(px, py, vx, vy, eps):
    m, n = px.shape[0], vx.shape[0]
    ex, ey, slope, inv_len2 = _edge_tables(vx, vy)
    xmin, xmax = vx.min() - eps, vx.max() + eps
    ymin, ymax = vy.min() - eps, vy.max() + eps
    eps2 = eps * eps
    out = np.zeros(m, dtype=np.bool_)
    for p in range(m):
        x, y = px[p], py[p]
        if x < xmin or x > xmax or y < ymin or y > ymax:
            continue
        inside = False
        on_boundary = False
        for i in range(n):
            dx, dy = x - vx[i], y - vy[i]
            if (dy < 0) != (dy < ey[i]) and dx < dy * slope[i]:
                inside = not inside
            if not on_boundary:
                t = min(1.0, max(0.0, (dx * ex[i] + dy * ey[i]) * inv_len2[i]))
                ux, uy = dx - t * ex[i], dy - t * ey[i]
                on_boundary = ux * ux + uy * uy <= eps2
        out[p] = inside or on_boundary
    return out


@njit(cache=True)
def _soft_kernel(px, py, vx, vy, tau, eps, normal_x, normal_y):
    parity, dist, edge, tpar, offx, offy = _query_kernel(px, py, vx, vy)
    m, n = px.shape[0], vx.shape[0]
    val = np.empty(m)
    grad = np.zeros((m, n, 2))
    for p in range(m):
        d = dist[p]
        s = 1.0 if (parity[p] or d <= eps) else -1.0
        z = s * d / tau
        if z >= 0:
            q = np.exp(-z)
            v = 1.0 / (1.0 + q)
        else:
            q = np.exp(z)
            v = q / (1.0 + q)
        val[p] = v
        a = edge[p]
        b = a + 1 if a + 1 < n else 0
        # unit direction in which the signed distance grows; edge normal on the boundary
        if d > 0:
            wx, wy = s * offx[p] / d, s * offy[p] / d
        else:
            wx, wy = normal_x[a], normal_y[a]
        dm = v * (1.0 - v) / tau
        ca = -dm * (1.0 - tpar[p])
        cb = -dm * tpar[p]
        grad[p, a, 0] = ca * wx
        grad[p, a, 1] = ca * wy
        grad[p, b, 0] = cb * wx
        grad[p, b, 1] = cb * wy
    return val, grad


def _query(points: np.ndarray, v: np.ndarray):
    """Per-point even-odd parity and nearest boundary feature.

    Returns ``(parity, dist, edge, t, ux, uy)``: parity of ray crossings,
    distance to the boundary, index of the nearest edge (lowest on ties),
    clamped projection parameter on that edge, and the offset from the
    nearest boundary point to the query point.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    vx = np.ascontiguousarray(v[:, 0])
    vy = np.ascontiguousarray(v[:, 1])
    return _query_kernel(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), vx, vy)


def contains_points(poly: PolygonLike, points) -> np.ndarray:
    """Even-odd membership for an ``(m, 2)`` array of points; boundary counts as inside."""
    v = _coords(poly)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return _contains_kernel(
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
        np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]), _boundary_eps(v),
    )


def contains(poly: PolygonLike, point) -> bool:
    return bool(contains_points(poly, [point])[0])


def resample(poly: PolygonLike, n: int) -> Polygon:
    """Place ``n`` points at uniform arc-length spacing along the closed boundary.

    The first output point is the first input vertex and the traversal
    direction is kept, so a clockwise input yields a clockwise output.
    """
    if int(n) != n or n < 3:
        raise InvalidArgumentError(f"resample count must be an integer >= 3, got {n}")
    v = _coords(poly)
    closed = np.vstack([v, v[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return Polygon(np.repeat(v[:1], n, axis=0), normalize=False)
    s = np.arange(n) * (total / n)
    x = np.interp(s, cum, closed[:, 0])
    y = np.interp(s, cum, closed[:, 1])
    return Polygon(np.stack([x, y], axis=1), normalize=False)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        val = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (val > 0) - (val < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


def is_simple(poly: PolygonLike) -> bool:
    """True when no two non-adjacent edges touch and the area is nonzero."""
    v = _coords(poly).tolist()
    n = len(v)
    if _shoelace(np.asarray(v)) == 0:
        return False
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i + 1 or (j + 1) % n == i:
                continue
            if _segments_cross(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


@njit(cache=True)
def _convex_kernel(vx, vy):
    n = vx.shape[0]
    ex = np.empty(n)
    ey = np.empty(n)
    k = 0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        dx, dy = vx[j] - vx[i], vy[j] - vy[i]
        if dx != 0 or dy != 0:
            ex[k] = dx
            ey[k] = dy
            k += 1
    if k < 3:
        return False
    pos = neg = False
    turning = 0.0
    for i in range(k):
        j = i + 1 if i + 1 < k else 0
        cross = ex[i] * ey[j] - ey[i] * ex[j]
        if cross > 0:
            pos = True
        elif cross < 0:
            neg = True
        turning += np.arctan2(cross, ex[i] * ex[j] + ey[i] * ey[j])
    if pos == neg:
        return False
    return abs(abs(turning) - 2 * np.pi) < 1e-6


def is_convex(poly: PolygonLike) -> bool:
    """Convex simple polygon; collinear and repeated vertices are allowed."""
    v = _coords(poly)
    return bool(_convex_kernel(np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1])))


def _clip_convex(subject, clip):
    """Sutherland-Hodgman clip of one positively oriented convex polygon by another."""
    out = subject
    m = len(clip)
    for k in range(m):
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % m]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        if not inp:
            break
        sx, sy = inp[-1]
        fs = ex * (sy - ay) - ey * (sx - ax)
        for px, py in inp:
            fp = ex * (py - ay) - ey * (px - ax)
            if fp >= 0:
                if fs < 0:
                    lam = fs / (fs - fp)
                    out.append((sx + lam * (px - sx), sy + lam * (py - sy)))
                out.append((px, py))
            elif fs >= 0:
                lam = fs / (fs - fp)
                out.append((sx + lam * (px - sx), sy + lam * (py - sy)))
            sx, sy, fs = px, py, fp
    return out


def _area_of(points) -> float:
    if len(points) < 3:
        return 0.0
    s = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def convex_iou(a: PolygonLike, b: PolygonLike) -> float:
    """Exact IoU of two convex polygons via Sutherland-Hodgman clipping."""
    va, vb = _coords(a), _coords(b)
    area_a, area_b = abs(_shoelace(va)), abs(_shoelace(vb))
    if area_a == 0 or area_b == 0:
        return 0.0
    pa = va.tolist() if _shoelace(va) > 0 else va[::-1].tolist()
    pb = vb.tolist() if _shoelace(vb) > 0 else vb[::-1].tolist()
    inter = abs(_area_of(_clip_convex(pa, pb)))
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def _degenerate(v: np.ndarray) -> bool:
    span = float((v.max(axis=0) - v.min(axis=0)).max())
    return abs(_shoelace(v)) <= 1e-12 * span * span


def polygon_iou(a: PolygonLike, b: PolygonLike, resolution: int = 512) -> float:
    """Intersection over union of two polygons.

    Convex pairs are clipped exactly. Anything else is estimated by counting
    even-odd cell-center membership on a ``resolution``-sided grid spanning
    the joint bounding box. Zero-area input yields 0.
    """
    va, vb = _coords(a), _coords(b)
    lo_a, hi_a = va.min(axis=0), va.max(axis=0)
    lo_b, hi_b = vb.min(axis=0), vb.max(axis=0)
    span_a, span_b = float((hi_a - lo_a).max()), float((hi_b - lo_b).max())
    area_a, area_b = abs(_shoelace(va)), abs(_shoelace(vb))
    if area_a <= 1e-12 * span_a * span_a or area_b <= 1e-12 * span_b * span_b:
        return 0.0
    if va.shape == vb.shape and np.array_equal(va, vb):
        return 1.0
    if (hi_a < lo_b).any() or (hi_b < lo_a).any():
        return 0.0
    # fixed argument order keeps the result exactly symmetric
    if (va.shape[0], va.tobytes()) > (vb.shape[0], vb.tobytes()):
        va, vb = vb, va
        lo_a, hi_a, lo_b, hi_b = lo_b, hi_b, lo_a, hi_a
    if is_convex(va) and is_convex(vb):
        return convex_iou(va, vb)
    return _grid_iou(va, vb, np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b), resolution)


def _grid_iou(va, vb, lo, hi, resolution):
    frame = Frame((lo[0], lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]), resolution)
    centers = frame.cell_centers()
    ma = contains_points(va, centers)
    mb = contains_points(vb, centers)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def grid_iou(a: PolygonLike, b: PolygonLike, resolution: int = 512) -> float:
    """IoU estimated from even-odd membership of cell centers on a
    ``resolution``-sided grid over the joint bounding box, for any pair."""
    va, vb = _coords(a), _coords(b)
    pts = np.vstack([va, vb])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if not np.all(hi > lo):
        return 0.0
    return _grid_iou(va, vb, lo, hi, resolution)


def bounding_frame(polys, resolution: int = 64, pad: float = 0.05, square: bool = True) -> Frame:
    """Frame around the joint bounding box of ``polys``.

    Each side is padded by ``pad`` times that axis' extent; with ``square``
    the short axis is then widened symmetrically to match the long one.
    """
    pts = np.vstack([_coords(p) for p in polys])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = hi - lo
    if not np.any(extent > 0) or (not square and not np.all(extent > 0)):
        raise InvalidInputError("bounding box has zero extent")
    size = extent * (1.0 + 2.0 * pad)
    if square:
        size = np.full(2, size.max())
    center = 0.5 * (lo + hi)
    origin = center - 0.5 * size
    return Frame((origin[0], origin[1]), float(size[0]), float(size[1]), resolution)


def rasterize_hard(poly: PolygonLike, frame: Frame) -> np.ndarray:
    """Binary mask: a cell is 1 when its center is inside the polygon (even-odd)."""
    v = _coords(poly)
    res = frame.resolution
    if _degenerate(v):
        return np.zeros((res, res))
    inside = contains_points(v, frame.cell_centers())
    return inside.reshape(res, res).astype(np.float64)


def rasterize_soft(poly: PolygonLike, frame: Frame, tau: float):
    """Differentiable occupancy mask and its vertex Jacobian.

    Each cell holds ``sigmoid(s * d / tau)``, where ``d`` is the distance from
    the cell center to the nearest boundary point and ``s`` is +1 inside and
    -1 outside. ``tau`` is in pixels.

    Returns
    -------
    mask : ndarray, shape (res, res)
    grad : ndarray, shape (res, res, n, 2)
        ``grad[r, c, i, k]`` is the derivative of ``mask[r, c]`` with respect
        to coordinate ``k`` of vertex ``i``.
    """
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    v = _coords(poly)
    n = len(v)
    res = frame.resolution
    if _degenerate(v):
        return np.zeros((res, res)), np.zeros((res, res, n, 2))

    centers = frame.cell_centers()
    orient = 1.0 if _shoelace(v) >= 0 else -1.0
    e = _edges(v)
    elen = np.hypot(e[:, 0], e[:, 1])
    elen[elen == 0] = 1.0
    # inward unit normals, used for cells centered exactly on an edge
    nx = -orient * e[:, 1] / elen
    ny = orient * e[:, 0] / elen
    val, grad = _soft_kernel(
        np.ascontiguousarray(centers[:, 0]), np.ascontiguousarray(centers[:, 1]),
        np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]),
        float(tau), _boundary_eps(v), nx, ny,
    )
    return val.reshape(res, res), grad.reshape(res, res, n, 2)
