"""Planar convex-polygon primitives used by the bin world.

Everything here works on plain floats and tuples; the hot paths (contact
tests inside finger motion loops) are called tens of thousands of times per
episode, where numpy scalar overhead dominates actual arithmetic.
"""

from __future__ import annotations

import math

Vec2 = tuple[float, float]

# Vertices closer than this are considered duplicates; cross products below
# this are considered collinear.
_DEGENERACY_TOL = 1e-6
_TIE_TOL = 1e-9


def _cross(ax: float, ay: float, bx: float, by: float) -> float:
    return ax * by - ay * bx


class ConvexPolygon:
    """Strictly convex polygon with counterclockwise winding.

    Construction validates winding, strict convexity and vertex separation;
    the simulator never has to re-check these downstream.
    """

    __slots__ = ("vertices", "_area", "_centroid", "_radius")

    def __init__(self, vertices):
        verts = [(float(x), float(y)) for x, y in vertices]
        n = len(verts)
        if n < 3:
            raise ValueError("polygon needs at least 3 vertices")
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            if math.hypot(x1 - x0, y1 - y0) <= _DEGENERACY_TOL:
                raise ValueError("vertices %d and %d nearly coincide" % (i, (i + 1) % n))
        area2 = 0.0
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            area2 += x0 * y1 - x1 * y0
        if area2 <= 0.0:
            raise ValueError("vertices must wind counterclockwise")
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            x2, y2 = verts[(i + 2) % n]
            turn = _cross(x1 - x0, y1 - y0, x2 - x1, y2 - y1)
            if turn <= _DEGENERACY_TOL:
                raise ValueError("polygon not strictly convex at vertex %d" % ((i + 1) % n))
        self.vertices = verts
        self._area = 0.5 * area2
        cx = cy = 0.0
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            w = x0 * y1 - x1 * y0
            cx += (x0 + x1) * w
            cy += (y0 + y1) * w
        self._centroid = (cx / (6.0 * self._area), cy / (6.0 * self._area))
        self._radius = max(
            math.hypot(x - self._centroid[0], y - self._centroid[1]) for x, y in verts
        )

    @property
    def area(self) -> float:
        return self._area

    @property
    def centroid(self) -> Vec2:
        return self._centroid

    @property
    def bounding_radius(self) -> float:
        """Radius of the smallest centroid-centered disc containing the polygon."""
        return self._radius

    def polar_second_moment(self) -> float:
        """Area integral of squared distance from the centroid (cm^4)."""
        ix = iy = 0.0
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            w = x0 * y1 - x1 * y0
            ix += (y0 * y0 + y0 * y1 + y1 * y1) * w
            iy += (x0 * x0 + x0 * x1 + x1 * x1) * w
        j_origin = (ix + iy) / 12.0
        cx, cy = self._centroid
        return j_origin - self._area * (cx * cx + cy * cy)

    def contains(self, p: Vec2) -> bool:
        px, py = p
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            if _cross(x1 - x0, y1 - y0, px - x0, py - y0) < 0.0:
                return False
        return True

    def signed_distance(self, p: Vec2) -> float:
        """Distance to the boundary, negative inside."""
        if self.contains(p):
            return -self._inner_distance(p)
        q = self.closest_boundary_point(p)
        return math.hypot(p[0] - q[0], p[1] - q[1])

    def _inner_distance(self, p: Vec2) -> float:
        # Inside a convex polygon the nearest boundary point is the foot of a
        # perpendicular, so min over edge-line distances suffices.
        px, py = p
        verts = self.vertices
        n = len(verts)
        best = math.inf
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            ex, ey = x1 - x0, y1 - y0
            d = _cross(ex, ey, px - x0, py - y0) / math.hypot(ex, ey)
            if d < best:
                best = d
        return best

    def closest_boundary_point(self, p: Vec2) -> Vec2:
        px, py = p
        verts = self.vertices
        n = len(verts)
        best = math.inf
        bx = by = 0.0
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            ex, ey = x1 - x0, y1 - y0
            t = ((px - x0) * ex + (py - y0) * ey) / (ex * ex + ey * ey)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx, qy = x0 + t * ex, y0 + t * ey
            d = (px - qx) ** 2 + (py - qy) ** 2
            if d < best:
                best = d
                bx, by = qx, qy
        return (bx, by)

    def transformed(self, cos_t: float, sin_t: float, tx: float, ty: float) -> "ConvexPolygon":
        """Rotate by (cos_t, sin_t) about the origin, then translate."""
        return ConvexPolygon(
            [
                (cos_t * x - sin_t * y + tx, sin_t * x + cos_t * y + ty)
                for x, y in self.vertices
            ]
        )

    def scaled(self, factor: float, about: Vec2 = (0.0, 0.0)) -> "ConvexPolygon":
        ax, ay = about
        return ConvexPolygon(
            [(ax + factor * (x - ax), ay + factor * (y - ay)) for x, y in self.vertices]
        )

    def to_json(self):
        return [[x, y] for x, y in self.vertices]

    @classmethod
    def from_json(cls, data) -> "ConvexPolygon":
        return cls(data)


def penetration(center: Vec2, radius: float, poly: ConvexPolygon):
    """Disc-vs-polygon overlap as (depth, normal), or None when separated.

    depth is the minimal translation distance that separates the disc from the
    polygon; normal is the unit direction the disc must move. When the center
    lies inside, ties between equally near edges are broken by lexicographic
    max on (nx, ny), i.e. toward +x first.
    """
    cx, cy = center
    pcx, pcy = poly.centroid
    quick = math.hypot(cx - pcx, cy - pcy) - poly.bounding_radius
    if quick >= radius:
        return None
    if poly.contains(center):
        verts = poly.vertices
        n = len(verts)
        best = math.inf
        best_n = (0.0, 0.0)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            ex, ey = x1 - x0, y1 - y0
            elen = math.hypot(ex, ey)
            d = _cross(ex, ey, cx - x0, cy - y0) / elen
            nx, ny = ey / elen, -ex / elen  # outward for CCW winding
            if d < best - _TIE_TOL:
                best = d
                best_n = (nx, ny)
            elif d < best + _TIE_TOL and (nx, ny) > best_n:
                best_n = (nx, ny)
        return (radius + best, best_n)
    qx, qy = poly.closest_boundary_point(center)
    dist = math.hypot(cx - qx, cy - qy)
    if dist >= radius - 1e-12:
        return None
    return (radius - dist, ((cx - qx) / dist, (cy - qy) / dist))


def penetration_union(center: Vec2, radius: float, polys):
    """Deepest disc penetration against a union of convex parts.

    Returns (depth, normal, part_index) or None. Parts are assumed to have
    disjoint interiors (shape generators guarantee it); contacts are shallow,
    so the deepest single part is the union answer at the outer boundary.
    """
    best = None
    for idx, poly in enumerate(polys):
        hit = penetration(center, radius, poly)
        if hit is not None and (best is None or hit[0] > best[0] + _TIE_TOL):
            best = (hit[0], hit[1], idx)
    return best


def union_signed_distance(p: Vec2, polys) -> float:
    """Signed distance to a union of convex parts (negative inside any part)."""
    return min(poly.signed_distance(p) for poly in polys)


def _project(poly: ConvexPolygon, ax: float, ay: float) -> tuple[float, float]:
    lo = hi = poly.vertices[0][0] * ax + poly.vertices[0][1] * ay
    for x, y in poly.vertices[1:]:
        v = x * ax + y * ay
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return lo, hi


def poly_penetration(a: ConvexPolygon, b: ConvexPolygon):
    """SAT minimal-translation overlap between convex polygons.

    Returns (depth, normal) with normal the unit direction that moves `b` out
    of `a`, or None when separated.
    """
    if (
        math.hypot(b.centroid[0] - a.centroid[0], b.centroid[1] - a.centroid[1])
        >= a.bounding_radius + b.bounding_radius
    ):
        return None
    best_depth = math.inf
    best_axis = (0.0, 0.0)
    for poly, sign in ((a, 1.0), (b, -1.0)):
        verts = poly.vertices
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            ex, ey = x1 - x0, y1 - y0
            elen = math.hypot(ex, ey)
            # outward normal of this edge, oriented from a toward b
            ax_, ay_ = sign * ey / elen, sign * -ex / elen
            alo, ahi = _project(a, ax_, ay_)
            blo, bhi = _project(b, ax_, ay_)
            if bhi <= alo or blo >= ahi:
                return None
            move_pos = ahi - blo  # slide b along +axis until clear
            move_neg = bhi - alo  # slide b along -axis until clear
            overlap = min(move_pos, move_neg)
            if overlap < best_depth:
                best_depth = overlap
                best_axis = (ax_, ay_) if move_pos <= move_neg else (-ax_, -ay_)
    return (best_depth, best_axis)


def poly_distance(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Separation distance between convex polygons (0 when overlapping)."""
    if poly_penetration(a, b) is not None:
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        for v in p.vertices:
            c = q.closest_boundary_point(v)
            d = math.hypot(v[0] - c[0], v[1] - c[1])
            if d < best:
                best = d
    return best


def union_distance(parts_a, parts_b) -> float:
    return min(poly_distance(a, b) for a in parts_a for b in parts_b)


def regular_ngon(n: int, circumradius: float, phase: float = 0.0) -> ConvexPolygon:
    return ConvexPolygon(
        [
            (
                circumradius * math.cos(phase + 2.0 * math.pi * k / n),
                circumradius * math.sin(phase + 2.0 * math.pi * k / n),
            )
            for k in range(n)
        ]
    )


def rectangle(width: float, height: float, center: Vec2 = (0.0, 0.0)) -> ConvexPolygon:
    cx, cy = center
    hw, hh = 0.5 * width, 0.5 * height
    return ConvexPolygon(
        [(cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh)]
    )


def vertex_diameter(polys) -> float:
    """Max pairwise vertex distance across a list of polygons."""
    pts = [v for poly in polys for v in poly.vertices]
    best = 0.0
    for i in range(len(pts)):
        xi, yi = pts[i]
        for j in range(i + 1, len(pts)):
            d = math.hypot(pts[j][0] - xi, pts[j][1] - yi)
            if d > best:
                best = d
    return best
