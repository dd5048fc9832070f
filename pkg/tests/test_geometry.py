import math

import numpy as np
import pytest

from blindpick.geometry import (
    ConvexPolygon,
    penetration,
    penetration_union,
    poly_distance,
    poly_penetration,
    rectangle,
    regular_ngon,
    union_distance,
    vertex_diameter,
)


def brute_force_separation(center, radius, poly, n_dirs=2880):
    """Minimal translation separating the disc from the polygon.

    Dense direction sampling + binary search on translation length. Used as an
    independent oracle for penetration().
    """
    span = poly.bounding_radius * 2.0 + radius * 2.0 + 1.0
    best = math.inf
    for k in range(n_dirs):
        ang = 2.0 * math.pi * k / n_dirs
        ux, uy = math.cos(ang), math.sin(ang)
        lo, hi = 0.0, span
        if poly.signed_distance((center[0] + hi * ux, center[1] + hi * uy)) < radius:
            continue
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            p = (center[0] + mid * ux, center[1] + mid * uy)
            if poly.signed_distance(p) >= radius:
                hi = mid
            else:
                lo = mid
        if hi < best:
            best = hi
    return best


UNIT_SQUARE_25_35 = rectangle(10.0, 10.0, center=(30.0, 30.0))


class TestConvexPolygonValidation:
    def test_rejects_clockwise(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])

    def test_rejects_collinear(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (1, 0), (2, 0), (1, 1)])

    def test_rejects_duplicate_vertices(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (1, 0), (1, 0 + 1e-9), (0, 1)])

    def test_rejects_nonconvex(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (4, 0), (4, 4), (2, 1), (0, 4)])

    def test_accepts_ngon(self):
        poly = regular_ngon(7, 5.0)
        assert len(poly.vertices) == 7
        assert poly.area > 0


class TestPolygonMeasures:
    def test_square_area_centroid(self):
        sq = UNIT_SQUARE_25_35
        assert sq.area == pytest.approx(100.0)
        assert sq.centroid == pytest.approx((30.0, 30.0))

    def test_square_polar_moment(self):
        # 10x10 square about its centroid: (w*h^3 + h*w^3)/12 = 1666.67
        sq = rectangle(10.0, 10.0)
        assert sq.polar_second_moment() == pytest.approx(10.0**4 / 6.0, rel=1e-9)

    def test_moment_translation_invariant(self):
        a = rectangle(6.0, 3.0)
        b = rectangle(6.0, 3.0, center=(17.0, -4.0))
        assert a.polar_second_moment() == pytest.approx(b.polar_second_moment(), rel=1e-9)

    def test_ngon_moment_matches_disc_limit(self):
        # High-n regular polygon approaches the disc value pi*r^4/2.
        poly = regular_ngon(256, 4.0)
        assert poly.polar_second_moment() == pytest.approx(math.pi * 4.0**4 / 2.0, rel=1e-3)

    def test_signed_distance_signs(self):
        sq = UNIT_SQUARE_25_35
        assert sq.signed_distance((30.0, 30.0)) == pytest.approx(-5.0)
        assert sq.signed_distance((24.0, 30.0)) == pytest.approx(1.0)
        assert sq.signed_distance((24.0, 24.0)) == pytest.approx(math.hypot(1, 1))

    def test_transformed_rotation(self):
        sq = rectangle(4.0, 2.0)
        rot = sq.transformed(math.cos(0.5), math.sin(0.5), 3.0, -1.0)
        assert rot.area == pytest.approx(sq.area)
        assert rot.centroid == pytest.approx((3.0, -1.0))


class TestPenetrationFrozenCases:
    """Values derived by hand and cross-checked by the brute-force oracle."""

    def test_center_inside_square(self):
        depth, normal = penetration((30.0, 30.0), 1.0, UNIT_SQUARE_25_35)
        assert depth == pytest.approx(6.0, abs=1e-9)
        assert normal == pytest.approx((1.0, 0.0))

    def test_grazing_outside_square(self):
        depth, normal = penetration((24.5, 30.0), 1.0, UNIT_SQUARE_25_35)
        assert depth == pytest.approx(0.5, abs=1e-9)
        assert normal == pytest.approx((-1.0, 0.0))

    def test_separated_returns_none(self):
        assert penetration((20.0, 30.0), 1.0, UNIT_SQUARE_25_35) is None
        assert penetration((24.0, 30.0), 1.0, UNIT_SQUARE_25_35) is None  # exactly touching

    def test_depth_is_minimal_translation(self):
        rng = np.random.default_rng(7)
        polys = [
            UNIT_SQUARE_25_35,
            regular_ngon(5, 6.0, phase=0.3).transformed(1.0, 0.0, 30.0, 30.0),
            rectangle(12.0, 4.0, center=(30.0, 30.0)),
        ]
        for poly in polys:
            for _ in range(6):
                c = (30.0 + rng.uniform(-8, 8), 30.0 + rng.uniform(-8, 8))
                hit = penetration(c, 1.0, poly)
                oracle = brute_force_separation(c, 1.0, poly)
                if hit is None:
                    assert oracle == math.inf or oracle <= 1e-6
                else:
                    depth, normal = hit
                    assert depth == pytest.approx(oracle, abs=2e-3)
                    assert math.hypot(*normal) == pytest.approx(1.0, abs=1e-9)
                    # moving the disc by depth along the normal separates it
                    moved = (c[0] + depth * normal[0], c[1] + depth * normal[1])
                    assert poly.signed_distance(moved) >= 1.0 - 1e-6

    def test_union_picks_deepest_part(self):
        parts = [
            rectangle(10.0, 4.0, center=(0.0, -2.0)),
            rectangle(4.0, 10.0, center=(-3.0, 5.0)),
        ]
        hit = penetration_union((-3.0, -0.5), 1.0, parts)
        assert hit is not None
        depth, normal, idx = hit
        # disc center is inside part 0 (depth 1.5) and only grazes part 1 (0.5)
        assert idx == 0
        assert depth == pytest.approx(1.5)
        assert normal == pytest.approx((0.0, 1.0))


class TestPolyPoly:
    def test_disjoint_distance(self):
        a = rectangle(4.0, 4.0, center=(0.0, 0.0))
        b = rectangle(4.0, 4.0, center=(10.0, 0.0))
        assert poly_penetration(a, b) is None
        assert poly_distance(a, b) == pytest.approx(6.0)

    def test_overlap_mtv(self):
        a = rectangle(4.0, 4.0, center=(0.0, 0.0))
        b = rectangle(4.0, 4.0, center=(3.0, 0.0))
        depth, normal = poly_penetration(a, b)
        assert depth == pytest.approx(1.0)
        assert normal == pytest.approx((1.0, 0.0))
        # translating b by the MTV separates the pair
        moved = b.transformed(1.0, 0.0, depth * normal[0] + 1e-9, depth * normal[1])
        assert poly_penetration(a, moved) is None

    def test_mtv_direction_oblique(self):
        a = regular_ngon(6, 3.0)
        b = regular_ngon(6, 3.0, phase=0.4).transformed(1.0, 0.0, 4.0, 2.0)
        depth, normal = poly_penetration(a, b)
        moved = b.transformed(1.0, 0.0, (depth + 1e-9) * normal[0], (depth + 1e-9) * normal[1])
        assert poly_penetration(a, moved) is None

    def test_union_distance(self):
        pa = [rectangle(4.0, 4.0), rectangle(4.0, 4.0, center=(0.0, 6.0))]
        pb = [rectangle(2.0, 2.0, center=(8.0, 6.0))]
        assert union_distance(pa, pb) == pytest.approx(5.0)


def test_vertex_diameter():
    sq = rectangle(6.0, 8.0)
    assert vertex_diameter([sq]) == pytest.approx(10.0)
    two = [rectangle(2.0, 2.0, center=(-5.0, 0.0)), rectangle(2.0, 2.0, center=(5.0, 0.0))]
    assert vertex_diameter(two) == pytest.approx(math.hypot(12.0, 2.0), abs=1e-9)
