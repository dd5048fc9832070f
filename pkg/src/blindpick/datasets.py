"""Procedural shape families, scene placement, and tap-episode corpora.

Six extruded families, each sampled as one or more disjoint convex parts per
slice, rescaled so the footprint vertex diameter hits an exact target in
[8, 16] cm, and optionally tapered over 1-3 stacked slices. Corpus generation
drops each object alone into the bin at a random pose, perturbs the known
centroid by Gaussian estimate noise, and records the tap episode in NDJSON.
All sampling is driven by a single rng stream so a seed regenerates files
byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexPolygon, rectangle, regular_ngon, union_distance, vertex_diameter
from .interact import TapConfig, TapSequence, collect_taps
from .world import (
    BIN_SIDE,
    DEFAULT_FRICTION,
    DEFAULT_MASS,
    BodyState,
    ObjectShape,
    Pose,
    Scene,
    Slice,
)

__all__ = [
    "FAMILIES",
    "EST_NOISE",
    "ShapeEntry",
    "sample_shape",
    "generate_shapes",
    "write_shapes",
    "read_shapes",
    "gen_scene",
    "sample_estimate",
    "build_corpus",
    "write_corpus",
    "read_corpus",
    "make_pairs",
]

FAMILIES = ("prism_ngon", "box", "ellipse_prism", "l_shape", "t_shape", "star_prism")
EST_NOISE = 2.0  # cm, per-axis sigma on localization estimates fed to tapping
DIAMETER_RANGE = (8.0, 16.0)
MIN_SEP = 4.0
WALL_CLEARANCE = 2.0
PLACEMENT_ATTEMPTS = 10000


def _ccw(points):
    area = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return ConvexPolygon(points if area > 0 else points[::-1])


def _base_parts(family, rng):
    """Nominal-size footprint for one family as disjoint convex parts."""
    if family == "prism_ngon":
        n = int(rng.integers(3, 9))
        return [regular_ngon(n, rng.uniform(4.5, 7.5), phase=rng.uniform(0, 2 * math.pi))]
    if family == "box":
        long_side = rng.uniform(9.0, 15.0)
        short = long_side / rng.uniform(1.0, 2.5)
        return [rectangle(long_side, short)]
    if family == "ellipse_prism":
        a = rng.uniform(4.5, 7.5)
        b = a * rng.uniform(0.5, 0.9)
        ts = 2 * math.pi * np.arange(24) / 24
        return [ConvexPolygon([(a * math.cos(t), b * math.sin(t)) for t in ts])]
    if family == "l_shape":
        w = rng.uniform(9.0, 15.0)
        h = rng.uniform(9.0, 15.0)
        arm_w = w * rng.uniform(0.35, 0.6)
        arm_h = h * rng.uniform(0.35, 0.6)
        return [
            rectangle(arm_w, h, center=(arm_w / 2, h / 2)),
            rectangle(w - arm_w, arm_h, center=(arm_w + (w - arm_w) / 2, arm_h / 2)),
        ]
    if family == "t_shape":
        w = rng.uniform(9.0, 15.0)
        h = rng.uniform(9.0, 15.0)
        bar = h * rng.uniform(0.3, 0.5)
        stem = w * rng.uniform(0.3, 0.5)
        return [
            rectangle(w, bar, center=(w / 2, h - bar / 2)),
            rectangle(stem, h - bar, center=(w / 2, (h - bar) / 2)),
        ]
    if family == "star_prism":
        rc = rng.uniform(3.0, 4.5)
        ra = rc * rng.uniform(1.6, 2.4)
        hub = [
            (rc * math.cos(a), rc * math.sin(a))
            for a in (math.pi / 2 + 2 * math.pi * k / 3 for k in range(3))
        ]
        parts = [_ccw(hub)]
        for k in range(3):
            v0, v1 = hub[k], hub[(k + 1) % 3]
            mx, my = (v0[0] + v1[0]) / 2, (v0[1] + v1[1]) / 2
            norm = math.hypot(mx, my)
            apex = (mx / norm * ra, my / norm * ra)
            parts.append(_ccw([v0, apex, v1]))
        return parts
    raise ValueError("unknown family %r" % family)


def sample_shape(family, rng, label):
    """Draw one shape: exact target diameter, 1-3 slices, tapered stack."""
    parts = _base_parts(family, rng)
    target = rng.uniform(*DIAMETER_RANGE)
    n_slices = int(rng.integers(1, 4))
    heights = rng.uniform(3.0, 6.0, size=n_slices)
    tapers = rng.uniform(0.65, 0.95, size=n_slices - 1) if n_slices > 1 else []
    # center on the footprint area centroid so tapering shrinks in place
    area = sum(p.area for p in parts)
    cx = sum(p.area * p.centroid[0] for p in parts) / area
    cy = sum(p.area * p.centroid[1] for p in parts) / area
    centered = [p.transformed(1.0, 0.0, -cx, -cy) for p in parts]
    scale = target / vertex_diameter(centered)
    base = [p.scaled(scale) for p in centered]
    slices = []
    z = 0.0
    factor = 1.0
    for i in range(n_slices):
        if i > 0:
            factor *= tapers[i - 1]
        level = base if i == 0 else [p.scaled(factor) for p in base]
        slices.append(Slice(z, z + heights[i], tuple(level)))
        z += heights[i]
    return ObjectShape(label, slices)


@dataclass(frozen=True)
class ShapeEntry:
    object_id: str
    family: str
    split: str
    shape: ObjectShape

    def to_json(self):
        return {
            "object_id": self.object_id,
            "family": self.family,
            "split": self.split,
            "shape": self.shape.to_json(),
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            data["object_id"], data["family"], data["split"], ObjectShape.from_json(data["shape"])
        )


def generate_shapes(per_family=25, train_per_family=20, seed=0):
    """Deterministic stratified corpus: per family, the first train_per_family
    draws go to the train split and the rest to val."""
    if not 0 <= train_per_family <= per_family:
        raise ValueError("train_per_family out of range")
    rng = np.random.default_rng(seed)
    entries = []
    for family in FAMILIES:
        for i in range(per_family):
            object_id = "%s_%02d" % (family, i)
            split = "train" if i < train_per_family else "val"
            entries.append(ShapeEntry(object_id, family, split, sample_shape(family, rng, object_id)))
    return entries


def write_shapes(entries, path):
    import json

    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_json()) + "\n")


def read_shapes(path):
    import json

    with open(path) as fh:
        return [ShapeEntry.from_json(json.loads(line)) for line in fh if line.strip()]


def _place_bound(shape):
    cx, cy = shape.centroid
    return max(
        math.hypot(x - cx, y - cy) for s in shape.slices for p in s.parts for (x, y) in p.vertices
    )


def gen_scene(
    shapes,
    rng,
    *,
    bin_side=BIN_SIDE,
    min_sep=MIN_SEP,
    clearance=WALL_CLEARANCE,
    mass=DEFAULT_MASS,
    friction=DEFAULT_FRICTION,
    static=False,
    max_attempts=PLACEMENT_ATTEMPTS,
):
    """Rejection-sample non-overlapping poses for the given shapes."""
    bodies = []
    placed_parts = []
    for shape in shapes:
        bound = _place_bound(shape)
        lo = clearance + bound
        hi = bin_side - clearance - bound
        if lo >= hi:
            raise RuntimeError("shape %s too large for the bin" % shape.label)
        for attempt in range(max_attempts):
            x = rng.uniform(lo, hi)
            y = rng.uniform(lo, hi)
            theta = rng.uniform(-math.pi, math.pi)
            body = BodyState(shape, Pose(x, y, theta), mass=mass, friction=friction)
            parts = body.footprint_parts()
            if all(union_distance(parts, other) >= min_sep for other in placed_parts):
                bodies.append(body)
                placed_parts.append(parts)
                break
        else:
            raise RuntimeError("could not place %s after %d attempts" % (shape.label, max_attempts))
    return Scene(bodies, bin_side=bin_side, static_mode=static)


def sample_estimate(center, rng, noise=EST_NOISE):
    """Perturb a true center by per-axis Gaussian noise, emulating the
    residual error of the localization stage."""
    return (center[0] + rng.normal(0.0, noise), center[1] + rng.normal(0.0, noise))


def build_corpus(
    entries,
    *,
    episodes=4,
    seed=0,
    variant="full",
    tap_config=None,
    noise=EST_NOISE,
    mass=DEFAULT_MASS,
    friction=DEFAULT_FRICTION,
    static=False,
):
    """Tap each object alone in the bin `episodes` times at random poses.

    An episode whose estimate misses the object (flagged, empty points) is
    redrawn once with a fresh pose; a second miss is skipped so downstream
    consumers never see empty sequences.
    """
    cfg = tap_config if tap_config is not None else TapConfig()
    rng = np.random.default_rng(seed)
    sequences = []
    for entry in entries:
        for ep in range(episodes):
            for _ in range(2):
                scene = gen_scene(
                    [entry.shape], rng, mass=mass, friction=friction, static=static
                )
                est = sample_estimate(scene.bodies[0].world_centroid(), rng, noise)
                seq = collect_taps(
                    scene, est, cfg, variant=variant, rng=rng,
                    pose_id="%s:%d" % (entry.object_id, ep),
                )
                if seq.points:
                    sequences.append(seq)
                    break
    return sequences


def write_corpus(sequences, path):
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(seq.dumps() + "\n")


def read_corpus(path):
    with open(path) as fh:
        return [TapSequence.loads(line) for line in fh if line.strip()]


def make_pairs(sequences, max_pairs_per_object=None, seed=0):
    """All unordered episode pairs that share an object, optionally capped
    per object by a seeded subsample. Returns (points_a, points_b) tuples."""
    by_object = {}
    for seq in sequences:
        by_object.setdefault(seq.object_id, []).append(seq)
    rng = np.random.default_rng(seed)
    pairs = []
    for object_id in sorted(by_object):
        group = by_object[object_id]
        combos = [
            (group[i].points, group[j].points)
            for i in range(len(group))
            for j in range(i + 1, len(group))
        ]
        if max_pairs_per_object is not None and len(combos) > max_pairs_per_object:
            keep = rng.choice(len(combos), size=max_pairs_per_object, replace=False)
            combos = [combos[k] for k in sorted(keep)]
        pairs.extend(combos)
    return pairs
