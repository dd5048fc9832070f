"""Planar quasi-static bin world.

Bodies are extruded stacks of convex-polygon slices resting on the bin floor.
A spherical finger interacts with them through a one-shot push rule: a
penetration of depth d along unit direction n moves the body by beta*d*n and
rotates it about its centroid, with beta = 1/(1 + kappa*mu*m). Bodies never
leave the bin and end any resolution step separated from each other.

Contact between the finger and a slice uses a cylinder-band approximation:
the slice is treated as its footprint extruded over [z_lo, z_hi], and the
finger as a disc of its full radius whenever the sphere's z interval overlaps
the slice's. The penetration depth of a lateral contact is therefore
independent of the descent step, which keeps probing deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .geometry import (
    ConvexPolygon,
    penetration_union,
    poly_penetration,
    union_distance,
    union_signed_distance,
)

BIN_SIDE = 60.0  # cm
FINGER_RADIUS = 1.0  # cm
EPS_CONTACT = 0.05  # cm, minimum penetration that registers as contact
EPS_SURF = 0.05  # cm, max residual interpenetration after resolution
KAPPA = 10.0  # kg^-1, push responsiveness scale
DEFAULT_MASS = 0.2  # kg
DEFAULT_FRICTION = 0.5
MAX_BODY_HEIGHT = 20.0  # cm
PROBE_CLEAR_Z = 25.0  # cm, probe start height, above any permissible body

# Fingers may reach past the bin walls (the hand straddles them); bodies may not.
WORKSPACE_MARGIN = 15.0
WORKSPACE_Z_MAX = 35.0

# On detecting contact the fingertip seats itself at this penetration (or at the
# detection threshold if that is deeper) before the push resolves. A fixed seat
# depth models the arm's stopping compliance and makes contact physics
# independent of the motion step size.
SEAT_DEPTH = 0.15

FLOOR = -1  # ContactEvent.body_index sentinel


@dataclass(frozen=True)
class Pose:
    """Planar pose of a body origin in bin coordinates."""

    x: float
    y: float
    theta: float

    def normalized(self) -> "Pose":
        t = (self.theta + math.pi) % (2.0 * math.pi) - math.pi
        return Pose(self.x, self.y, t)

    def to_json(self):
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @classmethod
    def from_json(cls, data) -> "Pose":
        return cls(float(data["x"]), float(data["y"]), float(data["theta"]))


@dataclass(frozen=True)
class Slice:
    """One z band of a shape: a union of convex parts with disjoint interiors."""

    z_lo: float
    z_hi: float
    parts: tuple


class ObjectShape:
    """Rigid shape: 1-3 stacked slices in its own local frame."""

    __slots__ = ("label", "slices", "centroid", "rho", "height", "diameter")

    def __init__(self, label: str, slices):
        if not slices:
            raise ValueError("shape needs at least one slice")
        zs = 0.0
        for s in slices:
            if not (s.z_lo >= zs - 1e-9 and s.z_hi > s.z_lo):
                raise ValueError("slices must stack upward without overlap")
            zs = s.z_hi
        if zs > MAX_BODY_HEIGHT + 1e-9:
            raise ValueError("shape taller than %.0f cm" % MAX_BODY_HEIGHT)
        self.label = label
        self.slices = tuple(slices)
        self.height = self.slices[-1].z_hi
        # Volume-weighted planar centroid and radius of gyration. Parts within
        # a slice have disjoint interiors, so sums over parts are exact.
        vol = cx = cy = 0.0
        for s in self.slices:
            h = s.z_hi - s.z_lo
            for p in s.parts:
                w = h * p.area
                vol += w
                cx += w * p.centroid[0]
                cy += w * p.centroid[1]
        cx /= vol
        cy /= vol
        moment = 0.0
        for s in self.slices:
            h = s.z_hi - s.z_lo
            for p in s.parts:
                dx = p.centroid[0] - cx
                dy = p.centroid[1] - cy
                moment += h * (p.polar_second_moment() + p.area * (dx * dx + dy * dy))
        self.centroid = (cx, cy)
        self.rho = math.sqrt(moment / vol)
        pts = [v for s in self.slices for p in s.parts for v in p.vertices]
        best = 0.0
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = math.hypot(pts[j][0] - pts[i][0], pts[j][1] - pts[i][1])
                if d > best:
                    best = d
        self.diameter = best

    def to_json(self):
        return {
            "label": self.label,
            "slices": [
                {
                    "z_lo": s.z_lo,
                    "z_hi": s.z_hi,
                    "polygons": [p.to_json() for p in s.parts],
                }
                for s in self.slices
            ],
        }

    @classmethod
    def from_json(cls, data) -> "ObjectShape":
        slices = [
            Slice(
                float(s["z_lo"]),
                float(s["z_hi"]),
                tuple(ConvexPolygon.from_json(p) for p in s["polygons"]),
            )
            for s in data["slices"]
        ]
        return cls(str(data["label"]), slices)


class BodyState:
    """A shape placed in the bin, with cached world-frame geometry."""

    __slots__ = (
        "shape",
        "pose",
        "mass",
        "friction",
        "initial_pose",
        "_world_slices",
        "_bound_center",
        "_bound_radius",
    )

    def __init__(self, shape: ObjectShape, pose: Pose, mass=DEFAULT_MASS, friction=DEFAULT_FRICTION):
        self.shape = shape
        self.mass = float(mass)
        self.friction = float(friction)
        self.initial_pose = pose.normalized()
        self._world_slices = None
        self.set_pose(pose)

    def set_pose(self, pose: Pose):
        self.pose = pose.normalized()
        self._world_slices = None

    def world_slices(self):
        if self._world_slices is None:
            c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
            self._world_slices = [
                tuple(p.transformed(c, s, self.pose.x, self.pose.y) for p in sl.parts)
                for sl in self.shape.slices
            ]
            cx, cy = self.world_centroid()
            self._bound_center = (cx, cy)
            self._bound_radius = max(
                math.hypot(p.centroid[0] - cx, p.centroid[1] - cy) + p.bounding_radius
                for parts in self._world_slices
                for p in parts
            )
        return self._world_slices

    def world_centroid(self, pose: Pose | None = None):
        p = self.pose if pose is None else pose
        c, s = math.cos(p.theta), math.sin(p.theta)
        lx, ly = self.shape.centroid
        return (c * lx - s * ly + p.x, s * lx + c * ly + p.y)

    def bound(self):
        self.world_slices()
        return self._bound_center, self._bound_radius

    def footprint_parts(self):
        """All world-frame parts across slices (plan-view union)."""
        return [p for parts in self.world_slices() for p in parts]

    def displacement(self) -> float:
        x0, y0 = self.world_centroid(self.initial_pose)
        x1, y1 = self.world_centroid()
        return math.hypot(x1 - x0, y1 - y0)


@dataclass(frozen=True)
class ContactEvent:
    body_index: int  # FLOOR for the bin floor
    point: tuple  # (x, y, z) on the contacted surface
    normal: tuple  # (nx, ny, nz) unit, pointing away from the surface
    depth: float  # penetration before resolution
    tick: int


@dataclass
class Finger:
    """Fingertip state tracked by interaction policies."""

    finger_id: int
    position: tuple = (0.0, 0.0, 0.0)
    contact: bool = False
    contact_normal: tuple = (0.0, 0.0, 0.0)


class Scene:
    """Bin with bodies; all finger operations mutate it in place."""

    def __init__(self, bodies, bin_side=BIN_SIDE, static_mode=False, validate=True):
        self.bin_side = float(bin_side)
        self.bodies = list(bodies)
        self.static_mode = bool(static_mode)
        self.tick = 0
        self.push_log = []  # (tick, body_index, dx, dy, dtheta)
        if validate:
            self._validate()

    def _validate(self):
        for i, b in enumerate(self.bodies):
            for parts in b.world_slices():
                for p in parts:
                    for x, y in p.vertices:
                        if not (-1e-9 <= x <= self.bin_side + 1e-9 and -1e-9 <= y <= self.bin_side + 1e-9):
                            raise ValueError("body %d extends outside the bin" % i)
        for i in range(len(self.bodies)):
            for j in range(i + 1, len(self.bodies)):
                d = union_distance(
                    self.bodies[i].footprint_parts(), self.bodies[j].footprint_parts()
                )
                if d < 2.0 - 1e-9:
                    raise ValueError("bodies %d and %d closer than 2 cm" % (i, j))

    def copy(self) -> "Scene":
        clone = Scene([], bin_side=self.bin_side, static_mode=self.static_mode, validate=False)
        for b in self.bodies:
            nb = BodyState(b.shape, b.pose, b.mass, b.friction)
            nb.initial_pose = b.initial_pose
            clone.bodies.append(nb)
        return clone

    def reset_displacement_baseline(self):
        for b in self.bodies:
            b.initial_pose = b.pose

    def apply_push(self, body_index: int, contact_point, depth: float, direction):
        """Push one body and restore the no-overlap invariants."""
        if self.static_mode:
            return
        body = self.bodies[body_index]
        old = body.pose
        new = push_response(body, contact_point, depth, direction, self.bin_side)
        body.set_pose(new)
        self.push_log.append(
            (self.tick, body_index, new.x - old.x, new.y - old.y, new.theta - old.theta)
        )
        self._separate_from(body_index, budget=4)

    def _separate_from(self, moved_index: int, budget: int):
        if budget <= 0:
            return
        moved = self.bodies[moved_index]
        for j, other in enumerate(self.bodies):
            if j == moved_index:
                continue
            hit = _body_overlap(moved, other)
            if hit is None or hit[0] <= EPS_SURF:
                continue
            depth, axis, cp = hit
            for _ in range(6):
                other.set_pose(push_response(other, cp, depth, axis, self.bin_side))
                hit = _body_overlap(moved, other)
                if hit is None or hit[0] <= EPS_SURF:
                    break
                depth, axis, cp = hit
            else:
                hit = _body_overlap(moved, other)
                if hit is not None and hit[0] > EPS_SURF:
                    # wall-pinned or heavy body: hard separation remainder
                    d, ax, _ = hit
                    p = other.pose
                    other.set_pose(
                        _clamp_pose_to_bin(
                            other, Pose(p.x + d * ax[0], p.y + d * ax[1], p.theta), self.bin_side
                        )
                    )
            self._separate_from(j, budget - 1)

    def to_json(self):
        return {
            "bin_side": self.bin_side,
            "bodies": [
                {
                    "shape": b.shape.to_json(),
                    "pose": b.pose.to_json(),
                    "mass": b.mass,
                    "friction": b.friction,
                }
                for b in self.bodies
            ],
            "static_mode": self.static_mode,
        }

    @classmethod
    def from_json(cls, data) -> "Scene":
        bodies = [
            BodyState(
                ObjectShape.from_json(bd["shape"]),
                Pose.from_json(bd["pose"]),
                float(bd["mass"]),
                float(bd["friction"]),
            )
            for bd in data["bodies"]
        ]
        return cls(bodies, bin_side=float(data["bin_side"]), static_mode=bool(data["static_mode"]), validate=False)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "Scene":
        return cls.from_json(json.loads(text))


def _body_overlap(a: BodyState, b: BodyState):
    """Deepest plan-view overlap between two bodies.

    Returns (depth, axis, contact_point) with axis the unit direction that
    moves b away from a, or None.
    """
    (acx, acy), ar = a.bound()
    (bcx, bcy), br = b.bound()
    if math.hypot(bcx - acx, bcy - acy) >= ar + br:
        return None
    best = None
    for pa in a.footprint_parts():
        for pb in b.footprint_parts():
            hit = poly_penetration(pa, pb)
            if hit is not None and (best is None or hit[0] > best[0]):
                ax, ay = hit[1]
                sa = max(pa.vertices, key=lambda v: v[0] * ax + v[1] * ay)
                sb = min(pb.vertices, key=lambda v: v[0] * ax + v[1] * ay)
                cp = (0.5 * (sa[0] + sb[0]), 0.5 * (sa[1] + sb[1]))
                best = (hit[0], hit[1], cp)
    return best


def _clamp_pose_to_bin(body: BodyState, pose: Pose, bin_side: float) -> Pose:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    xmin = ymin = math.inf
    xmax = ymax = -math.inf
    for sl in body.shape.slices:
        for p in sl.parts:
            for lx, ly in p.vertices:
                wx = c * lx - s * ly + pose.x
                wy = s * lx + c * ly + pose.y
                xmin, xmax = min(xmin, wx), max(xmax, wx)
                ymin, ymax = min(ymin, wy), max(ymax, wy)
    dx = dy = 0.0
    if xmin < 0.0:
        dx = -xmin
    elif xmax > bin_side:
        dx = bin_side - xmax
    if ymin < 0.0:
        dy = -ymin
    elif ymax > bin_side:
        dy = bin_side - ymax
    if dx == 0.0 and dy == 0.0:
        return pose
    return Pose(pose.x + dx, pose.y + dy, pose.theta)


def push_response(body: BodyState, contact_point, depth: float, direction, bin_side=BIN_SIDE) -> Pose:
    """Quasi-static response of a body to a penetration of depth d.

    direction is the unit push direction (away from the pusher). Returns the
    new pose, clamped so the body stays inside the bin. Linear displacement is
    beta*d; rotation uses the contact lever arm about the centroid damped by
    the footprint's radius of gyration.
    """
    beta = 1.0 / (1.0 + KAPPA * body.friction * body.mass)
    nx, ny = direction
    dt_x, dt_y = beta * depth * nx, beta * depth * ny
    cx, cy = body.world_centroid()
    rx, ry = contact_point[0] - cx, contact_point[1] - cy
    rho = body.shape.rho
    dtheta = beta * depth * (rx * ny - ry * nx) / (rx * rx + ry * ry + rho * rho)
    pose = body.pose
    ct, st = math.cos(dtheta), math.sin(dtheta)
    # rotate the body origin about the world centroid, then translate
    ox, oy = pose.x - cx, pose.y - cy
    new = Pose(
        cx + ct * ox - st * oy + dt_x,
        cy + st * ox + ct * oy + dt_y,
        pose.theta + dtheta,
    )
    return _clamp_pose_to_bin(body, new, bin_side)


def probe_descend(scene: Scene, x: float, y: float, max_depth_z: float = FINGER_RADIUS) -> ContactEvent:
    """Lower the finger at (x, y) from above until it meets something.

    Analytic under the cylinder-band contact model: the first contact is with
    the slice of highest top among those whose inflated footprint contains
    (x, y). Lateral grazes push the body once; top contacts just stop the
    finger. Free cells bottom out on the floor (or at max_depth_z).
    """
    scene.tick += 1
    r = FINGER_RADIUS
    best = None  # (z_hi, body_idx, slice_idx, signed_dist)
    for bi, body in enumerate(scene.bodies):
        (bcx, bcy), br = body.bound()
        if math.hypot(x - bcx, y - bcy) >= br + r:
            continue
        for si, parts in enumerate(body.world_slices()):
            sd = union_signed_distance((x, y), parts)
            if sd < r:
                z_hi = body.shape.slices[si].z_hi
                key = (-z_hi, bi, si)
                if best is None or key < best[0]:
                    best = (key, bi, si, sd)
    if best is None or best[0][0] * -1.0 + r < max_depth_z - 1e-12:
        z_stop = max(max_depth_z, r)
        return ContactEvent(FLOOR, (x, y, z_stop - r), (0.0, 0.0, 1.0), 0.0, scene.tick)
    _, bi, si, sd = best
    body = scene.bodies[bi]
    z_hi = body.shape.slices[si].z_hi
    if sd <= 0.0:
        return ContactEvent(bi, (x, y, z_hi), (0.0, 0.0, 1.0), 0.0, scene.tick)
    parts = body.world_slices()[si]
    depth, normal, pidx = penetration_union((x, y), r, parts)
    qx, qy = parts[pidx].closest_boundary_point((x, y))
    if not scene.static_mode:
        scene.apply_push(bi, (qx, qy), depth, (-normal[0], -normal[1]))
    return ContactEvent(bi, (qx, qy, z_hi), (normal[0], normal[1], 0.0), depth, scene.tick)


def _finger_penetration(scene: Scene, x: float, y: float, z: float):
    """Deepest body penetration of the finger sphere at (x, y, z).

    Returns (body_idx, depth, normal2d, surface_point2d) or None.
    """
    r = FINGER_RADIUS
    best = None
    for bi, body in enumerate(scene.bodies):
        (bcx, bcy), br = body.bound()
        if math.hypot(x - bcx, y - bcy) >= br + r:
            continue
        for si, sl in enumerate(body.shape.slices):
            if z - r >= sl.z_hi or z + r <= sl.z_lo:
                continue
            parts = body.world_slices()[si]
            hit = penetration_union((x, y), r, parts)
            if hit is None:
                continue
            depth, normal, pidx = hit
            if best is None or depth > best[1]:
                qx, qy = parts[pidx].closest_boundary_point((x, y))
                best = (bi, depth, normal, (qx, qy))
    return best


def move_finger(
    scene: Scene,
    start,
    target,
    step: float = 0.2,
    threshold: float = EPS_CONTACT,
    drop_prob: float = 0.0,
    rng=None,
) -> list:
    """Move the finger along a straight segment until contact or arrival.

    The finger advances in increments of `step`. On the first increment whose
    penetration reaches `threshold` it seats itself at a fixed press depth
    (max(threshold, SEAT_DEPTH), located by bisection against the pre-push
    surface, so the result does not depend on step phase), the body takes one
    push, the finger is resolved onto the moved surface, and motion stops.
    With drop_prob > 0 a detection may be dropped: the push still happens but
    the finger keeps pressing forward, unaware.
    """
    if not (0.0 < step <= 0.5):
        raise ValueError("step must lie in (0, 0.5]")
    for p, name in ((start, "start"), (target, "target")):
        if not (
            -WORKSPACE_MARGIN <= p[0] <= scene.bin_side + WORKSPACE_MARGIN
            and -WORKSPACE_MARGIN <= p[1] <= scene.bin_side + WORKSPACE_MARGIN
            and 0.0 <= p[2] <= WORKSPACE_Z_MAX
        ):
            raise ValueError("%s outside the workspace" % name)
    scene.tick += 1
    sx, sy, sz = start
    dx, dy, dz = target[0] - sx, target[1] - sy, target[2] - sz
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist == 0.0:
        return []

    def pos_at(u):
        t = u / dist
        return (sx + t * dx, sy + t * dy, sz + t * dz)

    def depth_at(u):
        hit = _finger_penetration(scene, *pos_at(u))
        return 0.0 if hit is None else hit[1]

    events = []
    press = max(threshold, SEAT_DEPTH)
    u_prev = 0.0
    u = 0.0
    while True:
        if depth_at(u) >= threshold:
            u_seat = _seat(depth_at, u_prev, u, dist, press, step)
            x, y, z = pos_at(u_seat)
            hit = _finger_penetration(scene, x, y, z)
            if hit is not None:
                bi, depth, normal, spoint = hit
                if not scene.static_mode:
                    scene.apply_push(bi, spoint, depth, (-normal[0], -normal[1]))
                dropped = drop_prob > 0.0 and rng is not None and rng.random() < drop_prob
                if not dropped:
                    # resolve the finger onto the surface of the (moved) body
                    res = _finger_penetration(scene, x, y, z)
                    nx, ny = normal
                    if res is not None and res[0] == bi:
                        _, d2, (nx, ny), spoint = res
                        x, y = x + d2 * nx, y + d2 * ny
                    events.append(
                        ContactEvent(bi, (spoint[0], spoint[1], z), (nx, ny, 0.0), depth, scene.tick)
                    )
                    return events
            u_prev = u_seat
            u = u_seat
        if u >= dist:
            return events
        u_prev = u
        u = min(dist, u + step)


def _seat(depth_at, u_lo, u_hit, u_max, press: float, step: float) -> float:
    """Position along the segment where the fingertip comes to rest.

    The detection increment brackets the threshold crossing in (u_lo, u_hit].
    Seat at penetration `press`: bisect backward if the increment overshot it,
    otherwise creep forward. A grazing pass that never reaches `press` seats
    at its deepest point; a segment that ends first seats at the end.
    """
    if depth_at(u_hit) >= press:
        lo, hi = u_lo, u_hit
    else:
        lo, hi = u_hit, None
        u, d_prev = u_hit, depth_at(u_hit)
        h = 0.25 * step
        while u < u_max:
            u = min(u_max, u + h)
            d = depth_at(u)
            if d >= press:
                hi = u
                break
            if d < d_prev:
                return max(u - h, u_hit)  # grazing pass: stop at deepest point
            lo, d_prev = u, d
        if hi is None:
            return u_max
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if depth_at(mid) >= press:
            hi = mid
        else:
            lo = mid
    return hi


def displacement_report(scene: Scene) -> list:
    """Per-body planar centroid displacement since the scene baseline."""
    return [(i, b.displacement()) for i, b in enumerate(scene.bodies)]
