"""Radial tapping policy and caging grasp.

Three fingers at 120 degree spacing close radially toward the current center
estimate, collecting fingertip contact positions. After each close cycle the
estimate is pulled toward the mean contact by exponential smoothing, so the
policy tracks objects it is itself pushing around. The hand climbs one z step
after each level of taps and stops at the first level that touches nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .world import (
    EPS_CONTACT,
    FINGER_RADIUS,
    Finger,
    Scene,
    move_finger,
)

EPS_NOISY = 0.5  # cm, degraded sensor detection threshold
NOISY_DROP = 0.2  # probability a detection is missed, per detection
EPS_GRASP = 0.2  # cm, penetration at which a closing finger stops
ASSOC_RADIUS = 7.5  # cm, estimate-to-body association threshold
LEVEL_TWIST = math.radians(7.0)  # hand yaw added per z level

VARIANTS = ("full", "no_reloc", "noisy")


@dataclass(frozen=True)
class TapConfig:
    start_radius: float = 12.0  # R0, fingertip ring radius at tap start
    min_radius: float = 1.2  # closing stops here even without contact
    inward_step: float = 0.2
    z_start: float = 1.0
    z_step: float = 1.0
    z_max: float = 20.0
    gamma: float = 0.9  # relocalization smoothing (weight on the old estimate)
    max_taps: int = 100
    taps_per_level: int = 4

    def __post_init__(self):
        if not (self.start_radius > self.min_radius > FINGER_RADIUS):
            raise ValueError("need start_radius > min_radius > finger radius")
        if not (0.0 < self.inward_step <= 0.5):
            raise ValueError("inward_step must lie in (0, 0.5]")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.max_taps < 1 or self.taps_per_level < 1:
            raise ValueError("tap counts must be positive")


@dataclass
class TapSequence:
    """Contact points from one tapping episode, centered on the initial estimate."""

    object_id: str
    pose_id: str
    points: list  # [(x, y, z)], x/y relative to the initial center estimate
    displacement: float  # tapped body's centroid travel over the episode
    tap_count: int = 0  # close cycles executed (not serialized)
    final_center: tuple = (0.0, 0.0)  # last center estimate (not serialized)
    flagged: bool = False  # estimate matched no body (not serialized)

    def __post_init__(self):
        bound = math.sqrt(2.0) * 60.0 + 1e-9
        for x, y, _ in self.points:
            if abs(x) > bound or abs(y) > bound:
                raise ValueError("centered contact point outside the bin diagonal bound")
        if len(self.points) > 3 * max(self.tap_count, 0) and self.tap_count > 0:
            raise ValueError("more than three points per tap")

    def to_record(self) -> dict:
        return {
            "object_id": self.object_id,
            "pose_id": self.pose_id,
            "points": [[x, y, z] for x, y, z in self.points],
            "displacement": self.displacement,
        }

    @classmethod
    def from_record(cls, data) -> "TapSequence":
        pts = [(float(x), float(y), float(z)) for x, y, z in data["points"]]
        return cls(
            str(data["object_id"]),
            str(data["pose_id"]),
            pts,
            float(data["displacement"]),
            tap_count=_infer_tap_count(pts),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def loads(cls, line: str) -> "TapSequence":
        return cls.from_record(json.loads(line))


def _infer_tap_count(points) -> int:
    """Reconstruct tap count from z runs: each tap leaves at most three points
    at one height, so a run of n equal-z points spans at least ceil(n / 3) taps."""
    if not points:
        return 0
    count = 0
    run = 0
    prev = None
    for _, _, z in points:
        if prev is None or z != prev:
            count += -(-run // 3)
            run = 0
            prev = z
        run += 1
    count += -(-run // 3)
    return max(count, 1)


def relocalize(center_est, contact_points, gamma: float):
    """Exponential smoothing of the center estimate toward the mean contact."""
    if not contact_points:
        return center_est
    mx = sum(p[0] for p in contact_points) / len(contact_points)
    my = sum(p[1] for p in contact_points) / len(contact_points)
    return (gamma * center_est[0] + (1.0 - gamma) * mx, gamma * center_est[1] + (1.0 - gamma) * my)


def _nearest_body(scene: Scene, point, within: float = math.inf):
    best = None
    best_d = within
    for i, b in enumerate(scene.bodies):
        cx, cy = b.world_centroid()
        d = math.hypot(cx - point[0], cy - point[1])
        if d <= best_d:
            best = i
            best_d = d
    return best


def collect_taps(
    scene: Scene,
    body_center_est,
    cfg: TapConfig = TapConfig(),
    variant: str = "full",
    rng=None,
    pose_id: str = "",
) -> TapSequence:
    """Run one radial tapping episode around the given center estimate.

    Returns the recorded fingertip contacts relative to the initial estimate.
    An estimate matching no body within 7.5 cm yields a flagged empty
    sequence. The noisy variant raises the detection threshold and drops
    detections at random (rng required for reproducibility).
    """
    if variant not in VARIANTS:
        raise ValueError("unknown variant %r" % (variant,))
    est0 = (float(body_center_est[0]), float(body_center_est[1]))
    threshold = EPS_NOISY if variant == "noisy" else EPS_CONTACT
    drop = NOISY_DROP if variant == "noisy" else 0.0
    target = _nearest_body(scene, est0, within=ASSOC_RADIUS)
    if target is None:
        return TapSequence("", pose_id, [], 0.0, tap_count=0, final_center=est0, flagged=True)
    body = scene.bodies[target]
    start_centroid = body.world_centroid()
    object_id = body.shape.label

    est = est0
    fingers = [Finger(i) for i in range(3)]
    points = []
    taps = 0
    tap_span = 2.0 * math.pi / (3.0 * cfg.taps_per_level)
    level = 0
    while taps < cfg.max_taps:
        z = cfg.z_start + level * cfg.z_step
        if z > cfg.z_max + 1e-9:
            break
        level_hits = 0
        for t in range(cfg.taps_per_level):
            if taps >= cfg.max_taps:
                break
            base = level * LEVEL_TWIST + t * tap_span
            tap_points = []
            for f in fingers:
                phi = base + f.finger_id * 2.0 * math.pi / 3.0
                cphi, sphi = math.cos(phi), math.sin(phi)
                start = (est[0] + cfg.start_radius * cphi, est[1] + cfg.start_radius * sphi, z)
                goal = (est[0] + cfg.min_radius * cphi, est[1] + cfg.min_radius * sphi, z)
                events = move_finger(
                    scene, start, goal, step=cfg.inward_step,
                    threshold=threshold, drop_prob=drop, rng=rng,
                )
                if events:
                    ev = events[0]
                    tip = (
                        ev.point[0] + FINGER_RADIUS * ev.normal[0],
                        ev.point[1] + FINGER_RADIUS * ev.normal[1],
                        z,
                    )
                    tap_points.append(tip)
                    f.position, f.contact, f.contact_normal = tip, True, ev.normal
                else:
                    f.position, f.contact = goal, False
            taps += 1
            if tap_points:
                level_hits += len(tap_points)
                points.extend(tap_points)
                if variant != "no_reloc":
                    est = relocalize(est, tap_points, cfg.gamma)
        if level_hits == 0:
            break
        level += 1

    end_centroid = scene.bodies[target].world_centroid()
    displacement = math.hypot(
        end_centroid[0] - start_centroid[0], end_centroid[1] - start_centroid[1]
    )
    centered = [(x - est0[0], y - est0[1], z) for x, y, z in points]
    return TapSequence(
        object_id,
        pose_id,
        centered,
        displacement,
        tap_count=taps,
        final_center=est,
        flagged=False,
    )


@dataclass
class GraspResult:
    caged: bool
    success: bool
    body_index: int | None
    contacts: list = field(default_factory=list)
    fingertips: list = field(default_factory=list)


def _strictly_inside_triangle(p, a, b, c) -> bool:
    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    s1 = cross(a, b, p)
    s2 = cross(b, c, p)
    s3 = cross(c, a, p)
    return (s1 > 0 and s2 > 0 and s3 > 0) or (s1 < 0 and s2 < 0 and s3 < 0)


def grasp(scene: Scene, center_est, cfg: TapConfig = TapConfig()) -> GraspResult:
    """Close three fingers on the estimate and test the cage.

    Fingers close at half the nearby body's height until each feels
    penetration EPS_GRASP. The grasp cages iff all three touch the same body
    and its centroid lies strictly inside the fingertip triangle.
    """
    est = (float(center_est[0]), float(center_est[1]))
    target = _nearest_body(scene, est)
    z = 1.0 if target is None else max(FINGER_RADIUS, 0.5 * scene.bodies[target].shape.height)
    contacts = []
    tips = []
    touched = []
    for k in range(3):
        phi = k * 2.0 * math.pi / 3.0
        cphi, sphi = math.cos(phi), math.sin(phi)
        start = (est[0] + cfg.start_radius * cphi, est[1] + cfg.start_radius * sphi, z)
        goal = (est[0] + cfg.min_radius * cphi, est[1] + cfg.min_radius * sphi, z)
        events = move_finger(scene, start, goal, step=cfg.inward_step, threshold=EPS_GRASP)
        if events:
            ev = events[0]
            tip = (
                ev.point[0] + FINGER_RADIUS * ev.normal[0],
                ev.point[1] + FINGER_RADIUS * ev.normal[1],
            )
            contacts.append(ev)
            touched.append(ev.body_index)
            tips.append(tip)
        else:
            tips.append(goal[:2])
            touched.append(None)
    caged = False
    body_index = None
    if all(t is not None for t in touched) and len(set(touched)) == 1:
        body_index = touched[0]
        centroid = scene.bodies[body_index].world_centroid()
        caged = _strictly_inside_triangle(centroid, tips[0], tips[1], tips[2])
    return GraspResult(caged, caged, body_index, contacts, tips)
