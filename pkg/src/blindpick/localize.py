"""Tactile localization: occupancy probing, k-means clustering, PF baseline.

Both localizers consume the identical raster probe sequence (row-major over
cell centers) so their comparison isolates the estimator, not the data. The
scene physically mutates while being probed; success is judged against body
centroids after the scan, since the estimate is used to act on the bin in the
state the scan leaves behind.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .world import FLOOR, Scene, probe_descend

GRID_DELTA = 5.0  # cm
SUCCESS_RADIUS = 7.5  # cm, per-object matching threshold
PF_PARTICLES = 2000
PF_DISC_RADIUS = 6.0  # cm, nominal object radius in the PF sensor model
PF_NOISE = 0.05  # false positive / false negative rate
PF_DIFFUSION = 0.5  # cm per probe
PF_MIN_SEP = 2.0  # cm between hypothesized centers at init


class UnderDetectionError(ValueError):
    """Fewer occupied cells than clusters requested."""


@dataclass
class OccupancyGrid:
    delta: float
    bin_side: float
    cells: np.ndarray  # (n, n) bool, cells[i, j] is the cell centered at
    # ((j + 0.5) * delta, (i + 0.5) * delta)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def occupied_points(self) -> np.ndarray:
        """Centers of occupied cells, raster order, as (N, 2) xy."""
        idx = np.argwhere(self.cells)
        return np.column_stack(((idx[:, 1] + 0.5) * self.delta, (idx[:, 0] + 0.5) * self.delta))

    def to_ascii(self) -> str:
        """Rows printed top-down (largest y first); '#' occupied, '.' free."""
        lines = []
        for i in range(self.n - 1, -1, -1):
            lines.append("".join("#" if self.cells[i, j] else "." for j in range(self.n)))
        return "\n".join(lines)

    def to_json(self):
        return {
            "delta": self.delta,
            "bin_side": self.bin_side,
            "cells": self.cells.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "OccupancyGrid":
        return cls(
            float(data["delta"]),
            float(data["bin_side"]),
            np.asarray(data["cells"], dtype=bool),
        )


def raster_probes(scene: Scene, delta: float = GRID_DELTA):
    """Probe every cell center in row-major order, yielding (i, j, x, y, event)."""
    n = math.ceil(scene.bin_side / delta)
    for i in range(n):
        y = (i + 0.5) * delta
        for j in range(n):
            x = (j + 0.5) * delta
            yield i, j, x, y, probe_descend(scene, x, y)


def build_occupancy(scene: Scene, delta: float = GRID_DELTA) -> OccupancyGrid:
    n = math.ceil(scene.bin_side / delta)
    cells = np.zeros((n, n), dtype=bool)
    for i, j, _, _, event in raster_probes(scene, delta):
        cells[i, j] = event.body_index != FLOOR
    return OccupancyGrid(delta, scene.bin_side, cells)


def _kmeanspp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(len(points))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[c] = points[rng.integers(len(points))]
        else:
            centers[c] = points[rng.choice(len(points), p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans(points, k: int, rng, max_iter: int = 100, return_objective: bool = False):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are reseeded to the point farthest from its assigned
    center. Returns (centers (k, 2), assignments (N,)); with
    return_objective, also the per-iteration objective values.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < k:
        raise UnderDetectionError("%d occupied cells for %d clusters" % (len(pts), k))
    centers = _kmeanspp_init(pts, k, rng)
    assign = np.zeros(len(pts), dtype=int)
    history = []
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(pts)), assign].sum()))
        new = centers.copy()
        for c in range(k):
            mask = assign == c
            if mask.any():
                new[c] = pts[mask].mean(axis=0)
            else:
                new[c] = pts[d2[np.arange(len(pts)), assign].argmax()]
        if np.abs(new - centers).max() < 1e-12:
            break
        centers = new
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    history.append(float(d2[np.arange(len(pts)), assign].sum()))
    if return_objective:
        return centers, assign, history
    return centers, assign


def match_centers(estimates, truths):
    """Min total-distance perfect matching, exhaustive over permutations.

    Returns (pairs, mean_distance) where pairs[i] = (est_index, truth_index).
    Sized for K <= 5 (the harness maximum); factorial beyond that is on the
    caller.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(est) != len(tru):
        raise ValueError("matching requires equally many estimates and truths")
    if len(est) == 0:
        return [], 0.0
    dists = np.sqrt(((est[:, None, :] - tru[None, :, :]) ** 2).sum(axis=2))
    best_perm = None
    best_cost = math.inf
    for perm in itertools.permutations(range(len(tru))):
        cost = sum(dists[i, p] for i, p in enumerate(perm))
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    pairs = [(i, p) for i, p in enumerate(best_perm)]
    return pairs, best_cost / len(est)


@dataclass
class LocalizationResult:
    method: str
    k: int
    success: bool
    center_error: float  # mean matched distance, nan on under-detection
    max_error: float
    perturbation: float  # mean body displacement caused by probing
    estimates: list
    probes_used: int
    grid: OccupancyGrid | None = None
    assignments: np.ndarray | None = None
    truths: list = field(default_factory=list)


def _score(method, k, estimates, scene, probes, grid=None, assignments=None) -> LocalizationResult:
    truths = [b.world_centroid() for b in scene.bodies]
    perturbation = float(np.mean([b.displacement() for b in scene.bodies])) if scene.bodies else 0.0
    if estimates is None or len(estimates) != len(truths):
        kept = [] if estimates is None else [tuple(e) for e in estimates]
        return LocalizationResult(
            method, k, False, math.nan, math.nan, perturbation, kept, probes, grid, assignments, truths
        )
    pairs, mean_d = match_centers(estimates, truths)
    dists = [
        math.hypot(estimates[i][0] - truths[p][0], estimates[i][1] - truths[p][1])
        for i, p in pairs
    ]
    success = all(d <= SUCCESS_RADIUS for d in dists)
    return LocalizationResult(
        method,
        k,
        success,
        mean_d,
        max(dists),
        perturbation,
        [tuple(e) for e in estimates],
        probes,
        grid,
        assignments,
        truths,
    )


def localize_cluster(scene: Scene, k: int, rng=None, delta: float = GRID_DELTA) -> LocalizationResult:
    """Occupancy scan + k-means on occupied cell centers."""
    if rng is None:
        rng = np.random.default_rng(0)
    grid = build_occupancy(scene, delta)
    probes = grid.n * grid.n
    pts = grid.occupied_points()
    try:
        centers, assign = kmeans(pts, k, rng)
    except UnderDetectionError:
        return _score("cluster", k, None, scene, probes, grid=grid)
    return _score("cluster", k, [tuple(c) for c in centers], scene, probes, grid, assign)


def _init_particles(p: int, k: int, bin_side: float, rng) -> np.ndarray:
    parts = rng.uniform(0.0, bin_side, size=(p, k, 2))
    if k > 1:
        for _ in range(100):
            d = np.linalg.norm(parts[:, :, None, :] - parts[:, None, :, :], axis=3)
            iu = np.triu_indices(k, 1)
            bad = (d[:, iu[0], iu[1]] < PF_MIN_SEP).any(axis=1)
            if not bad.any():
                break
            parts[bad] = rng.uniform(0.0, bin_side, size=(int(bad.sum()), k, 2))
    return parts


def localize_pf(
    scene: Scene,
    k: int,
    rng,
    n_particles: int = PF_PARTICLES,
    delta: float = GRID_DELTA,
) -> LocalizationResult:
    """Joint particle filter over the K object centers (baseline).

    Each particle is a 2K-dim hypothesis; the sensor model treats every
    hypothesized object as a disc of nominal radius, with symmetric false
    positive/negative rates. Runs the same raster probe pass as the cluster
    method on its own scene.
    """
    parts = _init_particles(n_particles, k, scene.bin_side, rng)
    weights = np.full(n_particles, 1.0 / n_particles)
    probes = 0
    for _, _, x, y, event in raster_probes(scene, delta):
        probes += 1
        observed = event.body_index != FLOOR
        d = np.linalg.norm(parts - np.array([x, y]), axis=2)  # (P, K)
        predicted = (d <= PF_DISC_RADIUS).any(axis=1)
        lik = np.where(predicted == observed, 1.0 - PF_NOISE, PF_NOISE)
        weights *= lik
        total = weights.sum()
        if total <= 0.0:
            weights[:] = 1.0 / n_particles
        else:
            weights /= total
        ess = 1.0 / float((weights**2).sum())
        if ess < 0.5 * n_particles:
            idx = rng.choice(n_particles, size=n_particles, p=weights)
            parts = parts[idx]
            weights[:] = 1.0 / n_particles
        parts = parts + rng.normal(0.0, PF_DIFFUSION, size=parts.shape)
        np.clip(parts, 0.0, scene.bin_side, out=parts)
    mean = (weights[:, None, None] * parts).sum(axis=0)  # (K, 2)
    return _score("pf", k, [tuple(c) for c in mean], scene, probes)
