"""Experiment harness: paired trials, ablations, and report files.

Every experiment uses per-trial derived rng streams (seeded from the run seed
and the trial index) so ablation arms see identical layouts, estimate noise,
and probe randomness, and the whole run regenerates deterministically. Each
experiment returns (rows, summary): rows go to a per-trial CSV, the summary
to JSON next to the rendered SVG figures.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .datasets import EST_NOISE, gen_scene, make_pairs, sample_estimate
from .encoder import EncoderConfig, SequenceEncoder, identify
from .interact import TapConfig, collect_taps, grasp
from .localize import localize_cluster, localize_pf
from .training import TrainConfig, train
from .world import DEFAULT_FRICTION, DEFAULT_MASS

__all__ = [
    "mean_se",
    "write_trials_csv",
    "write_json",
    "embed_chunks",
    "build_references",
    "generate_identification_episodes",
    "score_identification",
    "localization_experiment",
    "identification_experiment",
    "pipeline_experiment",
    "friction_ablation",
    "static_ablation",
    "interaction_ablation",
    "arch_ablation",
    "train_encoder",
]

FRICTION_SWEEP = (0.5, 0.25, 0.1)


def mean_se(values):
    """Sample mean and standard error (0 when fewer than two values)."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def write_trials_csv(path, rows, fieldnames):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _rng(*key):
    return np.random.default_rng(list(key))


def embed_chunks(model, point_lists, chunk=8):
    """Embed sequences in small batches to bound attention memory."""
    outs = []
    for lo in range(0, len(point_lists), chunk):
        outs.append(model.embed(point_lists[lo : lo + chunk]).data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, model.config.d_embed))


# ----------------------------------------------------------------------
# shared trial scaffolding
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrialLayout:
    entries: tuple  # ShapeEntry per panel slot
    target: int
    est_offset: tuple
    scene_key: tuple

    @property
    def ids(self):
        return [e.object_id for e in self.entries]


def _draw_layout(entries, trial, seed, panel_size):
    rng = _rng(seed, trial, 0)
    picks = rng.choice(len(entries), size=panel_size, replace=False)
    target = int(rng.integers(panel_size))
    est_offset = tuple(rng.normal(0.0, EST_NOISE, 2))
    return TrialLayout(
        entries=tuple(entries[int(p)] for p in picks),
        target=target,
        est_offset=est_offset,
        scene_key=(seed, trial, 1),
    )


def _layout_scene(layout, *, static=False, friction=DEFAULT_FRICTION, mass=DEFAULT_MASS):
    return gen_scene(
        [e.shape for e in layout.entries],
        _rng(*layout.scene_key),
        static=static,
        friction=friction,
        mass=mass,
    )


def _query_episode(scene, layout, *, variant, tap_cfg, ep_key):
    cx, cy = scene.bodies[layout.target].world_centroid()
    est = (cx + layout.est_offset[0], cy + layout.est_offset[1])
    return collect_taps(
        scene,
        est,
        tap_cfg,
        variant=variant,
        rng=_rng(*ep_key),
        pose_id="%s@trial" % layout.ids[layout.target],
    )


# ----------------------------------------------------------------------
# references and identification
# ----------------------------------------------------------------------


def build_references(
    entries,
    model,
    *,
    seed,
    variant="full",
    static=False,
    friction=DEFAULT_FRICTION,
    tap_cfg=None,
):
    """One isolated episode per object under the stated physics, embedded.

    Returns {object_id: unit embedding}. Raises if any object yields an empty
    episode twice in a row (cannot serve as a reference).
    """
    cfg = tap_cfg if tap_cfg is not None else TapConfig()
    points = []
    for i, entry in enumerate(entries):
        seq = None
        for attempt in range(2):
            scene = gen_scene(
                [entry.shape], _rng(seed, i, attempt, 0), static=static, friction=friction
            )
            est = sample_estimate(
                scene.bodies[0].world_centroid(), _rng(seed, i, attempt, 1)
            )
            cand = collect_taps(
                scene, est, cfg, variant=variant, rng=_rng(seed, i, attempt, 2),
                pose_id="%s@ref" % entry.object_id,
            )
            if cand.points:
                seq = cand
                break
        if seq is None:
            raise RuntimeError("no usable reference episode for %s" % entry.object_id)
        points.append(seq.points)
    emb = embed_chunks(model, points)
    return {entry.object_id: emb[i] for i, entry in enumerate(entries)}


def generate_identification_episodes(
    entries,
    *,
    trials,
    panel_size,
    seed,
    variant="full",
    static=False,
    friction=DEFAULT_FRICTION,
    tap_cfg=None,
):
    """Panel trials: drop panel_size objects in one bin, tap the target at a
    noisy estimate. Returns [(layout, tap_sequence)]; episodes may be empty
    when the noisy estimate misses, which scores as a failure downstream."""
    cfg = tap_cfg if tap_cfg is not None else TapConfig()
    episodes = []
    for trial in range(trials):
        layout = _draw_layout(entries, trial, seed, panel_size)
        scene = _layout_scene(layout, static=static, friction=friction)
        seq = _query_episode(
            scene, layout, variant=variant, tap_cfg=cfg, ep_key=(seed, trial, 2)
        )
        episodes.append((layout, seq))
    return episodes


def score_identification(episodes, model, refs):
    """Top-1 accuracy of matching each episode to its panel references."""
    rows = []
    usable = [(i, seq.points) for i, (_, seq) in enumerate(episodes) if seq.points]
    embeddings = {}
    if usable:
        emb = embed_chunks(model, [p for _, p in usable])
        embeddings = {i: emb[j] for j, (i, _) in enumerate(usable)}
    for i, (layout, seq) in enumerate(episodes):
        predicted = ""
        success = False
        if i in embeddings:
            panel = np.stack([refs[object_id] for object_id in layout.ids])
            pick = identify(embeddings[i], panel)
            predicted = layout.ids[pick]
            success = pick == layout.target
        rows.append(
            {
                "trial": i,
                "target": layout.ids[layout.target],
                "predicted": predicted,
                "n_points": len(seq.points),
                "success": int(success),
            }
        )
    return rows


def identification_experiment(
    entries,
    model,
    *,
    trials,
    panel_size,
    seed,
    variant="full",
    static=False,
    friction=DEFAULT_FRICTION,
    tap_cfg=None,
    refs=None,
):
    if refs is None:
        refs = build_references(
            entries, model, seed=seed + 1000, variant=variant, static=static,
            friction=friction, tap_cfg=tap_cfg,
        )
    episodes = generate_identification_episodes(
        entries, trials=trials, panel_size=panel_size, seed=seed, variant=variant,
        static=static, friction=friction, tap_cfg=tap_cfg,
    )
    rows = score_identification(episodes, model, refs)
    acc, se = mean_se([r["success"] for r in rows])
    summary = {
        "experiment": "identify",
        "panel_size": panel_size,
        "trials": trials,
        "variant": variant,
        "static": static,
        "accuracy": acc,
        "accuracy_se": se,
    }
    return rows, summary


# ----------------------------------------------------------------------
# localization
# ----------------------------------------------------------------------


def localization_experiment(
    entries,
    *,
    trials,
    ks=(1, 3, 5),
    seed=0,
    friction=DEFAULT_FRICTION,
    static=False,
    methods=("cluster", "pf"),
):
    """Paired cluster-vs-filter localization over K-object scenes."""
    rows = []
    for k in ks:
        for trial in range(trials):
            layout = _draw_layout(entries, trial, seed + 10 * k, k)
            for method in methods:
                scene = _layout_scene(layout, static=static, friction=friction)
                if method == "cluster":
                    result = localize_cluster(scene, k, rng=_rng(seed, k, trial, 3))
                elif method == "pf":
                    result = localize_pf(scene, k, rng=_rng(seed, k, trial, 4))
                else:
                    raise ValueError("unknown method %r" % method)
                rows.append(
                    {
                        "k": k,
                        "trial": trial,
                        "method": method,
                        "success": int(result.success),
                        "center_error": round(result.center_error, 6),
                        "max_error": round(result.max_error, 6),
                        "perturbation": round(result.perturbation, 6),
                        "probes": result.probes_used,
                    }
                )
    summary = {"experiment": "localize", "trials": trials, "rates": {}}
    for k in ks:
        for method in methods:
            vals = [r["success"] for r in rows if r["k"] == k and r["method"] == method]
            acc, se = mean_se(vals)
            summary["rates"]["%s_k%d" % (method, k)] = {"rate": acc, "se": se}
    return rows, summary


# ----------------------------------------------------------------------
# full pipeline
# ----------------------------------------------------------------------


def pipeline_experiment(
    entries,
    model,
    *,
    trials,
    k_objects=3,
    seed=0,
    friction=DEFAULT_FRICTION,
    static=False,
    variant="full",
    tap_cfg=None,
    refs=None,
):
    """Localize every object blind, tap each estimate, identify the episodes,
    then close a caging grasp at the episode identified as the target."""
    cfg = tap_cfg if tap_cfg is not None else TapConfig()
    if refs is None:
        refs = build_references(
            entries, model, seed=seed + 2000, variant=variant, static=static,
            friction=friction, tap_cfg=cfg,
        )
    rows = []
    for trial in range(trials):
        layout = _draw_layout(entries, trial, seed, k_objects)
        scene = _layout_scene(layout, static=static, friction=friction)
        target_body = scene.bodies[layout.target]
        target_id = layout.ids[layout.target]
        stage = "localize"
        success = False
        loc = localize_cluster(scene, k_objects, rng=_rng(seed, trial, 5))
        if loc.estimates:
            episodes = []
            for j, est in enumerate(loc.estimates):
                episodes.append(
                    collect_taps(
                        scene, tuple(est), cfg, variant=variant,
                        rng=_rng(seed, trial, 6, j), pose_id="%s@pl%d" % (target_id, j),
                    )
                )
            stage = "identify"
            panel = np.stack([refs[object_id] for object_id in layout.ids])
            target_ref = refs[target_id]
            best = None
            best_sim = -np.inf
            usable = [(j, e) for j, e in enumerate(episodes) if e.points]
            if usable:
                emb = embed_chunks(model, [e.points for _, e in usable])
                for row_idx, (j, episode) in enumerate(usable):
                    vec = emb[row_idx]
                    if identify(vec, panel) == layout.target:
                        sim = float(vec @ target_ref / (np.linalg.norm(target_ref) + 1e-12))
                        if sim > best_sim:
                            best_sim = sim
                            best = episode
            if best is not None:
                stage = "grasp"
                res = grasp(scene, best.final_center)
                if res.caged and res.body_index is not None:
                    success = scene.bodies[res.body_index] is target_body
        rows.append(
            {
                "trial": trial,
                "target": target_id,
                "stage_reached": stage,
                "success": int(success),
            }
        )
    rate, se = mean_se([r["success"] for r in rows])
    stages = {
        s: sum(1 for r in rows if r["stage_reached"] == s)
        for s in ("localize", "identify", "grasp")
    }
    summary = {
        "experiment": "pipeline",
        "trials": trials,
        "k_objects": k_objects,
        "success_rate": rate,
        "success_se": se,
        "stage_reached_counts": stages,
    }
    return rows, summary


# ----------------------------------------------------------------------
# ablations
# ----------------------------------------------------------------------


def friction_ablation(
    entries,
    *,
    mus=FRICTION_SWEEP,
    trials=200,
    k=3,
    seed=0,
    model=None,
    panel_size=5,
    tap_cfg=None,
):
    """Cluster localization, and identification when a model is given, under a
    friction sweep with paired layouts."""
    rows = []
    for trial in range(trials):
        layout = _draw_layout(entries, trial, seed, k)
        for mu in mus:
            scene = _layout_scene(layout, friction=mu)
            result = localize_cluster(scene, k, rng=_rng(seed, trial, 8))
            row = {
                "trial": trial,
                "friction": mu,
                "success": int(result.success),
                "center_error": round(result.center_error, 6),
                "perturbation": round(result.perturbation, 6),
            }
            if model is not None:
                row.update(phase="localize", target="", predicted="")
            rows.append(row)
    summary = {"experiment": "ablate_friction", "trials": trials, "k": k, "rates": {}}
    for mu in mus:
        loc = [r for r in rows if r["friction"] == mu]
        rate, se = mean_se([r["success"] for r in loc])
        pert, _ = mean_se([r["perturbation"] for r in loc])
        summary["rates"]["%g" % mu] = {"rate": rate, "se": se, "perturbation": pert}
    if model is not None:
        summary["identification"] = {}
        for mu in mus:
            refs = build_references(
                entries, model, seed=seed + 1000, friction=mu, tap_cfg=tap_cfg
            )
            episodes = generate_identification_episodes(
                entries, trials=trials, panel_size=panel_size, seed=seed,
                friction=mu, tap_cfg=tap_cfg,
            )
            scored = score_identification(episodes, model, refs)
            for r in scored:
                rows.append(
                    {
                        "trial": r["trial"],
                        "friction": mu,
                        "success": r["success"],
                        "center_error": "",
                        "perturbation": "",
                        "phase": "identify",
                        "target": r["target"],
                        "predicted": r["predicted"],
                    }
                )
            rate, se = mean_se([r["success"] for r in scored])
            summary["identification"]["%g" % mu] = {"rate": rate, "se": se}
    return rows, summary


def static_ablation(
    entries, model, *, trials, panel_size, seed, friction=DEFAULT_FRICTION, tap_cfg=None
):
    """Identification accuracy with physics on vs. frozen bodies, paired."""
    arms = {}
    rows = []
    for static in (True, False):
        refs = build_references(
            entries, model, seed=seed + 1000, static=static, friction=friction,
            tap_cfg=tap_cfg,
        )
        episodes = generate_identification_episodes(
            entries, trials=trials, panel_size=panel_size, seed=seed,
            static=static, friction=friction, tap_cfg=tap_cfg,
        )
        scored = score_identification(episodes, model, refs)
        name = "static" if static else "moving"
        for r in scored:
            rows.append({"arm": name, **r})
        rate, se = mean_se([r["success"] for r in scored])
        arms[name] = {"rate": rate, "se": se}
    summary = {
        "experiment": "ablate_static",
        "trials": trials,
        "panel_size": panel_size,
        "arms": arms,
        "gap": arms["static"]["rate"] - arms["moving"]["rate"],
    }
    return rows, summary


def interaction_ablation(
    entries, model, *, trials, panel_size, seed, friction=DEFAULT_FRICTION, tap_cfg=None
):
    """Tapping-strategy arms (full / no_reloc / noisy) on paired panels, each
    scored against references collected under the same variant, plus a
    tap-order shuffle of the full arm as an order-sensitivity probe."""
    by_variant = {}
    for variant in ("full", "no_reloc", "noisy"):
        refs = build_references(
            entries, model, seed=seed + 1000, variant=variant,
            friction=friction, tap_cfg=tap_cfg,
        )
        episodes = generate_identification_episodes(
            entries, trials=trials, panel_size=panel_size, seed=seed,
            variant=variant, friction=friction, tap_cfg=tap_cfg,
        )
        by_variant[variant] = (episodes, refs)
    full_episodes, full_refs = by_variant["full"]
    shuffled = []
    for i, (layout, seq) in enumerate(full_episodes):
        if seq.points:
            rng = _rng(seed, i, 9)
            order = rng.permutation(len(seq.points))
            pts = [seq.points[int(o)] for o in order]
            seq = type(seq)(
                seq.object_id, seq.pose_id, pts, seq.displacement,
                tap_count=seq.tap_count,
            )
        shuffled.append((layout, seq))
    by_variant["shuffled"] = (shuffled, full_refs)
    arms = {}
    rows = []
    for name in ("full", "no_reloc", "noisy", "shuffled"):
        episodes, refs = by_variant[name]
        scored = score_identification(episodes, model, refs)
        for r in scored:
            rows.append({"arm": name, **r})
        rate, se = mean_se([r["success"] for r in scored])
        points, _ = mean_se([float(r["n_points"]) for r in scored])
        taps, _ = mean_se([float(seq.tap_count) for _, seq in episodes])
        arms[name] = {"rate": rate, "se": se, "mean_points": points, "mean_taps": taps}
    summary = {
        "experiment": "ablate_interaction",
        "trials": trials,
        "panel_size": panel_size,
        "arms": arms,
        "relocalization_gain": arms["full"]["rate"] - arms["no_reloc"]["rate"],
        "noisy_gain": arms["full"]["rate"] - arms["noisy"]["rate"],
        "shuffle_drop": arms["full"]["rate"] - arms["shuffled"]["rate"],
    }
    return rows, summary


def arch_ablation(entries, models, *, trials, panel_size, seed, friction=DEFAULT_FRICTION, tap_cfg=None):
    """Score several trained encoders on one shared set of eval episodes."""
    episodes = generate_identification_episodes(
        entries, trials=trials, panel_size=panel_size, seed=seed,
        friction=friction, tap_cfg=tap_cfg,
    )
    arms = {}
    rows = []
    for name in sorted(models):
        model = models[name]
        refs = build_references(
            entries, model, seed=seed + 1000, friction=friction, tap_cfg=tap_cfg
        )
        scored = score_identification(episodes, model, refs)
        for r in scored:
            rows.append({"arm": name, **r})
        rate, se = mean_se([r["success"] for r in scored])
        arms[name] = {"rate": rate, "se": se}
    summary = {
        "experiment": "ablate_arch",
        "trials": trials,
        "panel_size": panel_size,
        "arms": arms,
    }
    return rows, summary


# ----------------------------------------------------------------------
# training convenience
# ----------------------------------------------------------------------


def train_encoder(
    sequences,
    *,
    arch="attention",
    loss="info_nce",
    epochs=12,
    lr=1e-2,
    batch_pairs=16,
    clip_norm=5.0,
    seed=0,
    max_pairs_per_object=None,
    encoder_config=None,
    log=None,
):
    """Build pairs from a corpus, fit a fresh encoder, return (model, history)."""
    pairs = make_pairs(sequences, max_pairs_per_object=max_pairs_per_object, seed=seed)
    config = encoder_config if encoder_config is not None else EncoderConfig(arch=arch)
    model = SequenceEncoder(config, seed=seed)
    history = train(
        model,
        pairs,
        TrainConfig(
            epochs=epochs, batch_pairs=batch_pairs, lr=lr, clip_norm=clip_norm,
            loss=loss, seed=seed,
        ),
        log=log,
    )
    history["n_pairs"] = len(pairs)
    return model, history


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
