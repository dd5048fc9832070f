"""Command-line experiment harness.

Subcommands generate the shape corpus, collect tap episodes, train encoders,
and run the evaluation suites. Every experiment writes per-trial rows to
trials.csv, aggregate numbers to summary.json, and SVG figures, all inside
--out-dir. A JSON file passed as --config overrides any same-named flag
value, so a frozen config fully pins an experiment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import datasets, figures, harness
from .encoder import load_checkpoint, save_checkpoint
from .interact import VARIANTS
from .localize import localize_cluster


def _fail(msg):
    print("error: %s" % msg, file=sys.stderr)
    raise SystemExit(2)


def _apply_config(args):
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            overrides = json.load(fh)
    except OSError as exc:
        _fail("cannot read config: %s" % exc)
    if not isinstance(overrides, dict):
        _fail("config must be a JSON object")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            _fail("config key %r does not match any option" % key)
        setattr(args, dest, value)
    return args


def _load_entries(args, split=None):
    if not os.path.exists(args.shapes):
        _fail("shapes file not found: %s (run gen-shapes first)" % args.shapes)
    entries = datasets.read_shapes(args.shapes)
    want = split if split is not None else getattr(args, "split", None)
    if want and want != "all":
        entries = [e for e in entries if e.split == want]
    if not entries:
        _fail("no shapes in split %r" % want)
    return entries


def _load_model(path):
    if not path:
        _fail("--model is required for this command")
    if not os.path.exists(path):
        _fail("model checkpoint not found: %s (run train first)" % path)
    return load_checkpoint(path)


def _out_dir(args):
    return harness.ensure_dir(args.out_dir)


def _write_report(out_dir, rows, fieldnames, summary):
    harness.write_trials_csv(os.path.join(out_dir, "trials.csv"), rows, fieldnames)
    harness.write_json(os.path.join(out_dir, "summary.json"), summary)


def _check_rates(summary, collect):
    for key, value in collect(summary):
        if not (0.0 <= value <= 1.0) or not np.isfinite(value):
            _fail("invariant violation: %s = %r outside [0, 1]" % (key, value))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_gen_shapes(args):
    entries = datasets.generate_shapes(
        per_family=args.per_family, train_per_family=args.train_per_family, seed=args.seed
    )
    datasets.write_shapes(entries, args.out)
    print("wrote %d shapes (%d train / %d val) to %s" % (
        len(entries),
        sum(1 for e in entries if e.split == "train"),
        sum(1 for e in entries if e.split == "val"),
        args.out,
    ))


def cmd_gen_corpus(args):
    entries = _load_entries(args)
    seqs = datasets.build_corpus(
        entries,
        episodes=args.episodes,
        seed=args.seed,
        variant=args.variant,
        static=args.static,
        friction=args.friction,
    )
    datasets.write_corpus(seqs, args.out)
    points = sum(len(s.points) for s in seqs)
    print("wrote %d episodes (%d contact points) to %s" % (len(seqs), points, args.out))


def cmd_train(args):
    if not os.path.exists(args.corpus):
        _fail("corpus file not found: %s (run gen-corpus first)" % args.corpus)
    seqs = datasets.read_corpus(args.corpus)
    out_dir = _out_dir(args)
    if args.out is None:
        args.out = os.path.join(out_dir, "model.json")
    model, history = harness.train_encoder(
        seqs,
        arch=args.arch,
        loss=args.loss,
        epochs=args.epochs,
        lr=args.lr,
        batch_pairs=args.batch_pairs,
        clip_norm=args.clip,
        seed=args.seed,
        max_pairs_per_object=args.max_pairs_per_object,
        log=print if args.verbose else None,
    )
    save_checkpoint(model, args.out, extra={"history": history["epoch_loss"]})
    harness.write_json(os.path.join(out_dir, "history.json"), history)
    figures.loss_curve_figure(
        history["epoch_loss"], os.path.join(out_dir, "loss_curve.svg"),
        title="%s / %s" % (args.arch, args.loss),
    )
    print(
        "trained %s (%s) on %d pairs for %d epochs; final loss %.4f -> %s"
        % (args.arch, args.loss, history["n_pairs"], args.epochs,
           history["epoch_loss"][-1], args.out)
    )


def cmd_eval_localize(args):
    entries = _load_entries(args)
    ks = [int(k) for k in str(args.ks).split(",") if k]
    rows, summary = harness.localization_experiment(
        entries, trials=args.trials, ks=ks, seed=args.seed,
        friction=args.friction, static=args.static,
    )
    out_dir = _out_dir(args)
    _write_report(
        out_dir, rows,
        ["k", "trial", "method", "success", "center_error", "max_error", "perturbation", "probes"],
        summary,
    )
    labels, means, ses = [], [], []
    for key in sorted(summary["rates"]):
        labels.append(key)
        means.append(summary["rates"][key]["rate"])
        ses.append(summary["rates"][key]["se"])
    figures.bar_figure(
        labels, means, ses, "success rate",
        os.path.join(out_dir, "localization_rates.svg"), title="localization",
    )
    demo_layout = harness._draw_layout(entries, 0, args.seed + 77, max(ks))
    demo_scene = harness._layout_scene(demo_layout, static=args.static, friction=args.friction)
    demo = localize_cluster(demo_scene, max(ks), rng=np.random.default_rng(args.seed))
    figures.occupancy_figure(
        demo.grid, [tuple(e) for e in demo.estimates], [tuple(t) for t in demo.truths],
        os.path.join(out_dir, "occupancy_demo.svg"),
        title="occupancy scan, K=%d" % max(ks),
    )
    _check_rates(summary, lambda s: [(k, v["rate"]) for k, v in s["rates"].items()])
    for key in sorted(summary["rates"]):
        r = summary["rates"][key]
        print("%-12s %.3f +/- %.3f" % (key, r["rate"], r["se"]))


def cmd_eval_identify(args):
    entries = _load_entries(args, split="val")
    model = _load_model(args.model)
    rows, summary = harness.identification_experiment(
        entries, model, trials=args.trials, panel_size=args.panel_size,
        seed=args.seed, variant=args.variant, static=args.static, friction=args.friction,
    )
    out_dir = _out_dir(args)
    _write_report(
        out_dir, rows, ["trial", "target", "predicted", "n_points", "success"], summary
    )
    figures.bar_figure(
        ["%d-way" % args.panel_size], [summary["accuracy"]], [summary["accuracy_se"]],
        "top-1 accuracy", os.path.join(out_dir, "identification.svg"),
        title="identification (%s)" % args.variant,
    )
    _check_rates(summary, lambda s: [("accuracy", s["accuracy"])])
    print("%d-way accuracy %.3f +/- %.3f" % (
        args.panel_size, summary["accuracy"], summary["accuracy_se"]))


def cmd_eval_pipeline(args):
    entries = _load_entries(args, split="val")
    model = _load_model(args.model)
    rows, summary = harness.pipeline_experiment(
        entries, model, trials=args.trials, k_objects=args.k_objects,
        seed=args.seed, friction=args.friction,
    )
    out_dir = _out_dir(args)
    _write_report(out_dir, rows, ["trial", "target", "stage_reached", "success"], summary)
    stages = summary["stage_reached_counts"]
    labels = ["localize", "identify", "grasp", "success"]
    vals = [
        stages["localize"] / args.trials,
        stages["identify"] / args.trials,
        stages["grasp"] / args.trials,
        summary["success_rate"],
    ]
    figures.bar_figure(
        labels, vals, [0, 0, 0, summary["success_se"]], "fraction of trials",
        os.path.join(out_dir, "pipeline.svg"), title="pipeline stages",
    )
    _check_rates(summary, lambda s: [("success_rate", s["success_rate"])])
    print("pipeline success %.3f +/- %.3f (stalls: %s)" % (
        summary["success_rate"], summary["success_se"], stages))


def cmd_ablate(args):
    out_dir = _out_dir(args)
    if args.kind == "friction":
        entries = _load_entries(args, split="val")
        mus = [float(m) for m in str(args.mus).split(",") if m]
        model = _load_model(args.model) if args.model else None
        rows, summary = harness.friction_ablation(
            entries, mus=tuple(mus), trials=args.trials, k=args.k_objects,
            seed=args.seed, model=model, panel_size=args.panel_size,
        )
        fieldnames = ["trial", "friction", "success", "center_error", "perturbation"]
        if model is not None:
            fieldnames += ["phase", "target", "predicted"]
        _write_report(out_dir, rows, fieldnames, summary)
        xs = sorted(float(m) for m in summary["rates"])
        series = {
            "localization K=%d" % args.k_objects: (
                [summary["rates"]["%g" % m]["rate"] for m in xs],
                [summary["rates"]["%g" % m]["se"] for m in xs],
            )
        }
        if model is not None:
            series["identification"] = (
                [summary["identification"]["%g" % m]["rate"] for m in xs],
                [summary["identification"]["%g" % m]["se"] for m in xs],
            )
        figures.sweep_figure(
            xs, series, "friction coefficient",
            "success rate", os.path.join(out_dir, "friction_sweep.svg"),
            title="friction sweep",
        )
        _check_rates(summary, lambda s: [(k, v["rate"]) for k, v in s["rates"].items()])
        for m in xs:
            r = summary["rates"]["%g" % m]
            line = "mu=%g  localization %.3f +/- %.3f" % (m, r["rate"], r["se"])
            if model is not None:
                ri = summary["identification"]["%g" % m]
                line += "  identification %.3f +/- %.3f" % (ri["rate"], ri["se"])
            print(line)
        return
    entries = _load_entries(args, split="val")
    model = _load_model(args.model)
    if args.kind == "static":
        rows, summary = harness.static_ablation(
            entries, model, trials=args.trials, panel_size=args.panel_size, seed=args.seed
        )
    elif args.kind == "interaction":
        rows, summary = harness.interaction_ablation(
            entries, model, trials=args.trials, panel_size=args.panel_size, seed=args.seed
        )
    elif args.kind == "arch":
        models = {"attention": model}
        if not args.model_b:
            _fail("--model-b is required for the arch ablation")
        models["recurrent"] = _load_model(args.model_b)
        rows, summary = harness.arch_ablation(
            entries, models, trials=args.trials, panel_size=args.panel_size, seed=args.seed
        )
    else:
        _fail("unknown ablation kind %r" % args.kind)
    _write_report(
        out_dir, rows, ["arm", "trial", "target", "predicted", "n_points", "success"], summary
    )
    arms = summary["arms"]
    labels = sorted(arms)
    figures.bar_figure(
        labels, [arms[a]["rate"] for a in labels], [arms[a]["se"] for a in labels],
        "top-1 accuracy", os.path.join(out_dir, "%s_ablation.svg" % args.kind),
        title="%s ablation" % args.kind,
    )
    _check_rates(summary, lambda s: [(a, v["rate"]) for a, v in s["arms"].items()])
    for a in labels:
        print("%-10s %.3f +/- %.3f" % (a, arms[a]["rate"], arms[a]["se"]))


def cmd_plot(args):
    summary_path = os.path.join(args.run_dir, "summary.json")
    history_path = os.path.join(args.run_dir, "history.json")
    if os.path.exists(history_path):
        with open(history_path) as fh:
            history = json.load(fh)
        figures.loss_curve_figure(
            history["epoch_loss"], os.path.join(args.run_dir, "loss_curve.svg")
        )
        print("rendered loss_curve.svg")
        return
    if not os.path.exists(summary_path):
        _fail("no summary.json or history.json in %s" % args.run_dir)
    with open(summary_path) as fh:
        summary = json.load(fh)
    kind = summary.get("experiment", "")
    if kind == "localize":
        labels = sorted(summary["rates"])
        figures.bar_figure(
            labels,
            [summary["rates"][k]["rate"] for k in labels],
            [summary["rates"][k]["se"] for k in labels],
            "success rate", os.path.join(args.run_dir, "localization_rates.svg"),
            title="localization",
        )
    elif kind == "ablate_friction":
        xs = sorted(float(m) for m in summary["rates"])
        series = {
            "localization": ([summary["rates"]["%g" % m]["rate"] for m in xs],
                             [summary["rates"]["%g" % m]["se"] for m in xs])
        }
        if "identification" in summary:
            series["identification"] = (
                [summary["identification"]["%g" % m]["rate"] for m in xs],
                [summary["identification"]["%g" % m]["se"] for m in xs],
            )
        figures.sweep_figure(
            xs, series, "friction coefficient", "success rate",
            os.path.join(args.run_dir, "friction_sweep.svg"),
        )
    elif "arms" in summary:
        labels = sorted(summary["arms"])
        figures.bar_figure(
            labels,
            [summary["arms"][a]["rate"] for a in labels],
            [summary["arms"][a]["se"] for a in labels],
            "top-1 accuracy", os.path.join(args.run_dir, "arms.svg"),
        )
    elif "accuracy" in summary:
        figures.bar_figure(
            ["accuracy"], [summary["accuracy"]], [summary["accuracy_se"]],
            "top-1 accuracy", os.path.join(args.run_dir, "identification.svg"),
        )
    elif "success_rate" in summary:
        figures.bar_figure(
            ["success"], [summary["success_rate"]], [summary["success_se"]],
            "success rate", os.path.join(args.run_dir, "pipeline.svg"),
        )
    else:
        _fail("summary.json has no recognized experiment type")
    print("rendered figures in %s" % args.run_dir)


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def _common(sub, *, model=False):
    sub.add_argument("--config", help="JSON file whose keys override flag values")
    sub.add_argument("--seed", type=int, default=0)
    if model:
        sub.add_argument("--model", help="encoder checkpoint path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blindpick",
        description="Simulation and evaluation harness for touch-only object retrieval",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-shapes", help="sample the procedural shape corpus")
    _common(p)
    p.add_argument("--out", default="shapes.ndjson")
    p.add_argument("--per-family", type=int, default=25)
    p.add_argument("--train-per-family", type=int, default=20)
    p.set_defaults(func=cmd_gen_shapes)

    p = subs.add_parser("gen-corpus", help="collect tap episodes for a split")
    _common(p)
    p.add_argument("--shapes", default="shapes.ndjson")
    p.add_argument("--split", default="train", choices=["train", "val", "all"])
    p.add_argument("--out", default="corpus.ndjson")
    p.add_argument("--episodes", type=int, default=4)
    p.add_argument("--variant", default="full", choices=list(VARIANTS))
    p.add_argument("--static", action="store_true")
    p.add_argument("--friction", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_corpus)

    p = subs.add_parser("train", help="fit the contrastive encoder")
    _common(p)
    p.add_argument("--corpus", default="corpus.ndjson")
    p.add_argument("--out", default=None, help="checkpoint path (default OUT_DIR/model.json)")
    p.add_argument("--out-dir", default="runs/train")
    p.add_argument("--arch", default="attention", choices=["attention", "recurrent"])
    p.add_argument("--loss", default="info_nce", choices=["info_nce", "triplet"])
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-pairs", type=int, default=16)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--max-pairs-per-object", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval-localize", help="occupancy clustering vs particle filter")
    _common(p)
    p.add_argument("--shapes", default="shapes.ndjson")
    p.add_argument("--split", default="val", choices=["train", "val", "all"])
    p.add_argument("--out-dir", default="runs/localize")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--ks", default="1,3,5")
    p.add_argument("--static", action="store_true")
    p.add_argument("--friction", type=float, default=0.5)
    p.set_defaults(func=cmd_eval_localize)

    p = subs.add_parser("eval-identify", help="panel identification accuracy")
    _common(p, model=True)
    p.add_argument("--shapes", default="shapes.ndjson")
    p.add_argument("--out-dir", default="runs/identify")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--panel-size", type=int, default=5)
    p.add_argument("--variant", default="full", choices=list(VARIANTS))
    p.add_argument("--static", action="store_true")
    p.add_argument("--friction", type=float, default=0.5)
    p.set_defaults(func=cmd_eval_identify)

    p = subs.add_parser("eval-pipeline", help="localize, identify, and grasp the target")
    _common(p, model=True)
    p.add_argument("--shapes", default="shapes.ndjson")
    p.add_argument("--out-dir", default="runs/pipeline")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--k-objects", type=int, default=3)
    p.add_argument("--friction", type=float, default=0.5)
    p.set_defaults(func=cmd_eval_pipeline)

    p = subs.add_parser("ablate", help="friction, static, interaction, or arch ablation")
    _common(p, model=True)
    p.add_argument("--kind", required=True, choices=["friction", "static", "interaction", "arch"])
    p.add_argument("--shapes", default="shapes.ndjson")
    p.add_argument("--out-dir", default="runs/ablate")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--panel-size", type=int, default=5)
    p.add_argument("--k-objects", type=int, default=3)
    p.add_argument("--mus", default="0.5,0.25,0.1")
    p.add_argument("--model-b", help="second checkpoint (recurrent) for --kind arch")
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("plot", help="re-render figures from a finished run directory")
    _common(p)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_config(args)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
