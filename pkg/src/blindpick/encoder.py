"""Contrastive sequence encoder for tap-point episodes.

Maps a variable-length sequence of centered contact points (x, y, z) to a
unit-norm embedding. Two interchangeable backbones share the input pipeline
(even-stride subsampling, per-point affine lift, learned positional table
indexed by tap ordinal) and the masked mean-pool head:

  - "attention": pre-LN transformer encoder blocks,
  - "recurrent": stacked GRU layers.

Training signals are a symmetric-free InfoNCE over 2B-1 in-batch candidates
and a margin triplet loss; see training.py for the optimization loop.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, concat, gather_rows, layer_norm, softmax

__all__ = [
    "EncoderConfig",
    "SequenceEncoder",
    "tap_ordinals",
    "prepare_batch",
    "info_nce_loss",
    "triplet_loss",
    "identify",
    "save_checkpoint",
    "load_checkpoint",
]

ARCHS = ("attention", "recurrent")
CHECKPOINT_FORMAT = "blindpick-encoder"


@dataclass(frozen=True)
class EncoderConfig:
    arch: str = "attention"
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_embed: int = 32
    max_seq_len: int = 256
    temperature: float = 0.1
    margin: float = 0.2
    input_scale: float = 10.0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError("arch must be one of %s" % (ARCHS,))
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must divide evenly into heads")
        if min(self.d_model, self.n_heads, self.n_layers, self.d_embed) < 1:
            raise ValueError("model dimensions must be positive")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")
        if not (self.temperature > 0.0 and self.margin >= 0.0 and self.input_scale > 0.0):
            raise ValueError("temperature, margin, input_scale out of range")


def tap_ordinals(points):
    """Tap index per point: z runs split into chunks of three fingers.

    Matches the wire-format reconstruction: a run of n equal-z points spans
    ceil(n / 3) taps, and ordinals increase monotonically over the episode.
    """
    ordinals = np.empty(len(points), dtype=np.intp)
    tap = -1
    run = 0
    prev = None
    for i, (_, _, z) in enumerate(points):
        if prev is None or z != prev:
            prev = z
            run = 0
        if run % 3 == 0:
            tap += 1
        ordinals[i] = tap
        run += 1
    return ordinals


def _subsample_indices(n, limit):
    if n <= limit:
        return np.arange(n)
    return (np.arange(limit) * n) // limit


def prepare_batch(point_lists, config):
    """Pad a list of point sequences into model inputs.

    Returns (feats (N, T, 3), ordinals (N, T), mask (N, T)) with T the longest
    subsampled length in the batch. Scaling by config.input_scale keeps the
    features order-one.
    """
    if not point_lists:
        raise ValueError("empty batch")
    seqs = []
    for points in point_lists:
        if not len(points):
            raise ValueError("cannot encode an empty tap sequence")
        pts = np.asarray(points, dtype=np.float64).reshape(len(points), 3)
        idx = _subsample_indices(len(pts), config.max_seq_len)
        ords = np.minimum(tap_ordinals(points)[idx], config.max_seq_len - 1)
        seqs.append((pts[idx] / config.input_scale, ords))
    t_max = max(len(p) for p, _ in seqs)
    n = len(seqs)
    feats = np.zeros((n, t_max, 3))
    ordinals = np.zeros((n, t_max), dtype=np.intp)
    mask = np.zeros((n, t_max))
    for i, (pts, ords) in enumerate(seqs):
        feats[i, : len(pts)] = pts
        ordinals[i, : len(pts)] = ords
        mask[i, : len(pts)] = 1.0
    return feats, ordinals, mask


def _xavier(rng, fan_in, fan_out, shape=None):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape else (fan_in, fan_out))


class SequenceEncoder:
    """Point-sequence embedding model with learned parameters on a Tensor tape."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.params = {}
        self._build(np.random.default_rng(self.seed))

    def _add(self, name, array):
        self.params[name] = Tensor(array, requires_grad=True)

    def _build(self, rng):
        c = self.config
        d = c.d_model
        self._add("lift_w", _xavier(rng, 3, d))
        self._add("lift_b", np.zeros(d))
        self._add("pos_table", rng.uniform(-0.05, 0.05, size=(c.max_seq_len, d)))
        for i in range(c.n_layers):
            p = "layer%d_" % i
            if c.arch == "attention":
                self._add(p + "ln1_g", np.ones(d))
                self._add(p + "ln1_b", np.zeros(d))
                for gate in ("q", "k", "v", "o"):
                    self._add(p + "w" + gate, _xavier(rng, d, d))
                    self._add(p + "b" + gate, np.zeros(d))
                self._add(p + "ln2_g", np.ones(d))
                self._add(p + "ln2_b", np.zeros(d))
                self._add(p + "ffn_w1", _xavier(rng, d, 4 * d))
                self._add(p + "ffn_b1", np.zeros(4 * d))
                self._add(p + "ffn_w2", _xavier(rng, 4 * d, d))
                self._add(p + "ffn_b2", np.zeros(d))
            else:
                for gate in ("z", "r", "h"):
                    self._add(p + "w" + gate, _xavier(rng, d, d))
                    self._add(p + "u" + gate, _xavier(rng, d, d))
                    self._add(p + "b" + gate, np.zeros(d))
        if c.arch == "attention":
            self._add("final_ln_g", np.ones(d))
            self._add("final_ln_b", np.zeros(d))
        self._add("head_w", _xavier(rng, d, c.d_embed))
        self._add("head_b", np.zeros(c.d_embed))

    def num_params(self):
        return sum(t.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    def embed(self, point_lists):
        """Encode a batch of point sequences to unit-norm embeddings (N, d_embed)."""
        feats, ordinals, mask = prepare_batch(point_lists, self.config)
        if self.config.arch == "attention":
            pooled = self._attention_pool(feats, ordinals, mask)
        else:
            pooled = self._recurrent_pool(feats, ordinals, mask)
        e = pooled @ self.params["head_w"] + self.params["head_b"]
        norm = ((e * e).sum(axis=-1, keepdims=True) + 1e-12).sqrt()
        return e / norm

    def _attention_pool(self, feats, ordinals, mask):
        p = self.params
        c = self.config
        n, t, _ = feats.shape
        heads, dk = c.n_heads, c.d_model // c.n_heads
        h = Tensor(feats) @ p["lift_w"] + p["lift_b"] + gather_rows(p["pos_table"], ordinals)
        key_bias = ((1.0 - mask) * -1e9).reshape(n, 1, 1, t)
        for i in range(c.n_layers):
            q = "layer%d_" % i
            a = layer_norm(h, p[q + "ln1_g"], p[q + "ln1_b"])

            def split(x):
                return x.reshape(n, t, heads, dk).transpose((0, 2, 1, 3))

            qs = split(a @ p[q + "wq"] + p[q + "bq"]) * (1.0 / math.sqrt(dk))
            ks = split(a @ p[q + "wk"] + p[q + "bk"])
            vs = split(a @ p[q + "wv"] + p[q + "bv"])
            w = softmax(qs @ ks.swapaxes(-1, -2) + Tensor(key_bias), axis=-1)
            o = (w @ vs).transpose((0, 2, 1, 3)).reshape(n, t, c.d_model)
            h = h + o @ p[q + "wo"] + p[q + "bo"]
            f = layer_norm(h, p[q + "ln2_g"], p[q + "ln2_b"])
            h = h + (f @ p[q + "ffn_w1"] + p[q + "ffn_b1"]).relu() @ p[q + "ffn_w2"] + p[q + "ffn_b2"]
        h = layer_norm(h, p["final_ln_g"], p["final_ln_b"])
        weights = mask[:, :, None]
        pooled = (h * Tensor(weights)).sum(axis=1) / Tensor(weights.sum(axis=1))
        return pooled

    def _recurrent_pool(self, feats, ordinals, mask):
        p = self.params
        c = self.config
        n, t, _ = feats.shape
        inputs = [
            Tensor(feats[:, j, :]) @ p["lift_w"] + p["lift_b"]
            + gather_rows(p["pos_table"], ordinals[:, j])
            for j in range(t)
        ]
        for i in range(c.n_layers):
            q = "layer%d_" % i
            state = Tensor(np.zeros((n, c.d_model)))
            outputs = []
            for x in inputs:
                zg = (x @ p[q + "wz"] + state @ p[q + "uz"] + p[q + "bz"]).sigmoid()
                rg = (x @ p[q + "wr"] + state @ p[q + "ur"] + p[q + "br"]).sigmoid()
                cand = (x @ p[q + "wh"] + (rg * state) @ p[q + "uh"] + p[q + "bh"]).tanh()
                state = (1.0 - zg) * state + zg * cand
                outputs.append(state)
            inputs = outputs
        acc = None
        for j, out in enumerate(inputs):
            term = out * Tensor(mask[:, j : j + 1])
            acc = term if acc is None else acc + term
        return acc / Tensor(mask.sum(axis=1, keepdims=True))


# ----------------------------------------------------------------------
# losses and identification
# ----------------------------------------------------------------------


def info_nce_loss(emb_a, emb_b, temperature):
    """InfoNCE with 2B-1 candidates per anchor: all B paired embeddings plus
    the other B-1 anchors; the anchor itself is masked out."""
    b = emb_a.shape[0]
    if emb_b.shape[0] != b or b < 2:
        raise ValueError("need matched batches of at least two pairs")
    candidates = concat([emb_b, emb_a], axis=0)
    logits = (emb_a @ candidates.transpose((1, 0))) * (1.0 / temperature)
    self_mask = np.zeros((b, 2 * b))
    self_mask[np.arange(b), b + np.arange(b)] = -1e9
    probs = softmax(logits + Tensor(self_mask), axis=-1)
    picked = gather_rows(probs.reshape(b * 2 * b), np.arange(b) * 2 * b + np.arange(b))
    return -(picked + 1e-12).log().mean()


def triplet_loss(anchor, positive, negative, margin):
    """Cosine margin hinge max(0, margin - cos(a,p) + cos(a,n)), batch mean.

    Embeddings arrive unit-normalized, so cosines are plain row dot products.
    """
    cos_ap = (anchor * positive).sum(axis=-1)
    cos_an = (anchor * negative).sum(axis=-1)
    return (cos_an - cos_ap + margin).relu().mean()


def identify(query_emb, reference_embs):
    """Index of the reference with the highest cosine similarity to the query."""
    q = np.asarray(query_emb, dtype=np.float64).reshape(-1)
    refs = np.asarray(reference_embs, dtype=np.float64)
    qn = q / (np.linalg.norm(q) + 1e-12)
    rn = refs / (np.linalg.norm(refs, axis=1, keepdims=True) + 1e-12)
    return int(np.argmax(rn @ qn))


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------


def save_checkpoint(model, path, extra=None):
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config": asdict(model.config),
        "seed": model.seed,
        "params": {
            name: {
                "shape": list(t.data.shape),
                "data": base64.b64encode(np.ascontiguousarray(t.data).tobytes()).decode("ascii"),
            }
            for name, t in model.params.items()
        },
    }
    if extra:
        record["extra"] = extra
    with open(path, "w") as fh:
        json.dump(record, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT or record.get("version") != 1:
        raise ValueError("not a recognized encoder checkpoint")
    model = SequenceEncoder(EncoderConfig(**record["config"]), seed=record["seed"])
    stored = record["params"]
    if set(stored) != set(model.params):
        raise ValueError("checkpoint parameter names do not match the config")
    for name, t in model.params.items():
        shape = tuple(stored[name]["shape"])
        if shape != t.data.shape:
            raise ValueError("shape mismatch for %s: %s vs %s" % (name, shape, t.data.shape))
        raw = base64.b64decode(stored[name]["data"])
        t.data = np.frombuffer(raw, dtype=np.float64).reshape(shape).copy()
    return model
