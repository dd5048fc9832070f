"""Optimization loop for the contrastive sequence encoder.

Plain stochastic gradient descent with global-norm clipping over batches of
positive pairs (two episodes of the same object). The InfoNCE and triplet
objectives run on an identical batch schedule so their compute budgets match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import gather_rows
from .encoder import info_nce_loss, triplet_loss

__all__ = ["TrainConfig", "train", "global_grad_norm", "clip_gradients", "sgd_step"]

LOSSES = ("info_nce", "triplet")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_pairs: int = 16
    lr: float = 1e-2
    clip_norm: float = 5.0
    loss: str = "info_nce"
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError("loss must be one of %s" % (LOSSES,))
        if min(self.epochs, self.batch_pairs) < 1 or self.batch_pairs < 2:
            raise ValueError("need at least one epoch and two pairs per batch")
        if not (self.lr > 0.0 and self.clip_norm > 0.0):
            raise ValueError("lr and clip_norm must be positive")


def global_grad_norm(params):
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return math.sqrt(total)


def clip_gradients(params, clip_norm):
    """Scale all gradients so their global norm is at most clip_norm."""
    norm = global_grad_norm(params)
    if norm > clip_norm:
        scale = clip_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm


def sgd_step(params, lr):
    for t in params.values():
        if t.grad is not None:
            t.data = t.data - lr * t.grad


def _batch_loss(model, batch, loss_name, temperature, margin):
    emb_a = model.embed([a for a, _ in batch])
    emb_b = model.embed([b for _, b in batch])
    if loss_name == "info_nce":
        return info_nce_loss(emb_a, emb_b, temperature)
    perm = np.roll(np.arange(len(batch)), 1)
    return triplet_loss(emb_a, emb_b, gather_rows(emb_b, perm), margin)


def train(model, pairs, config: TrainConfig, log=None):
    """Fit the encoder on (points_a, points_b) positive pairs in place.

    Returns a history dict with the per-epoch mean loss and the update count.
    Raises RuntimeError if the loss stops being finite.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two training pairs")
    rng = np.random.default_rng(config.seed)
    history = []
    steps = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for lo in range(0, len(order), config.batch_pairs):
            idx = order[lo : lo + config.batch_pairs]
            if len(idx) < 2:
                continue
            batch = [pairs[i] for i in idx]
            model.zero_grad()
            loss = _batch_loss(
                model, batch, config.loss, model.config.temperature, model.config.margin
            )
            value = loss.item()
            if not math.isfinite(value):
                raise RuntimeError("training diverged at epoch %d" % epoch)
            loss.backward()
            clip_gradients(model.params, config.clip_norm)
            sgd_step(model.params, config.lr)
            losses.append(value)
            steps += 1
        history.append(float(np.mean(losses)))
        if log is not None:
            log("epoch %3d  loss %.4f" % (epoch, history[-1]))
    return {"epoch_loss": history, "steps": steps}
