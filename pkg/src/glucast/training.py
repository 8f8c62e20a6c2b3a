"""Deterministic training harness: Adam with global-norm gradient
clipping, seeded mini-batch shuffling, per-epoch loss tracing, and the
convergence-epoch reader used by the learning-speed report.

One train() call owns a single SeededRng; every stochastic choice
(batch order, latent noise, scheduled-sampling coins) draws from it in
a fixed order, so a config and seed pin the whole run bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import WindowedDataset
from .model import LossWeights
from .numeric import SeededRng


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    clip_norm: float = 5.0
    teacher_force: float = 0.5
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss_reco: float
    loss_pred: float
    loss_kl: float
    loss_total: float
    val_loss: float
    max_grad_norm: float  # largest post-clip global norm seen this epoch


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def val_losses(self) -> np.ndarray:
        return np.array([r.val_loss for r in self.records])


def epochs_to_converge(trace: TrainTrace) -> int:
    """First epoch whose validation loss is within 1% of the trace minimum."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    vals = trace.val_losses()
    threshold = vals.min() * 1.01
    return int(np.flatnonzero(vals <= threshold)[0]) + 1


class Adam:
    """Adaptive moment estimation over a named parameter dict, in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm.

    Returns the post-clip global norm.
    """
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return max_norm
    return norm


def _chronological(ds: WindowedDataset, idx: np.ndarray) -> np.ndarray:
    order = np.lexsort((ds.origin_series[idx], ds.origin_start[idx]))
    return idx[order]


def train(model, ds: WindowedDataset, cfg: TrainConfig) -> TrainTrace:
    """Train any model exposing params/forward_loss/backward on the
    dataset's training split; the chronologically last val_fraction of
    training windows is held out for the per-epoch validation loss.

    Deterministic given cfg.seed.  Raises on a non-finite batch loss,
    naming the offending batch.
    """
    if ds.train_idx.size == 0:
        raise ValueError("empty training split")
    trace = TrainTrace()
    if cfg.epochs == 0:
        return trace
    rng = SeededRng(cfg.seed)
    ordered = _chronological(ds, ds.train_idx)
    n_val = int(round(cfg.val_fraction * ordered.size))
    val_idx = ordered[ordered.size - n_val:] if n_val > 0 else np.empty(0, dtype=int)
    fit_idx = ordered[:ordered.size - n_val] if n_val > 0 else ordered
    if fit_idx.size == 0:
        fit_idx = ordered
        val_idx = np.empty(0, dtype=int)

    adam = Adam(model.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(fit_idx.size)
        sums = {"reco": 0.0, "pred": 0.0, "kl": 0.0, "total": 0.0}
        seen = 0
        max_norm = 0.0
        for b_ix, lo in enumerate(range(0, fit_idx.size, cfg.batch_size)):
            batch = fit_idx[perm[lo:lo + cfg.batch_size]]
            losses, cache = model.forward_loss(
                ds.X[batch], ds.X_mask[batch], ds.Y[batch], cfg.weights,
                rng=rng, teacher_force=cfg.teacher_force, sample=True)
            if not np.isfinite(losses["total"]):
                raise RuntimeError(f"non-finite loss in epoch {epoch}, batch {b_ix}")
            grads = model.backward(cache)
            max_norm = max(max_norm, clip_gradients(grads, cfg.clip_norm))
            adam.step(grads)
            nb = batch.size
            for k in sums:
                sums[k] += float(losses[k]) * nb
            seen += nb
        means = {k: v / seen for k, v in sums.items()}
        if val_idx.size:
            val_losses, _ = model.forward_loss(
                ds.X[val_idx], ds.X_mask[val_idx], ds.Y[val_idx], cfg.weights,
                teacher_force=0.0, sample=False)
            val_loss = float(val_losses["total"])
        else:
            val_loss = means["total"]
        trace.records.append(EpochRecord(epoch, means["reco"], means["pred"],
                                         means["kl"], means["total"], val_loss, max_norm))
    return trace
