"""Minibatch SGD training, standard or adversarial (PGD inner loop)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attack import PgdConfig, pgd_adversary_batch
from .data import LabeledDataset
from .metrics import accuracy
from .mlp import ModelParams, add_scaled, init_params, loss_and_grads


@dataclass
class TrainConfig:
    """SGD-with-momentum schedule.  ``dims`` are the full layer widths
    (input, hidden..., classes).  With ``adversarial`` set, each step trains
    on PGD points generated at ``pgd`` from the current net."""

    dims: list[int]
    epochs: int = 40
    lr: float = 0.1
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9
    lr_decay: float = 1.0  # per-epoch multiplier
    adversarial: bool = False
    pgd: PgdConfig = field(default_factory=lambda: PgdConfig(eps=8.0 / 255.0, steps=10))

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0 or not (0 < self.lr_decay <= 1) or not (0 <= self.momentum < 1):
            raise ValueError("bad optimizer constants")


@dataclass
class TrainResult:
    params: ModelParams
    history: list  # per-epoch dicts: epoch, loss, acc


def train(cfg: TrainConfig, ds: LabeledDataset) -> TrainResult:
    """Train a fresh net on ds; deterministic for a fixed config."""
    if cfg.dims[0] != ds.n_features:
        raise ValueError(f"dims[0]={cfg.dims[0]} but data has {ds.n_features} features")
    if cfg.dims[-1] < ds.n_classes:
        raise ValueError(f"dims[-1]={cfg.dims[-1]} < {ds.n_classes} classes")
    params = init_params(cfg.dims, seed=cfg.seed)
    shuffle_rng = np.random.default_rng((cfg.seed, 1))
    velocity = ModelParams([np.zeros_like(w) for w in params.weights],
                           [np.zeros_like(b) for b in params.biases])
    lr = cfg.lr
    history = []
    n = len(ds)
    step_idx = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            Xb, yb = ds.X[idx], ds.y[idx]
            if cfg.adversarial:
                Xb = pgd_adversary_batch(params, Xb, yb, cfg.pgd, seed=(cfg.seed, 2, step_idx))
            val, g, _ = loss_and_grads(params, Xb, yb, reduction="mean")
            velocity = add_scaled(
                ModelParams([cfg.momentum * w for w in velocity.weights],
                            [cfg.momentum * b for b in velocity.biases]),
                g, -lr)
            params = add_scaled(params, velocity)
            epoch_loss += val * len(idx)
            step_idx += 1
        lr *= cfg.lr_decay
        history.append({"epoch": epoch, "loss": epoch_loss / n, "acc": accuracy(params, ds)})
    return TrainResult(params=params, history=history)
