"""Desk-scale trainers for attack targets.

Two recipes: an L1-regularized squared-hinge linear SVM fit by mini-batch
subgradient descent with momentum, and a small softmax-cross-entropy MLP
with optional projection of hidden weights/biases onto >= 0 after every
optimizer step.  Training only has to produce plausible victims; the attack
machinery never depends on how the optimum was reached.  Runs are
deterministic for a fixed config: one generator drives init and shuffles,
and each model trains single-threaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, DimensionMismatch, DomainError
from .models import LinearModel, ReluNetwork


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 15
    l1_lambda: float = 1e-4
    clamp_nonnegative: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")
        if self.l1_lambda < 0.0:
            raise DomainError(f"l1_lambda must be nonnegative, got {self.l1_lambda}")


def _svm_objective(X, y, w, b, lam) -> float:
    margins = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(np.mean(margins ** 2) + lam * np.abs(w).sum())


def train_linear_svm(data, cfg: TrainConfig, log: list | None = None) -> LinearModel:
    """Minimize mean (1 - y(w.x+b))+^2 + lambda*||w||1 over labels in {-1,+1}."""
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    y = np.ascontiguousarray(data.labels, dtype=np.float64)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise DomainError("SVM labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise DegenerateData("need both classes present")
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(d)
    b = 0.0
    vw = np.zeros(d)
    vb = 0.0
    lam, lr, mu = cfg.l1_lambda, cfg.learning_rate, cfg.momentum
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        obj_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            Xb, yb = X[rows], y[rows]
            margins = np.maximum(0.0, 1.0 - yb * (Xb @ w + b))
            obj_sum += float(np.mean(margins ** 2) + lam * np.abs(w).sum())
            n_batches += 1
            # subgradient of the batch objective; sign(0) taken as 0 for the L1 term
            coef = -2.0 * margins * yb / rows.size
            gw = Xb.T @ coef + lam * np.sign(w)
            gb = float(coef.sum())
            vw = mu * vw - lr * gw
            vb = mu * vb - lr * gb
            w = w + vw
            b = b + vb
        if log is not None:
            acc = float(np.mean(np.where(X @ w + b >= 0.0, 1.0, -1.0) == y))
            log.append((epoch + 1, obj_sum / n_batches, acc))
    return LinearModel(w, b)


def _init_layers(arch, rng, clamp: bool):
    layers = []
    for i in range(len(arch) - 1):
        fan_in, fan_out = arch[i], arch[i + 1]
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        b = np.full(fan_out, 0.01)
        if clamp and i < len(arch) - 2:
            w = np.maximum(w, 0.0)
        layers.append([w, b])
    return layers


def train_mlp(data, arch, cfg: TrainConfig, log: list | None = None, step_callback=None) -> ReluNetwork:
    """SGD with momentum on softmax cross-entropy.

    With clamp_nonnegative, hidden weights and biases are projected onto
    >= 0 after every step (the output layer stays free).  step_callback, if
    given, sees the layer list after each projection.
    """
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    y = np.ascontiguousarray(data.labels, dtype=np.int64)
    n, d = X.shape
    arch = [int(a) for a in arch]
    if arch[0] != d:
        raise DimensionMismatch(f"arch starts at {arch[0]}, features have {d}")
    k = arch[-1]
    if y.min() < 0 or y.max() >= k:
        raise DomainError(f"labels outside 0..{k - 1}")
    if np.unique(y).size < 2:
        raise DegenerateData("need at least two classes present")
    rng = np.random.default_rng(cfg.seed)
    layers = _init_layers(arch, rng, cfg.clamp_nonnegative)
    vel = [[np.zeros_like(w), np.zeros_like(b)] for w, b in layers]
    n_hidden = len(layers) - 1
    lr, mu = cfg.learning_rate, cfg.momentum

    def forward(Xb):
        acts = [Xb]
        z = None
        for i, (w, b) in enumerate(layers):
            z = acts[-1] @ w.T + b
            if i < n_hidden:
                z = np.maximum(z, 0.0)
            acts.append(z)
        return acts

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        obj_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            Xb, yb = X[rows], y[rows]
            acts = forward(Xb)
            logits = acts[-1]
            shifted = logits - logits.max(axis=1, keepdims=True)
            expz = np.exp(shifted)
            probs = expz / expz.sum(axis=1, keepdims=True)
            obj_sum += float(-np.mean(np.log(probs[np.arange(rows.size), yb] + 1e-300)))
            n_batches += 1
            dz = probs
            dz[np.arange(rows.size), yb] -= 1.0
            dz /= rows.size
            for i in range(len(layers) - 1, -1, -1):
                w, b = layers[i]
                gw = dz.T @ acts[i]
                gb = dz.sum(axis=0)
                if i > 0:
                    dz = (dz @ w) * (acts[i] > 0.0)
                vel[i][0] = mu * vel[i][0] - lr * gw
                vel[i][1] = mu * vel[i][1] - lr * gb
                layers[i][0] = w + vel[i][0]
                layers[i][1] = b + vel[i][1]
            if cfg.clamp_nonnegative:
                for i in range(n_hidden):
                    np.maximum(layers[i][0], 0.0, out=layers[i][0])
                    np.maximum(layers[i][1], 0.0, out=layers[i][1])
            if step_callback is not None:
                step_callback(layers)
        if log is not None:
            preds = forward(X)[-1].argmax(axis=1)
            log.append((epoch + 1, obj_sum / n_batches, float(np.mean(preds == y))))
    return ReluNetwork(tuple((w.copy(), b.copy()) for w, b in layers))
