"""Model containers and victim-side evaluation.

All score computations route through the fixed-order kernels so that a label
computed during an attack, inside a batch, or during later replay comes out
bit-identical.  Ties break toward the lowest class index and sign(0) = +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, SameLabels
from .fp_core import dot_lr


def _frozen_vector(v, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatch(f"{name} must be a nonempty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LinearModel:
    """Binary classifier sign(w.x + b) with labels in {-1, +1}."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen_vector(self.w, "w"))
        b = float(self.b)
        if not np.isfinite(b):
            raise ValueError("b must be finite")
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """Feed-forward net, ReLU on every hidden layer, identity on the last.

    layers[i] is (weight, bias) with weight shaped (fan_out, fan_in).
    """

    layers: tuple
    _packed: tuple = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if not self.layers:
            raise DimensionMismatch("network needs at least one layer")
        frozen = []
        prev = None
        for i, (w, b) in enumerate(self.layers):
            w = np.ascontiguousarray(w, dtype=np.float64)
            b = np.ascontiguousarray(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionMismatch(f"layer {i} has shapes {w.shape}, {b.shape}")
            if prev is not None and w.shape[1] != prev:
                raise DimensionMismatch(f"layer {i} expects {w.shape[1]} inputs, got {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} must be finite")
            w.flags.writeable = False
            b.flags.writeable = False
            prev = w.shape[0]
            frozen.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def dims(self) -> tuple:
        return (self.layers[0][0].shape[1],) + tuple(w.shape[0] for w, _ in self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def packed(self):
        """Flat weight/bias arrays plus offset tables for the compiled kernels."""
        if self._packed is None:
            woff, boff = [], []
            wpos = bpos = 0
            for w, b in self.layers:
                woff.append(wpos)
                boff.append(bpos)
                wpos += w.size
                bpos += b.size
            flatw = np.concatenate([w.ravel() for w, _ in self.layers])
            flatb = np.concatenate([b for _, b in self.layers])
            packed = (
                np.ascontiguousarray(flatw),
                np.ascontiguousarray(flatb),
                np.asarray(woff, dtype=np.int64),
                np.asarray(boff, dtype=np.int64),
                np.asarray(self.dims, dtype=np.int64),
            )
            object.__setattr__(self, "_packed", packed)
        return self._packed


@dataclass(frozen=True)
class Linearization:
    """The affine map tau.x + tau_hat that equals the net on x's ReLU region."""

    tau: np.ndarray
    tau_hat: np.ndarray
    activation_pattern: tuple  # one bool vector per hidden layer


def _check_input(x, dim: int) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.shape != (dim,):
        raise DimensionMismatch(f"input shape {arr.shape}, model wants ({dim},)")
    return arr


def linear_predict(m: LinearModel, x) -> int:
    x = _check_input(x, m.dim)
    s = dot_lr(m.w, x) + m.b
    return -1 if s < 0.0 else 1


def relu_forward(net: ReluNetwork, x):
    """Scores and argmax label (lowest index wins ties)."""
    x = _check_input(x, net.input_dim)
    flatw, flatb, woff, boff, dims = net.packed()
    scores = np.empty(net.n_classes)
    _kernels._forward_scores(x, flatw, flatb, woff, boff, dims, scores)
    return scores, int(_kernels._argmax(scores))


def relu_forward_batch(net: ReluNetwork, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatch(f"batch shape {X.shape}, model wants (*, {net.input_dim})")
    flatw, flatb, woff, boff, dims = net.packed()
    labels = np.empty(X.shape[0], dtype=np.int64)
    _kernels.forward_labels(X, flatw, flatb, woff, boff, dims, labels)
    return labels


def linearize(net: ReluNetwork, x) -> Linearization:
    x = _check_input(x, net.input_dim)
    flatw, flatb, woff, boff, dims = net.packed()
    tau, tau_hat, masks = _kernels.linearize_core(x, flatw, flatb, woff, boff, dims)
    pattern = []
    off = 0
    for h in net.dims[1:-1]:
        pattern.append(masks[off:off + h] > 0.5)
        off += h
    return Linearization(tau, tau_hat, tuple(pattern))


def patterns_equal(a: tuple, b: tuple) -> bool:
    if len(a) != len(b):
        return False
    return all(x.shape == y.shape and bool(np.all(x == y)) for x, y in zip(a, b))


def perturb_dir(net: ReluNetwork, x, label: int, target: int) -> np.ndarray:
    """Row difference tau[target] - tau[label] of the local linearization."""
    if label == target:
        raise SameLabels(f"label and target are both {label}")
    k = net.n_classes
    if not (0 <= label < k and 0 <= target < k):
        raise DimensionMismatch(f"labels ({label}, {target}) outside 0..{k - 1}")
    lin = linearize(net, x)
    return lin.tau[target] - lin.tau[label]


def runner_up(scores: np.ndarray, label: int) -> int:
    """Best class other than `label`, lowest index on ties."""
    best = -1
    for k in range(scores.shape[0]):
        if k == label:
            continue
        if best < 0 or scores[k] > scores[best]:
            best = k
    if best < 0:
        raise SameLabels("need at least two classes")
    return best
