"""Trainable readouts: pseudo-inverse linear map, ensemble of linear maps, small MLP.

Also holds the gradient tools (analytic backprop and forward-difference
parameter shift) and accuracy evaluation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import DataError

PINV_RTOL = 1e-10


class TrainingError(RuntimeError):
    pass


def _as_2d(Y):
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DataError("non-finite values in readout data")


def one_hot(y, n_classes=None) -> np.ndarray:
    y = np.asarray(y, dtype=int)
    n = int(y.max()) + 1 if n_classes is None else n_classes
    out = np.zeros((len(y), n))
    out[np.arange(len(y)), y] = 1.0
    return out


def target_matrix(y, n_classes) -> np.ndarray:
    """Binary tasks regress a single 0/1 column; multiclass tasks a one-hot matrix."""
    y = np.asarray(y, dtype=int)
    return y[:, None].astype(float) if n_classes <= 2 else one_hot(y, n_classes)


def pinv(X, rtol=PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``rtol * s_max`` are dropped."""
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((X.shape[1], X.shape[0]))
    keep = s > rtol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


@dataclass
class LinearModel:
    W: np.ndarray

    def predict(self, X):
        out = np.asarray(X, dtype=float) @ self.W
        return out[:, 0] if out.shape[1] == 1 else out


@dataclass
class EnsembleModel:
    members: list

    @property
    def N(self):
        return len(self.members)

    def predict(self, X):
        return np.mean([m.predict(X) for m in self.members], axis=0)


def fit_linear(X, Y) -> LinearModel:
    X = np.asarray(X, dtype=float)
    Y = _as_2d(Y)
    if len(X) < 1 or len(X) != len(Y):
        raise DataError("need at least one row and matching target count")
    _check_finite(X, Y)
    return LinearModel(pinv(X) @ Y)


def chunk_bounds(n_rows, N):
    """Contiguous equal chunks; the remainder goes to the last chunk."""
    size = n_rows // N
    starts = [k * size for k in range(N)]
    ends = starts[1:] + [n_rows]
    return list(zip(starts, ends))


def fit_ensemble(X, Y, N=5) -> EnsembleModel:
    X = np.asarray(X, dtype=float)
    Y = _as_2d(Y)
    if N < 1 or N > len(X):
        raise DataError(f"chunk count {N} must lie in [1, {len(X)}]")
    return EnsembleModel([fit_linear(X[a:b], Y[a:b]) for a, b in chunk_bounds(len(X), N)])


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    """One hidden rectifier layer. ``output`` is ``sigmoid``, ``softmax`` or ``linear``.

    Inputs are standardized with the stored ``mu``/``sd`` before the first layer.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    output: str = "sigmoid"
    mu: Optional[np.ndarray] = None
    sd: Optional[np.ndarray] = None

    PARAMS = ("W1", "b1", "W2", "b2")

    @property
    def sizes(self):
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    def _prep(self, X):
        X = np.asarray(X, dtype=float)
        if self.mu is not None:
            X = (X - self.mu) / self.sd
        return X

    def forward(self, X):
        Xs = self._prep(X)
        z1 = Xs @ self.W1 + self.b1
        h = np.maximum(z1, 0.0)
        z2 = h @ self.W2 + self.b2
        if self.output == "sigmoid":
            out = _sigmoid(z2)
        elif self.output == "softmax":
            out = _softmax(z2)
        else:
            out = z2
        return Xs, z1, h, out

    def predict(self, X):
        out = self.forward(X)[-1]
        return out[:, 0] if out.shape[1] == 1 else out

    def loss(self, X, Y):
        Y = _as_2d(Y)
        out = self.forward(X)[-1]
        if self.output == "sigmoid":
            p = np.clip(out, 1e-12, 1 - 1e-12)
            return float(-np.mean(Y * np.log(p) + (1 - Y) * np.log(1 - p)))
        if self.output == "softmax":
            return float(-np.mean(np.sum(Y * np.log(np.clip(out, 1e-12, None)), axis=1)))
        return float(0.5 * np.mean(np.sum((out - Y) ** 2, axis=1)))

    def params(self):
        return [getattr(self, k) for k in self.PARAMS]

    def to_vector(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def with_vector(self, v):
        v = np.asarray(v, dtype=float)
        parts, k = [], 0
        for p in self.params():
            parts.append(v[k:k + p.size].reshape(p.shape))
            k += p.size
        return MlpModel(*parts, output=self.output, mu=self.mu, sd=self.sd)


def init_mlp(n_in, n_hidden, n_out, output="sigmoid", seed=0) -> MlpModel:
    rng = np.random.default_rng(seed)
    return MlpModel(rng.normal(0, np.sqrt(2 / n_in), (n_in, n_hidden)), np.zeros(n_hidden),
                    rng.normal(0, np.sqrt(1 / n_hidden), (n_hidden, n_out)), np.zeros(n_out), output)


def backprop_grad(model, X, Y) -> dict:
    """Analytic loss gradient for every parameter of ``model``.

    MLP losses are those of :meth:`MlpModel.loss`; a LinearModel uses
    ``0.5 * mean ||X W - Y||^2``.
    """
    Y = _as_2d(Y)
    n = len(Y)
    if isinstance(model, LinearModel):
        X = np.asarray(X, dtype=float)
        return {"W": X.T @ (X @ model.W - Y) / n}
    if isinstance(model, EnsembleModel):
        return {f"member{k}": backprop_grad(m, X, Y) for k, m in enumerate(model.members)}
    Xs, z1, h, out = model.forward(X)
    # sigmoid+BCE, softmax+CE and identity+MSE all give (out - Y) at the pre-activation
    d2 = (out - Y) / n
    gW2 = h.T @ d2
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ model.W2.T) * (z1 > 0)
    return {"W1": Xs.T @ d1, "b1": d1.sum(axis=0), "W2": gW2, "b2": gb2}


def param_shift_grad(f: Callable[[np.ndarray], float], params, delta=1e-6) -> np.ndarray:
    """Forward difference ``(f(p + delta e_k) - f(p)) / delta``; P + 1 evaluations of ``f``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    p = np.array(params, dtype=float)
    flat = p.ravel()
    base = f(p)
    g = np.empty_like(flat)
    for k in range(flat.size):
        shifted = flat.copy()
        shifted[k] += delta
        g[k] = (f(shifted.reshape(p.shape)) - base) / delta
    return g.reshape(p.shape)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mh = m / (1 - self.beta1 ** self.t)
            vh = v / (1 - self.beta2 ** self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


def fit_mlp(X, y, hidden=16, epochs=300, lr=1e-3, seed=0, n_classes=None, output=None,
            standardize=True, batch_size=None) -> MlpModel:
    """Train by backpropagation with Adam.

    ``y`` holds integer class labels (or a float target matrix when
    ``output="linear"``). Two classes use a sigmoid unit with cross-entropy,
    more use softmax. ``batch_size=None`` trains full batch.
    """
    X = np.asarray(X, dtype=float)
    _check_finite(X)
    if output is None:
        n_classes = n_classes or int(np.max(y)) + 1
        output = "sigmoid" if n_classes <= 2 else "softmax"
    if output == "sigmoid":
        Y = np.asarray(y, dtype=float).reshape(-1, 1)
    elif output == "softmax":
        Y = one_hot(y, n_classes)
    else:
        Y = _as_2d(y)
    model = init_mlp(X.shape[1], hidden, Y.shape[1], output, seed)
    if standardize:
        model.mu = X.mean(axis=0)
        sd = X.std(axis=0)
        model.sd = np.where(sd > 0, sd, 1.0)
    rng = np.random.default_rng(seed + 1)
    opt = AdamState(lr=lr)
    n = len(X)
    bs = n if batch_size is None else batch_size
    for epoch in range(epochs):
        order = np.arange(n) if bs >= n else rng.permutation(n)
        for a in range(0, n, bs):
            idx = order[a:a + bs]
            g = backprop_grad(model, X[idx], Y[idx])
            opt.step(model.params(), [g[k] for k in MlpModel.PARAMS])
        if not np.all(np.isfinite(model.to_vector())):
            raise TrainingError(f"training diverged at epoch {epoch}")
    return model


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def predict_labels(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1 or s.shape[1] == 1:
        return (s.reshape(-1) >= 0.5).astype(int)
    return np.argmax(s, axis=1)  # ties go to the lowest index


def evaluate(model, X, y) -> float:
    """Percentage of samples whose predicted class equals ``y``."""
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        return float("nan")
    pred = predict_labels(model.predict(X))
    return 100.0 * float(np.mean(pred == y))


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------

def save_model(model, path):
    """CSV: a ``kind`` row, a ``sizes`` row, then one ``name,values...`` row per array (row-major)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(model, LinearModel):
            w.writerow(["kind", "linear"])
            w.writerow(["sizes", *model.W.shape])
            w.writerow(["W", *map(repr, model.W.ravel().tolist())])
        elif isinstance(model, EnsembleModel):
            w.writerow(["kind", "ensemble"])
            w.writerow(["sizes", model.N, *model.members[0].W.shape])
            for k, m in enumerate(model.members):
                w.writerow([f"W{k}", *map(repr, m.W.ravel().tolist())])
        elif isinstance(model, MlpModel):
            w.writerow(["kind", "mlp", model.output])
            w.writerow(["sizes", *model.sizes])
            for k in MlpModel.PARAMS:
                w.writerow([k, *map(repr, getattr(model, k).ravel().tolist())])
            if model.mu is not None:
                w.writerow(["mu", *map(repr, model.mu.tolist())])
                w.writerow(["sd", *map(repr, model.sd.tolist())])
        else:
            raise TypeError(f"cannot serialize {type(model).__name__}")


def load_model(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    kind = rows[0][1]
    sizes = [int(v) for v in rows[1][1:]]
    arrays = {r[0]: np.array([float(v) for v in r[1:]]) for r in rows[2:]}
    if kind == "linear":
        return LinearModel(arrays["W"].reshape(sizes))
    if kind == "ensemble":
        n, shape = sizes[0], sizes[1:]
        return EnsembleModel([LinearModel(arrays[f"W{k}"].reshape(shape)) for k in range(n)])
    if kind == "mlp":
        d, h, o = sizes
        return MlpModel(arrays["W1"].reshape(d, h), arrays["b1"], arrays["W2"].reshape(h, o), arrays["b2"],
                        rows[0][2], arrays.get("mu"), arrays.get("sd"))
    raise DataError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Gradient probe through an arbitrary (e.g. simulated) pipeline
# ---------------------------------------------------------------------------

@dataclass
class GradientProbeReport:
    indices: np.ndarray
    estimates: np.ndarray
    delta: float
    base_loss: float

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.estimates))) if self.estimates.size else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param_index", "estimate", "delta", "base_loss"])
            for i, g in zip(self.indices, self.estimates):
                w.writerow([int(i), repr(float(g)), repr(self.delta), repr(self.base_loss)])


class ProbeAborted(RuntimeError):
    def __init__(self, index, cause):
        self.index = index
        super().__init__(f"gradient probe failed at parameter {index}: {cause}")


def ann_gradient_probe(loss_of_params: Callable[[np.ndarray], float], params, delta=1e-3,
                       indices: Optional[Sequence[int]] = None) -> GradientProbeReport:
    """Forward-difference gradient of a pipeline loss w.r.t. selected parameters.

    Reports estimates only; zero is never asserted.
    """
    p = np.asarray(params, dtype=float).ravel()
    idx = np.arange(p.size) if indices is None else np.asarray(indices, dtype=int)
    base = float(loss_of_params(p))
    est = np.empty(len(idx))
    for n, k in enumerate(idx):
        shifted = p.copy()
        shifted[k] += delta
        try:
            est[n] = (float(loss_of_params(shifted)) - base) / delta
        except Exception as err:  # simulation failure mid-probe
            raise ProbeAborted(int(k), err) from err
    return GradientProbeReport(idx, est, delta, base)
