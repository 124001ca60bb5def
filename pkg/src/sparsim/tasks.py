"""Synthetic differentiable training tasks with analytic gradients.

Each task owns a generated dataset and exposes ``loss_and_grad`` over a
mini-batch of sample indices. Parameters are always one flat vector.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigurationError

TASK_KINDS = ("quadratic", "logistic_regression", "mlp2")
TASK_ALIASES = {"logreg": "logistic_regression", "quad": "quadratic"}


def canonical_task(kind: str) -> str:
    kind = TASK_ALIASES.get(kind, kind)
    if kind not in TASK_KINDS:
        raise ConfigurationError(f"unknown task {kind!r}; expected one of {TASK_KINDS}")
    return kind


class Task:
    kind = ""
    #: Loss at the optimum over the full dataset, when known in closed form.
    optimum_loss: float | None = None

    def __init__(self, dimension: int, n_samples: int):
        self.dimension = dimension
        self.n_samples = n_samples

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dimension)

    def loss_and_grad(self, x: np.ndarray, batch=None) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def loss(self, x: np.ndarray, batch=None) -> float:
        return self.loss_and_grad(x, batch)[0]

    def grad(self, x: np.ndarray, batch=None) -> np.ndarray:
        return self.loss_and_grad(x, batch)[1]

    def _batch(self, batch):
        if batch is None:
            return slice(None)
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("mini-batch must be nonempty")
        return batch


class Quadratic(Task):
    """Per-sample loss ``0.5 * ||x - b_s||^2`` with ``b_s = x* + noise``.

    ``x*`` is the sample mean, so the full-batch gradient is ``x - x*``.
    """

    kind = "quadratic"

    def __init__(self, dimension: int, n_samples: int = 256, noise: float = 0.1, seed=0):
        super().__init__(dimension, n_samples)
        rng = np.random.default_rng(seed)
        center = rng.standard_normal(dimension)
        self.samples = center + noise * rng.standard_normal((n_samples, dimension))
        self.optimum = self.samples.mean(axis=0)
        self._sq_norms = np.einsum("ij,ij->i", self.samples, self.samples)
        spread = self.samples - self.optimum
        self.optimum_loss = 0.5 * float(np.mean(np.einsum("ij,ij->i", spread, spread)))

    def loss_and_grad(self, x, batch=None):
        sel = self._batch(batch)
        b_mean = self.samples[sel].mean(axis=0)
        # mean ||x - b||^2 expanded so the batch is reduced only once
        loss = 0.5 * (float(x @ x) - 2.0 * float(x @ b_mean) + float(self._sq_norms[sel].mean()))
        return loss, x - b_mean


class LogisticRegression(Task):
    """Binary logistic regression on two Gaussian blobs with L2 penalty.

    Parameters are ``[w (dimension - 1), bias]``.
    """

    kind = "logistic_regression"

    def __init__(self, dimension: int, n_samples: int = 2048, separation: float = 1.0,
                 l2: float = 1e-4, seed=0):
        if dimension < 2:
            raise ConfigurationError("logistic regression needs dimension >= 2")
        super().__init__(dimension, n_samples)
        rng = np.random.default_rng(seed)
        n_features = dimension - 1
        direction = rng.standard_normal(n_features)
        direction /= np.linalg.norm(direction)
        self.y = (rng.random(n_samples) < 0.5).astype(np.float64)
        shift = np.where(self.y[:, None] > 0, 0.5, -0.5) * separation * direction
        self.X = rng.standard_normal((n_samples, n_features)) + shift
        self.l2 = l2

    def loss_and_grad(self, x, batch=None):
        sel = self._batch(batch)
        X, y = self.X[sel], self.y[sel]
        w, b = x[:-1], x[-1]
        z = X @ w + b
        # log(1 + exp(z)) - y z, stable for large |z|
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * self.l2 * float(w @ w)
        r = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / X.shape[0]
        g = np.empty_like(x)
        g[:-1] = X.T @ r + self.l2 * w
        g[-1] = r.sum()
        return loss, g


class MLP2(Task):
    """Two-layer tanh network with softmax cross-entropy on Gaussian class blobs.

    The hidden width is chosen so the parameter count is as close to
    ``dimension`` as the layer shapes allow; read ``self.dimension`` for the
    exact count. Layout: ``W1 (h x d_in), b1 (h), W2 (c x h), b2 (c)``.
    """

    kind = "mlp2"

    def __init__(self, dimension: int, n_samples: int = 4096, n_inputs: int = 32,
                 n_classes: int = 10, spread: float = 0.6, seed=0):
        per_hidden = n_inputs + 1 + n_classes
        hidden = (dimension - n_classes) // per_hidden
        if hidden < 1:
            raise ConfigurationError(
                f"mlp2 needs dimension >= {per_hidden + n_classes} for {n_inputs} inputs and {n_classes} classes"
            )
        self.n_inputs, self.n_hidden, self.n_classes = n_inputs, hidden, n_classes
        super().__init__(hidden * per_hidden + n_classes, n_samples)
        rng = np.random.default_rng(seed)
        centers = spread * rng.standard_normal((n_classes, n_inputs))
        self.labels = rng.integers(0, n_classes, n_samples)
        self.X = centers[self.labels] + rng.standard_normal((n_samples, n_inputs))
        self.Y = np.eye(n_classes)[self.labels]
        h, d, c = hidden, n_inputs, n_classes
        o1 = h * d
        o2 = o1 + h
        o3 = o2 + c * h
        self._slices = (slice(0, o1), slice(o1, o2), slice(o2, o3), slice(o3, o3 + c))

    def unpack(self, x):
        s1, s2, s3, s4 = self._slices
        h, d, c = self.n_hidden, self.n_inputs, self.n_classes
        return x[s1].reshape(h, d), x[s2], x[s3].reshape(c, h), x[s4]

    def init_params(self, rng):
        x = np.zeros(self.dimension)
        s1, _, s3, _ = self._slices
        x[s1] = rng.standard_normal(s1.stop - s1.start) / np.sqrt(self.n_inputs)
        x[s3] = rng.standard_normal(s3.stop - s3.start) / np.sqrt(self.n_hidden)
        return x

    def loss_and_grad(self, x, batch=None):
        sel = self._batch(batch)
        X, Y = self.X[sel], self.Y[sel]
        W1, b1, W2, b2 = self.unpack(x)
        hid = np.tanh(X @ W1.T + b1)
        logits = hid @ W2.T + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(logits).sum(axis=1, keepdims=True))
        logp = logits - logz
        m = X.shape[0]
        loss = -float(np.sum(Y * logp)) / m
        dlogits = (np.exp(logp) - Y) / m
        dz = (dlogits @ W2) * (1.0 - hid * hid)
        g = np.empty_like(x)
        s1, s2, s3, s4 = self._slices
        g[s1] = (dz.T @ X).ravel()
        g[s2] = dz.sum(axis=0)
        g[s3] = (dlogits.T @ hid).ravel()
        g[s4] = dlogits.sum(axis=0)
        return loss, g


def make_task(kind: str, dimension: int, seed=0, n_samples: int | None = None) -> Task:
    kind = canonical_task(kind)
    kwargs = {"seed": seed}
    if n_samples is not None:
        kwargs["n_samples"] = n_samples
    if kind == "quadratic":
        return Quadratic(dimension, **kwargs)
    if kind == "logistic_regression":
        return LogisticRegression(dimension, **kwargs)
    return MLP2(dimension, **kwargs)


def finite_difference_check(task: Task, x: np.ndarray, batch=None, rng=None,
                            n_directions: int = 4, step: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference
    directional derivatives along random unit directions."""
    rng = np.random.default_rng(rng)
    g = task.grad(x, batch)
    worst = 0.0
    for _ in range(n_directions):
        v = rng.standard_normal(x.shape[0])
        v /= np.linalg.norm(v)
        fd = (task.loss(x + step * v, batch) - task.loss(x - step * v, batch)) / (2 * step)
        an = float(g @ v)
        scale = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / scale)
    return worst
