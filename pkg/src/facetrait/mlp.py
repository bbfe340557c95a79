"""Feedforward ReLU network with one logistic output, trained by momentum SGD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import _sigmoid
from .errors import ContractError, TrainingError
from .store import EmbeddingDataset, GenderLabel


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_sizes: tuple
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes:
            raise ContractError("at least one hidden layer is required")
        if self.input_dim < 1 or min(self.hidden_sizes) < 1:
            raise ContractError("layer sizes must be positive")
        if self.activation != "relu":
            raise ContractError(f"unsupported activation {self.activation!r}")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_sizes, 1)


@dataclass(frozen=True)
class MlpTrainConfig:
    step: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ContractError("step must be positive")
        if not 0 <= self.momentum < 1:
            raise ContractError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ContractError("epochs must be >= 0 and batch_size >= 1")


@dataclass(eq=False)
class MlpModel:
    """``weights[l]`` has shape (fan_in, fan_out); the last layer has fan_out 1."""

    weights: list
    biases: list
    architecture: MlpArchitecture
    loss_trace: list = field(default_factory=list)

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.architecture, list(self.loss_trace))

    def logits(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.architecture.input_dim:
            raise ContractError(
                f"dimension mismatch: model {self.architecture.input_dim}, input {X.shape[1]}"
            )
        return _forward(self, X)[-1][:, 0]

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return (self.logits(X) > 0).astype(np.uint8)


def mlp_init(arch: MlpArchitecture, seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, arch)


def _forward(model, X):
    """Activations per layer: input, hidden ReLU outputs..., final logits."""
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def mlp_forward(model: MlpModel, x):
    """(probability, logit) for one input vector."""
    z = float(model.logits(np.asarray(x, dtype=np.float64).ravel())[0])
    return float(_sigmoid(np.array([z]))[0]), z


def _loss_grad(model, X, t):
    acts = _forward(model, X)
    z = acts[-1][:, 0]
    loss = float(np.mean(np.logaddexp(0.0, z) - t * z))
    delta = ((_sigmoid(z) - t) / X.shape[0])[:, None]
    gW = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gW, gb


def mlp_loss_grad(model: MlpModel, batch: EmbeddingDataset):
    """Mean binary cross-entropy and its gradient as (loss, weight grads, bias grads)."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    X = batch.X()
    if X.shape[1] != model.architecture.input_dim:
        raise ContractError("dimension mismatch")
    return _loss_grad(model, X, batch.labels.astype(np.float64))


def flatten_params(model: MlpModel) -> np.ndarray:
    return np.concatenate([p.ravel() for pair in zip(model.weights, model.biases) for p in pair])


def unflatten_params(model: MlpModel, theta) -> MlpModel:
    out = model.copy()
    pos = 0
    for i in range(len(out.weights)):
        for arr in (out.weights[i], out.biases[i]):
            arr[...] = np.reshape(theta[pos:pos + arr.size], arr.shape)
            pos += arr.size
    return out


def _full_loss(model, X, t, chunk=8192):
    total = 0.0
    for s in range(0, X.shape[0], chunk):
        z = _forward(model, X[s:s + chunk])[-1][:, 0]
        total += float(np.sum(np.logaddexp(0.0, z) - t[s:s + chunk] * z))
    return total / X.shape[0]


def mlp_train(data: EmbeddingDataset, arch: MlpArchitecture,
              config: MlpTrainConfig = MlpTrainConfig()) -> MlpModel:
    """Mini-batch SGD with classical momentum from a seeded He initialization.

    ``loss_trace`` holds the full training loss at initialization and after
    every epoch. The parameters returned are those of the lowest entry, so the
    final loss never exceeds the initial one.
    """
    n_f, n_m = data.class_counts()
    if n_f == 0 or n_m == 0:
        raise TrainingError("MLP training needs both classes present")
    if data.dimension != arch.input_dim:
        raise ContractError(f"data dimension {data.dimension} != input_dim {arch.input_dim}")
    X = data.X()
    t = data.labels.astype(np.float64)
    n = X.shape[0]
    model = mlp_init(arch, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    batch = min(config.batch_size, n)
    vW = [np.zeros_like(w) for w in model.weights]
    vb = [np.zeros_like(b) for b in model.biases]
    trace = [_full_loss(model, X, t)]
    best, best_loss = model.copy(), trace[0]
    # divergence is detected from the loss below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            for s in range(0, n, batch):
                idx = order[s:s + batch]
                _, gW, gb = _loss_grad(model, X[idx], t[idx])
                for i in range(len(model.weights)):
                    vW[i] *= config.momentum
                    vW[i] -= config.step * gW[i]
                    vb[i] *= config.momentum
                    vb[i] -= config.step * gb[i]
                    model.weights[i] += vW[i]
                    model.biases[i] += vb[i]
            loss = _full_loss(model, X, t)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"MLP training diverged at epoch {epoch + 1}; try a smaller step size"
                )
            trace.append(loss)
            if loss <= best_loss:
                best, best_loss = model.copy(), loss
    best.loss_trace = trace
    return best


def mlp_predict(model: MlpModel, x) -> GenderLabel:
    return GenderLabel.MALE if mlp_forward(model, x)[1] > 0 else GenderLabel.FEMALE
