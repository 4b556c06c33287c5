"""Feedforward regressor trained with MSE, AdamW and cosine annealing.

The network is a plain ReLU MLP with an identity output layer.  Everything is
float64 and NumPy only; backpropagation is written out by hand so gradients
can be checked against finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .encodings import Encoding, OrdinalScale, encode_labels, vector_length
from .errors import ConfigError, DataError, ShapeError, TrainingDivergedError

CHECKPOINT_FORMAT = "ordreg-mlp/1"


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(x) < 1 for x in dims):
            raise ConfigError(f"all layer sizes must be >= 1, got {dims}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @classmethod
    def for_encoding(cls, input_dim, hidden_dims, encoding: Encoding, K: int, n_findings: int,
                     init_seed: int = 0) -> "MlpConfig":
        """Output width is the target length times the number of findings."""
        return cls(input_dim, tuple(hidden_dims), vector_length(encoding, K) * n_findings, init_seed)


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` (shared views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "ModelParams":
        arrays = list(arrays)
        return cls(weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ModelParams":
        return ModelParams([np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(config: MlpConfig) -> ModelParams:
    """He-normal weights, zero biases.

    Each layer draws from its own stream keyed by ``(init_seed, layer)``, so
    layers of equal shape are bit-identical across models that only differ in
    output width.
    """
    weights, biases = [], []
    dims = config.layer_dims
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        rng = np.random.default_rng([config.init_seed, layer])
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _check_input(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.weights[0].shape[0]:
        raise ShapeError(
            f"input of shape {x.shape} does not match input_dim {params.weights[0].shape[0]}")
    return x


def _forward_cache(params: ModelParams, x: np.ndarray):
    activations = [x]
    pre = []
    h = x
    last = params.n_layers - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if layer == last else np.maximum(z, 0.0)
        activations.append(h)
    return activations, pre


def forward(params: ModelParams, x) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors."""
    x = _check_input(params, x)
    single = x.ndim == 1
    out = _forward_cache(params, x[None, :] if single else x)[0][-1]
    return out[0] if single else out


def mse_loss(y, target) -> float:
    """Squared error averaged over the batch and every output entry."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if y.shape != target.shape:
        raise ShapeError(f"output shape {y.shape} != target shape {target.shape}")
    if y.size == 0:
        raise ShapeError("empty loss input")
    return float(np.mean((y - target) ** 2))


def backward(params: ModelParams, x, targets) -> tuple[float, ModelParams]:
    """Batch-mean MSE and its gradient with respect to every parameter."""
    x = _check_input(params, x)
    if x.ndim == 1:
        x = x[None, :]
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    out_dim = params.weights[-1].shape[1]
    if targets.shape != (x.shape[0], out_dim):
        raise ShapeError(f"targets shape {targets.shape} != ({x.shape[0]}, {out_dim})")

    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    # overflow surfaces as a non-finite loss or gradient, handled by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        activations, pre = _forward_cache(params, x)
        diff = activations[-1] - targets
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size
        for layer in range(params.n_layers - 1, -1, -1):
            grad_w[layer] = activations[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ params.weights[layer].T) * (pre[layer - 1] > 0)
    return loss, ModelParams(grad_w, grad_b)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 30
    lr_max: float = 5e-4
    lr_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0.0 <= self.lr_min <= self.lr_max):
            raise ConfigError("need 0 <= lr_min <= lr_max")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("eps must be positive and weight_decay non-negative")


@dataclass
class OptimState:
    """AdamW moments plus the cosine schedule over ``total_steps`` updates."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    lr_max: float
    lr_min: float = 0.0
    total_steps: int = 1
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def create(cls, params: ModelParams, total_steps: int, config: TrainConfig | None = None,
               **overrides) -> "OptimState":
        config = config or TrainConfig()
        kw = dict(lr_max=config.lr_max, lr_min=config.lr_min, beta1=config.beta1,
                  beta2=config.beta2, eps=config.eps, weight_decay=config.weight_decay)
        kw.update(overrides)
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], total_steps=int(total_steps), **kw)


def cosine_lr(state: OptimState, t: int) -> float:
    """Single-cycle cosine decay from ``lr_max`` at 0 to ``lr_min`` at ``total_steps``."""
    T = state.total_steps
    if t >= T:
        return state.lr_min
    t = max(t, 0)
    return state.lr_min + 0.5 * (state.lr_max - state.lr_min) * (1.0 + math.cos(math.pi * t / T))


def adamw_step(state: OptimState, params: ModelParams, grads: ModelParams) -> tuple[OptimState, ModelParams]:
    """One decoupled-weight-decay Adam update; returns new state and params."""
    g_arrays = grads.arrays()
    p_arrays = params.arrays()
    if len(g_arrays) != len(p_arrays) or any(g.shape != p.shape for g, p in zip(g_arrays, p_arrays)):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise TrainingDivergedError(f"non-finite gradient at step {state.t}")

    lr = cosine_lr(state, state.t)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        new_p.append(p - lr * (m_hat / (np.sqrt(v_hat) + state.eps)) - lr * state.weight_decay * p)
        new_m.append(m)
        new_v.append(v)
    return replace(state, m=new_m, v=new_v, t=t), ModelParams.from_arrays(new_p)


@dataclass
class TrainResult:
    params: ModelParams
    loss_history: list[float] = field(default_factory=list)


def fit(mlp_config: MlpConfig, train_config: TrainConfig, x, y,
        rng: np.random.Generator | None = None) -> TrainResult:
    """Train on raw ``(n, input_dim)`` inputs and ``(n, output_dim)`` regression targets.

    Data are reshuffled every epoch from ``rng`` (default: seeded from
    ``train_config.seed``).  The loss history holds the mean mini-batch loss
    of each epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if x.shape != (n, mlp_config.input_dim) or y.shape != (n, mlp_config.output_dim):
        raise ShapeError(
            f"data shapes {x.shape}, {y.shape} do not fit layer dims {mlp_config.layer_dims}")
    if rng is None:
        rng = np.random.default_rng(train_config.seed)

    bs = train_config.batch_size
    steps_per_epoch = -(-n // bs)
    params = init_params(mlp_config)
    state = OptimState.create(params, train_config.epochs * steps_per_epoch, train_config)
    history = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = backward(params, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch}")
            state, params = adamw_step(state, params, grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return TrainResult(params, history)


def train(mlp_config: MlpConfig, train_config: TrainConfig, dataset, encoding: Encoding,
          scale: OrdinalScale, rng: np.random.Generator | None = None) -> TrainResult:
    """Train on a :class:`~ordreg.data.Dataset` with targets from ``encoding``."""
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    expected = vector_length(encoding, scale.class_count) * dataset.n_findings
    if mlp_config.output_dim != expected:
        raise ConfigError(f"output_dim {mlp_config.output_dim} != d * L = {expected}")
    targets = encode_labels(encoding, scale, dataset.labels)
    return fit(mlp_config, train_config, dataset.features, targets, rng=rng)


def save_checkpoint(path, params: ModelParams, mlp_config: MlpConfig, extra: dict | None = None) -> None:
    """JSON checkpoint with config, seeds and row-major weights.

    Floats are written with ``repr`` precision, so loading gives back the
    exact same bits.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "mlp": {**asdict(mlp_config), "hidden_dims": list(mlp_config.hidden_dims)},
        "layers": [
            {"weight_shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[ModelParams, MlpConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    config = MlpConfig(**doc["mlp"])
    weights, biases = [], []
    for layer in doc["layers"]:
        weights.append(np.array(layer["weight"], dtype=np.float64).reshape(layer["weight_shape"]))
        biases.append(np.array(layer["bias"], dtype=np.float64))
    params = ModelParams(weights, biases)
    dims = config.layer_dims
    if [w.shape for w in weights] != list(zip(dims[:-1], dims[1:])):
        raise DataError(f"{path}: weight shapes do not match config")
    return params, config, doc.get("extra", {})
