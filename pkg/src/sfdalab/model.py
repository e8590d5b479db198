"""Three-linear-layer network: two layers form the feature extractor,
one linear classifier head maps features to class logits.

Forward, reverse-mode gradients, and SGD-with-momentum updates are written
out by hand so every training objective can be checked against the
finite-difference oracle. Layout::

    x (bs, d_in) -> W1,b1 -> ReLU -> W2,b2 -> features Z (bs, h_feat)
                 -> Wc,bc -> logits -> softmax -> P (bs, C)

ReLU is applied after the first layer only, and its subgradient at 0 is
fixed to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError, ShapeError
from .numerics import as_matrix, softmax_rows

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wc", "bc")

CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    """Parameters of the feature extractor plus classifier head.

    ``velocity`` holds the per-parameter momentum buffers, zero at init.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray
    seed: int = 0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.velocity:
            self.velocity = {k: np.zeros_like(self.params()[k]) for k in PARAM_NAMES}

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def h1(self) -> int:
        return self.W1.shape[1]

    @property
    def h_feat(self) -> int:
        return self.W2.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Wc.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def clone(self) -> "MlpModel":
        return MlpModel(
            **{k: v.copy() for k, v in self.params().items()},
            seed=self.seed,
            velocity={k: v.copy() for k, v in self.velocity.items()},
        )

    def reset_velocity(self) -> None:
        """Zero the momentum buffers; every training run starts fresh."""
        self.velocity = {k: np.zeros_like(self.params()[k]) for k in PARAM_NAMES}


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward evaluation."""

    X: np.ndarray
    pre1: np.ndarray      # first-layer pre-activation
    hidden: np.ndarray    # ReLU output
    features: np.ndarray  # Z, second linear layer output
    logits: np.ndarray
    P: np.ndarray         # softmax rows


def init_model(d_in: int, h1: int, h_feat: int, n_classes: int, seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases, zero momentum; deterministic per seed."""
    for name, dim in (("d_in", d_in), ("h1", h1), ("h_feat", h_feat), ("n_classes", n_classes)):
        if dim < 1:
            raise ConfigError(f"{name} must be >= 1, got {dim}")
    rng = np.random.Generator(np.random.PCG64(seed))

    def glorot(fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    return MlpModel(
        W1=glorot(d_in, h1),
        b1=np.zeros(h1),
        W2=glorot(h1, h_feat),
        b2=np.zeros(h_feat),
        Wc=glorot(h_feat, n_classes),
        bc=np.zeros(n_classes),
        seed=seed,
    )


def forward(model: MlpModel, X) -> ForwardCache:
    """Deterministic batch forward pass; rows are independent."""
    X = as_matrix(X, "X")
    if X.shape[1] != model.d_in:
        raise ShapeError(f"input has {X.shape[1]} columns, model expects {model.d_in}")
    pre1 = X @ model.W1 + model.b1
    hidden = np.maximum(pre1, 0.0)
    features = hidden @ model.W2 + model.b2
    logits = features @ model.Wc + model.bc
    P = softmax_rows(logits)
    return ForwardCache(X=X, pre1=pre1, hidden=hidden, features=features, logits=logits, P=P)


def softmax_vjp(P: np.ndarray, dP: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    inner = np.sum(dP * P, axis=1, keepdims=True)
    return P * (dP - inner)


def backward(model: MlpModel, cache: ForwardCache, dL_dP) -> dict[str, np.ndarray]:
    """Exact parameter gradients of any scalar loss given its gradient w.r.t. P."""
    dL_dP = as_matrix(dL_dP, "dL_dP")
    if dL_dP.shape != cache.P.shape:
        raise ShapeError(f"dL_dP shape {dL_dP.shape} does not match predictions {cache.P.shape}")
    if cache.X.shape[1] != model.d_in or cache.logits.shape[1] != model.n_classes \
            or cache.hidden.shape[1] != model.h1 or cache.features.shape[1] != model.h_feat:
        raise ShapeError("cache shapes do not match this model (stale cache)")

    dlogits = softmax_vjp(cache.P, dL_dP)
    dWc = cache.features.T @ dlogits
    dbc = dlogits.sum(axis=0)
    dZ = dlogits @ model.Wc.T
    dW2 = cache.hidden.T @ dZ
    db2 = dZ.sum(axis=0)
    dH = dZ @ model.W2.T
    dpre1 = dH * (cache.pre1 > 0.0)  # ReLU'(0) := 0
    dW1 = cache.X.T @ dpre1
    db1 = dpre1.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2, "Wc": dWc, "bc": dbc}


def sgd_step(model: MlpModel, grads: dict[str, np.ndarray], lr: float, momentum: float) -> MlpModel:
    """In-place heavy-ball update: v <- momentum*v + g; theta <- theta - lr*v."""
    if lr <= 0:
        raise ConfigError(f"lr must be > 0, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
    for name in PARAM_NAMES:
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
        if g.shape != model.params()[name].shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        v = model.velocity[name]
        v *= momentum
        v += g
        getattr(model, name)[...] -= lr * v
    return model


def predict_labels(model: MlpModel, X) -> np.ndarray:
    """Argmax class per row; ties resolved to the lower class index."""
    return np.argmax(forward(model, X).P, axis=1)


def get_flat_params(model: MlpModel) -> np.ndarray:
    return np.concatenate([model.params()[k].ravel() for k in PARAM_NAMES])


def set_flat_params(model: MlpModel, flat) -> MlpModel:
    flat = np.asarray(flat, dtype=np.float64).ravel()
    if flat.size != model.n_params():
        raise ShapeError(f"expected {model.n_params()} values, got {flat.size}")
    off = 0
    for name in PARAM_NAMES:
        p = model.params()[name]
        p[...] = flat[off:off + p.size].reshape(p.shape)
        off += p.size
    return model


def flatten_grads(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(grads[k]).ravel() for k in PARAM_NAMES])


def save_checkpoint(model: MlpModel, path) -> None:
    """JSON checkpoint: dims, seed, flat row-major parameter arrays.

    Momentum buffers are not persisted; a loaded model starts a fresh
    optimizer state.
    """
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "dims": {"d_in": model.d_in, "h1": model.h1,
                 "h_feat": model.h_feat, "n_classes": model.n_classes},
        "seed": model.seed,
        "params": {k: model.params()[k].ravel().tolist() for k in PARAM_NAMES},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> MlpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    d = doc["dims"]
    shapes = {
        "W1": (d["d_in"], d["h1"]), "b1": (d["h1"],),
        "W2": (d["h1"], d["h_feat"]), "b2": (d["h_feat"],),
        "Wc": (d["h_feat"], d["n_classes"]), "bc": (d["n_classes"],),
    }
    params = {}
    for name, shape in shapes.items():
        arr = np.asarray(doc["params"][name], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise InvalidInputError(f"checkpoint parameter {name} has wrong length")
        params[name] = arr.reshape(shape)
    return MlpModel(**params, seed=int(doc.get("seed", 0)))
