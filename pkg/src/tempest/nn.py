"""Three-layer perceptron (input, one hidden layer, softmax output) in plain numpy.

Used for both the victim and the substitute. Everything runs in float64 so the
finite-difference and hand-computed checks in the test-suite can be tight.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, TrainingDivergedError

DTYPE = np.float64

ACTIVATIONS = ("relu", "tanh")

_MAGIC = b"TMLP"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIII8s")


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Weights of an affine -> activation -> affine -> softmax network.

    ``w1`` has shape ``(in_dim, hidden_dim)`` and ``w2`` shape
    ``(hidden_dim, out_dim)``; inputs are row vectors, so ``h = act(x @ w1 + b1)``.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"
    loss_history: tuple = field(default=())

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")
        in_dim, hidden = np.shape(self.w1)
        if np.shape(self.b1) != (hidden,):
            raise InvalidArgumentError("b1 length must equal hidden width")
        if np.shape(self.w2)[0] != hidden or np.shape(self.b2) != (np.shape(self.w2)[1],):
            raise InvalidArgumentError("second layer shapes disagree with hidden width")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def metadata(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "hidden_dim": self.hidden_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
        }

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "MlpModel":
        return replace(self, **{k: np.array(v, dtype=DTYPE) for k, v in self.params().items()})

    def equals(self, other: "MlpModel") -> bool:
        return self.activation == other.activation and all(
            np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values())
        )


AUTO = "auto"


def resolve_batch_size(batch_size, n: int) -> int:
    """Concrete mini-batch size for ``n`` training rows.

    ``"auto"`` gives about 64 updates per epoch, clipped to [1, 32]: a query
    set of a few dozen rows is trained online, large ones in batches of 32.
    Integer sizes are capped at ``n`` (full batch).
    """
    if batch_size == AUTO:
        return int(min(32, max(1, n // 64)))
    return int(min(batch_size, n))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int | str = "auto"  # int, or "auto" (see resolve_batch_size)
    target_mode: str = "soft"  # "soft" | "hard"
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.batch_size != AUTO and not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise InvalidArgumentError("batch_size must be an integer >= 1 or 'auto'")
        if self.target_mode not in ("soft", "hard"):
            raise InvalidArgumentError(f"unknown target_mode {self.target_mode!r}")


def init_model(in_dim: int, hidden_dim: int = 90, out_dim: int = 2, seed: int = 0,
               activation: str = "relu") -> MlpModel:
    """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
    for name, dim in (("in_dim", in_dim), ("hidden_dim", hidden_dim), ("out_dim", out_dim)):
        if int(dim) < 1:
            raise InvalidArgumentError(f"{name} must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (in_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + out_dim))
    return MlpModel(
        w1=rng.uniform(-lim1, lim1, size=(in_dim, hidden_dim)),
        b1=np.zeros(hidden_dim, dtype=DTYPE),
        w2=rng.uniform(-lim2, lim2, size=(hidden_dim, out_dim)),
        b2=np.zeros(out_dim, dtype=DTYPE),
        activation=activation,
    )


def _act(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(kind, z, h):
    if kind == "relu":
        # derivative at exactly 0 taken as 0
        return (z > 0).astype(DTYPE)
    return 1.0 - h * h


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_inputs(model, X):
    X = np.asarray(X, dtype=DTYPE)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise InvalidArgumentError(
            f"expected inputs with {model.in_dim} features, got shape {np.shape(X)}"
        )
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("inputs contain non-finite values")
    return X


def _forward_cache(model, X):
    z1 = X @ model.w1 + model.b1
    h = _act(model.activation, z1)
    logits = h @ model.w2 + model.b2
    return z1, h, logits


def predict_proba(model: MlpModel, X) -> np.ndarray:
    """Row-wise softmax probabilities for a batch of encoded, normalized inputs."""
    X = _check_inputs(model, X)
    _, _, logits = _forward_cache(model, X)
    return np.exp(_log_softmax(logits))


def forward(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 1:
        raise InvalidArgumentError("forward takes a single feature vector")
    return predict_proba(model, x)[0]


def predict(model: MlpModel, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. lowest class index on ties
    return np.argmax(predict_proba(model, X), axis=1)


def as_target_matrix(targets, out_dim: int) -> np.ndarray:
    """Class indices become one-hot rows; probability rows pass through."""
    t = np.asarray(targets)
    if t.ndim == 1:
        if t.size and (not np.issubdtype(t.dtype, np.integer) or t.min() < 0 or t.max() >= out_dim):
            raise InvalidArgumentError(f"class indices must be integers in [0, {out_dim})")
        out = np.zeros((t.shape[0], out_dim), dtype=DTYPE)
        out[np.arange(t.shape[0]), t] = 1.0
        return out
    if t.ndim != 2 or t.shape[1] != out_dim:
        raise InvalidArgumentError(f"target rows must have length {out_dim}")
    return t.astype(DTYPE)


def loss(model: MlpModel, X, targets) -> float:
    X = _check_inputs(model, X)
    T = as_target_matrix(targets, model.out_dim)
    _, _, logits = _forward_cache(model, X)
    return float(-(T * _log_softmax(logits)).sum(axis=1).mean())


def loss_and_gradients(model: MlpModel, X, targets):
    """Mean cross-entropy and its gradient w.r.t. every parameter and the inputs.

    Returns ``(loss, grads)`` where ``grads`` has keys ``w1, b1, w2, b2, x``.
    """
    X = _check_inputs(model, X)
    T = as_target_matrix(targets, model.out_dim)
    return _loss_and_gradients(model, X, T)


def _loss_and_gradients(model, X, T):
    n = X.shape[0]
    z1, h, logits = _forward_cache(model, X)
    logp = _log_softmax(logits)
    value = float(-(T * logp).sum(axis=1).mean())
    # p * sum(t) - t also covers target rows that do not sum exactly to 1
    dlogits = (np.exp(logp) * T.sum(axis=1, keepdims=True) - T) / n
    dh = dlogits @ model.w2.T
    dz1 = dh * _act_grad(model.activation, z1, h)
    grads = {
        "w1": X.T @ dz1,
        "b1": dz1.sum(axis=0),
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(axis=0),
        "x": dz1 @ model.w1.T,
    }
    return value, grads


def input_gradient(model: MlpModel, X, targets) -> np.ndarray:
    """Per-row gradient of each row's own loss with respect to that row."""
    X = _check_inputs(model, X)
    _, grads = loss_and_gradients(model, X, targets)
    # the batch mean scales every row's gradient by 1/n
    return grads["x"] * X.shape[0]


def train(model: MlpModel, inputs, targets, config: TrainConfig = TrainConfig()) -> MlpModel:
    """Mini-batch SGD on mean cross-entropy; returns a new, trained model.

    The input model is left untouched. The returned model carries the
    full-dataset loss after every epoch in ``loss_history``.
    """
    X = np.asarray(inputs, dtype=DTYPE)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("training needs a nonempty 2-D input matrix")
    X = _check_inputs(model, X)
    T = as_target_matrix(targets, model.out_dim)
    if T.shape[0] != X.shape[0]:
        raise InvalidArgumentError("inputs and targets differ in length")
    if config.target_mode == "hard":
        T = as_target_matrix(np.argmax(T, axis=1), model.out_dim)

    params = {k: np.array(v, dtype=DTYPE) for k, v in model.params().items()}
    current = replace(model, **params)
    n = X.shape[0]
    batch = resolve_batch_size(config.batch_size, n)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, grads = _loss_and_gradients(current, X[idx], T[idx])
            for key in params:
                params[key] -= config.learning_rate * grads[key]
        epoch_loss = loss(current, X, T)
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(p)) for p in params.values()):
            raise TrainingDivergedError(epoch, epoch_loss)
        history.append(epoch_loss)
    for p in params.values():
        p.setflags(write=False)
    return replace(current, loss_history=tuple(history))


def gradient_check(model: MlpModel, batch, targets, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all parameters."""
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    X = _check_inputs(model, batch)
    if X.shape[0] > 8:
        raise InvalidArgumentError("gradient_check expects at most 8 rows")
    _, analytic = loss_and_gradients(model, X, targets)
    params = {k: np.array(v, dtype=DTYPE) for k, v in model.params().items()}
    worst = 0.0
    for key, arr in params.items():
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            up = loss(replace(model, **params), X, targets)
            arr[idx] = orig - epsilon
            down = loss(replace(model, **params), X, targets)
            arr[idx] = orig
            numeric = (up - down) / (2 * epsilon)
            a = analytic[key][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def model_to_bytes(model: MlpModel) -> bytes:
    """Versioned flat encoding: fixed header, then w1, b1, w2, b2 as little-endian float64."""
    header = _HEADER.pack(_MAGIC, _FORMAT_VERSION, model.in_dim, model.hidden_dim,
                          model.out_dim, model.activation.encode("ascii").ljust(8, b"\0"))
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params().values())
    return header + body


def model_from_bytes(blob: bytes) -> MlpModel:
    if len(blob) < _HEADER.size:
        raise InvalidArgumentError("model blob shorter than header")
    magic, version, in_dim, hidden, out_dim, act = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise InvalidArgumentError("not a model file (bad magic)")
    if version != _FORMAT_VERSION:
        raise InvalidArgumentError(f"unsupported model format version {version}")
    shapes = [(in_dim, hidden), (hidden,), (hidden, out_dim), (out_dim,)]
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected:
        raise InvalidArgumentError(f"model blob has {len(blob)} bytes, expected {expected}")
    arrays, offset = [], _HEADER.size
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
                      .astype(DTYPE).reshape(shape))
        offset += 8 * count
    return MlpModel(*arrays, activation=act.rstrip(b"\0").decode("ascii"))


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> MlpModel:
    return model_from_bytes(Path(path).read_bytes())
