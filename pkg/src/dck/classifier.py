"""Feed-forward softmax classifier trained with minibatch Adam and early stopping."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ConfigError, DataError, DCKError, RngSeedPolicy

log = logging.getLogger(__name__)


class TrainingError(DCKError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (128, 128, 64)
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    clip_floor: float = 1e-12
    standardize_covariates: bool = False
    weight_decay: float = 0.0
    # False keeps the last epoch's parameters (fixed-length training) instead of the best validation epoch
    restore_best: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "eps_adam", "clip_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.val_fraction <= 0.5:
            raise ConfigError("val_fraction must be in (0, 0.5]")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if not self.clip_floor < 0.5:
            raise ConfigError("clip_floor must be below 0.5")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class NetworkParams:
    weights: list
    biases: list
    # feature scaling applied before the first layer (identity unless covariates were standardized)
    shift: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DataError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DataError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise DataError(f"layer {i} input width {w.shape[0]} != previous output")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {i} has non-finite parameters")
        if self.shift is None:
            self.shift = np.zeros(self.n_in)
        if self.scale is None:
            self.scale = np.ones(self.n_in)

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                             self.shift.copy(), self.scale.copy())

    def to_dict(self) -> dict:
        return {"widths": self.widths,
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        p = cls([np.asarray(w, dtype=np.float64) for w in d["weights"]],
                [np.asarray(b, dtype=np.float64) for b in d["biases"]],
                None if d.get("shift") is None else np.asarray(d["shift"], dtype=np.float64),
                None if d.get("scale") is None else np.asarray(d["scale"], dtype=np.float64))
        if "widths" in d and list(d["widths"]) != p.widths:
            raise DataError(f"declared widths {d['widths']} do not match arrays {p.widths}")
        return p


def init_params(widths, rng: np.random.Generator) -> NetworkParams:
    """He-uniform weights, zero biases."""
    ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        lim = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return NetworkParams(ws, bs)


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward(params: NetworkParams, x):
    a = [(x - params.shift) / params.scale]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = a[-1] @ w + b
        a.append(softmax(h) if i == last else np.maximum(h, 0.0))
    return a


def _check_features(params: NetworkParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.n_in:
        raise DataError(f"features have shape {x.shape}; network expects width {params.n_in}")
    return x


def forward(params: NetworkParams, features) -> np.ndarray:
    """Class probabilities, one row per feature row (unclipped softmax)."""
    return _forward(params, _check_features(params, features))[-1]


def loss(probs, onehot, floor: float = 1e-12) -> float:
    z = np.clip(np.asarray(probs, dtype=np.float64), floor, 1.0 - floor)
    y = np.asarray(onehot, dtype=np.float64)
    if z.shape != y.shape:
        raise DataError(f"probabilities {z.shape} and labels {y.shape} differ in shape")
    return float(-np.sum(y * np.log(z)) / len(y))


def backward(params: NetworkParams, features, onehot):
    """(loss, weight gradients, bias gradients) of the mean cross-entropy."""
    x = _check_features(params, features)
    y = np.asarray(onehot, dtype=np.float64)
    acts = _forward(params, x)
    n = len(x)
    delta = (acts[-1] - y) / n
    gw, gb = [None] * len(params.weights), [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return loss(acts[-1], y, 1e-300), gw, gb


class Adam:
    def __init__(self, params: NetworkParams, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params.weights + params.biases]
        self.v = [np.zeros_like(p) for p in params.weights + params.biases]

    def step(self, params: NetworkParams, gw, gb):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params.weights + params.biases, gw + gb, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    params: NetworkParams
    history: list          # (epoch, train_loss, val_loss)
    best_epoch: int
    stopped_epoch: int

    def log_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss"]
        rows += [f"{e},{tr:.10g},{va:.10g}" for e, tr, va in self.history]
        return "\n".join(rows) + "\n"


def split_indices(n: int, val_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    if n - n_val < 1:
        raise DataError(f"{n} rows leave nothing to train on")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(features, labels, n_classes: int, config: TrainConfig = TrainConfig(),
          n_covariates: int = 0) -> TrainResult:
    """Fit a network to integer class labels; returns the best-validation parameters."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(labels):
        raise DataError("features must be 2-D with one row per label")
    if n_classes < 2 or np.any(labels < 0) or np.any(labels >= n_classes):
        raise DataError("labels must lie in [0, n_classes) with n_classes >= 2")
    if len(np.unique(labels)) < 2:
        raise DataError("need at least two classes present")
    policy = RngSeedPolicy(config.seed)
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    tr, va = split_indices(len(x), config.val_fraction, policy.generator("split"))

    params = init_params([x.shape[1], *config.hidden, n_classes], policy.generator("weight-init"))
    if config.standardize_covariates and n_covariates:
        cols = slice(x.shape[1] - n_covariates, None)
        params.shift[cols] = x[tr, cols].mean(axis=0)
        sd = x[tr, cols].std(axis=0)
        params.scale[cols] = np.where(sd > 0, sd, 1.0)

    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps_adam)
    shuffle = policy.generator("train-shuffle")
    best, best_val, best_epoch, stale = params.copy(), np.inf, 0, 0
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = tr[shuffle.permutation(len(tr))]
        for i in range(0, len(order), config.batch_size):
            b = order[i:i + config.batch_size]
            _, gw, gb = backward(params, x[b], y[b])
            if config.weight_decay:
                gw = [g + config.weight_decay * w for g, w in zip(gw, params.weights)]
            opt.step(params, gw, gb)
        train_loss = loss(forward(params, x[tr]), y[tr], config.clip_floor)
        val_loss = loss(forward(params, x[va]), y[va], config.clip_floor)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)) or not all(
                np.all(np.isfinite(w)) for w in params.weights):
            raise TrainingError(f"training diverged at epoch {epoch} (loss {train_loss})")
        history.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best, best_val, best_epoch, stale = params.copy(), val_loss, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    log.info("trained %d epochs, best epoch %d (val loss %.4f)", epoch, best_epoch, best_val)
    if not config.restore_best:
        return TrainResult(params, history, epoch, epoch)
    return TrainResult(best, history, best_epoch, epoch)


def predict_proba(params: NetworkParams, features, chunk: int = 8192) -> np.ndarray:
    x = _check_features(params, features)
    return np.vstack([forward(params, x[i:i + chunk]) for i in range(0, len(x), chunk)]) if len(x) \
        else np.zeros((0, params.n_classes))
