"""Small numpy neural networks: a back-propagation MLP and a 1-D CNN.

Architectures follow two fixed layer tables. The first dense layer halves the
input width; every later width is either fixed or derived from shape algebra
(valid convolutions, floor-division pooling), and construction fails fast if
the input is too narrow for the layer stack.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

N_CLASSES = 3
CNN_MIN_HIDDEN = 15  # smallest length that survives three conv(k=2)+pool(2) stages
FINAL_WEIGHT_SCALE = 0.1
FINAL_BIAS = 1.0


# --- layers --------------------------------------------------------------------

class Layer:
    kind = ""
    params: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train, rng):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.params = {"W": np.zeros((n_out, n_in)), "b": np.zeros(n_out)}

    def init(self, rng, final: bool = False):
        """He-uniform for hidden layers. The output layer starts small with a
        positive bias so the final ReLU is active for every input at step 0."""
        if final:
            bound = FINAL_WEIGHT_SCALE / np.sqrt(self.n_in)
            self.params["W"] = rng.uniform(-bound, bound, (self.n_out, self.n_in))
            self.params["b"] = np.full(self.n_out, FINAL_BIAS)
        else:
            bound = np.sqrt(6.0 / self.n_in)
            self.params["W"] = rng.uniform(-bound, bound, (self.n_out, self.n_in))
            self.params["b"] = np.zeros(self.n_out)

    def forward(self, x, train, rng):
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, g):
        self.grads["W"] = g.T @ self._x
        self.grads["b"] = g.sum(axis=0)
        return g @ self.params["W"]

    def spec(self):
        return {"kind": self.kind, "in": self.n_in, "out": self.n_out}


class Conv1d(Layer):
    """Valid cross-correlation with stride 1 over (batch, channels, length)."""

    kind = "conv1d"

    def __init__(self, c_in, c_out, k):
        super().__init__()
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.params = {"W": np.zeros((c_out, c_in, k)), "b": np.zeros(c_out)}

    def init(self, rng, final: bool = False):
        bound = np.sqrt(6.0 / (self.c_in * self.k))
        self.params["W"] = rng.uniform(-bound, bound, (self.c_out, self.c_in, self.k))
        self.params["b"] = np.zeros(self.c_out)

    def forward(self, x, train, rng):
        self._x = x
        W = self.params["W"]
        L = x.shape[2] - self.k + 1
        out = np.einsum("bcl,oc->bol", x[:, :, 0:L], W[:, :, 0])
        for t in range(1, self.k):
            out += np.einsum("bcl,oc->bol", x[:, :, t:t + L], W[:, :, t])
        return out + self.params["b"][None, :, None]

    def backward(self, g):
        x, W = self._x, self.params["W"]
        L = g.shape[2]
        dW = np.empty_like(W)
        dx = np.zeros_like(x)
        for t in range(self.k):
            dW[:, :, t] = np.einsum("bol,bcl->oc", g, x[:, :, t:t + L])
            dx[:, :, t:t + L] += np.einsum("bol,oc->bcl", g, W[:, :, t])
        self.grads["W"] = dW
        self.grads["b"] = g.sum(axis=(0, 2))
        return dx

    def spec(self):
        return {"kind": self.kind, "in_channels": self.c_in, "out_channels": self.c_out, "kernel": self.k}


class MaxPool(Layer):
    """Non-overlapping max over windows of ``k`` along the last axis; the tail is dropped."""

    kind = "maxpool"

    def __init__(self, k):
        super().__init__()
        self.k = k

    def forward(self, x, train, rng):
        L = x.shape[-1] // self.k
        win = x[..., :L * self.k].reshape(*x.shape[:-1], L, self.k)
        self._arg = win.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, g):
        L = g.shape[-1]
        win = np.zeros((*g.shape, self.k))
        np.put_along_axis(win, self._arg[..., None], g[..., None], axis=-1)
        dx = np.zeros(self._shape)
        dx[..., :L * self.k] = win.reshape(*g.shape[:-1], L * self.k)
        return dx

    def spec(self):
        return {"kind": self.kind, "kernel": self.k}


class Dropout(Layer):
    """Inverted dropout: active only in training, survivors scaled by 1/(1-rate)."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0 or rng is None:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, g):
        return g if self._mask is None else g * self._mask

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng):
        self._pos = x > 0
        return np.where(self._pos, x, 0.0)

    def backward(self, g):
        return g * self._pos


class Reshape(Layer):
    """(batch, features) <-> (batch, channels, length)."""

    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x, train, rng):
        self._in = x.shape
        return x.reshape(x.shape[0], *self.shape)

    def backward(self, g):
        return g.reshape(self._in)

    def spec(self):
        return {"kind": self.kind, "shape": list(self.shape)}


def layer_from_spec(s: dict) -> Layer:
    kind = s["kind"]
    if kind == "dense":
        return Dense(s["in"], s["out"])
    if kind == "conv1d":
        return Conv1d(s["in_channels"], s["out_channels"], s["kernel"])
    if kind == "maxpool":
        return MaxPool(s["kernel"])
    if kind == "dropout":
        return Dropout(s["rate"])
    if kind == "relu":
        return ReLU()
    if kind == "reshape":
        return Reshape(s["shape"])
    raise ValueError(f"unknown layer kind {kind!r}")


# --- architectures -----------------------------------------------------------------

@dataclass
class NnArch:
    name: str
    input_width: int
    layers: list  # layer spec dicts

    def to_dict(self):
        return {"name": self.name, "input_width": self.input_width, "layers": self.layers}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], int(d["input_width"]), list(d["layers"]))


def _halve(width):
    h = width // 2
    if h < 1:
        raise ValueError(f"input width {width} is too small to halve")
    return h


def cnn_arch(input_width: int) -> NnArch:
    """Dense halving layer, three conv(k=2)+pool(2) stages (26, 16, 16 channels), dense to 3.

    The halving layer is widened to CNN_MIN_HIDDEN units when the input is
    narrower than twice that, since the conv stack needs that length.
    """
    h = _halve(input_width)
    if h < CNN_MIN_HIDDEN:
        log.warning("cnn: %d inputs halve to %d; widening the first dense layer to %d",
                    input_width, h, CNN_MIN_HIDDEN)
        h = CNN_MIN_HIDDEN
    layers = [{"kind": "dense", "in": input_width, "out": h}, {"kind": "relu"}, {"kind": "dropout", "rate": 0.2},
              {"kind": "reshape", "shape": [1, h]}]
    channels, length = 1, h
    for c_out, rate in ((26, 0.3), (16, 0.4), (16, 0.1)):
        length = length - 2 + 1
        pooled = length // 2
        if pooled < 1:
            raise ValueError(f"input width {input_width} collapses the conv/pool stack to zero length")
        layers += [{"kind": "conv1d", "in_channels": channels, "out_channels": c_out, "kernel": 2},
                   {"kind": "relu"}, {"kind": "dropout", "rate": rate}, {"kind": "maxpool", "kernel": 2}]
        channels, length = c_out, pooled
    flat = channels * length
    layers += [{"kind": "reshape", "shape": [flat]}, {"kind": "dropout", "rate": 0.2},
               {"kind": "dense", "in": flat, "out": N_CLASSES}, {"kind": "relu"}]
    return NnArch("cnn", input_width, layers)


def bpnn_arch(input_width: int) -> NnArch:
    """Dense halving layer, dense (41/69 of that), pool(2), dense 10, dense 5, dense 3."""
    h1 = _halve(input_width)
    h2 = max(2, int(round(h1 * 41 / 69)))
    pooled = h2 // 2
    layers = [
        {"kind": "dense", "in": input_width, "out": h1}, {"kind": "relu"}, {"kind": "dropout", "rate": 0.2},
        {"kind": "dense", "in": h1, "out": h2}, {"kind": "relu"}, {"kind": "dropout", "rate": 0.2},
        {"kind": "maxpool", "kernel": 2},
        {"kind": "dense", "in": pooled, "out": 10}, {"kind": "relu"}, {"kind": "dropout", "rate": 0.2},
        {"kind": "dense", "in": 10, "out": 5}, {"kind": "relu"}, {"kind": "dropout", "rate": 0.1},
        {"kind": "dense", "in": 5, "out": N_CLASSES}, {"kind": "relu"},
    ]
    return NnArch("bpnn", input_width, layers)


def flatten_width(arch: NnArch) -> int | None:
    """Width entering the final dense layer (the conv stack's flattened size for the CNN)."""
    dense = [s for s in arch.layers if s["kind"] == "dense"]
    return dense[-1]["in"]


def check_shapes(arch: NnArch) -> None:
    """Propagate shapes through the stack and raise on any inconsistency."""
    shape = (arch.input_width,)
    for s in arch.layers:
        kind = s["kind"]
        if kind == "dense":
            if len(shape) != 1 or shape[0] != s["in"]:
                raise ValueError(f"dense expects ({s['in']},), got {shape}")
            shape = (s["out"],)
        elif kind == "conv1d":
            if len(shape) != 2 or shape[0] != s["in_channels"]:
                raise ValueError(f"conv1d expects {s['in_channels']} channels, got {shape}")
            shape = (s["out_channels"], shape[1] - s["kernel"] + 1)
        elif kind == "maxpool":
            shape = (*shape[:-1], shape[-1] // s["kernel"])
        elif kind == "reshape":
            if int(np.prod(shape)) != int(np.prod(s["shape"])):
                raise ValueError(f"cannot reshape {shape} to {s['shape']}")
            shape = tuple(s["shape"])
        if min(shape) < 1:
            raise ValueError(f"layer {kind} produced empty shape {shape}")
    if shape != (N_CLASSES,):
        raise ValueError(f"network output shape {shape}, expected ({N_CLASSES},)")


# --- model -------------------------------------------------------------------------

@dataclass
class NnModel:
    arch: NnArch
    layers: list
    rng_seed: int = 0
    epochs_trained: int = 0
    train_hash: str = ""

    @classmethod
    def build(cls, arch: NnArch, seed: int = 0) -> "NnModel":
        check_shapes(arch)
        layers = [layer_from_spec(s) for s in arch.layers]
        rng = np.random.default_rng(seed)
        last = max(i for i, layer in enumerate(layers) if hasattr(layer, "init"))
        for i, layer in enumerate(layers):
            if hasattr(layer, "init"):
                layer.init(rng, final=i == last)
        return cls(arch, layers, seed)

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", layer, name, value

    def forward(self, X, mode: str = "eval", rng=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.arch.input_width:
            raise ValueError(f"{self.arch.name} expects {self.arch.input_width} inputs, got {X.shape[1]}")
        train = mode == "train"
        out = X
        for layer in self.layers:
            out = layer.forward(out, train, rng)
        return out

    def scores(self, X) -> np.ndarray:
        return self.forward(X, "eval")

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.forward(X, "eval"), axis=1)

    def snapshot(self, epochs: int) -> "NnModel":
        m = copy.deepcopy(self)
        m.epochs_trained = epochs
        for layer in m.layers:
            layer.grads = {}
            for attr in ("_x", "_mask", "_pos", "_arg", "_shape", "_in"):
                if hasattr(layer, attr):
                    delattr(layer, attr)
        return m

    def to_dict(self):
        return {
            "arch": self.arch.to_dict(),
            "params": {key: value for key, _, _, value in self.named_params()},
            "rng_seed": int(self.rng_seed),
            "epochs_trained": int(self.epochs_trained),
            "train_hash": self.train_hash,
        }

    @classmethod
    def from_dict(cls, d):
        arch = NnArch.from_dict(d["arch"])
        m = cls(arch, [layer_from_spec(s) for s in arch.layers], int(d["rng_seed"]), int(d["epochs_trained"]),
                d["train_hash"])
        for key, layer, name, _ in list(m.named_params()):
            layer.params[name] = np.asarray(d["params"][key], dtype=np.float64)
        return m


def nn_forward(m: NnModel, x, mode: str = "eval", rng=None) -> np.ndarray:
    return m.forward(x, mode, rng)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(activations, y) -> float:
    z = activations - activations.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(y.size), y].mean())


def nn_loss(m: NnModel, X, y, mode: str = "eval", rng=None) -> float:
    return cross_entropy(m.forward(X, mode, rng), np.asarray(y))


def nn_gradients(m: NnModel, X, y, mode: str = "eval", rng=None):
    """Batch-mean softmax cross-entropy and its exact gradient w.r.t. every parameter.

    Returns (loss, {param_key: gradient}).
    """
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("empty batch")
    act = m.forward(X, mode, rng)
    loss = cross_entropy(act, y)
    g = softmax(act)
    g[np.arange(y.size), y] -= 1.0
    g /= y.size
    for layer in reversed(m.layers):
        g = layer.backward(g)
    grads = {key: layer.grads[name] for key, layer, name, _ in m.named_params()}
    return loss, grads


# --- training ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 0.01
    max_epochs: int = 300
    stop_epochs: tuple = (140, 200, 300)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        stops = list(self.stop_epochs)
        if stops != sorted(stops) or (stops and stops[-1] > self.max_epochs):
            raise ValueError("stop_epochs must be ascending and <= max_epochs")


@dataclass
class LearningCurve:
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def truncated(self, epochs: int) -> "LearningCurve":
        return LearningCurve(self.train_accuracy[:epochs], self.val_accuracy[:epochs], self.loss[:epochs])

    def to_dict(self):
        return {"train_accuracy": np.asarray(self.train_accuracy), "val_accuracy": np.asarray(self.val_accuracy),
                "loss": np.asarray(self.loss)}


def _accuracy(m, X, y):
    if len(y) == 0:
        return float("nan")
    return float(np.mean(m.predict(X) == y))


def nn_train(arch: NnArch, X, y, cfg: TrainConfig, X_val=None, y_val=None):
    """Mini-batch SGD on softmax cross-entropy with per-epoch reshuffling.

    A snapshot is taken at each entry of ``cfg.stop_epochs``; each comes with the
    learning curve up to that epoch. Returns a list of (NnModel, LearningCurve).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty training set")
    X_val = np.zeros((0, X.shape[1])) if X_val is None else np.asarray(X_val, dtype=np.float64)
    y_val = np.zeros(0, dtype=np.int64) if y_val is None else np.asarray(y_val, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    model = NnModel.build(arch, seed=int(rng.integers(2**63)))
    curve = LearningCurve()
    stops = set(cfg.stop_epochs)
    snapshots = []
    last = max(cfg.stop_epochs) if cfg.stop_epochs else cfg.max_epochs
    for epoch in range(1, last + 1):
        order = rng.permutation(y.size)
        losses = []
        for start in range(0, y.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = nn_gradients(model, X[idx], y[idx], "train", rng)
            for key, layer, name, _ in model.named_params():
                layer.params[name] = layer.params[name] - cfg.learning_rate * grads[key]
            losses.append(loss)
        curve.loss.append(float(np.mean(losses)))
        curve.train_accuracy.append(_accuracy(model, X, y))
        curve.val_accuracy.append(_accuracy(model, X_val, y_val))
        if epoch in stops:
            snapshots.append((model.snapshot(epoch), curve.truncated(epoch)))
    return snapshots
