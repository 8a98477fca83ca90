"""Single-hidden-layer perceptron: sigmoid hidden layer, softmax output,
cross-entropy with an L2 penalty on weights (biases are not penalised),
trained by full-batch gradient descent."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels as K

log = logging.getLogger(__name__)

OUTPUTS = {"softmax": K.SOFTMAX, "sigmoid": K.SIGMOID}


class TrainingError(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    max_iterations: int = 2000
    grad_tolerance: float = 1e-5
    seed: int = 0
    init_range: float = 0.5
    # "sigmoid" = sigmoid outputs with squared error, kept for comparison runs
    output: str = "softmax"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if not self.grad_tolerance > 0:
            raise ValueError("grad_tolerance must be positive")
        if not self.init_range >= 0:
            raise ValueError("init_range must be nonnegative")
        if self.output not in OUTPUTS:
            raise ValueError(f"output must be one of {sorted(OUTPUTS)}")

    def to_dict(self):
        return asdict(self)


@dataclass
class Network:
    W1: np.ndarray  # (d_hidden, d_in)
    b1: np.ndarray
    W2: np.ndarray  # (d_out, d_hidden)
    b2: np.ndarray
    decay: float = 0.0
    output: str = "softmax"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.W1 = np.ascontiguousarray(self.W1, dtype=float)
        self.b1 = np.ascontiguousarray(self.b1, dtype=float)
        self.W2 = np.ascontiguousarray(self.W2, dtype=float)
        self.b2 = np.ascontiguousarray(self.b2, dtype=float)
        h, d = self.W1.shape
        c = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (c, h) or self.b2.shape != (c,):
            raise ValueError("inconsistent weight shapes")
        if h < 1 or d < 1 or c < 2:
            raise ValueError("need d_in >= 1, d_hidden >= 1, d_out >= 2")
        if self.decay < 0:
            raise ValueError("decay must be nonnegative")

    @property
    def d_in(self):
        return self.W1.shape[1]

    @property
    def d_hidden(self):
        return self.W1.shape[0]

    @property
    def d_out(self):
        return self.W2.shape[0]

    @property
    def mode(self):
        return OUTPUTS[self.output]

    def params(self):
        return self.W1, self.b1, self.W2, self.b2

    def copy(self) -> "Network":
        return Network(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(),
                       self.decay, self.output, dict(self.info))

    def to_dict(self):
        return {
            "dims": [self.d_in, self.d_hidden, self.d_out],
            "decay": self.decay,
            "output": self.output,
            "w1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.W2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "Network":
        net = cls(np.array(doc["w1"], dtype=float).reshape(doc["dims"][1], doc["dims"][0]),
                  doc["b1"], np.array(doc["w2"], dtype=float).reshape(doc["dims"][2], doc["dims"][1]),
                  doc["b2"], float(doc["decay"]), doc.get("output", "softmax"))
        return net


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    label: int


def init(d_in, d_hidden, d_out=5, decay=0.0, seed=0, init_range=0.5, output="softmax") -> Network:
    """Uniform [-init_range, init_range] weights and biases from a seeded
    generator, drawn in the order W1, b1, W2, b2."""
    if min(d_in, d_hidden, d_out) < 1:
        raise ValueError("network dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    r = float(init_range)
    W1 = rng.uniform(-r, r, size=(d_hidden, d_in))
    b1 = rng.uniform(-r, r, size=d_hidden)
    W2 = rng.uniform(-r, r, size=(d_out, d_hidden))
    b2 = rng.uniform(-r, r, size=d_out)
    if r == 0:
        W1, b1, W2, b2 = (np.zeros_like(a) for a in (W1, b1, W2, b2))
    return Network(W1, b1, W2, b2, float(decay), output)


def _check_X(net, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or (X.shape[0] and X.shape[1] != net.d_in):
        raise ValueError(f"expected rows of width {net.d_in}, got shape {X.shape}")
    return X


def _check_y(net, X, y):
    y = np.asarray(y)
    if y.shape != (X.shape[0],) or X.shape[0] < 1:
        raise ValueError("need one label per row and at least one row")
    if y.min() < 0 or y.max() >= net.d_out:
        raise ValueError("label out of range")
    return y.astype(np.int64)


def predict_proba(net: Network, X) -> np.ndarray:
    X = _check_X(net, X)
    if X.shape[0] == 0:
        return np.zeros((0, net.d_out))
    return K.forward(X, *net.params(), net.mode)


def forward(net: Network, x) -> Prediction:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d_in,):
        raise ValueError(f"expected vector of length {net.d_in}, got shape {x.shape}")
    p = predict_proba(net, x[None, :])[0]
    return Prediction(p, int(np.argmax(p)))


def predict_batch(net: Network, X) -> list[Prediction]:
    P = predict_proba(net, X)
    return [Prediction(p, int(np.argmax(p))) for p in P]


def predict_labels(net: Network, X) -> np.ndarray:
    P = predict_proba(net, X)
    return P.argmax(axis=1) if len(P) else np.zeros(0, dtype=int)


def loss(net: Network, X, y) -> float:
    """Mean cross-entropy plus ``decay * sum(w**2)`` over W1 and W2."""
    X = _check_X(net, X)
    y = _check_y(net, X, y)
    return float(K.loss_grad(X, y, *net.params(), net.decay, net.mode)[0])


def gradient(net: Network, X, y) -> Network:
    """Analytic gradient of ``loss`` packed into a Network-shaped object."""
    X = _check_X(net, X)
    y = _check_y(net, X, y)
    _, gW1, gb1, gW2, gb2 = K.loss_grad(X, y, *net.params(), net.decay, net.mode)
    return Network(gW1, gb1, gW2, gb2, 0.0, net.output)


def train(net: Network, X, y, cfg: TrainConfig | None = None) -> Network:
    """Full-batch gradient descent from ``net`` (not modified).

    Stops after ``cfg.max_iterations`` updates or once the gradient's
    infinity norm drops below ``cfg.grad_tolerance``. If the final loss
    exceeds the starting loss the starting network is returned with
    ``info["descended"] = False``.
    """
    cfg = cfg or TrainConfig()
    X = _check_X(net, X)
    y = _check_y(net, X, y)
    W1, b1, W2, b2, iters, status, l0, l1 = K.train(
        X, y, *net.params(), net.decay, cfg.learning_rate,
        cfg.max_iterations, cfg.grad_tolerance, net.mode)
    if status == K.STATUS_NONFINITE:
        raise TrainingError("loss became non-finite", iters)
    info = {"iterations": int(iters), "converged": status == K.STATUS_CONVERGED,
            "initial_loss": float(l0), "final_loss": float(l1), "descended": True}
    if l1 > l0:
        log.warning("training increased the loss (%g -> %g); keeping the initial network", l0, l1)
        out = net.copy()
        info.update(final_loss=float(l0), descended=False)
        out.info = info
        return out
    return Network(W1, b1, W2, b2, net.decay, net.output, info)
