"""Global and local interpretation of a trained network.

``garson`` partitions |input->hidden| x |hidden->output| weight products to
rank design-matrix columns. ``explain_case`` is a tabular LIME: perturb one
record, weight the samples by proximity, and fit a sparse weighted ridge
surrogate on the binary "does this sample agree with x" representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import network as nn
from .dataset import DURATION_CLASSES, DesignMatrix, Record, Transform, apply_transform


# --------------------------------------------------------------------------
# Garson
# --------------------------------------------------------------------------

@dataclass
class ImportanceTable:
    entries: list  # (column name, relative importance), descending

    def to_dict(self):
        return [{"name": n, "importance": q} for n, q in self.entries]

    def as_text(self):
        width = max(len(n) for n, _ in self.entries)
        lines = [f"{'variable':<{width}}  importance"]
        lines += [f"{n:<{width}}  {q:.3f}" for n, q in self.entries]
        return "\n".join(lines) + "\n"


def garson_values(net: nn.Network) -> np.ndarray:
    return garson_weights(net.W1, net.W2)


def garson_weights(W1, W2) -> np.ndarray:
    """Relative importance per input column, in column order, from the
    (hidden, input) and (output, hidden) weight matrices.

    For each output k, contributions |w_ij v_jk| are divided by the hidden
    unit's total incoming |w| and normalised over inputs; the per-output
    shares are averaged and renormalised. Biases play no part. Hidden
    units with no incoming weight and outputs with no incoming weight are
    skipped; a network with no usable path returns uniform shares.
    """
    W = np.abs(np.asarray(W1, dtype=float))
    V = np.abs(np.asarray(W2, dtype=float))
    if W.ndim != 2 or V.ndim != 2 or V.shape[1] != W.shape[0]:
        raise ValueError("weight shapes do not chain")
    incoming = W.sum(axis=1)
    live = incoming > 0
    share = np.zeros_like(W)
    share[live] = W[live] / incoming[live, None]
    # contrib[k, i] = sum_j share[j, i] * |v_kj|
    contrib = V @ share
    totals = contrib.sum(axis=1)
    ok = totals > 0
    d = W.shape[1]
    if not ok.any():
        return np.full(d, 1.0 / d)
    Q = (contrib[ok] / totals[ok, None]).mean(axis=0)
    return Q / Q.sum()


def garson(net, names=None) -> ImportanceTable:
    """Importance table for a Network or a ``(W1, W2)`` pair."""
    q = garson_weights(*net) if isinstance(net, tuple) else garson_values(net)
    names = list(names) if names is not None else [f"x{i}" for i in range(len(q))]
    order = sorted(range(len(q)), key=lambda i: (-q[i], i))
    return ImportanceTable([(names[i], float(q[i])) for i in order])


# --------------------------------------------------------------------------
# LIME
# --------------------------------------------------------------------------

@dataclass
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(d)
    n_features: int = 4
    ridge_lambda: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ValueError("kernel_width must be positive")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if not self.ridge_lambda > 0:
            raise ValueError("ridge_lambda must be positive")

    def width(self, d):
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(d)

    def to_dict(self):
        return {"n_samples": self.n_samples, "kernel_width": self.kernel_width,
                "n_features": self.n_features, "ridge_lambda": self.ridge_lambda,
                "seed": self.seed}


@dataclass
class TrainingStats:
    """Sampling distribution for perturbations, taken from the training set:
    level frequencies per categorical, and per continuous feature the mean,
    sd and quartiles of its standardised column."""

    categorical: dict = field(default_factory=dict)  # name -> {level: freq}
    continuous: dict = field(default_factory=dict)   # name -> {mean, sd, quartiles}

    @classmethod
    def from_training(cls, records, dm: DesignMatrix) -> "TrainingStats":
        schema = dm.transform.schema
        blocks = dm.column_blocks()
        cat, cont = {}, {}
        n = len(records)
        for f in schema.features:
            if f.categorical:
                counts = {}
                for r in records:
                    counts[r.values[f.name]] = counts.get(r.values[f.name], 0) + 1
                cat[f.name] = {lv: counts[lv] / n for lv in f.levels if lv in counts}
            else:
                col = dm.data[:, blocks[f.name][0]]
                cont[f.name] = {"mean": float(col.mean()), "sd": float(col.std(ddof=1)),
                                "quartiles": [float(q) for q in np.quantile(col, [0.25, 0.5, 0.75])]}
        return cls(cat, cont)

    def to_dict(self):
        return {"categorical": self.categorical, "continuous": self.continuous}

    @classmethod
    def from_dict(cls, doc):
        return cls(dict(doc["categorical"]), dict(doc["continuous"]))


@dataclass
class Perturbation:
    design: np.ndarray   # (n_samples, d) standardised encoded rows
    binary: np.ndarray   # (n_samples, n_features) agreement with x
    features: list       # interpretable feature names (schema order)


def _bin(v, edges):
    return np.searchsorted(np.asarray(edges), v, side="left")


def perturb(x: Record, stats: TrainingStats, tf: Transform, n_samples: int, seed: int) -> Perturbation:
    """Sample neighbours of ``x``. Row 0 is ``x`` itself. Categoricals are
    redrawn from training frequencies; continuous values (standardised
    space) from N(mean, sd) of the training column. A sample agrees with
    ``x`` on a continuous feature when both fall in the same training
    quartile bin."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = np.random.default_rng(seed)
    schema = tf.schema
    x_row = apply_transform([x], tf).data[0]
    design = np.zeros((n_samples, len(tf.columns)))
    binary = np.zeros((n_samples, len(schema.features)))
    j = 0
    for fi, f in enumerate(schema.features):
        if f.categorical:
            enc = tf.encoding[f.name]
            freqs = stats.categorical[f.name]
            levels = list(freqs)
            p = np.array([freqs[lv] for lv in levels])
            draw = rng.choice(len(levels), size=n_samples, p=p / p.sum())
            draw_levels = np.array(levels, dtype=object)[draw]
            draw_levels[0] = x.values[f.name]
            width = len(enc["levels"])
            for k, lv in enumerate(enc["levels"]):
                design[:, j + k] = (draw_levels == lv)
            binary[:, fi] = draw_levels == x.values[f.name]
            j += width
        else:
            st = stats.continuous[f.name]
            col = st["mean"] + st["sd"] * rng.standard_normal(n_samples)
            col[0] = x_row[j]
            design[:, j] = col
            binary[:, fi] = _bin(col, st["quartiles"]) == _bin(x_row[j], st["quartiles"])
            j += 1
    return Perturbation(design, binary, schema.names)


def proximity(x, Z, kernel_width: float):
    """exp(-D^2 / width^2) with D the Euclidean distance from x; Z may be a
    single vector or a matrix of row vectors."""
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    d2 = ((Z - x) ** 2).sum(axis=-1)
    return np.exp(-d2 / kernel_width ** 2)


@dataclass
class SurrogateFit:
    intercept: float
    coef: np.ndarray       # full width, zeros outside ``selected``
    selected: list
    score: float           # weighted R^2


def weighted_ridge(A, t, w, lam):
    """Minimise sum w_i (t_i - a - A_i b)^2 + lam |b|^2; the intercept ``a``
    is not penalised. Returns (a, b)."""
    A = np.asarray(A, dtype=float)
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    sw = w.sum()
    am = w @ A / sw
    tm = w @ t / sw
    Ac = A - am
    G = Ac.T @ (Ac * w[:, None])
    G[np.diag_indices_from(G)] += lam
    b = np.linalg.solve(G, Ac.T @ (w * (t - tm)))
    return float(tm - am @ b), b


def _weighted_r2(A, t, w, a, b):
    resid = t - (a + A @ b)
    tm = w @ t / w.sum()
    tot = w @ (t - tm) ** 2
    if tot <= 0:
        return 0.0
    return float(1.0 - (w @ resid ** 2) / tot)


def fit_surrogate(Zb, targets, weights, n_features: int, ridge_lambda: float) -> SurrogateFit:
    """Pick the ``n_features`` columns with the largest |coef| in a ridge
    fit over all columns, then refit ridge on those alone."""
    Zb = np.asarray(Zb, dtype=float)
    t = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    if (w <= 0).any():
        raise ValueError("weights must be positive")
    F = Zb.shape[1]
    tm = w @ t / w.sum()
    if np.all(t == t[0]):
        return SurrogateFit(float(tm), np.zeros(F), [], 0.0)
    if n_features >= F:
        selected = list(range(F))
    else:
        _, b0 = weighted_ridge(Zb, t, w, ridge_lambda)
        order = sorted(range(F), key=lambda i: (-abs(b0[i]), i))
        selected = sorted(order[:n_features])
    a, b = weighted_ridge(Zb[:, selected], t, w, ridge_lambda)
    coef = np.zeros(F)
    coef[selected] = b
    return SurrogateFit(a, coef, selected, _weighted_r2(Zb[:, selected], t, w, a, b))


@dataclass
class Explanation:
    case_id: str
    label: str
    probability: float
    explanation_fit: float
    features: list  # dicts: name, condition, weight; descending |weight|
    observed: str | None = None

    def to_dict(self):
        out = {"case": self.case_id, "label": self.label, "probability": self.probability,
               "explanation_fit": self.explanation_fit, "features": self.features}
        if self.observed is not None:
            out["observed"] = self.observed
        return out


def _fmt(v):
    return f"{v:.4g}"


def _condition(f, x: Record, stats: TrainingStats, tf: Transform):
    if f.categorical:
        return f"{f.name} = {x.values[f.name]}"
    m, s = tf.scaling.get(f.name, (0.0, 1.0))
    q = [m + s * e for e in stats.continuous[f.name]["quartiles"]]
    b = int(_bin((x.values[f.name] - m) / s, stats.continuous[f.name]["quartiles"]))
    if b == 0:
        return f"{f.name} <= {_fmt(q[0])}"
    if b == len(q):
        return f"{_fmt(q[-1])} < {f.name}"
    return f"{_fmt(q[b - 1])} < {f.name} <= {_fmt(q[b])}"


def explain_case(net: nn.Network, x: Record, tf: Transform, stats: TrainingStats,
                 cfg: LimeConfig | None = None, case_id="1",
                 class_labels=DURATION_CLASSES) -> Explanation:
    """Explain the network's predicted class for one record."""
    cfg = cfg or LimeConfig()
    x_row = apply_transform([x], tf).data[0]
    pred = nn.forward(net, x_row)
    label = pred.label
    pert = perturb(x, stats, tf, cfg.n_samples, cfg.seed)
    target = nn.predict_proba(net, pert.design)[:, label]
    w = proximity(x_row, pert.design, cfg.width(len(tf.columns)))
    fit = fit_surrogate(pert.binary, target, w, cfg.n_features, cfg.ridge_lambda)
    feats = []
    for i in sorted(fit.selected, key=lambda i: (-abs(fit.coef[i]), i)):
        f = tf.schema.features[i]
        feats.append({"name": f.name, "condition": _condition(f, x, stats, tf),
                      "weight": float(fit.coef[i])})
    return Explanation(str(case_id), class_labels[label], float(pred.probabilities[label]),
                       fit.score, feats, x.target)
