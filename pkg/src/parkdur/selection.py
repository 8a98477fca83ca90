"""k-fold grid search over (hidden size, decay) and the agreement metrics
used to score it: confusion matrix, observed/expected accuracy, Cohen's kappa."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import network as nn

log = logging.getLogger(__name__)


@dataclass
class Grid:
    sizes: list = field(default_factory=lambda: list(range(1, 21)))
    decays: list = field(default_factory=lambda: [0.0, 0.001, 0.01, 0.1])
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.sizes or not self.decays:
            raise ValueError("grid needs at least one size and one decay")
        if any(int(s) != s or s < 1 for s in self.sizes):
            raise ValueError("sizes must be positive integers")
        if any(d < 0 for d in self.decays):
            raise ValueError("decays must be nonnegative")
        if self.k < 2:
            raise ValueError("k must be >= 2")


@dataclass
class ConfusionMatrix:
    """Rows are observed classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def tolist(self):
        return self.counts.tolist()


def _counts(cm):
    c = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if c.sum() < 1:
        raise ValueError("empty confusion matrix")
    return c


def confusion(observed, predicted, n_classes: int) -> ConfusionMatrix:
    obs = np.asarray(observed, dtype=np.int64)
    pred = np.asarray(predicted, dtype=np.int64)
    if obs.shape != pred.shape or obs.ndim != 1:
        raise ValueError("observed and predicted must be equal-length 1-d sequences")
    if obs.size < 1:
        raise ValueError("need at least one observation")
    for a in (obs, pred):
        if a.min() < 0 or a.max() >= n_classes:
            raise ValueError("class index out of range")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (obs, pred), 1)
    return ConfusionMatrix(counts)


def accuracy(cm) -> float:
    c = _counts(cm)
    return float(np.trace(c) / c.sum())


def expected_accuracy(cm) -> float:
    """Chance agreement from the marginals: sum(row_c * col_c) / n**2."""
    c = _counts(cm)
    n = c.sum()
    return float((c.sum(axis=1) * c.sum(axis=0)).sum() / (n * n))


def kappa(cm) -> float:
    pe = expected_accuracy(cm)
    if pe >= 1.0:
        raise ValueError("kappa is undefined when expected accuracy is 1")
    return (accuracy(cm) - pe) / (1.0 - pe)


def metrics(cm) -> dict:
    """Everything the evaluate command reports for one confusion matrix."""
    out = {"confusion": _counts(cm).tolist(), "n": int(_counts(cm).sum()),
           "accuracy": accuracy(cm), "expected_accuracy": expected_accuracy(cm)}
    try:
        out["kappa"] = kappa(cm)
    except ValueError:
        out["kappa"] = None
    return out


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` with a seeded generator and cut it into k folds
    whose sizes differ by at most one. Each fold is returned sorted."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def fold_init_seed(seed: int, fold: int) -> int:
    """Init seed of the network trained with ``fold`` held out; the refit on
    all data uses ``fold = -1``, i.e. ``seed`` itself."""
    return seed + fold + 1


@dataclass
class GridRow:
    size: int
    decay: float
    fold_confusions: list
    cv_accuracy: float
    cv_kappa: float | None
    pooled_kappa: float | None
    degenerate_folds: list
    non_descent_folds: list

    def to_dict(self):
        return {"size": self.size, "decay": self.decay, "cv_accuracy": self.cv_accuracy,
                "cv_kappa": self.cv_kappa, "pooled_kappa": self.pooled_kappa,
                "degenerate_folds": self.degenerate_folds,
                "non_descent_folds": self.non_descent_folds,
                "fold_confusions": [cm.tolist() for cm in self.fold_confusions]}


@dataclass
class FitReport:
    rows: list
    best: tuple
    network: nn.Network
    train_confusion: ConfusionMatrix
    folds: list

    @property
    def train_accuracy(self):
        return accuracy(self.train_confusion)

    @property
    def train_kappa(self):
        return kappa(self.train_confusion)

    def row(self, size, decay) -> GridRow:
        for r in self.rows:
            if r.size == size and r.decay == decay:
                return r
        raise KeyError((size, decay))

    def to_dict(self):
        return {
            "grid": [r.to_dict() for r in self.rows],
            "best": {"size": self.best[0], "decay": self.best[1],
                     "cv_accuracy": self.row(*self.best).cv_accuracy,
                     "cv_kappa": self.row(*self.best).cv_kappa},
            "train_confusion": self.train_confusion.tolist(),
            "train_accuracy": self.train_accuracy,
            "train_expected_accuracy": expected_accuracy(self.train_confusion),
            "train_kappa": self.train_kappa,
            "training": self.network.info,
        }


def _fold_frac(cm: ConfusionMatrix) -> Fraction:
    return Fraction(int(np.trace(cm.counts)), cm.n)


def _fit_fold(X, y, size, decay, n_classes, cfg, fold, train_idx, test_idx):
    net = nn.init(X.shape[1], size, n_classes, decay,
                  seed=fold_init_seed(cfg.seed, fold), init_range=cfg.init_range,
                  output=cfg.output)
    net = nn.train(net, X[train_idx], y[train_idx], cfg)
    pred = nn.predict_labels(net, X[test_idx])
    return confusion(y[test_idx], pred, n_classes), net.info.get("descended", True)


def grid_search(X, y, grid: Grid, cfg: nn.TrainConfig | None = None,
                n_classes: int = 5, jobs: int = 1, progress=None) -> FitReport:
    """Score every (size, decay) by k-fold CV, pick the best and refit it.

    Folds are shared by all configurations. The winner maximises mean
    per-fold accuracy, compared exactly; ties go to the larger decay, then
    the smaller size. ``progress(size, decay, row)`` is called after each
    configuration if given.
    """
    cfg = cfg or nn.TrainConfig()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError("need one label per row")
    if n < grid.k:
        raise ValueError(f"need at least k={grid.k} rows, got {n}")
    missing = sorted(set(range(n_classes)) - set(y.tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no samples")
    folds = kfold_split(n, grid.k, grid.seed)
    splits = []
    for f, test in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        splits.append((f, np.flatnonzero(mask), test))

    configs = [(int(s), float(d)) for s in grid.sizes for d in grid.decays]
    tasks = [(s, d, f, tr, te) for s, d in configs for f, tr, te in splits]

    def run(task):
        s, d, f, tr, te = task
        return _fit_fold(X, y, s, d, n_classes, cfg, f, tr, te)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    rows = []
    scores = {}
    for ci, (s, d) in enumerate(configs):
        chunk = results[ci * len(splits):(ci + 1) * len(splits)]
        cms = [cm for cm, _ in chunk]
        fracs = [_fold_frac(cm) for cm in cms]
        kappas, degenerate = [], []
        for f, cm in enumerate(cms):
            try:
                kappas.append(kappa(cm))
            except ValueError:
                degenerate.append(f)
        pooled = ConfusionMatrix(sum(cm.counts for cm in cms))
        try:
            pk = kappa(pooled)
        except ValueError:
            pk = None
        row = GridRow(s, d, cms, float(sum(fracs) / len(fracs)),
                      float(np.mean(kappas)) if kappas else None, pk, degenerate,
                      [f for f, (_, ok) in enumerate(chunk) if not ok])
        if degenerate:
            log.warning("size=%d decay=%g: folds %s have undefined kappa", s, d, degenerate)
        rows.append(row)
        scores[(s, d)] = sum(fracs) / len(fracs)
        if progress is not None:
            progress(s, d, row)

    best = max(configs, key=lambda c: (scores[c], c[1], -c[0]))
    s, d = best
    net = nn.init(X.shape[1], s, n_classes, d, seed=fold_init_seed(cfg.seed, -1),
                  init_range=cfg.init_range, output=cfg.output)
    net = nn.train(net, X, y, cfg)
    train_cm = confusion(y, nn.predict_labels(net, X), n_classes)
    return FitReport(rows, best, net, train_cm, folds)
