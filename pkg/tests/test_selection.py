import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parkdur import network as nn
from parkdur.selection import (ConfusionMatrix, Grid, accuracy, confusion, expected_accuracy,
                               grid_search, kappa, kfold_split, metrics)

from conftest import TABLE4, TABLE5


def kappa_oracle(counts):
    """Exact rational kappa from raw counts."""
    c = [[int(v) for v in row] for row in counts]
    n = sum(map(sum, c))
    po = Fraction(sum(c[i][i] for i in range(len(c))), n)
    rows = [sum(r) for r in c]
    cols = [sum(r[j] for r in c) for j in range(len(c))]
    pe = Fraction(sum(r * k for r, k in zip(rows, cols)), n * n)
    return po, pe, (po - pe) / (1 - pe)


class TestPublishedMatrices:
    def test_table4_marginals(self):
        assert TABLE4.sum(axis=1).tolist() == [123, 70, 66, 115, 108]
        assert TABLE4.sum(axis=0).tolist() == [129, 71, 58, 117, 107]
        assert np.trace(TABLE4) == 443 and TABLE4.sum() == 482

    def test_table5_marginals(self):
        assert TABLE5.sum(axis=1).tolist() == [282, 121, 25, 12, 235]
        assert TABLE5.sum(axis=0).tolist() == [264, 138, 24, 14, 235]
        assert np.trace(TABLE5) == 629 and TABLE5.sum() == 675

    @pytest.mark.parametrize("table,acc,pe,k", [(TABLE4, 0.91908, 0.2138, 0.897),
                                                (TABLE5, 0.93185, 0.3229, 0.899)])
    def test_published_agreement(self, table, acc, pe, k):
        cm = ConfusionMatrix(table)
        assert accuracy(cm) == pytest.approx(acc, abs=1e-4)
        assert expected_accuracy(cm) == pytest.approx(pe, abs=5e-4)
        assert kappa(cm) == pytest.approx(k, abs=2e-3)

    @pytest.mark.parametrize("table", [TABLE4, TABLE5])
    def test_matches_exact_arithmetic(self, table):
        po, pe, k = kappa_oracle(table)
        cm = ConfusionMatrix(table)
        assert accuracy(cm) == pytest.approx(float(po), abs=1e-15)
        assert expected_accuracy(cm) == pytest.approx(float(pe), abs=1e-15)
        assert kappa(cm) == pytest.approx(float(k), abs=1e-14)

    def test_rebuilt_from_label_pairs(self):
        obs, pred = [], []
        for i, j in itertools.product(range(5), range(5)):
            obs += [i] * TABLE4[i, j]
            pred += [j] * TABLE4[i, j]
        assert confusion(obs, pred, 5).tolist() == TABLE4.tolist()


class TestConfusion:
    def test_identity_is_diagonal(self):
        cm = confusion([0, 1, 2, 2, 4], [0, 1, 2, 2, 4], 5)
        assert np.array_equal(cm.counts, np.diag([1, 1, 2, 0, 1]))
        assert accuracy(cm) == 1.0 and kappa(cm) == 1.0

    def test_single_pair(self):
        cm = confusion([2], [4], 5)
        assert cm.counts[2, 4] == 1 and cm.n == 1

    def test_errors(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0], 5)
        with pytest.raises(ValueError):
            confusion([0, 5], [0, 1], 5)
        with pytest.raises(ValueError):
            confusion([], [], 5)

    def test_single_class_expected_accuracy_is_one(self):
        cm = ConfusionMatrix([[7]])
        assert expected_accuracy(cm) == 1.0
        with pytest.raises(ValueError):
            kappa(cm)
        assert metrics(cm)["kappa"] is None


counts_st = st.lists(st.integers(0, 30), min_size=9, max_size=9).filter(lambda v: sum(v) > 0)


class TestKappaProperties:
    @settings(max_examples=200)
    @given(st.lists(st.integers(1, 20), min_size=2, max_size=6),
           st.lists(st.integers(1, 20), min_size=6, max_size=6))
    def test_independence_gives_zero(self, rows, cols):
        cols = cols[:len(rows)]
        cm = ConfusionMatrix(np.outer(rows, cols))
        assert abs(kappa(cm)) < 1e-9

    @settings(max_examples=200)
    @given(counts_st)
    def test_one_iff_diagonal(self, flat):
        c = np.array(flat).reshape(3, 3)
        if expected_accuracy(c) >= 1:
            return
        diagonal = not (c - np.diag(np.diag(c))).any()
        assert (abs(kappa(c) - 1) < 1e-12) == diagonal

    @settings(max_examples=100)
    @given(counts_st, st.permutations(range(3)))
    def test_relabelling_invariance(self, flat, perm):
        c = np.array(flat).reshape(3, 3)
        p = np.array(perm)
        d = c[np.ix_(p, p)]
        assert accuracy(d) == accuracy(c)
        if expected_accuracy(c) < 1:
            assert kappa(d) == pytest.approx(kappa(c), abs=1e-12)


class TestKfold:
    @pytest.mark.parametrize("n,k", list(itertools.product([7, 10, 482], [3, 5, 10])))
    def test_partition(self, n, k):
        if k > n:
            with pytest.raises(ValueError):
                kfold_split(n, k, seed=0)
            return
        folds = kfold_split(n, k, seed=n * k)
        flat = np.concatenate(folds)
        assert sorted(flat.tolist()) == list(range(n))
        sizes = [len(f) for f in folds]
        assert len(folds) == k and max(sizes) - min(sizes) <= 1

    def test_ten_by_five(self):
        assert [len(f) for f in kfold_split(10, 5, 0)] == [2] * 5

    def test_seven_by_three(self):
        assert sorted(len(f) for f in kfold_split(7, 3, 0)) == [2, 2, 3]

    def test_repeatable(self):
        a, b = kfold_split(40, 4, 9), kfold_split(40, 4, 9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @pytest.mark.parametrize("n,k", [(5, 6), (5, 1)])
    def test_bad_k(self, n, k):
        with pytest.raises(ValueError):
            kfold_split(n, k, 0)


def blobs(n_per=12, seed=0):
    rng = np.random.default_rng(seed)
    centres = np.array([[-3, 0], [0, 3], [3, 0], [0, -3], [0, 0]], dtype=float)
    X = np.vstack([rng.normal(c, 0.4, size=(n_per, 2)) for c in centres])
    y = np.repeat(np.arange(5), n_per)
    return X, y


class TestGridSearch:
    CFG = nn.TrainConfig(learning_rate=1.0, max_iterations=300)

    @pytest.fixture(scope="class")
    @classmethod
    def report(cls):
        X, y = blobs()
        return grid_search(X, y, Grid(sizes=[1, 3], decays=[0.0, 0.01], k=4, seed=2), cls.CFG)

    def test_one_configuration_is_selected(self):
        X, y = blobs()
        rep = grid_search(X, y, Grid(sizes=[2], decays=[0.001], k=3), self.CFG)
        assert rep.best == (2, 0.001) and len(rep.rows) == 1

    def test_cv_accuracy_is_mean_of_fold_accuracies(self, report):
        for row in report.rows:
            per_fold = [Fraction(int(np.trace(cm.counts)), cm.n) for cm in row.fold_confusions]
            assert row.cv_accuracy == float(sum(per_fold) / len(per_fold))
            kappas = [kappa(cm) for cm in row.fold_confusions]
            assert row.cv_kappa == pytest.approx(np.mean(kappas), abs=1e-15)

    def test_each_row_tests_every_index_once(self, report):
        for row in report.rows:
            assert sum(cm.n for cm in row.fold_confusions) == 60
        assert sorted(np.concatenate(report.folds).tolist()) == list(range(60))

    def test_winner_is_maximal(self, report):
        best = report.row(*report.best)
        assert all(best.cv_accuracy >= r.cv_accuracy for r in report.rows)

    def test_tie_break(self):
        # identical zero-range networks never learn (lr 0), so every
        # configuration ties: the larger decay then the smaller size wins
        X, y = blobs()
        cfg = nn.TrainConfig(learning_rate=0.0, max_iterations=1, init_range=0.0)
        rep = grid_search(X, y, Grid(sizes=[3, 1, 2], decays=[0.0, 0.1, 0.01], k=3), cfg)
        assert len({r.cv_accuracy for r in rep.rows}) == 1
        assert rep.best == (1, 0.1)

    def test_refit_training_confusion(self, report):
        pred = nn.predict_labels(report.network, blobs()[0])
        assert report.train_confusion.tolist() == confusion(blobs()[1], pred, 5).tolist()
        assert report.network.d_hidden == report.best[0]
        assert report.network.decay == report.best[1]

    def test_threads_do_not_change_results(self, report):
        X, y = blobs()
        rep = grid_search(X, y, Grid(sizes=[1, 3], decays=[0.0, 0.01], k=4, seed=2), self.CFG, jobs=3)
        assert rep.to_dict() == report.to_dict()

    def test_degenerate_fold_is_flagged(self):
        X, y = blobs(n_per=2)
        rep = grid_search(X, y, Grid(sizes=[1], decays=[0.0], k=10, seed=0), self.CFG)
        assert rep.rows[0].degenerate_folds

    def test_missing_class_rejected(self):
        X, y = blobs()
        with pytest.raises(ValueError):
            grid_search(X, np.where(y == 4, 0, y), Grid(sizes=[1], decays=[0.0], k=3), self.CFG)

    def test_too_few_rows(self):
        X, y = blobs(n_per=1)
        with pytest.raises(ValueError):
            grid_search(X, y, Grid(sizes=[1], decays=[0.0], k=10), self.CFG)
