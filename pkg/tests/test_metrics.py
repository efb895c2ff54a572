"""Convergence and generalization metric definitions."""

import math

import numpy as np
import pytest

from megp.errors import ContractError
from megp.head import isolated_fitness
from megp.metrics import (classification_metrics, convergence_rate,
                          crossover_convergence_rate, interval_ft,
                          population_entropy)
from megp.rng import make_rng


class TestIntervalFt:
    def test_constant_series(self):
        assert interval_ft([2.5] * 10, 0, 9) == pytest.approx(2.5)

    def test_hand_arithmetic(self):
        assert interval_ft([4.0, 2.0, 2.0], 0, 2) == pytest.approx(8 / 3)

    def test_matches_mean_oracle(self):
        rng = make_rng(1)
        series = rng.uniform(0, 3, size=40).tolist()
        lo, hi = 5, 25
        expected = sum(series[lo:hi + 1]) / (hi - lo + 1)
        assert interval_ft(series, lo, hi) == pytest.approx(expected, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            interval_ft([1.0, 2.0], 0, 5)


class TestConvergenceRate:
    def test_flat_series(self):
        assert convergence_rate([1.0] * 6, 0, 5) == 0.0

    def test_expected_scale(self):
        # 0.3 drop over 150 generations: rate 0.002 per generation
        series = np.linspace(1.0, 0.7, 151).tolist()
        assert convergence_rate(series, 0, 150) == pytest.approx(0.002)

    def test_linear_slope(self):
        s = 0.01
        series = [5.0 - s * g for g in range(20)]
        assert convergence_rate(series, 3, 17) == pytest.approx(s)

    def test_equal_bounds_rejected(self):
        with pytest.raises(ContractError):
            convergence_rate([1.0, 2.0], 1, 1)


class TestCrossoverConvergenceRate:
    def test_offspring_equal_parents(self):
        log = [[(1.0, 1.0), (0.5, 0.5)], [(2.0, 2.0)]]
        out = crossover_convergence_rate(log, 0, 1)
        assert out.value == 0.0
        assert not out.insufficient

    def test_single_event(self):
        log = [[(1.0, 0.9)]]
        out = crossover_convergence_rate(log, 0, 0)
        assert out.value == pytest.approx(0.1)

    def test_worsening_floored_at_zero(self):
        log = [[(1.0, 1.4)]]
        assert crossover_convergence_rate(log, 0, 0).value == 0.0

    def test_matches_formula_oracle(self):
        rng = make_rng(2)
        log = []
        for _ in range(12):
            events = [(float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 2)))
                      for _ in range(int(rng.integers(0, 5)))]
            log.append(events)
        lo, hi = 2, 9
        expected = []
        for gen in range(lo, hi + 1):
            for pm, off in log[gen]:
                expected.append(max(0.0, pm - off) / max(pm, 1e-12))
        out = crossover_convergence_rate(log, lo, hi)
        assert out.n_events == len(expected)
        assert out.value == pytest.approx(float(np.mean(expected)), abs=1e-12)

    def test_empty_interval_flagged(self):
        out = crossover_convergence_rate([[], []], 0, 1)
        assert out.value == 0.0
        assert out.insufficient


class TestPopulationEntropy:
    def test_identical_values(self):
        assert population_entropy([0.7] * 60, 30) == 0.0

    def test_uniform_filling_maximal(self):
        # two values per bin, 30 bins; nudge every value into its bin center
        values = []
        for b in range(30):
            values.extend([b + 0.4, b + 0.6])
        assert population_entropy(values, 30) == pytest.approx(math.log(30))

    def test_matches_histogram_oracle(self):
        rng = make_rng(3)
        values = rng.uniform(0, 5, size=60)
        n_bins = 30
        lo, hi = values.min(), values.max()
        counts = [0] * n_bins
        width = (hi - lo) / n_bins
        for v in values:
            idx = min(int((v - lo) / width), n_bins - 1)
            counts[idx] += 1
        expected = -sum((c / 60) * math.log(c / 60) for c in counts if c)
        assert population_entropy(values, n_bins) == pytest.approx(expected, abs=1e-12)

    def test_bounds(self):
        rng = make_rng(4)
        for _ in range(100):
            values = rng.uniform(-2, 2, size=int(rng.integers(1, 80)))
            h = population_entropy(values, 30)
            assert 0.0 <= h <= math.log(30) + 1e-12


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        Y = np.eye(4)
        out = classification_metrics(Y, Y)
        assert out.precision == 1.0
        assert out.recall == 1.0
        assert out.f1 == 1.0
        assert out.auc == 1.0
        assert out.log_loss <= 1e-14

    def test_binary_auc_hand_case(self):
        scores = np.array([0.9, 0.8, 0.3, 0.1])
        labels = np.array([1, 0, 1, 0])
        Pr = np.column_stack([1 - scores, scores])
        Y = np.column_stack([1 - labels, labels])
        out = classification_metrics(Pr, Y)
        # 3 of the 4 positive-negative pairs are correctly ordered
        assert brute_force_auc(scores, labels) == 0.75
        assert out.auc == pytest.approx(0.75)

    def test_constant_predictor_auc_half(self):
        Pr = np.full((6, 2), 0.5)
        Y = np.zeros((6, 2))
        Y[:3, 0] = 1.0
        Y[3:, 1] = 1.0
        assert classification_metrics(Pr, Y).auc == pytest.approx(0.5)

    def test_rank_auc_matches_brute_force_exhaustive(self):
        rng = make_rng(5)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            labels = rng.integers(2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = np.round(rng.uniform(0, 1, size=n), 1)  # force ties
            Pr = np.column_stack([1 - scores, scores])
            Y = np.column_stack([1 - labels, labels])
            out = classification_metrics(Pr, Y)
            per_class = [brute_force_auc(1 - scores, 1 - labels),
                         brute_force_auc(scores, labels)]
            assert out.auc == pytest.approx(float(np.mean(per_class)), abs=1e-12)

    def test_log_loss_shares_fitness_definition(self):
        rng = make_rng(6)
        raw = rng.uniform(0.01, 1, size=(10, 3))
        Pr = raw / raw.sum(axis=1, keepdims=True)
        Y = np.zeros((10, 3))
        Y[np.arange(10), rng.integers(3, size=10)] = 1.0
        out = classification_metrics(Pr, Y)
        assert out.log_loss == pytest.approx(isolated_fitness(Pr, Y), abs=1e-12)

    def test_absent_class_excluded_with_flag(self):
        Pr = np.full((4, 3), 1 / 3)
        Y = np.zeros((4, 3))
        Y[:2, 0] = 1.0
        Y[2:, 1] = 1.0  # class 2 never appears
        out = classification_metrics(Pr, Y)
        assert out.excluded_classes == (2,)

    def test_zero_division_maps_to_zero(self):
        # class 1 is never predicted: precision 0/0 -> 0
        Pr = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]])
        Y = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        out = classification_metrics(Pr, Y)
        per_class_f1 = []
        # class 0: tp=2, fp=2, fn=0 -> p=0.5, r=1, f1=2/3
        per_class_f1.append(2 * 0.5 * 1.0 / 1.5)
        # class 1: tp=0, fp=0, fn=2 -> p=0 (0/0), r=0, f1=0
        per_class_f1.append(0.0)
        assert out.precision == pytest.approx(0.25)
        assert out.recall == pytest.approx(0.5)
        assert out.f1 == pytest.approx(float(np.mean(per_class_f1)))

    def test_ranges_and_macro_f1_bound_property(self):
        rng = make_rng(7)
        for _ in range(200):
            n = int(rng.integers(4, 12))
            c = int(rng.integers(2, 5))
            raw = rng.uniform(0.01, 1, size=(n, c))
            Pr = raw / raw.sum(axis=1, keepdims=True)
            labels = rng.integers(c, size=n)
            labels[:c] = np.arange(c)  # every class present
            Y = np.zeros((n, c))
            Y[np.arange(n), labels] = 1.0
            out = classification_metrics(Pr, Y)
            for value in (out.precision, out.recall, out.f1, out.auc):
                assert 0.0 <= value <= 1.0
            assert out.log_loss >= 0.0
