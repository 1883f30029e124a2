import datetime as dt

import numpy as np
import pytest

from chimeric.core import CASE_LEVELS, QuantileLevelSet, TruthSet, assemble_matrices
from chimeric.ensemble import (
    DEConfig,
    WeightVector,
    differential_evolution_minimize,
    fit_performance_weights,
    quantile_average,
)
from chimeric.errors import MustImputeFirstError
from chimeric.scoring import wis_from_values

from conftest import make_forecast, make_target, random_case_matrix


class TestWeightVector:
    def test_simplex_enforced(self):
        with pytest.raises(ValueError):
            WeightVector([0.5, 0.6])
        with pytest.raises(ValueError):
            WeightVector([1.5, -0.5])
        WeightVector([0.25, 0.75])

    def test_equal(self):
        assert WeightVector.equal(4).weights == pytest.approx([0.25] * 4)


class TestQuantileAverage:
    def _two_model_matrix(self):
        t = make_target()
        lv = QuantileLevelSet((0.25, 0.5, 0.75))
        fcs = [
            make_forecast("a", [0, 2, 4], target=t, levels=lv),
            make_forecast("b", [2, 4, 6], target=t, levels=lv),
        ]
        matrix, _ = assemble_matrices(fcs, TruthSet())
        return matrix

    def test_arithmetic_mean(self):
        out = quantile_average(self._two_model_matrix(), [0.5, 0.5])
        assert out.quantiles[0] == pytest.approx([1, 3, 5])

    def test_degenerate_weight_selects_row(self):
        matrix = self._two_model_matrix()
        out = quantile_average(matrix, [1.0, 0.0])
        assert out.quantiles[0].tobytes() == matrix.cells[0].tobytes()

    def test_hand_dot_product(self):
        t = make_target()
        lv = QuantileLevelSet((0.25, 0.5, 0.75))
        fcs = [
            make_forecast("a", [0, 10, 20], target=t, levels=lv),
            make_forecast("b", [10, 20, 30], target=t, levels=lv),
            make_forecast("c", [20, 30, 40], target=t, levels=lv),
        ]
        matrix, _ = assemble_matrices(fcs, TruthSet())
        out = quantile_average(matrix, [0.5, 0.25, 0.25])
        assert out.quantiles[0] == pytest.approx([7.5, 17.5, 27.5])

    def test_weight_length_mismatch(self):
        with pytest.raises(ValueError):
            quantile_average(self._two_model_matrix(), [1.0])

    def test_absent_cells_rejected(self):
        t1, t2 = make_target(), make_target(end="2021-01-30")
        lv = QuantileLevelSet((0.25, 0.5, 0.75))
        fcs = [
            make_forecast("a", [0, 2, 4], target=t1, levels=lv),
            make_forecast("a", [0, 2, 4], target=t2, levels=lv),
            make_forecast("b", [2, 4, 6], target=t1, levels=lv),
        ]
        matrix, _ = assemble_matrices(fcs, TruthSet())
        with pytest.raises(MustImputeFirstError):
            quantile_average(matrix, [0.5, 0.5])

    def test_monotone_output_for_random_simplex_weights(self, rng):
        matrix, _ = random_case_matrix(rng, n_models=5, n_targets=3)
        for _ in range(100):
            raw = rng.random(5)
            out = quantile_average(matrix, raw / raw.sum())
            for q in out.quantiles:
                assert np.all(np.diff(q) >= 0.0)


class TestDifferentialEvolution:
    def test_one_dimension_immediate(self):
        calls = []
        w, obj = differential_evolution_minimize(
            lambda wv: calls.append(1) or 5.0, 1, DEConfig(seed=0)
        )
        assert w.weights == pytest.approx([1.0])
        assert obj == 5.0
        assert len(calls) == 1

    def test_vertex_quadratic(self):
        target = np.array([1.0, 0.0])

        def objective(wv):
            d = wv.weights - target
            return float(d @ d)

        w, obj = differential_evolution_minimize(objective, 2, DEConfig(seed=42))
        assert np.abs(w.weights - target).max() < 0.02

    def test_constant_objective_stays_on_simplex(self):
        w, obj = differential_evolution_minimize(lambda wv: 3.25, 6, DEConfig(seed=7))
        assert obj == 3.25
        assert w.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(w.weights >= 0.0)

    def test_best_objective_non_increasing(self):
        history = []

        def objective(wv):
            d = wv.weights - np.array([0.6, 0.3, 0.1])
            value = float(d @ d)
            history.append(value)
            return value

        differential_evolution_minimize(objective, 3, DEConfig(seed=1, max_generations=60))
        best_so_far = np.minimum.accumulate(history)
        assert np.all(np.diff(best_so_far) <= 0.0)

    def test_seed_determinism(self):
        def objective(wv):
            return float(np.sum((wv.weights - 1.0 / 3) ** 2))

        a, _ = differential_evolution_minimize(objective, 3, DEConfig(seed=11))
        b, _ = differential_evolution_minimize(objective, 3, DEConfig(seed=11))
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_sequential_variant_also_converges(self):
        target = np.array([0.0, 1.0])

        def objective(wv):
            d = wv.weights - target
            return float(d @ d)

        w, _ = differential_evolution_minimize(
            objective, 2, DEConfig(seed=5, sequential_update=True)
        )
        assert np.abs(w.weights - target).max() < 0.02

    def test_population_floor(self):
        with pytest.raises(ValueError):
            DEConfig(population_size=3)

    def test_zero_dimension(self):
        with pytest.raises(ValueError):
            differential_evolution_minimize(lambda wv: 0.0, 0)


def perfect_vs_offset(offset=20.0, n_targets=5):
    targets = [
        make_target(end=(dt.date(2021, 1, 23) + dt.timedelta(weeks=i)).isoformat())
        for i in range(n_targets)
    ]
    truth_vals = [100.0, 120.0, 90.0, 150.0, 130.0][:n_targets]
    truths = TruthSet({t: v for t, v in zip(targets, truth_vals)})
    fcs = []
    for t, v in zip(targets, truth_vals):
        fcs.append(make_forecast("perfect", [v] * 7, target=t))
        fcs.append(make_forecast("offset", [v + offset] * 7, target=t))
    matrix, _ = assemble_matrices(fcs, truths)
    return matrix, truths


def grid_search_two_models(matrix, truths, step=0.001):
    """Independent oracle: exhaustive simplex scan for the two-model case."""

    def mean_wis(w):
        out = quantile_average(matrix, [w, 1.0 - w])
        return float(
            np.mean(
                [
                    wis_from_values(ls, q, truths.get(t))
                    for t, ls, q in zip(out.targets, out.level_sets, out.quantiles)
                ]
            )
        )

    grid = np.arange(0, round(1 / step) + 1) * step
    values = [mean_wis(w) for w in grid]
    i = int(np.argmin(values))
    return grid[i], values[i], mean_wis


class TestFitPerformanceWeights:
    def test_perfect_model_dominates(self):
        matrix, truths = perfect_vs_offset()
        _, oracle, mean_wis = grid_search_two_models(matrix, truths)
        for seed in range(10):
            w = fit_performance_weights(matrix, truths, DEConfig(seed=seed))
            w_perfect = w[matrix.model_index("perfect")]
            assert w_perfect >= 0.9
            assert mean_wis(w_perfect) <= oracle * 1.02 + 1e-12

    def test_identical_models_objective_constant(self, rng):
        t = make_target()
        values = np.sort(rng.random(7)) * 50
        fcs = [make_forecast(f"m{i}", values, target=t) for i in range(4)]
        truths = TruthSet({t: 30.0})
        matrix, _ = assemble_matrices(fcs, truths)
        w = fit_performance_weights(matrix, truths, DEConfig(seed=0))
        assert w.weights.sum() == pytest.approx(1.0, abs=1e-9)
        single = wis_from_values(CASE_LEVELS, values, 30.0)
        out = quantile_average(matrix, w)
        assert wis_from_values(CASE_LEVELS, out.quantiles[0], 30.0) == pytest.approx(
            single, rel=1e-12
        )

    def test_no_history_falls_back_to_equal(self, rng):
        matrix, _ = random_case_matrix(rng, n_models=3, n_targets=2)
        w = fit_performance_weights(matrix, TruthSet(), DEConfig(seed=0))
        assert w.weights == pytest.approx([1 / 3] * 3)

    def test_degenerate_weight_row_equivalence(self, rng):
        # Scoring the e_m ensemble equals scoring row m exactly: the
        # combination reproduces the row bit-for-bit, so the same scoring
        # path yields the same float.
        matrix, truths = random_case_matrix(rng, n_models=4, n_targets=3)
        for m in range(4):
            e = np.zeros(4)
            e[m] = 1.0
            out = quantile_average(matrix, e)
            for t in range(matrix.n_targets):
                y = truths.get(matrix.targets[t])
                got = wis_from_values(matrix.level_sets[t], out.quantiles[t], y)
                direct = wis_from_values(
                    matrix.level_sets[t], matrix.target_block(t)[m], y
                )
                assert got == direct
