import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glucast.metrics import (
    ForecastResult,
    aggregate,
    clarke_summary,
    clarke_zone,
    mape,
    nmape,
    rmse,
)


def fr(ref, pred):
    return ForecastResult(np.asarray(ref, float), np.asarray(pred, float))


def brute_rmse(ref, pred):
    s = 0.0
    for a, b in zip(ref, pred):
        s += (a - b) ** 2
    return (s / len(ref)) ** 0.5


def brute_mape(ref, pred):
    return 100.0 * sum(abs(a - b) / a for a, b in zip(ref, pred)) / len(ref)


def brute_nmape(ref, pred):
    return 100.0 * sum(abs(a - b) for a, b in zip(ref, pred)) / sum(ref)


class TestStatisticalMetrics:
    def test_rmse_zero_on_identical(self):
        assert rmse(fr([100, 120], [100, 120])) == 0.0

    def test_rmse_hand_value(self):
        assert rmse(fr([3, 4], [0, 0])) == pytest.approx(np.sqrt(12.5))

    def test_rmse_permutation_invariant(self):
        a = rmse(fr([100, 150, 200], [90, 160, 210]))
        b = rmse(fr([200, 100, 150], [210, 90, 160]))
        assert a == pytest.approx(b, rel=1e-15)

    def test_nonpositive_reference_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            fr([0, 0], [1, 1])

    def test_mape_hand_value(self):
        assert mape(fr([100, 200], [110, 180])) == pytest.approx(10.0)

    def test_mape_perfect(self):
        assert mape(fr([80, 90], [80, 90])) == 0.0

    def test_mape_scale_invariant(self):
        base = mape(fr([100, 200], [140, 150]))
        scaled = mape(fr([300, 600], [420, 450]))
        assert base == pytest.approx(scaled, rel=1e-12)

    def test_nmape_perfect(self):
        assert nmape(fr([100], [100])) == 0.0

    def test_nmape_equal_weights_matches_mape(self):
        r = fr([100, 100], [90, 110])
        assert nmape(r) == pytest.approx(10.0)
        assert mape(r) == pytest.approx(10.0)

    def test_nmape_differs_from_mape_on_unequal_refs(self):
        r = fr([50, 150], [60, 150])
        assert nmape(r) == pytest.approx(5.0)
        assert mape(r) == pytest.approx(10.0)

    def test_empty_rejected(self):
        r = ForecastResult(np.empty(0), np.empty(0))
        for m in (rmse, mape, nmape):
            with pytest.raises(ValueError):
                m(r)

    def test_brute_force_recomputation_on_random_vectors(self):
        # independent loop-based oracle, 100 random instances
        gen = np.random.default_rng(1234)
        for _ in range(100):
            n = int(gen.integers(1, 30))
            ref = gen.uniform(40, 400, n)
            pred = gen.uniform(20, 450, n)
            r = fr(ref, pred)
            assert rmse(r) == pytest.approx(brute_rmse(ref, pred), abs=1e-12, rel=1e-12)
            assert mape(r) == pytest.approx(brute_mape(ref, pred), abs=1e-12, rel=1e-12)
            assert nmape(r) == pytest.approx(brute_nmape(ref, pred), abs=1e-12, rel=1e-12)

    def test_rmse_at_least_mae(self):
        gen = np.random.default_rng(77)
        for _ in range(50):
            n = int(gen.integers(1, 40))
            ref = gen.uniform(40, 400, n)
            pred = gen.uniform(40, 400, n)
            mae = np.mean(np.abs(ref - pred))
            assert rmse(fr(ref, pred)) >= mae - 1e-12

    def test_zero_iff_exact(self):
        gen = np.random.default_rng(9)
        ref = gen.uniform(50, 300, 10)
        pred = ref.copy()
        pred[3] += 1e-6
        r_exact, r_off = fr(ref, ref), fr(ref, pred)
        assert rmse(r_exact) == mape(r_exact) == nmape(r_exact) == 0.0
        assert rmse(r_off) > 0 and mape(r_off) > 0 and nmape(r_off) > 0


class TestAggregate:
    def test_single_value(self):
        assert aggregate([4.2]) == (4.2, 0.0)

    def test_population_std(self):
        assert aggregate([1.0, 3.0]) == (2.0, 1.0)

    def test_constant_list(self):
        m, s = aggregate([7.0] * 5)
        assert m == 7.0 and s == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestClarke:
    @pytest.mark.parametrize("ref,pred,zone", [
        (100.0, 100.0, "A"),
        (200.0, 60.0, "E"),
        (100.0, 215.0, "C"),
        (250.0, 100.0, "D"),
        (165.0, 130.0, "B"),
    ])
    def test_hand_derived_table(self, ref, pred, zone):
        assert clarke_zone(ref, pred) == zone

    def test_monotone_degradation_along_ray(self):
        zones = [clarke_zone(100.0, p) for p in (100.0, 130.0, 215.0)]
        assert zones == ["A", "B", "C"]

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            clarke_zone(0.0, 100.0)
        with pytest.raises(ValueError):
            clarke_zone(100.0, -5.0)

    def test_total_and_percentages_sum(self):
        gen = np.random.default_rng(4321)
        refs = gen.uniform(40, 400, 10**5)
        preds = gen.uniform(40, 400, 10**5)
        summary = clarke_summary(refs, preds)
        total = sum(summary.as_dict().values())
        assert total == pytest.approx(100.0, abs=1e-9)
        assert summary.n_points == 10**5

    @given(st.floats(40, 400), st.floats(40, 400))
    @settings(max_examples=300, deadline=None)
    def test_every_pair_gets_exactly_one_zone(self, ref, pred):
        assert clarke_zone(ref, pred) in "ABCDE"

    def test_summary_empty_rejected(self):
        with pytest.raises(ValueError):
            clarke_summary(np.empty(0), np.empty(0))
