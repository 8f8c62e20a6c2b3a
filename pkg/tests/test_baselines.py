import numpy as np
import pytest

from glucast.baselines import (
    ArConfig,
    RnnForecaster,
    ar_fit_forecast,
    fit_ar,
    ar_forecast,
    forward_fill_forecast,
    linear_trend_forecast,
)
from glucast.cells import GRU, LSTM
from glucast.metrics import ForecastResult, rmse
from glucast.numeric import SeededRng
from helpers import fd_gradient, max_rel_err


class TestForwardFill:
    def test_repeats_last_value(self):
        x = np.array([[100.0], [115.0], [120.0]])
        out = forward_fill_forecast(x, None, w=4)
        np.testing.assert_array_equal(out, np.full((4, 1), 120.0))

    def test_skips_masked_tail(self):
        x = np.array([[100.0], [115.0], [0.0]])
        mask = np.array([True, True, False])
        out = forward_fill_forecast(x, mask, w=2)
        np.testing.assert_array_equal(out, np.full((2, 1), 115.0))

    def test_constant_series_zero_error(self):
        x = np.full((6, 1), 105.0)
        out = forward_fill_forecast(x, None, w=3)
        assert rmse(ForecastResult(np.full(3, 105.0), out[:, 0])) == 0.0

    def test_fully_missing_rejected(self):
        with pytest.raises(ValueError):
            forward_fill_forecast(np.zeros((3, 1)), np.zeros(3, dtype=bool), w=1)

    def test_rmse_matches_brute_force_oracle(self):
        # three-line oracle: persist last observed value, pool squared errors
        gen = np.random.default_rng(8)
        x = gen.uniform(80, 160, (24, 1))
        y = gen.uniform(80, 160, 6)
        pred = forward_fill_forecast(x, None, w=6)[:, 0]
        expected = float(np.sqrt(np.mean((y - x[-1, 0]) ** 2)))
        assert rmse(ForecastResult(y, pred)) == pytest.approx(expected, rel=1e-15)


class TestLinearTrend:
    def test_exact_line(self):
        x = np.array([[1.0], [2.0], [3.0], [4.0]])
        out = linear_trend_forecast(x, None, w=2)
        np.testing.assert_allclose(out[:, 0], [5.0, 6.0], atol=1e-10)

    def test_constant_series(self):
        x = np.full((5, 1), 7.0)
        out = linear_trend_forecast(x, None, w=3)
        np.testing.assert_allclose(out[:, 0], [7.0, 7.0, 7.0], atol=1e-10)

    def test_slope_matches_normal_equations(self):
        gen = np.random.default_rng(3)
        t = np.arange(30.0)
        vals = 2.5 * t + 40.0 + gen.normal(0, 1.0, 30)
        # brute-force normal equations oracle
        A = np.stack([t, np.ones(30)], axis=1)
        beta = np.linalg.solve(A.T @ A, A.T @ vals)
        out = linear_trend_forecast(vals[:, None], None, w=2)
        expected = beta[0] * np.array([30.0, 31.0]) + beta[1]
        np.testing.assert_allclose(out[:, 0], expected, atol=1e-10)

    def test_two_points_required(self):
        mask = np.array([True, False, False])
        with pytest.raises(ValueError):
            linear_trend_forecast(np.ones((3, 1)), mask, w=1)

    def test_deterministic_pure_function(self):
        x = np.random.default_rng(1).uniform(90, 150, (10, 1))
        np.testing.assert_array_equal(linear_trend_forecast(x, None, 4),
                                      linear_trend_forecast(x, None, 4))


class TestAr:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ArConfig(p=0)
        with pytest.raises(ValueError):
            ArConfig(p=2, d=3)

    def test_recovers_geometric_coefficient(self):
        x = 100.0 * 0.9 ** np.arange(60)
        model = fit_ar(x, ArConfig(p=1, d=0))
        assert model.coeffs[0] == pytest.approx(0.9, abs=1e-8)

    def test_d1_continues_ramp_exactly(self):
        ramp = 5.0 + 2.0 * np.arange(40)
        out = ar_fit_forecast(ramp, ArConfig(p=3, d=1), w=5)
        np.testing.assert_allclose(out, 5.0 + 2.0 * np.arange(40, 45), atol=1e-8)

    def test_one_step_is_dot_product(self):
        gen = np.random.default_rng(12)
        x = gen.normal(100, 10, 80)
        cfg = ArConfig(p=4, d=0)
        model = fit_ar(x, cfg)
        out = ar_forecast(model, x, w=1)
        expected = float(np.dot(model.coeffs, x[-1:-5:-1]))
        assert out[0] == pytest.approx(expected, rel=1e-12)

    def test_constant_series_returns_constant(self):
        x = np.full(30, 42.0)
        out = ar_fit_forecast(x, ArConfig(p=1, d=0), w=6)
        np.testing.assert_allclose(out, 42.0, atol=1e-9)

    def test_too_short_history_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            fit_ar(np.ones(5), ArConfig(p=6, d=1))

    def test_singular_design_diagnostic(self):
        # zero lags cannot explain a nonzero target
        x = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0])
        with pytest.raises(ValueError, match="singular"):
            fit_ar(x, ArConfig(p=3, d=0))


class TestRnnForecaster:
    def make_batch(self, seed=0, B=3, T=6, w=4, d=1):
        gen = SeededRng(seed)
        x = gen.normal(B * T * d).reshape(B, T, d)
        y = gen.normal(B * w * d).reshape(B, w, d)
        return x, y

    @pytest.mark.parametrize("kind", [GRU, LSTM])
    @pytest.mark.parametrize("bi", [False, True])
    def test_gradient_check(self, kind, bi):
        m = RnnForecaster(kind, 1, 3, SeededRng(5), bidirectional=bi)
        x, y = self.make_batch(seed=9, B=2, T=4, w=3)
        losses, cache = m.forward_loss(x, None, y, rng=SeededRng(77), teacher_force=0.5)
        grads = m.backward(cache)

        ml = m.copy(np.longdouble)
        xl = x.astype(np.longdouble)
        yl = y.astype(np.longdouble)

        def loss_fn():
            ls, _ = ml.forward_loss(xl, None, yl, rng=SeededRng(77), teacher_force=0.5)
            return ls["total"]

        for name, arr in ml.params().items():
            fd = fd_gradient(loss_fn, arr)
            err = max_rel_err(grads[name], fd)
            assert err < 1e-4, f"{name}: {err}"

    def test_prediction_shapes(self):
        for bi in (False, True):
            m = RnnForecaster(GRU, 2, 4, SeededRng(1), bidirectional=bi)
            x = SeededRng(2).normal(3 * 5 * 2).reshape(3, 5, 2)
            out = m.predict(x, None, w=6)
            assert out.shape == (3, 6, 2)

    def test_parameter_shapes_differ_between_kinds(self):
        g = RnnForecaster(GRU, 1, 4, SeededRng(0))
        l = RnnForecaster(LSTM, 1, 4, SeededRng(0))
        assert g.cell.W.shape == (12, 1)
        assert l.cell.W.shape == (16, 1)

    def test_deterministic_prediction(self):
        m = RnnForecaster(GRU, 1, 4, SeededRng(3))
        x = SeededRng(4).normal(2 * 6 * 1).reshape(2, 6, 1)
        np.testing.assert_array_equal(m.predict(x, None, 3), m.predict(x, None, 3))

    def test_stale_cache_rejected(self):
        m = RnnForecaster(GRU, 1, 3, SeededRng(6))
        x, y = self.make_batch(seed=10, B=2, T=4, w=2)
        _, cache = m.forward_loss(x, None, y)
        m.head.W += 1.0
        with pytest.raises(ValueError, match="stale"):
            m.backward(cache)
