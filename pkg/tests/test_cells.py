import numpy as np
import pytest

from glucast.cells import (
    GRU,
    LSTM,
    CellParams,
    HiddenState,
    cell_step,
    init_cell,
    param_count,
    seq_backward,
    seq_forward,
    sequence_backward,
    sequence_forward,
    zero_state,
)
from glucast.numeric import SeededRng
from helpers import fd_gradient, longdouble_cell, manual_gru_step, manual_lstm_step, max_rel_err


class TestParamShapes:
    @pytest.mark.parametrize("kind,factor", [(GRU, 3), (LSTM, 4)])
    @pytest.mark.parametrize("d,h", [(1, 1), (3, 5), (2, 4)])
    def test_param_count_formula(self, kind, factor, d, h):
        p = init_cell(kind, d, h, SeededRng(0))
        assert param_count(p) == factor * (d * h + h * h + h)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            init_cell(GRU, 0, 3, SeededRng(0))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            init_cell("elman", 2, 2, SeededRng(0))


class TestCellStep:
    def test_gru_zero_params_zero_input(self):
        # with all weights/biases zero: r = z = 0.5, n = 0, h' = 0.5*h = 0
        p = CellParams(GRU, 1, 1, np.zeros((3, 1)), np.zeros((3, 1)), np.zeros(3))
        out = cell_step(p, np.zeros(1), zero_state(p))
        np.testing.assert_array_equal(out.h, [0.0])

    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_step_matches_manual_oracle(self, kind):
        rng = SeededRng(11)
        p = init_cell(kind, 3, 4, rng)
        x = rng.normal(3)
        h = np.tanh(rng.normal(4))
        if kind == GRU:
            expected = manual_gru_step(p, x, h)
            got = cell_step(p, x, HiddenState(h=h))
            np.testing.assert_allclose(got.h, expected, rtol=1e-12)
        else:
            c = rng.normal(4)
            eh, ec = manual_lstm_step(p, x, h, c)
            got = cell_step(p, x, HiddenState(h=h, c=c))
            np.testing.assert_allclose(got.h, eh, rtol=1e-12)
            np.testing.assert_allclose(got.c, ec, rtol=1e-12)

    def test_step_deterministic(self):
        p = init_cell(GRU, 2, 3, SeededRng(5))
        x = np.array([0.3, -0.7])
        s = HiddenState(h=np.array([0.1, 0.2, -0.3]))
        a = cell_step(p, x, s)
        b = cell_step(p, x, s)
        np.testing.assert_array_equal(a.h, b.h)

    def test_dimension_mismatch(self):
        p = init_cell(GRU, 2, 3, SeededRng(5))
        with pytest.raises(ValueError):
            cell_step(p, np.zeros(4), zero_state(p))


class TestSequenceForward:
    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_t1_reduces_to_cell_step(self, kind):
        rng = SeededRng(2)
        p = init_cell(kind, 2, 3, rng)
        x = rng.normal(2)
        states, final, _ = sequence_forward(p, x[None, :])
        single = cell_step(p, x, zero_state(p))
        np.testing.assert_allclose(states[0], single.h, rtol=1e-14)
        np.testing.assert_allclose(final.h, single.h, rtol=1e-14)

    def test_bidirectional_width(self):
        rng = SeededRng(3)
        p = init_cell(GRU, 2, 3, rng)
        pb = init_cell(GRU, 2, 3, rng)
        xs = rng.normal(8).reshape(4, 2)
        states, final, _ = sequence_forward(p, xs, direction="bidirectional", p_back=pb)
        assert states.shape == (4, 6)
        assert final.h.shape == (6,)

    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_backward_direction_is_reversed_forward(self, kind):
        rng = SeededRng(9)
        p = init_cell(kind, 2, 3, rng)
        xs = rng.normal(8).reshape(4, 2)
        f_states, _, _ = sequence_forward(p, xs, direction="forward")
        b_states, _, _ = sequence_forward(p, xs[::-1], direction="backward")
        np.testing.assert_allclose(b_states, f_states[::-1], rtol=1e-14)

    def test_empty_sequence_rejected(self):
        p = init_cell(GRU, 2, 3, SeededRng(0))
        with pytest.raises(ValueError, match="empty"):
            sequence_forward(p, np.zeros((0, 2)))

    def test_hidden_state_bounded(self):
        # huge inputs cannot push h outside [-1, 1]
        for kind in (GRU, LSTM):
            p = init_cell(kind, 2, 4, SeededRng(1))
            xs = SeededRng(2).normal(40).reshape(20, 2) * 1e3
            states, _, _ = sequence_forward(p, xs)
            assert np.all(np.abs(states) <= 1.0)


class TestSequenceBackward:
    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_zero_upstream_gives_zero_grads(self, kind):
        rng = SeededRng(4)
        p = init_cell(kind, 2, 3, rng)
        xs = rng.normal(10).reshape(5, 2)
        states, _, cache = sequence_forward(p, xs)
        grads, d_xs = sequence_backward(cache, np.zeros_like(states))
        for g in grads.values():
            assert not np.any(g)
        assert not np.any(d_xs)

    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_gradient_check_small_instance(self, kind):
        rng = SeededRng(7)
        p = init_cell(kind, 3, 5, rng)
        xs = rng.normal(12).reshape(4, 3)
        target = rng.normal(4 * 5).reshape(4, 5)

        pl = longdouble_cell(p)
        xl = xs.astype(np.longdouble)
        tl = target.astype(np.longdouble)

        def loss():
            states, _, _ = sequence_forward(pl, xl)
            return 0.5 * np.sum((states - tl) ** 2)

        states, _, cache = sequence_forward(p, xs)
        grads, d_xs = sequence_backward(cache, states - target)
        for name in ("W", "U", "b"):
            fd = fd_gradient(loss, getattr(pl, name))
            assert max_rel_err(grads[name], fd) < 1e-4, name
        fd_x = fd_gradient(loss, xl)
        assert max_rel_err(d_xs, fd_x) < 1e-4

    def test_gradient_check_random_shapes(self):
        # spec-level property: 10 random seeds, random d,h in [1,6], T in [1,5]
        for seed in range(10):
            master = SeededRng(1000 + seed)
            d = 1 + master.integer(6)
            h = 1 + master.integer(6)
            T = 1 + master.integer(5)
            kind = GRU if master.coin(0.5) else LSTM
            p = init_cell(kind, d, h, master)
            xs = master.normal(T * d).reshape(T, d)

            pl = longdouble_cell(p)
            xl = xs.astype(np.longdouble)

            def loss():
                states, _, _ = sequence_forward(pl, xl)
                return 0.5 * np.sum(states**2)

            states, _, cache = sequence_forward(p, xs)
            grads, _ = sequence_backward(cache, states)
            for name in ("W", "U", "b"):
                fd = fd_gradient(loss, getattr(pl, name))
                assert max_rel_err(grads[name], fd) < 1e-4, (kind, d, h, T, name)

    def test_bidirectional_gradient_check(self):
        rng = SeededRng(21)
        p = init_cell(GRU, 2, 3, rng)
        pb = init_cell(GRU, 2, 3, rng)
        xs = rng.normal(8).reshape(4, 2)
        pl, pbl = longdouble_cell(p), longdouble_cell(pb)
        xl = xs.astype(np.longdouble)

        def loss():
            states, _, _ = sequence_forward(pl, xl, direction="bidirectional", p_back=pbl)
            return 0.5 * np.sum(states**2)

        states, _, cache = sequence_forward(p, xs, direction="bidirectional", p_back=pb)
        grads, d_xs = sequence_backward(cache, states)
        for side, cell in (("fwd", pl), ("bwd", pbl)):
            for name in ("W", "U", "b"):
                fd = fd_gradient(loss, getattr(cell, name))
                assert max_rel_err(grads[side][name], fd) < 1e-4, (side, name)
        fd_x = fd_gradient(loss, xl)
        assert max_rel_err(d_xs, fd_x) < 1e-4

    def test_loss_ignoring_outputs_gives_zero_input_grads(self):
        rng = SeededRng(13)
        p = init_cell(LSTM, 2, 3, rng)
        xs = rng.normal(6).reshape(3, 2)
        states, _, cache = sequence_forward(p, xs)
        grads, d_xs = sequence_backward(cache, np.zeros_like(states))
        assert not np.any(d_xs)
        assert all(not np.any(g) for g in grads.values())

    def test_shape_mismatch_rejected(self):
        rng = SeededRng(14)
        p = init_cell(GRU, 2, 3, rng)
        xs = rng.normal(6).reshape(3, 2)
        _, _, cache = sequence_forward(p, xs)
        with pytest.raises(ValueError):
            sequence_backward(cache, np.zeros((4, 3)))


class TestBatchedKernels:
    @pytest.mark.parametrize("kind", [GRU, LSTM])
    def test_batched_matches_single(self, kind):
        rng = SeededRng(17)
        p = init_cell(kind, 2, 4, rng)
        xs = rng.normal(3 * 5 * 2).reshape(3, 5, 2)
        hs, _ = seq_forward(p, xs)
        for b in range(5):
            states, _, _ = sequence_forward(p, xs[:, b, :])
            np.testing.assert_allclose(hs[:, b, :], states, rtol=1e-13)

    def test_final_state_extra_gradient(self):
        rng = SeededRng(18)
        p = init_cell(GRU, 2, 3, rng)
        xs = rng.normal(4 * 1 * 2).reshape(4, 1, 2)
        v = rng.normal(3)
        pl = longdouble_cell(p)
        xl = xs.astype(np.longdouble)

        def loss():
            hs, _ = seq_forward(pl, xl)
            return hs[-1, 0] @ v.astype(np.longdouble)

        _, cache = seq_forward(p, xs)
        grads, _, _, _ = seq_backward(cache, np.zeros((4, 1, 3)), d_h_last=v[None, :])
        for name in ("W", "U", "b"):
            fd = fd_gradient(loss, getattr(pl, name))
            assert max_rel_err(grads[name], fd) < 1e-4
