"""Shared oracles for the test suite: finite differences and relative error."""

import numpy as np

from glucast.cells import CellParams


def fd_gradient(loss_fn, arr, step=1e-5):
    """Central finite differences of a scalar loss w.r.t. one array.

    Perturbs arr in place; evaluate loss_fn in extended precision
    (longdouble arrays) to keep the oracle's rounding noise below the
    1e-4 comparison tolerance.
    """
    g = np.zeros(arr.shape, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        old = arr[ix]
        arr[ix] = old + step
        up = loss_fn()
        arr[ix] = old - step
        down = loss_fn()
        arr[ix] = old
        g[ix] = float((up - down) / (2 * step))
        it.iternext()
    return g


def max_rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.max(np.abs(a - b) / denom)


def longdouble_cell(p: CellParams) -> CellParams:
    return CellParams(p.kind, p.input_size, p.hidden_size,
                      p.W.astype(np.longdouble), p.U.astype(np.longdouble),
                      p.b.astype(np.longdouble))


def manual_gru_step(p, x, h):
    """Independent scalar-level oracle for one GRU step."""
    hh = p.hidden_size
    Wr, Wz, Wn = p.W[:hh], p.W[hh:2 * hh], p.W[2 * hh:]
    Ur, Uz, Un = p.U[:hh], p.U[hh:2 * hh], p.U[2 * hh:]
    br, bz, bn = p.b[:hh], p.b[hh:2 * hh], p.b[2 * hh:]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    r = sig(Wr @ x + Ur @ h + br)
    z = sig(Wz @ x + Uz @ h + bz)
    n = np.tanh(Wn @ x + Un @ (r * h) + bn)
    return z * h + (1.0 - z) * n


def manual_lstm_step(p, x, h, c):
    """Independent scalar-level oracle for one LSTM step."""
    hh = p.hidden_size
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    a = p.W @ x + p.U @ h + p.b
    i, f = sig(a[:hh]), sig(a[hh:2 * hh])
    g, o = np.tanh(a[2 * hh:3 * hh]), sig(a[3 * hh:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2
