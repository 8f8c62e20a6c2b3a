"""GRU and LSTM cells: batched forward passes and exact backpropagation
through time, plus unidirectional/bidirectional sequence unrolling.

Gate conventions (one bias per gate, gates stacked row-wise in W/U/b):

GRU (reset r, update z, candidate n)::

    r = sigmoid(W_r x + U_r h + b_r)
    z = sigmoid(W_z x + U_z h + b_z)
    n = tanh(W_n x + U_n (r * h) + b_n)
    h' = z * h + (1 - z) * n

LSTM (input i, forget f, cell g, output o; forget bias starts at +1)::

    i = sigmoid(W_i x + U_i h + b_i)
    f = sigmoid(W_f x + U_f h + b_f)
    g = tanh(W_g x + U_g h + b_g)
    o = sigmoid(W_o x + U_o h + b_o)
    c' = f * c + i * g
    h' = o * tanh(c')

Batched arrays are time-major: sequences are (T, B, d), states (B, h).
The single-sequence API at the bottom wraps the batched kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numeric import SeededRng, sigmoid, uniform_init

GRU = "gru"
LSTM = "lstm"


@dataclass
class CellParams:
    """Weights of one recurrent cell.

    W: (G*h, d) input weights, U: (G*h, h) recurrent weights, b: (G*h,)
    biases, where G is 3 for GRU and 4 for LSTM.
    """

    kind: str
    input_size: int
    hidden_size: int
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def copy(self) -> "CellParams":
        return CellParams(self.kind, self.input_size, self.hidden_size,
                          self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class HiddenState:
    """Recurrent state: h always, c for LSTM only."""

    h: np.ndarray
    c: np.ndarray | None = None


def n_gates(kind: str) -> int:
    if kind == GRU:
        return 3
    if kind == LSTM:
        return 4
    raise ValueError(f"unknown cell kind {kind!r}")


def init_cell(kind: str, input_size: int, hidden_size: int, rng: SeededRng) -> CellParams:
    """Fresh cell with scaled-uniform weights; LSTM forget bias set to +1."""
    if input_size < 1 or hidden_size < 1:
        raise ValueError("input_size and hidden_size must be >= 1")
    g = n_gates(kind)
    W = uniform_init(rng, (g * hidden_size, input_size), input_size)
    U = uniform_init(rng, (g * hidden_size, hidden_size), hidden_size)
    b = np.zeros(g * hidden_size)
    if kind == LSTM:
        b[hidden_size:2 * hidden_size] = 1.0
    return CellParams(kind, input_size, hidden_size, W, U, b)


def param_count(p: CellParams) -> int:
    return p.W.size + p.U.size + p.b.size


def zero_state(p: CellParams, batch: int | None = None) -> HiddenState:
    shape = (p.hidden_size,) if batch is None else (batch, p.hidden_size)
    c = np.zeros(shape) if p.kind == LSTM else None
    return HiddenState(h=np.zeros(shape), c=c)


def zero_grads(p: CellParams) -> dict[str, np.ndarray]:
    return {"W": np.zeros_like(p.W), "U": np.zeros_like(p.U), "b": np.zeros_like(p.b)}


# ---------------------------------------------------------------------------
# Batched kernels.  Caches hold everything the exact backward pass needs.


@dataclass
class SeqCache:
    """Forward activations of one unidirectional unroll (time-major)."""

    params: CellParams
    xs: np.ndarray            # (T, B, d) inputs in scan order
    hs: np.ndarray            # (T+1, B, h); hs[0] is the initial state
    gates: dict[str, np.ndarray] = field(default_factory=dict)
    cs: np.ndarray | None = None  # (T+1, B, h), LSTM only


def _check_step_shapes(p: CellParams, x: np.ndarray, h: np.ndarray) -> None:
    if x.shape[-1] != p.input_size:
        raise ValueError(f"input has {x.shape[-1]} features, cell expects {p.input_size}")
    if h.shape[-1] != p.hidden_size:
        raise ValueError(f"state has width {h.shape[-1]}, cell expects {p.hidden_size}")


def gru_step(p: CellParams, x: np.ndarray, h_prev: np.ndarray):
    """One batched GRU step. Returns (h, (r, z, n)) with x, h_prev (B, *)."""
    _check_step_shapes(p, x, h_prev)
    hh = p.hidden_size
    a = x @ p.W.T + p.b
    r = sigmoid(a[..., :hh] + h_prev @ p.U[:hh].T)
    z = sigmoid(a[..., hh:2 * hh] + h_prev @ p.U[hh:2 * hh].T)
    n = np.tanh(a[..., 2 * hh:] + (r * h_prev) @ p.U[2 * hh:].T)
    h = z * h_prev + (1.0 - z) * n
    return h, (r, z, n)


def lstm_step(p: CellParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One batched LSTM step. Returns (h, c, (i, f, g, o))."""
    _check_step_shapes(p, x, h_prev)
    hh = p.hidden_size
    a = x @ p.W.T + h_prev @ p.U.T + p.b
    i = sigmoid(a[..., :hh])
    f = sigmoid(a[..., hh:2 * hh])
    g = np.tanh(a[..., 2 * hh:3 * hh])
    o = sigmoid(a[..., 3 * hh:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, g, o)


def seq_forward(p: CellParams, xs: np.ndarray, h0: np.ndarray | None = None,
                c0: np.ndarray | None = None) -> tuple[np.ndarray, SeqCache]:
    """Unroll the cell over xs (T, B, d) in scan order.

    Returns hidden states (T, B, h) and the cache for seq_backward.
    """
    if xs.ndim != 3:
        raise ValueError(f"xs must be (T, B, d), got shape {xs.shape}")
    T, B, d = xs.shape
    if T < 1:
        raise ValueError("empty sequence")
    if d != p.input_size:
        raise ValueError(f"xs has {d} features, cell expects {p.input_size}")
    hh = p.hidden_size
    dt = np.result_type(xs.dtype, p.W.dtype)
    h = np.zeros((B, hh), dtype=dt) if h0 is None else h0
    hs = np.empty((T + 1, B, hh), dtype=dt)
    hs[0] = h
    if p.kind == GRU:
        rs = np.empty((T, B, hh), dtype=dt); zs = np.empty_like(rs); ns = np.empty_like(rs)
        for t in range(T):
            h, (rs[t], zs[t], ns[t]) = gru_step(p, xs[t], hs[t])
            hs[t + 1] = h
        return hs[1:], SeqCache(p, xs, hs, {"r": rs, "z": zs, "n": ns})
    cs = np.empty((T + 1, B, hh), dtype=dt)
    cs[0] = np.zeros((B, hh), dtype=dt) if c0 is None else c0
    gi = np.empty((T, B, hh), dtype=dt); gf = np.empty_like(gi)
    gg = np.empty_like(gi); go = np.empty_like(gi)
    for t in range(T):
        h, c, (gi[t], gf[t], gg[t], go[t]) = lstm_step(p, xs[t], hs[t], cs[t])
        hs[t + 1] = h
        cs[t + 1] = c
    return hs[1:], SeqCache(p, xs, hs, {"i": gi, "f": gf, "g": gg, "o": go}, cs)


def seq_backward(cache: SeqCache, d_hs: np.ndarray,
                 d_h_last: np.ndarray | None = None,
                 d_c_last: np.ndarray | None = None):
    """Exact BPTT through one unroll.

    d_hs (T, B, h) is the loss gradient on each per-step hidden state;
    d_h_last / d_c_last add an extra gradient on the final state (used
    when a head reads only the last state).  Returns (param grads,
    d_xs, d_h0, d_c0) with d_xs in the cache's scan order.
    """
    p = cache.params
    xs, hs = cache.xs, cache.hs
    T, B, _ = xs.shape
    hh = p.hidden_size
    if d_hs.shape != (T, B, hh):
        raise ValueError(f"d_hs must be {(T, B, hh)}, got {d_hs.shape}")
    dt = cache.hs.dtype
    if p.kind == GRU:
        r, z, n = cache.gates["r"], cache.gates["z"], cache.gates["n"]
        dA = np.empty((T, B, 3 * hh), dtype=dt)
        dh_next = np.zeros((B, hh), dtype=dt) if d_h_last is None else d_h_last.copy()
        Ur, Uz, Un = p.U[:hh], p.U[hh:2 * hh], p.U[2 * hh:]
        for t in range(T - 1, -1, -1):
            dh = d_hs[t] + dh_next
            hp = hs[t]
            dz = dh * (hp - n[t])
            dn = dh * (1.0 - z[t])
            dh_prev = dh * z[t]
            dan = dn * (1.0 - n[t] ** 2)
            drh = dan @ Un
            dr = drh * hp
            dh_prev = dh_prev + drh * r[t]
            dar = dr * r[t] * (1.0 - r[t])
            daz = dz * z[t] * (1.0 - z[t])
            dA[t, :, :hh] = dar
            dA[t, :, hh:2 * hh] = daz
            dA[t, :, 2 * hh:] = dan
            dh_next = dh_prev + dar @ Ur + daz @ Uz
        rh = r * hs[:-1]
        dU = np.concatenate([
            np.einsum("tbi,tbj->ij", dA[:, :, :hh], hs[:-1]),
            np.einsum("tbi,tbj->ij", dA[:, :, hh:2 * hh], hs[:-1]),
            np.einsum("tbi,tbj->ij", dA[:, :, 2 * hh:], rh),
        ])
        grads = {
            "W": np.einsum("tbi,tbj->ij", dA, xs),
            "U": dU,
            "b": dA.sum(axis=(0, 1)),
        }
        d_xs = dA @ p.W
        return grads, d_xs, dh_next, None

    i, f, g, o = (cache.gates[k] for k in "ifgo")
    cs = cache.cs
    dA = np.empty((T, B, 4 * hh), dtype=dt)
    dh_next = np.zeros((B, hh), dtype=dt) if d_h_last is None else d_h_last.copy()
    dc_next = np.zeros((B, hh), dtype=dt) if d_c_last is None else d_c_last.copy()
    for t in range(T - 1, -1, -1):
        dh = d_hs[t] + dh_next
        tc = np.tanh(cs[t + 1])
        do = dh * tc
        dc = dh * o[t] * (1.0 - tc ** 2) + dc_next
        di = dc * g[t]
        df = dc * cs[t]
        dg = dc * i[t]
        dc_next = dc * f[t]
        dA[t, :, :hh] = di * i[t] * (1.0 - i[t])
        dA[t, :, hh:2 * hh] = df * f[t] * (1.0 - f[t])
        dA[t, :, 2 * hh:3 * hh] = dg * (1.0 - g[t] ** 2)
        dA[t, :, 3 * hh:] = do * o[t] * (1.0 - o[t])
        dh_next = dA[t] @ p.U
    grads = {
        "W": np.einsum("tbi,tbj->ij", dA, xs),
        "U": np.einsum("tbi,tbj->ij", dA, hs[:-1]),
        "b": dA.sum(axis=(0, 1)),
    }
    d_xs = dA @ p.W
    return grads, d_xs, dh_next, dc_next


def step_state(p: CellParams, x: np.ndarray, state: tuple[np.ndarray, np.ndarray | None]):
    """Batched single step on a (h, c) tuple; returns (new state, gate cache)."""
    h, c = state
    if p.kind == GRU:
        h2, gates = gru_step(p, x, h)
        return (h2, None), gates
    h2, c2, gates = lstm_step(p, x, h, c)
    return (h2, c2), gates


# ---------------------------------------------------------------------------
# Single-sequence API (the contract surface; wraps the batched kernels).


def cell_step(p: CellParams, x_t: np.ndarray, state: HiddenState) -> HiddenState:
    """Advance the recurrence by one step for a single sequence."""
    x = np.asarray(x_t, dtype=np.float64)[None, :]
    if p.kind == GRU:
        h, _ = gru_step(p, x, state.h[None, :])
        return HiddenState(h=h[0])
    c_prev = state.c if state.c is not None else np.zeros(p.hidden_size)
    h, c, _ = lstm_step(p, x, state.h[None, :], c_prev[None, :])
    return HiddenState(h=h[0], c=c[0])


@dataclass
class UnrollCache:
    """Cache of sequence_forward, consumed by sequence_backward."""

    direction: str
    fwd: SeqCache | None = None
    bwd: SeqCache | None = None


def sequence_forward(p: CellParams, xs: np.ndarray, init: HiddenState | None = None,
                     direction: str = "forward", p_back: CellParams | None = None):
    """Unroll over a single sequence xs (T, d).

    Returns (states, final, cache).  states[t] corresponds to input time
    t regardless of direction; bidirectional states are the forward and
    backward states concatenated to width 2h, and final is their
    concatenation (backward final = state after consuming xs[0]).
    p_back supplies the reverse-direction cell; it defaults to p
    (shared weights).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError(f"xs must be (T, d), got shape {xs.shape}")
    if xs.shape[0] < 1:
        raise ValueError("empty sequence")
    xsb = xs[:, None, :]
    h0 = None if init is None else init.h[None, :]
    c0 = None if init is None or init.c is None else init.c[None, :]

    if direction == "forward":
        hs, cache = seq_forward(p, xsb, h0, c0)
        final = HiddenState(h=hs[-1, 0],
                            c=None if cache.cs is None else cache.cs[-1, 0])
        return hs[:, 0, :], final, UnrollCache("forward", fwd=cache)
    if direction == "backward":
        hs, cache = seq_forward(p, xsb[::-1], h0, c0)
        final = HiddenState(h=hs[-1, 0],
                            c=None if cache.cs is None else cache.cs[-1, 0])
        return hs[::-1, 0, :], final, UnrollCache("backward", bwd=cache)
    if direction == "bidirectional":
        pb = p_back if p_back is not None else p
        hs_f, cache_f = seq_forward(p, xsb, h0, c0)
        hs_b, cache_b = seq_forward(pb, xsb[::-1], h0, c0)
        states = np.concatenate([hs_f[:, 0, :], hs_b[::-1, 0, :]], axis=1)
        final = HiddenState(h=np.concatenate([hs_f[-1, 0], hs_b[-1, 0]]))
        return states, final, UnrollCache("bidirectional", fwd=cache_f, bwd=cache_b)
    raise ValueError(f"unknown direction {direction!r}")


def sequence_backward(cache: UnrollCache, d_states: np.ndarray,
                      d_final: HiddenState | None = None):
    """Gradients of a scalar loss through sequence_forward.

    d_states matches the states array ((T, h) or (T, 2h)); d_final
    optionally adds gradient on the final state.  Returns (param grads,
    input grads): for bidirectional, param grads is a dict with
    'fwd'/'bwd' entries, otherwise the plain {W, U, b} dict.
    """
    d_states = np.asarray(d_states, dtype=np.float64)

    def run(c: SeqCache, d_hs_tb, dh_last, dc_last):
        grads, d_xs, _, _ = seq_backward(c, d_hs_tb, dh_last, dc_last)
        return grads, d_xs[:, 0, :]

    if cache.direction == "forward":
        c = cache.fwd
        T = c.xs.shape[0]
        if d_states.shape != (T, c.params.hidden_size):
            raise ValueError("upstream gradient shape does not match cached forward")
        dh_last = None if d_final is None else d_final.h[None, :]
        dc_last = None if d_final is None or d_final.c is None else d_final.c[None, :]
        grads, d_xs = run(c, d_states[:, None, :], dh_last, dc_last)
        return grads, d_xs
    if cache.direction == "backward":
        c = cache.bwd
        T = c.xs.shape[0]
        if d_states.shape != (T, c.params.hidden_size):
            raise ValueError("upstream gradient shape does not match cached forward")
        dh_last = None if d_final is None else d_final.h[None, :]
        dc_last = None if d_final is None or d_final.c is None else d_final.c[None, :]
        grads, d_xs = run(c, d_states[::-1][:, None, :], dh_last, dc_last)
        return grads, d_xs[::-1]
    if cache.direction == "bidirectional":
        cf, cb = cache.fwd, cache.bwd
        T = cf.xs.shape[0]
        hh = cf.params.hidden_size
        if d_states.shape != (T, 2 * hh):
            raise ValueError("upstream gradient shape does not match cached forward")
        dh_f = None
        dh_b = None
        if d_final is not None:
            dh_f = d_final.h[None, :hh]
            dh_b = d_final.h[None, hh:]
        g_f, dx_f = run(cf, d_states[:, None, :hh], dh_f, None)
        g_b, dx_b = run(cb, d_states[::-1][:, None, hh:], dh_b, None)
        return {"fwd": g_f, "bwd": g_b}, dx_f + dx_b[::-1]
    raise ValueError(f"unknown direction {cache.direction!r}")
