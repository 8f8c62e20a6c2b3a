"""Comparison models: persistence and linear-trend naive forecasts, an
AR(p) model with differencing fit by least squares, and plain RNN
forecasters (LSTM/GRU, optionally bidirectional).

All baselines emit (w, d) horizon arrays so the metrics layer is
model-agnostic.  The RNN forecasters share the training protocol of the
VAE (same harness, same scheduled sampling) but minimize pure
prediction MSE: no latent, no reconstruction term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GRU, LSTM, CellParams, gru_step, init_cell, lstm_step, seq_backward, seq_forward
from .model import Affine, LossWeights, init_affine, loss_prediction
from .numeric import SeededRng


def forward_fill_forecast(x: np.ndarray, mask: np.ndarray | None, w: int) -> np.ndarray:
    """Persistence: repeat the last observed step for the whole horizon."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = np.ones(x.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("window has no observed steps")
    last = x[np.flatnonzero(m)[-1]]
    return np.tile(last, (w, 1))


def linear_trend_forecast(x: np.ndarray, mask: np.ndarray | None, w: int) -> np.ndarray:
    """Ordinary least-squares line over the observed window, extrapolated."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T, d = x.shape
    m = np.ones(T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    t_obs = np.flatnonzero(m)
    if t_obs.size < 2:
        raise ValueError("linear trend needs at least 2 observed steps")
    t_future = np.arange(T, T + w, dtype=np.float64)
    out = np.empty((w, d))
    for c in range(d):
        slope, intercept = np.polyfit(t_obs.astype(np.float64), x[t_obs, c], 1)
        out[:, c] = slope * t_future + intercept
    return out


# ---------------------------------------------------------------------------
# AR with differencing, least-squares fit


@dataclass
class ArConfig:
    p: int = 6   # AR order
    d: int = 1   # differencing order

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("AR order p must be >= 1")
        if self.d not in (0, 1, 2):
            raise ValueError("differencing order d must be 0, 1, or 2")


@dataclass
class ArModel:
    cfg: ArConfig
    coeffs: np.ndarray  # (p,)


def _difference_levels(x: np.ndarray, d: int) -> list[np.ndarray]:
    levels = [np.asarray(x, dtype=np.float64).ravel()]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    return levels


def fit_ar(history: np.ndarray, cfg: ArConfig) -> ArModel:
    """Least-squares AR(p) coefficients on the d-times differenced series.

    No intercept: the one-step forecast is the dot product of the
    coefficients with the last p differenced values.
    """
    history = np.asarray(history, dtype=np.float64).ravel()
    if history.size <= cfg.p + cfg.d + 1:
        raise ValueError(f"history too short: need more than p + d + 1 = {cfg.p + cfg.d + 1} points")
    z = _difference_levels(history, cfg.d)[-1]
    p = cfg.p
    rows = len(z) - p
    design = np.empty((rows, p))
    for i in range(rows):
        design[i] = z[i:i + p][::-1]  # coeffs[j] multiplies lag j+1
    target = z[p:]
    if not design.any() and target.any():
        raise ValueError("singular design matrix: all-lag-zero rows cannot explain nonzero targets")
    coeffs, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("singular design matrix: least squares produced non-finite coefficients")
    return ArModel(cfg, coeffs)


def ar_forecast(model: ArModel, context: np.ndarray, w: int) -> np.ndarray:
    """Recursive w-step forecast continuing the given context values."""
    if w < 1:
        raise ValueError("horizon must be >= 1")
    cfg = model.cfg
    context = np.asarray(context, dtype=np.float64).ravel()
    if context.size < cfg.p + cfg.d:
        raise ValueError(f"context needs at least p + d = {cfg.p + cfg.d} values")
    levels = _difference_levels(context, cfg.d)
    tail = list(levels[-1][-cfg.p:])
    preds = np.empty(w)
    for j in range(w):
        nxt = float(np.dot(model.coeffs, tail[::-1][:cfg.p]))
        preds[j] = nxt
        tail.append(nxt)
        tail = tail[-cfg.p:]
    for level in range(cfg.d - 1, -1, -1):
        preds = levels[level][-1] + np.cumsum(preds)
    return preds


def ar_fit_forecast(history: np.ndarray, cfg: ArConfig, w: int) -> np.ndarray:
    """Fit on the history and forecast the w steps right after it."""
    return ar_forecast(fit_ar(history, cfg), history, w)


# ---------------------------------------------------------------------------
# Plain RNN forecasters


@dataclass
class ForecasterCache:
    xs_f: np.ndarray
    win_cache: object
    win_cache_b: object | None
    roll_inputs: np.ndarray    # (w - 1, B, d)
    roll_gates: list
    roll_hs: np.ndarray        # (w, B, h); [j] is the state the j-th output reads
    roll_cs: np.ndarray | None
    frozen_b: np.ndarray | None
    feats: np.ndarray          # (w, B, h or 2h)
    ys: np.ndarray | None
    y_hat: np.ndarray
    forced: list
    losses: dict
    fingerprint: float


class RnnForecaster:
    """Window encoder + affine head + autoregressive horizon rollout.

    Bidirectional variants read the window with a second, reversed cell
    and feed the head the concatenation of the rolling forward state and
    the frozen final backward state; the rollout itself always advances
    the forward cell only (the future is unobserved).
    """

    def __init__(self, kind: str, input_size: int, hidden_size: int,
                 rng: SeededRng, bidirectional: bool = False,
                 fill_value: np.ndarray | None = None):
        self.kind = kind
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.bidirectional = bidirectional
        self.cell = init_cell(kind, input_size, hidden_size, rng)
        self.cell_b = init_cell(kind, input_size, hidden_size, rng) if bidirectional else None
        head_in = 2 * hidden_size if bidirectional else hidden_size
        self.head = init_affine(rng, input_size, head_in)
        self.fill_value = np.zeros(input_size) if fill_value is None else np.asarray(fill_value, dtype=np.float64)

    def params(self) -> dict[str, np.ndarray]:
        out = {"cell.W": self.cell.W, "cell.U": self.cell.U, "cell.b": self.cell.b,
               "head.W": self.head.W, "head.b": self.head.b}
        if self.cell_b is not None:
            out["cell_b.W"] = self.cell_b.W
            out["cell_b.U"] = self.cell_b.U
            out["cell_b.b"] = self.cell_b.b
        return out

    def copy(self, dtype=None) -> "RnnForecaster":
        other = object.__new__(RnnForecaster)
        other.kind = self.kind
        other.input_size = self.input_size
        other.hidden_size = self.hidden_size
        other.bidirectional = self.bidirectional
        cast = (lambda a: a.copy()) if dtype is None else (lambda a: a.astype(dtype))
        other.cell = CellParams(self.kind, self.input_size, self.hidden_size,
                                cast(self.cell.W), cast(self.cell.U), cast(self.cell.b))
        other.cell_b = None if self.cell_b is None else CellParams(
            self.kind, self.input_size, self.hidden_size,
            cast(self.cell_b.W), cast(self.cell_b.U), cast(self.cell_b.b))
        other.head = Affine(cast(self.head.W), cast(self.head.b))
        other.fill_value = cast(self.fill_value)
        return other

    def _fingerprint(self) -> float:
        return float(sum(float(np.sum(a)) for a in self.params().values()))

    def forward_loss(self, x: np.ndarray, mask: np.ndarray | None, y: np.ndarray | None,
                     weights: LossWeights | None = None, w: int | None = None,
                     rng: SeededRng | None = None, teacher_force: float = 0.0,
                     sample: bool = True):
        """Pure prediction MSE; the weights argument is accepted for
        harness compatibility and ignored."""
        x = np.asarray(x)
        if x.ndim != 3:
            raise ValueError(f"x must be (B, T, d), got {x.shape}")
        B, T, d = x.shape
        if y is not None:
            y = np.asarray(y)
            w = y.shape[1]
        if w is None or w < 1:
            raise ValueError("horizon w must be >= 1")
        hh = self.hidden_size
        dt = np.result_type(x.dtype, self.cell.W.dtype)
        xs = np.ascontiguousarray(x.transpose(1, 0, 2)).astype(dt, copy=False)
        mask_tb = (np.ones((T, B), dtype=bool) if mask is None
                   else np.asarray(mask, dtype=bool).T)
        xs_f = np.where(mask_tb[..., None], xs, self.fill_value.astype(dt))

        win_hs, win_cache = seq_forward(self.cell, xs_f)
        state_h = win_hs[-1]
        state_c = win_cache.cs[-1] if win_cache.cs is not None else None
        frozen_b = None
        win_cache_b = None
        if self.bidirectional:
            hs_b, win_cache_b = seq_forward(self.cell_b, xs_f[::-1])
            frozen_b = hs_b[-1]

        ys = None if y is None else np.ascontiguousarray(y.transpose(1, 0, 2)).astype(dt, copy=False)
        can_force = teacher_force > 0.0 and ys is not None and rng is not None
        y_hat = np.empty((w, B, d), dtype=dt)
        feats = np.empty((w, B, self.head.W.shape[1]), dtype=dt)
        roll_inputs = np.empty((max(w - 1, 0), B, d), dtype=dt)
        roll_hs = np.empty((w, B, hh), dtype=dt)
        roll_hs[0] = state_h
        roll_cs = None
        if self.kind == LSTM:
            roll_cs = np.empty((w, B, hh), dtype=dt)
            roll_cs[0] = state_c
        roll_gates = []
        forced = []
        for j in range(w):
            feats[j] = state_h if frozen_b is None else np.concatenate([state_h, frozen_b], axis=1)
            y_hat[j] = feats[j] @ self.head.W.T + self.head.b
            if j + 1 < w:
                f_j = bool(can_force and rng.coin(teacher_force))
                forced.append(f_j)
                inp = ys[j] if f_j else y_hat[j]
                roll_inputs[j] = inp
                if self.kind == GRU:
                    state_h, gates = gru_step(self.cell, inp, state_h)
                else:
                    state_h, state_c, gates = lstm_step(self.cell, inp, state_h, state_c)
                    roll_cs[j + 1] = state_c
                roll_hs[j + 1] = state_h
                roll_gates.append(gates)

        l_pred = loss_prediction(y, y_hat.transpose(1, 0, 2)) if y is not None else 0.0
        losses = {"reco": 0.0, "pred": l_pred, "kl": 0.0, "total": l_pred}
        cache = ForecasterCache(xs_f, win_cache, win_cache_b, roll_inputs, roll_gates,
                                roll_hs, roll_cs, frozen_b, feats, ys, y_hat, forced,
                                losses, self._fingerprint())
        return losses, cache

    def backward(self, cache: ForecasterCache) -> dict[str, np.ndarray]:
        if cache.fingerprint != self._fingerprint():
            raise ValueError("stale cache: parameters changed since the forward pass")
        w, B, d = cache.y_hat.shape
        hh = self.hidden_size
        T = cache.xs_f.shape[0]
        if cache.ys is None:
            raise ValueError("backward needs targets from the forward pass")
        dy_hat = 2.0 * (cache.y_hat - cache.ys) / (w * d * B)

        Whead = self.head.W
        Wc, Uc = self.cell.W, self.cell.U
        gates_n = Wc.shape[0] // hh
        dA_roll = np.empty((max(w - 1, 0), B, gates_n * hh))
        d_ys = np.empty_like(cache.y_hat)
        dh_carry = np.zeros((B, hh))
        dc_carry = np.zeros((B, hh)) if self.kind == LSTM else None
        dfrozen = np.zeros((B, hh)) if self.bidirectional else None
        dinp_next = None
        for j in range(w - 1, -1, -1):
            dy = dy_hat[j].copy()
            if j + 1 < w and not cache.forced[j]:
                # roll step j consumed y_hat[j]; its input gradient lands here
                dy += dinp_next
            d_ys[j] = dy
            dh = dy @ Whead[:, :hh] + dh_carry
            if dfrozen is not None:
                dfrozen += dy @ Whead[:, hh:]
            if j == 0:
                dh_tail = dh
                break
            # backward through roll step j (state j-1 -> state j)
            hp = cache.roll_hs[j - 1]
            if self.kind == GRU:
                r, z, n = cache.roll_gates[j - 1]
                dz = dh * (hp - n)
                dn = dh * (1.0 - z)
                dh_prev = dh * z
                dan = dn * (1.0 - n**2)
                drh = dan @ Uc[2 * hh:]
                dr = drh * hp
                dh_prev = dh_prev + drh * r
                dar = dr * r * (1.0 - r)
                daz = dz * z * (1.0 - z)
                dA_roll[j - 1, :, :hh] = dar
                dA_roll[j - 1, :, hh:2 * hh] = daz
                dA_roll[j - 1, :, 2 * hh:] = dan
                dh_carry = dh_prev + dar @ Uc[:hh] + daz @ Uc[hh:2 * hh]
            else:
                i, f, g, o = cache.roll_gates[j - 1]
                tc = np.tanh(cache.roll_cs[j])
                do = dh * tc
                dc = dh * o * (1.0 - tc**2) + dc_carry
                di = dc * g
                df = dc * cache.roll_cs[j - 1]
                dg = dc * i
                dc_carry = dc * f
                dA_roll[j - 1, :, :hh] = di * i * (1.0 - i)
                dA_roll[j - 1, :, hh:2 * hh] = df * f * (1.0 - f)
                dA_roll[j - 1, :, 2 * hh:3 * hh] = dg * (1.0 - g**2)
                dA_roll[j - 1, :, 3 * hh:] = do * o * (1.0 - o)
                dh_carry = dA_roll[j - 1] @ Uc
            dinp_next = dA_roll[j - 1] @ Wc

        grads = {"head.W": np.einsum("tbi,tbj->ij", d_ys, cache.feats),
                 "head.b": d_ys.sum(axis=(0, 1))}

        win_grads, _, _, _ = seq_backward(cache.win_cache,
                                          np.zeros((T, B, hh)),
                                          d_h_last=dh_tail, d_c_last=dc_carry)
        cell_W = win_grads["W"] + np.einsum("tbi,tbj->ij", dA_roll, cache.roll_inputs)
        cell_b = win_grads["b"] + dA_roll.sum(axis=(0, 1))
        if self.kind == GRU:
            if w > 1:
                r_roll = np.stack([g[0] for g in cache.roll_gates])
                hps = cache.roll_hs[:-1]
                dU_extra = np.concatenate([
                    np.einsum("tbi,tbj->ij", dA_roll[:, :, :hh], hps),
                    np.einsum("tbi,tbj->ij", dA_roll[:, :, hh:2 * hh], hps),
                    np.einsum("tbi,tbj->ij", dA_roll[:, :, 2 * hh:], r_roll * hps),
                ])
            else:
                dU_extra = 0.0
        else:
            dU_extra = np.einsum("tbi,tbj->ij", dA_roll, cache.roll_hs[:-1]) if w > 1 else 0.0
        grads["cell.W"] = cell_W
        grads["cell.U"] = win_grads["U"] + dU_extra
        grads["cell.b"] = cell_b

        if self.bidirectional:
            b_grads, _, _, _ = seq_backward(cache.win_cache_b,
                                            np.zeros((T, B, hh)), d_h_last=dfrozen)
            grads["cell_b.W"] = b_grads["W"]
            grads["cell_b.U"] = b_grads["U"]
            grads["cell_b.b"] = b_grads["b"]
        return grads

    def predict(self, x: np.ndarray, mask: np.ndarray | None, w: int) -> np.ndarray:
        """Deterministic (B, w, d) forecast."""
        _, cache = self.forward_loss(x, mask, None, w=w)
        return cache.y_hat.transpose(1, 0, 2)
