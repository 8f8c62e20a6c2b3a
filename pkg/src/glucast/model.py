"""Multitask recurrent VAE: encoder RNN -> window-level Gaussian latent ->
decoder RNN with separate reconstruction and prediction heads.

The decoder is seeded from the latent via an affine map (tanh on the
hidden state so it stays in the cell's natural range), replays the
mask-filled input window to reconstruct it, then continues
autoregressively for the requested horizon, feeding each step its own
previous output (optionally teacher-forced during training).

Training objective: weighted sum of masked reconstruction MSE,
prediction MSE, and the closed-form KL of the diagonal Gaussian
posterior against a standard normal prior.  model backward() returns
exact gradients of that objective for every parameter, including the
path through the reparameterized sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import GRU, LSTM, CellParams, init_cell, lstm_step, gru_step, seq_backward, seq_forward
from .numeric import SeededRng, uniform_init

LOGVAR_MIN = -20.0
LOGVAR_MAX = 20.0


@dataclass
class LossWeights:
    """Coefficients of the three loss terms (reconstruction, prediction, KL)."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.alpha == 0 and self.beta == 0 and self.gamma == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class LatentState:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray | None = None
    eps: np.ndarray | None = None


@dataclass
class ModelOutput:
    x_hat: np.ndarray   # (T, d) reconstruction of the input window
    y_hat: np.ndarray   # (w, d) horizon prediction
    latent: LatentState


# ---------------------------------------------------------------------------
# Loss terms


def loss_reconstruction(x: np.ndarray, x_hat: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean squared error over observed entries only.

    x of shape (..., T, d) or a plain vector; a per-step mask (shape
    x.shape[:-1] for windows) is broadcast across channels.  Batched
    input (ndim 3) averages the per-window masked means.
    """
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.ndim == x.ndim - 1:  # per-step mask: broadcast across channels
            m = m[..., None]
        m = np.broadcast_to(m, x.shape)
    sq = (x - x_hat) ** 2
    if x.ndim == 3:
        counts = m.sum(axis=(1, 2))
        if np.any(counts == 0):
            raise ValueError("a window has zero observed entries")
        per_window = (sq * m).sum(axis=(1, 2)) / counts
        return per_window.mean()
    count = m.sum()
    if count == 0:
        raise ValueError("zero observed entries")
    return sq[m].sum() / count


def loss_prediction(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean squared error over every horizon entry."""
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    return np.mean((y - y_hat) ** 2)


def loss_kl(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over dimensions.

    2-D input is treated as a batch and averaged over rows.
    """
    mu = np.asarray(mu)
    logvar = np.asarray(logvar)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have equal shapes")
    per = -0.5 * np.sum(1.0 + logvar - mu**2 - np.exp(logvar), axis=-1)
    return per.mean() if per.ndim else per


def loss_total(parts: tuple[float, float, float], weights: LossWeights) -> float:
    reco, pred, kl = parts
    return weights.alpha * reco + weights.beta * pred + weights.gamma * kl


# ---------------------------------------------------------------------------


@dataclass
class Affine:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return h @ self.W.T + self.b


def init_affine(rng: SeededRng, out_size: int, in_size: int) -> Affine:
    return Affine(uniform_init(rng, (out_size, in_size), in_size), np.zeros(out_size))


@dataclass
class ModelCache:
    """Everything backward() needs from one forward_loss() pass."""

    xs: np.ndarray            # (T, B, d) raw inputs, time-major
    xs_f: np.ndarray          # (T, B, d) mask-filled inputs
    mask_tb: np.ndarray       # (T, B) observed flags
    enc_cache: object
    hT: np.ndarray
    mu: np.ndarray
    lv_raw: np.ndarray
    lv: np.ndarray
    eps: np.ndarray | None
    z: np.ndarray
    h0: np.ndarray
    c0: np.ndarray | None
    dec_cache: object
    dec_hs: np.ndarray        # (T, B, h)
    x_hat: np.ndarray         # (T, B, d)
    ys: np.ndarray | None     # (w, B, d) targets, time-major
    y_hat: np.ndarray         # (w, B, d)
    pred_inputs: np.ndarray   # (w, B, d)
    pred_hs: np.ndarray       # (w + 1, B, h); [0] is the decoder's final state
    pred_cs: np.ndarray | None
    pred_gates: list
    forced: list
    weights: LossWeights
    losses: dict
    fingerprint: float = 0.0


class VaeRnn:
    """The multitask VAE with recurrent encoder/decoder.

    input_size d, hidden_size h, latent_size k; cell kind 'gru' or
    'lstm' shared by encoder and decoder.  fill_value (per channel)
    replaces missing entries before encoding; with z-scored data the
    training-set mean is 0, the default.
    """

    def __init__(self, kind: str, input_size: int, hidden_size: int, latent_size: int,
                 rng: SeededRng, fill_value: np.ndarray | None = None):
        if latent_size < 1:
            raise ValueError("latent_size must be >= 1")
        self.kind = kind
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.latent_size = latent_size
        self.enc = init_cell(kind, input_size, hidden_size, rng)
        self.mu_head = init_affine(rng, latent_size, hidden_size)
        self.logvar_head = init_affine(rng, latent_size, hidden_size)
        self.z2h = init_affine(rng, hidden_size, latent_size)
        self.z2c = init_affine(rng, hidden_size, latent_size) if kind == LSTM else None
        self.dec = init_cell(kind, input_size, hidden_size, rng)
        self.recon_head = init_affine(rng, input_size, hidden_size)
        self.pred_head = init_affine(rng, input_size, hidden_size)
        self.fill_value = np.zeros(input_size) if fill_value is None else np.asarray(fill_value, dtype=np.float64)

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        """Live references to every learnable array, keyed by path."""
        out = {
            "enc.W": self.enc.W, "enc.U": self.enc.U, "enc.b": self.enc.b,
            "mu.W": self.mu_head.W, "mu.b": self.mu_head.b,
            "logvar.W": self.logvar_head.W, "logvar.b": self.logvar_head.b,
            "z2h.W": self.z2h.W, "z2h.b": self.z2h.b,
            "dec.W": self.dec.W, "dec.U": self.dec.U, "dec.b": self.dec.b,
            "recon.W": self.recon_head.W, "recon.b": self.recon_head.b,
            "pred.W": self.pred_head.W, "pred.b": self.pred_head.b,
        }
        if self.z2c is not None:
            out["z2c.W"] = self.z2c.W
            out["z2c.b"] = self.z2c.b
        return out

    def _fingerprint(self) -> float:
        return float(sum(float(np.sum(a)) for a in self.params().values()))

    def copy(self, dtype=None) -> "VaeRnn":
        other = object.__new__(VaeRnn)
        other.kind = self.kind
        other.input_size = self.input_size
        other.hidden_size = self.hidden_size
        other.latent_size = self.latent_size
        cast = (lambda a: a.copy()) if dtype is None else (lambda a: a.astype(dtype))
        other.enc = CellParams(self.kind, self.input_size, self.hidden_size,
                               cast(self.enc.W), cast(self.enc.U), cast(self.enc.b))
        other.dec = CellParams(self.kind, self.input_size, self.hidden_size,
                               cast(self.dec.W), cast(self.dec.U), cast(self.dec.b))
        for name in ("mu_head", "logvar_head", "z2h", "recon_head", "pred_head"):
            a = getattr(self, name)
            setattr(other, name, Affine(cast(a.W), cast(a.b)))
        other.z2c = None if self.z2c is None else Affine(cast(self.z2c.W), cast(self.z2c.b))
        other.fill_value = cast(self.fill_value)
        return other

    # -- forward ------------------------------------------------------------

    def _fill(self, xs: np.ndarray, mask_tb: np.ndarray) -> np.ndarray:
        xs_f = np.where(mask_tb[..., None], xs, self.fill_value.astype(xs.dtype))
        return xs_f

    def forward_loss(self, x: np.ndarray, mask: np.ndarray | None, y: np.ndarray | None,
                     weights: LossWeights, w: int | None = None,
                     rng: SeededRng | None = None, teacher_force: float = 0.0,
                     sample: bool = True):
        """Run the model over a batch and evaluate the weighted objective.

        x: (B, T, d); mask: (B, T) observed flags or None for fully
        observed; y: (B, w, d) targets or None (then w must be given and
        the prediction loss is skipped).  Returns (losses dict, cache).
        """
        x = np.asarray(x)
        if x.ndim != 3:
            raise ValueError(f"x must be (B, T, d), got {x.shape}")
        B, T, d = x.shape
        if d != self.input_size:
            raise ValueError(f"x has {d} channels, model expects {self.input_size}")
        if y is not None:
            y = np.asarray(y)
            if y.ndim != 3 or y.shape[0] != B or y.shape[2] != d:
                raise ValueError(f"y must be (B, w, d), got {y.shape}")
            w = y.shape[1]
        if w is None or w < 1:
            raise ValueError("horizon w must be >= 1")
        dt = np.result_type(x.dtype, self.enc.W.dtype)

        xs = np.ascontiguousarray(x.transpose(1, 0, 2)).astype(dt, copy=False)
        mask_tb = (np.ones((T, B), dtype=bool) if mask is None
                   else np.asarray(mask, dtype=bool).T)
        xs_f = self._fill(xs, mask_tb)

        enc_hs, enc_cache = seq_forward(self.enc, xs_f)
        hT = enc_hs[-1]
        mu = self.mu_head.apply(hT)
        lv_raw = self.logvar_head.apply(hT)
        lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
        if sample:
            if rng is None:
                raise ValueError("sampling requires an rng")
            eps = rng.normal(B * self.latent_size).reshape(B, self.latent_size).astype(dt)
            z = mu + np.exp(0.5 * lv) * eps
        else:
            eps = None
            z = mu
        h0 = np.tanh(self.z2h.apply(z))
        c0 = self.z2c.apply(z) if self.z2c is not None else None

        dec_hs, dec_cache = seq_forward(self.dec, xs_f, h0, c0)
        x_hat = dec_hs @ self.recon_head.W.T + self.recon_head.b

        ys = None
        if y is not None:
            ys = np.ascontiguousarray(y.transpose(1, 0, 2)).astype(dt, copy=False)

        state_h = dec_hs[-1]
        state_c = dec_cache.cs[-1] if dec_cache.cs is not None else None
        prev_out = x_hat[-1]
        prev_true = xs_f[-1]
        y_hat = np.empty((w, B, d), dtype=dt)
        pred_inputs = np.empty((w, B, d), dtype=dt)
        pred_hs = np.empty((w + 1, B, self.hidden_size), dtype=dt)
        pred_hs[0] = state_h
        pred_cs = None
        if self.kind == LSTM:
            pred_cs = np.empty((w + 1, B, self.hidden_size), dtype=dt)
            pred_cs[0] = state_c
        pred_gates = []
        forced = []
        can_force = teacher_force > 0.0 and ys is not None and rng is not None
        for j in range(w):
            f_j = bool(can_force and rng.coin(teacher_force))
            forced.append(f_j)
            inp = prev_true if f_j else prev_out
            pred_inputs[j] = inp
            if self.kind == GRU:
                state_h, gates = gru_step(self.dec, inp, state_h)
            else:
                state_h, state_c, gates = lstm_step(self.dec, inp, state_h, state_c)
                pred_cs[j + 1] = state_c
            pred_hs[j + 1] = state_h
            pred_gates.append(gates)
            y_hat[j] = state_h @ self.pred_head.W.T + self.pred_head.b
            prev_out = y_hat[j]
            if ys is not None:
                prev_true = ys[j]

        l_reco = loss_reconstruction(x, x_hat.transpose(1, 0, 2), None if mask is None else mask)
        l_pred = loss_prediction(y, y_hat.transpose(1, 0, 2)) if y is not None else 0.0
        l_kl = loss_kl(mu, lv)
        losses = {
            "reco": l_reco,
            "pred": l_pred,
            "kl": l_kl,
            "total": loss_total((l_reco, l_pred, l_kl), weights),
        }
        cache = ModelCache(xs, xs_f, mask_tb, enc_cache, hT, mu, lv_raw, lv, eps, z,
                           h0, c0, dec_cache, dec_hs, x_hat, ys, y_hat, pred_inputs,
                           pred_hs, pred_cs, pred_gates, forced, weights, losses,
                           fingerprint=self._fingerprint())
        return losses, cache

    # -- backward -----------------------------------------------------------

    def backward(self, cache: ModelCache) -> dict[str, np.ndarray]:
        """Exact gradients of the cached weighted objective."""
        if cache.fingerprint != self._fingerprint():
            raise ValueError("stale cache: parameters changed since the forward pass")
        T, B, d = cache.xs.shape
        w = cache.y_hat.shape[0]
        hh = self.hidden_size
        weights = cache.weights
        dt = cache.xs_f.dtype

        # reconstruction loss -> d(x_hat); per-window masked mean, batch mean
        m3 = cache.mask_tb[..., None]
        counts = cache.mask_tb.sum(axis=0).astype(dt) * d  # observed entries per window
        dx_hat = weights.alpha * 2.0 * (cache.x_hat - cache.xs) * m3 / counts[None, :, None] / B

        # prediction loss -> d(y_hat)
        if cache.ys is not None:
            dy_hat = weights.beta * 2.0 * (cache.y_hat - cache.ys) / (w * d * B)
        else:
            dy_hat = np.zeros_like(cache.y_hat)

        # prediction phase, walked backwards with the autoregressive feed
        Wdec, Udec = self.dec.W, self.dec.U
        Wpred = self.pred_head.W
        gates_n = Wdec.shape[0] // hh
        dA_pred = np.empty((w, B, gates_n * hh), dtype=dt)
        d_ys = np.empty_like(cache.y_hat)
        dh_carry = np.zeros((B, hh), dtype=dt)
        dc_carry = np.zeros((B, hh), dtype=dt) if self.kind == LSTM else None
        dinp_next = None
        for j in range(w - 1, -1, -1):
            dy = dy_hat[j].copy()
            if j + 1 < w and not cache.forced[j + 1]:
                dy += dinp_next
            d_ys[j] = dy
            dh = dy @ Wpred + dh_carry
            hp = cache.pred_hs[j]
            if self.kind == GRU:
                r, z, n = cache.pred_gates[j]
                dz = dh * (hp - n)
                dn = dh * (1.0 - z)
                dh_prev = dh * z
                dan = dn * (1.0 - n**2)
                drh = dan @ Udec[2 * hh:]
                dr = drh * hp
                dh_prev = dh_prev + drh * r
                dar = dr * r * (1.0 - r)
                daz = dz * z * (1.0 - z)
                dA_pred[j, :, :hh] = dar
                dA_pred[j, :, hh:2 * hh] = daz
                dA_pred[j, :, 2 * hh:] = dan
                dh_carry = dh_prev + dar @ Udec[:hh] + daz @ Udec[hh:2 * hh]
            else:
                i, f, g, o = cache.pred_gates[j]
                tc = np.tanh(cache.pred_cs[j + 1])
                do = dh * tc
                dc = dh * o * (1.0 - tc**2) + dc_carry
                di = dc * g
                df = dc * cache.pred_cs[j]
                dg = dc * i
                dc_carry = dc * f
                dA_pred[j, :, :hh] = di * i * (1.0 - i)
                dA_pred[j, :, hh:2 * hh] = df * f * (1.0 - f)
                dA_pred[j, :, 2 * hh:3 * hh] = dg * (1.0 - g**2)
                dA_pred[j, :, 3 * hh:] = do * o * (1.0 - o)
                dh_carry = dA_pred[j] @ Udec
            dinp_next = dA_pred[j] @ Wdec

        grads = {}
        grads["pred.W"] = np.einsum("tbi,tbj->ij", d_ys, cache.pred_hs[1:])
        grads["pred.b"] = d_ys.sum(axis=(0, 1))

        # junction: input of pred step 0 was x_hat[T-1] unless teacher-forced
        dx_hat_total = dx_hat
        if not cache.forced[0]:
            dx_hat_total = dx_hat.copy()
            dx_hat_total[T - 1] += dinp_next

        # reconstruction head and decoder BPTT over the window replay
        grads["recon.W"] = np.einsum("tbi,tbj->ij", dx_hat_total, cache.dec_hs)
        grads["recon.b"] = dx_hat_total.sum(axis=(0, 1))
        d_hs_dec = dx_hat_total @ self.recon_head.W
        dec_grads, _, dh0, dc0 = seq_backward(cache.dec_cache, d_hs_dec,
                                              d_h_last=dh_carry, d_c_last=dc_carry)

        # merge prediction-phase cell gradients into the decoder's
        dec_W = dec_grads["W"] + np.einsum("tbi,tbj->ij", dA_pred, cache.pred_inputs)
        dec_b = dec_grads["b"] + dA_pred.sum(axis=(0, 1))
        if self.kind == GRU:
            r_pred = np.stack([g[0] for g in cache.pred_gates])
            dU_extra = np.concatenate([
                np.einsum("tbi,tbj->ij", dA_pred[:, :, :hh], cache.pred_hs[:-1]),
                np.einsum("tbi,tbj->ij", dA_pred[:, :, hh:2 * hh], cache.pred_hs[:-1]),
                np.einsum("tbi,tbj->ij", dA_pred[:, :, 2 * hh:], r_pred * cache.pred_hs[:-1]),
            ])
        else:
            dU_extra = np.einsum("tbi,tbj->ij", dA_pred, cache.pred_hs[:-1])
        grads["dec.W"] = dec_W
        grads["dec.U"] = dec_grads["U"] + dU_extra
        grads["dec.b"] = dec_b

        # latent-to-state maps (tanh on h path)
        da0 = dh0 * (1.0 - cache.h0**2)
        grads["z2h.W"] = np.einsum("bi,bj->ij", da0, cache.z)
        grads["z2h.b"] = da0.sum(axis=0)
        dz = da0 @ self.z2h.W
        if self.z2c is not None:
            grads["z2c.W"] = np.einsum("bi,bj->ij", dc0, cache.z)
            grads["z2c.b"] = dc0.sum(axis=0)
            dz = dz + dc0 @ self.z2c.W

        # reparameterization and KL
        dmu = dz.copy()
        dlv = np.zeros_like(cache.lv)
        if cache.eps is not None:
            dlv += dz * cache.eps * 0.5 * np.exp(0.5 * cache.lv)
        dmu += weights.gamma * cache.mu / B
        dlv += weights.gamma * 0.5 * (np.exp(cache.lv) - 1.0) / B
        dlv_raw = dlv * ((cache.lv_raw >= LOGVAR_MIN) & (cache.lv_raw <= LOGVAR_MAX))

        grads["mu.W"] = np.einsum("bi,bj->ij", dmu, cache.hT)
        grads["mu.b"] = dmu.sum(axis=0)
        grads["logvar.W"] = np.einsum("bi,bj->ij", dlv_raw, cache.hT)
        grads["logvar.b"] = dlv_raw.sum(axis=0)
        dhT = dmu @ self.mu_head.W + dlv_raw @ self.logvar_head.W

        enc_grads, _, _, _ = seq_backward(cache.enc_cache,
                                          np.zeros((T, B, hh), dtype=dt), d_h_last=dhT)
        grads["enc.W"] = enc_grads["W"]
        grads["enc.U"] = enc_grads["U"]
        grads["enc.b"] = enc_grads["b"]
        return grads

    # -- inference surfaces ---------------------------------------------------

    @staticmethod
    def _as_window(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x[:, None] if x.ndim == 1 else x

    def encode(self, x: np.ndarray, mask: np.ndarray | None = None) -> LatentState:
        """Posterior parameters for one window x (T, d)."""
        x = self._as_window(x)
        T = x.shape[0]
        xs = x[:, None, :]
        m = np.ones((T, 1), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(T, 1)
        xs_f = self._fill(xs, m)
        enc_hs, _ = seq_forward(self.enc, xs_f)
        hT = enc_hs[-1, 0]
        mu = self.mu_head.apply(hT)
        lv = np.clip(self.logvar_head.apply(hT), LOGVAR_MIN, LOGVAR_MAX)
        return LatentState(mu=mu, logvar=lv)

    def reparameterize(self, latent: LatentState, rng: SeededRng) -> LatentState:
        """Draw z = mu + exp(logvar/2) * eps, recording eps."""
        eps = rng.normal(latent.mu.size).reshape(latent.mu.shape)
        z = latent.mu + np.exp(0.5 * latent.logvar) * eps
        return LatentState(mu=latent.mu, logvar=latent.logvar, z=z, eps=eps)

    def decode(self, z: np.ndarray, x: np.ndarray, w: int,
               mask: np.ndarray | None = None) -> ModelOutput:
        """Reconstruct one window from z and roll the horizon forward."""
        if w < 1:
            raise ValueError("horizon w must be >= 1")
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_size,):
            raise ValueError(f"z must have length {self.latent_size}")
        x = self._as_window(x)
        T = x.shape[0]
        xs = x[:, None, :]
        m = np.ones((T, 1), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(T, 1)
        xs_f = self._fill(xs, m)
        zb = z[None, :]
        h0 = np.tanh(self.z2h.apply(zb))
        c0 = self.z2c.apply(zb) if self.z2c is not None else None
        dec_hs, dec_cache = seq_forward(self.dec, xs_f, h0, c0)
        x_hat = dec_hs[:, 0, :] @ self.recon_head.W.T + self.recon_head.b
        state_h = dec_hs[-1]
        state_c = dec_cache.cs[-1] if dec_cache.cs is not None else None
        prev = x_hat[-1][None, :]
        y_hat = np.empty((w, self.input_size))
        for j in range(w):
            if self.kind == GRU:
                state_h, _ = gru_step(self.dec, prev, state_h)
            else:
                state_h, state_c, _ = lstm_step(self.dec, prev, state_h, state_c)
            y_hat[j] = (state_h @ self.pred_head.W.T + self.pred_head.b)[0]
            prev = y_hat[j][None, :]
        return ModelOutput(x_hat=x_hat, y_hat=y_hat,
                           latent=LatentState(mu=z, logvar=np.zeros_like(z), z=z))

    def predict(self, x: np.ndarray, mask: np.ndarray | None, w: int) -> np.ndarray:
        """Deterministic horizon forecast (z = mu) for a batch (B, T, d)."""
        _, cache = self.forward_loss(x, mask, None, LossWeights(1.0, 0.0, 0.0),
                                     w=w, sample=False)
        return cache.y_hat.transpose(1, 0, 2)

    def impute(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Fill missing steps of one window with the decoder reconstruction.

        Deterministic (z = mu); observed steps are returned unchanged.
        """
        x = self._as_window(x)
        mask = np.asarray(mask, dtype=bool).reshape(x.shape[0])
        if not mask.any():
            raise ValueError("cannot impute a fully masked window")
        if mask.all():
            return x.copy()
        latent = self.encode(x, mask)
        out = self.decode(latent.mu, x, w=1, mask=mask)
        filled = np.where(mask[:, None], x, out.x_hat)
        return filled


def impute_series(model: VaeRnn, values: np.ndarray, mask: np.ndarray,
                  window: int, stride: int | None = None, max_passes: int = 64) -> np.ndarray:
    """Fill every gap of a full series by sliding window-level imputation.

    Gaps wider than the window are closed over several passes: each pass
    imputes windows that mix observed and missing steps (averaging
    overlapping fills), then treats the filled steps as observed.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    m = np.asarray(mask, dtype=bool).reshape(n).copy()
    if not m.any():
        raise ValueError("cannot impute a fully masked series")
    if window > n:
        raise ValueError("window longer than the series")
    work = np.where(m[:, None], values, 0.0)
    step = stride if stride is not None else max(1, window // 2)
    starts = list(range(0, n - window + 1, step))
    if starts[-1] != n - window:
        starts.append(n - window)
    for _ in range(max_passes):
        if m.all():
            break
        acc = np.zeros_like(work)
        cnt = np.zeros(n)
        for s in starts:
            wm = m[s:s + window]
            if wm.all() or not wm.any():
                continue
            filled = model.impute(work[s:s + window], wm)
            missing = ~wm
            acc[s:s + window][missing] += filled[missing]
            cnt[s:s + window][missing] += 1
        newly = (cnt > 0) & ~m
        if not newly.any():
            raise RuntimeError("imputation made no progress; gap is unreachable")
        work[newly] = acc[newly] / cnt[newly, None]
        m |= newly
    if not m.all():
        raise RuntimeError("imputation did not converge within max_passes")
    return work
