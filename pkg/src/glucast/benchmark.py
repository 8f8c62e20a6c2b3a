"""Benchmark orchestrator: trains/evaluates a configured model list on
one dataset and produces the comparison tables.

Each learnable model is trained once at the maximum horizon and every
shorter horizon is scored on the prefix of that rollout, so per-model
numbers across horizons come from a single fit.  Models run in a fixed
order with per-model seeds derived as master_seed + model_index; one
model's failure is recorded and the run continues.

All metrics are computed on the glucose channel in original mg/dL
units (learned models operate on z-scored data and their outputs are
inverse-transformed first).  For Clarke classification only,
nonpositive predictions are clamped to 1 mg/dL (the grid is undefined
at <= 0; such forecasts are extreme underestimations and land in the
worst applicable zone); clamp counts are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    ArConfig,
    RnnForecaster,
    ar_forecast,
    fit_ar,
    forward_fill_forecast,
    linear_trend_forecast,
)
from .data import TimeSeries, WindowedDataset, denormalize, make_windows, normalize
from .metrics import ForecastResult, ZONES, clarke_zones, aggregate, mape, nmape, rmse
from .model import VaeRnn
from .numeric import SeededRng
from .training import TrainConfig, TrainTrace, epochs_to_converge, train

MODEL_ORDER = ("ForwardFill", "LinearTrend", "ARIMA", "LSTM", "GRU",
               "BiLSTM", "BiGRU", "VAE-LSTM", "VAE-GRU")
LEARNABLE = {"LSTM", "GRU", "BiLSTM", "BiGRU", "VAE-LSTM", "VAE-GRU"}
CLARKE_PRED_FLOOR = 1.0


@dataclass
class ModelSettings:
    hidden_size: int = 64
    latent_size: int = 8
    ar_p: int = 6
    ar_d: int = 1


@dataclass
class BenchmarkResult:
    metric_rows: list          # (model, horizon_steps, metric, mean, std)
    clarke_rows: list          # (model, horizon_steps, zone, mean, std)
    clarke_points: dict        # model -> (refs, preds, zones) at clarke_horizon
    traces: dict               # model -> TrainTrace
    convergence: dict          # model -> epochs_to_converge
    failures: dict             # model -> error message
    clamped_predictions: dict  # model -> count clamped for Clarke
    horizons: list
    clarke_horizon: int
    dataset: WindowedDataset


def _series_fill_means(ds: WindowedDataset) -> np.ndarray:
    """Per-series glucose mean over observed training-window entries."""
    means = np.empty(len(ds.series_ids))
    for s in range(len(ds.series_ids)):
        sel = ds.train_idx[ds.origin_series[ds.train_idx] == s]
        if sel.size == 0:
            sel = ds.test_idx[ds.origin_series[ds.test_idx] == s]
        obs = ds.X[sel][..., 0][ds.X_mask[sel]]
        means[s] = obs.mean() if obs.size else 0.0
    return means


def _naive_forecasts(name: str, ds: WindowedDataset, w_max: int,
                     ar_cfg: ArConfig | None, series: list[TimeSeries],
                     split_frac: float) -> np.ndarray:
    """(N_test, w_max) glucose forecasts for the non-learnable models."""
    test = ds.test_idx
    out = np.empty((test.size, w_max))
    fill_means = _series_fill_means(ds)
    ar_models = {}
    if name == "ARIMA":
        for s_ix, ts in enumerate(series):
            boundary = int(np.floor(split_frac * len(ts)))
            segment = ts.values[:boundary, 0]
            seg_mask = ts.mask[:boundary]
            filled = np.where(seg_mask, segment, fill_means[s_ix])
            ar_models[s_ix] = fit_ar(filled, ar_cfg)
    for row, ix in enumerate(test):
        x = ds.X[ix]
        m = ds.X_mask[ix]
        if name == "ForwardFill":
            out[row] = forward_fill_forecast(x, m, w_max)[:, 0]
        elif name == "LinearTrend":
            out[row] = linear_trend_forecast(x, m, w_max)[:, 0]
        elif name == "ARIMA":
            s_ix = ds.origin_series[ix]
            context = np.where(m, x[:, 0], fill_means[s_ix])
            out[row] = ar_forecast(ar_models[s_ix], context, w_max)
        else:
            raise ValueError(f"unknown naive model {name!r}")
    return out


def _build_learnable(name: str, d: int, settings: ModelSettings, rng: SeededRng):
    if name == "VAE-GRU":
        return VaeRnn("gru", d, settings.hidden_size, settings.latent_size, rng)
    if name == "VAE-LSTM":
        return VaeRnn("lstm", d, settings.hidden_size, settings.latent_size, rng)
    kind = "lstm" if "LSTM" in name else "gru"
    return RnnForecaster(kind, d, settings.hidden_size, rng, bidirectional=name.startswith("Bi"))


def run_benchmark(models: list[str], series: list[TimeSeries], horizons: list[int],
                  T: int, stride: int, train_cfg: TrainConfig,
                  settings: ModelSettings | None = None,
                  clarke_horizon: int | None = None,
                  min_observed_frac: float = 0.5,
                  split_frac: float = 0.8) -> BenchmarkResult:
    """Train and score every requested model on every horizon prefix."""
    if not models:
        raise ValueError("no models requested")
    if not horizons:
        raise ValueError("no horizons requested")
    unknown = [m for m in models if m not in MODEL_ORDER]
    if unknown:
        raise ValueError(f"unknown models: {unknown}; known: {list(MODEL_ORDER)}")
    settings = settings or ModelSettings()
    horizons = sorted(set(int(h) for h in horizons))
    w_max = max(horizons)
    clarke_h = clarke_horizon if clarke_horizon is not None else (12 if 12 in horizons else w_max)
    if clarke_h not in horizons:
        raise ValueError("clarke_horizon must be one of the horizons")

    ds = make_windows(series, T=T, w=w_max, stride=stride,
                      min_observed_frac=min_observed_frac, split_frac=split_frac)
    if ds.test_idx.size == 0:
        raise ValueError("dataset produced no test windows")
    if ds.train_idx.size == 0:
        raise ValueError("dataset produced no training windows")
    ds_norm = normalize(ds)
    ar_cfg = ArConfig(settings.ar_p, settings.ar_d)

    result = BenchmarkResult([], [], {}, {}, {}, {}, {}, horizons, clarke_h, ds)
    test = ds.test_idx
    test_series = ds.origin_series[test]
    present = sorted(set(test_series.tolist()))

    for name in models:
        index = MODEL_ORDER.index(name)
        seed = train_cfg.seed + index
        try:
            if name in LEARNABLE:
                model = _build_learnable(name, ds.X.shape[2], settings, SeededRng(seed))
                cfg = TrainConfig(
                    epochs=train_cfg.epochs, batch_size=train_cfg.batch_size,
                    learning_rate=train_cfg.learning_rate, beta1=train_cfg.beta1,
                    beta2=train_cfg.beta2, epsilon=train_cfg.epsilon, seed=seed,
                    weights=train_cfg.weights, clip_norm=train_cfg.clip_norm,
                    teacher_force=train_cfg.teacher_force, val_fraction=train_cfg.val_fraction)
                trace = train(model, ds_norm, cfg)
                result.traces[name] = trace
                if len(trace):
                    result.convergence[name] = epochs_to_converge(trace)
                pred_norm = model.predict(ds_norm.X[test], ds_norm.X_mask[test], w_max)
                forecasts = denormalize(pred_norm, ds_norm)[..., 0]
            else:
                forecasts = _naive_forecasts(name, ds, w_max, ar_cfg, series, split_frac)

            result.clamped_predictions[name] = int(np.sum(forecasts < CLARKE_PRED_FLOOR))
            for h in horizons:
                per_series = {"rmse": [], "mape": [], "nmape": []}
                zone_pcts = {z: [] for z in ZONES}
                for s_ix in present:
                    rows = test_series == s_ix
                    refs = ds.Y[test[rows]][:, :h, 0].ravel()
                    preds = forecasts[rows][:, :h].ravel()
                    fr = ForecastResult(refs, preds, horizon_steps=h, model_id=name,
                                        series_id=ds.series_ids[s_ix])
                    per_series["rmse"].append(rmse(fr))
                    per_series["mape"].append(mape(fr))
                    per_series["nmape"].append(nmape(fr))
                    safe_preds = np.maximum(preds, CLARKE_PRED_FLOOR)
                    zones = clarke_zones(refs, safe_preds)
                    n = len(zones)
                    for z in ZONES:
                        zone_pcts[z].append(100.0 * zones.count(z) / n)
                    if h == clarke_h:
                        key = result.clarke_points.setdefault(name, ([], [], []))
                        key[0].extend(refs.tolist())
                        key[1].extend(safe_preds.tolist())
                        key[2].extend(zones)
                for metric in ("rmse", "mape", "nmape"):
                    mean, std = aggregate(per_series[metric])
                    result.metric_rows.append((name, h, metric, mean, std))
                for z in ZONES:
                    mean, std = aggregate(zone_pcts[z])
                    result.clarke_rows.append((name, h, z, mean, std))
        except Exception as exc:  # noqa: BLE001 - per-model isolation is the contract
            result.failures[name] = f"{type(exc).__name__}: {exc}"
    return result
