"""End-to-end command pipelines: each function produces one command's
artifact set in an output directory and returns a manifest dict.

Every output file except the manifest is reproducible byte-for-byte at
a fixed seed; manifests carry wall-clock timings and are exempt.
"""

from __future__ import annotations

import json
import os
import time
from datetime import timedelta

import numpy as np

from . import __version__
from .benchmark import LEARNABLE, BenchmarkResult, run_benchmark
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .data import (
    CsvSchema,
    SyntheticTriple,
    calibrate_to_glucose,
    denormalize,
    load_csv,
    make_windows,
    normalize,
    synth_generate,
    write_series_csv,
)
from .metrics import ForecastResult, ZONES, aggregate, clarke_summary, clarke_zones, mape, nmape, rmse
from .model import VaeRnn, impute_series
from .numeric import SeededRng
from .report import (
    clarke_markdown,
    convergence_markdown,
    footnotes_markdown,
    horizon_label,
    metrics_markdown,
    read_csv,
    render_clarke_figure,
    render_convergence_figure,
    render_imputation_figure,
    render_series_figure,
    save_svg,
    write_csv,
)
from .training import EpochRecord, TrainTrace, epochs_to_converge, train

RESULTS_CSV_HEADER = ["model", "horizon_steps", "metric", "mean", "std"]
CLARKE_CSV_HEADER = ["model", "horizon_steps", "zone", "mean", "std"]
TRACE_CSV_HEADER = ["epoch", "loss_reco", "loss_pred", "loss_kl", "loss_total",
                    "val_loss", "max_grad_norm"]


def _slug(name: str) -> str:
    return name.lower().replace("-", "_")


def _schema(cfg: Config) -> CsvSchema:
    d = cfg.data
    return CsvSchema(timestamp_column=d.timestamp_column,
                     glucose_column=d.glucose_column,
                     series_column=d.series_column,
                     extra_channels=tuple(d.extra_channels),
                     step=timedelta(minutes=d.step_minutes))


def build_series(cfg: Config):
    """Materialize the configured dataset.

    Returns (series list, SyntheticTriple or None).  Synthetic data is
    calibrated into mg/dL unless data.calibrate is off.
    """
    d = cfg.data
    if d.kind == "synthetic":
        seed = d.data_seed if d.data_seed is not None else cfg.train.seed
        triple = synth_generate(d.n_samples, seed=seed, noise_scale=d.noise_scale)
        series = list(triple.series)
        if d.calibrate:
            series = [calibrate_to_glucose(ts, d.level, d.scale) for ts in series]
        return series, triple
    schema = _schema(cfg)
    series = []
    for path in d.paths:
        series.extend(load_csv(path, schema))
    return series, None


def _write_manifest(out_dir: str, payload: dict) -> str:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _manifest_base(command: str, cfg: Config | None, out_dir: str, started: float) -> dict:
    payload = {
        "command": command,
        "glucast_version": __version__,
        "output_dir": os.path.abspath(out_dir),
        "wall_clock_seconds": round(time.time() - started, 3),
        "artifacts": [],
    }
    if cfg is not None:
        payload["config"] = cfg.echo()
    return payload


def _write_trace_csv(trace: TrainTrace, path: str) -> None:
    rows = [[r.epoch, r.loss_reco, r.loss_pred, r.loss_kl, r.loss_total,
             r.val_loss, r.max_grad_norm] for r in trace.records]
    write_csv(path, TRACE_CSV_HEADER, rows)


def _read_trace_csv(path: str) -> TrainTrace:
    _, rows = read_csv(path)
    records = [EpochRecord(int(r[0]), *(float(v) for v in r[1:])) for r in rows]
    return TrainTrace(records)


def mean_fill_gap_mse(triple: SyntheticTriple) -> float:
    """Masked-region MSE of the constant mean-of-observed fill (the oracle baseline)."""
    ts3 = triple.series[2]
    observed_mean = float(ts3.values[ts3.mask, 0].mean())
    gap = slice(triple.gap_start, triple.gap_start + triple.gap_length)
    truth = triple.ts3_truth[gap]
    return float(np.mean((truth - observed_mean) ** 2))


def run_imputation_demo(cfg: Config, triple: SyntheticTriple):
    """Train the VAE on the raw triple and fill the masked interval.

    Returns (imputed ts3 values (n,), model, gap MSE of the model,
    gap MSE of the mean-fill baseline).
    """
    ds = make_windows(list(triple.series), T=cfg.data.T, w=1, stride=cfg.data.stride,
                      min_observed_frac=cfg.data.min_observed_frac, split_frac=1.0)
    ds_norm = normalize(ds)
    model = VaeRnn(cfg.model.kind, 1, cfg.model.hidden_size, cfg.model.latent_size,
                   SeededRng(cfg.train.seed))
    train(model, ds_norm, cfg.train.train_config())

    ts3 = triple.series[2]
    norm_vals = (np.nan_to_num(ts3.values, nan=0.0) - ds_norm.norm_mean) / ds_norm.norm_std
    filled_norm = impute_series(model, norm_vals, ts3.mask, window=cfg.data.T)
    filled = denormalize(filled_norm, ds_norm)[:, 0]
    filled[ts3.mask] = ts3.values[ts3.mask, 0]

    gap = slice(triple.gap_start, triple.gap_start + triple.gap_length)
    model_mse = float(np.mean((triple.ts3_truth[gap] - filled[gap]) ** 2))
    return filled, model, model_mse, mean_fill_gap_mse(triple)


def run_synth(cfg: Config, out_dir: str, with_model: bool = False) -> dict:
    """Synthetic dataset files plus the series/imputation figures."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.data.data_seed if cfg.data.data_seed is not None else cfg.train.seed
    triple = synth_generate(cfg.data.n_samples, seed=seed, noise_scale=cfg.data.noise_scale)

    artifacts = []
    for ts in triple.series:
        path = os.path.join(out_dir, f"{ts.series_id}.csv")
        write_series_csv(ts, path)
        artifacts.append(path)
    truth_path = os.path.join(out_dir, "ts3_truth.csv")
    write_csv(truth_path, ["step", "value"],
              [[k, float(v)] for k, v in enumerate(triple.ts3_truth)])
    artifacts.append(truth_path)

    fig_path = os.path.join(out_dir, "synth_series.svg")
    save_svg(render_series_figure(triple.series), fig_path)
    artifacts.append(fig_path)

    manifest = _manifest_base("synth", cfg, out_dir, started)
    manifest["data_seed"] = seed
    manifest["gap_start"] = triple.gap_start
    manifest["gap_length"] = triple.gap_length

    if with_model:
        filled, model, model_mse, meanfill_mse = run_imputation_demo(cfg, triple)
        ts3 = triple.series[2]
        imputed_path = os.path.join(out_dir, "ts3_imputed.csv")
        write_csv(imputed_path, ["step", "value"],
                  [[k, float(v)] for k, v in enumerate(filled)])
        fig2_path = os.path.join(out_dir, "imputation.svg")
        save_svg(render_imputation_figure(ts3.values[:, 0], filled, triple.ts3_truth,
                                          triple.gap_start, triple.gap_length), fig2_path)
        ckpt_path = os.path.join(out_dir, "imputation_model.npz")
        save_checkpoint(model, ckpt_path, extra={"purpose": "synthetic imputation demo"})
        artifacts.extend([imputed_path, fig2_path, ckpt_path])
        manifest["imputation"] = {
            "model_gap_mse": model_mse,
            "mean_fill_gap_mse": meanfill_mse,
            "model_beats_mean_fill": bool(model_mse < meanfill_mse),
        }

    manifest["artifacts"] = [os.path.basename(a) for a in artifacts]
    _write_manifest(out_dir, manifest)
    manifest["wall_clock_seconds"] = round(time.time() - started, 3)
    return manifest


def _build_windows(cfg: Config, series):
    horizons = sorted(set(int(h) for h in cfg.benchmark.horizons))
    w_max = max(horizons)
    ds = make_windows(series, T=cfg.data.T, w=w_max, stride=cfg.data.stride,
                      min_observed_frac=cfg.data.min_observed_frac,
                      split_frac=cfg.data.split_frac)
    return ds, horizons, w_max


def run_train(cfg: Config, out_dir: str) -> dict:
    """Train the configured VAE model, save checkpoint + trace."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    series, _ = build_series(cfg)
    ds, horizons, w_max = _build_windows(cfg, series)
    ds_norm = normalize(ds)
    model = VaeRnn(cfg.model.kind, ds.X.shape[2], cfg.model.hidden_size,
                   cfg.model.latent_size, SeededRng(cfg.train.seed))
    trace = train(model, ds_norm, cfg.train.train_config())

    ckpt_path = os.path.join(out_dir, "checkpoint.npz")
    save_checkpoint(model, ckpt_path, extra={
        "norm_mean": list(map(float, ds_norm.norm_mean)),
        "norm_std": list(map(float, ds_norm.norm_std)),
        "T": ds.T, "w": ds.w,
        "channels": list(ds.channels),
    })
    trace_path = os.path.join(out_dir, "trace.csv")
    _write_trace_csv(trace, trace_path)

    manifest = _manifest_base("train", cfg, out_dir, started)
    manifest["artifacts"] = ["checkpoint.npz", "trace.csv"]
    manifest["windows"] = {"train": int(ds.train_idx.size), "test": int(ds.test_idx.size),
                           "dropped_invalid": ds.dropped_invalid,
                           "dropped_boundary": ds.dropped_boundary}
    if len(trace):
        manifest["final_loss_total"] = float(trace.records[-1].loss_total)
        manifest["epochs_to_converge"] = epochs_to_converge(trace)
    _write_manifest(out_dir, manifest)
    return manifest


PREDICTIONS_HEADER = ["model", "series_id", "window_start", "horizon_step",
                      "reference", "predicted"]


def run_predict(cfg: Config, out_dir: str, checkpoint: str) -> dict:
    """Forecast the test split with a saved model; write predictions.csv."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    model, meta = load_checkpoint(checkpoint)
    series, _ = build_series(cfg)
    ds, horizons, w_max = _build_windows(cfg, series)
    ds_norm = normalize(ds)
    test = ds.test_idx
    if test.size == 0:
        raise ValueError("dataset produced no test windows")
    pred_norm = model.predict(ds_norm.X[test], ds_norm.X_mask[test], w_max)
    preds = denormalize(pred_norm, ds_norm)
    label = f"{meta['model']}-{meta['kind']}"
    rows = []
    for row, ix in enumerate(test):
        sid = ds.series_ids[ds.origin_series[ix]]
        start = int(ds.origin_start[ix])
        for j in range(w_max):
            rows.append([label, sid, start, j + 1,
                         float(ds.Y[ix, j, 0]), float(preds[row, j, 0])])
    path = os.path.join(out_dir, "predictions.csv")
    write_csv(path, PREDICTIONS_HEADER, rows)
    manifest = _manifest_base("predict", cfg, out_dir, started)
    manifest["artifacts"] = ["predictions.csv"]
    manifest["checkpoint"] = os.path.abspath(checkpoint)
    manifest["n_rows"] = len(rows)
    _write_manifest(out_dir, manifest)
    return manifest


def run_impute(cfg: Config, out_dir: str, checkpoint: str, series_csv: str) -> dict:
    """Fill every gap in one CSV series with a saved model."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    model, meta = load_checkpoint(checkpoint)
    extra = meta.get("extra", {})
    if "norm_mean" not in extra:
        raise ValueError("checkpoint lacks normalization statistics; retrain with `glucast train`")
    mean = np.array(extra["norm_mean"])
    std = np.array(extra["norm_std"])
    window = int(extra.get("T", cfg.data.T))
    loaded = load_csv(series_csv, _schema(cfg))
    if len(loaded) != 1:
        raise ValueError(f"expected exactly one series in {series_csv}, found {len(loaded)}")
    ts = loaded[0]
    norm_vals = (np.nan_to_num(ts.values, nan=0.0) - mean) / std
    filled_norm = impute_series(model, norm_vals, ts.mask, window=window)
    filled = filled_norm * std + mean
    filled[ts.mask] = ts.values[ts.mask]
    out_ts = type(ts)(ts.series_id, ts.start_time, ts.step, filled,
                      np.ones(len(ts), dtype=bool), ts.channels)
    path = os.path.join(out_dir, "imputed.csv")
    write_series_csv(out_ts, path)
    manifest = _manifest_base("impute", cfg, out_dir, started)
    manifest["artifacts"] = ["imputed.csv"]
    manifest["filled_steps"] = int((~ts.mask).sum())
    _write_manifest(out_dir, manifest)
    return manifest


def _metric_rows_from_predictions(rows) -> tuple[list, list]:
    """Prefix-horizon metric/Clarke aggregation of a predictions table."""
    by_model: dict[str, dict[str, list]] = {}
    horizons_present = sorted({int(r[3]) for r in rows})
    for model, sid, _, step, ref, pred in rows:
        by_model.setdefault(model, {}).setdefault(sid, []).append(
            (int(step), float(ref), float(pred)))
    metric_rows, clarke_rows = [], []
    for model in by_model:
        for h in horizons_present:
            per = {"rmse": [], "mape": [], "nmape": []}
            zone_pcts = {z: [] for z in ZONES}
            for sid, triples in by_model[model].items():
                refs = np.array([t[1] for t in triples if t[0] <= h])
                preds = np.array([t[2] for t in triples if t[0] <= h])
                if refs.size == 0:
                    continue
                fr = ForecastResult(refs, preds, horizon_steps=h, model_id=model, series_id=sid)
                per["rmse"].append(rmse(fr))
                per["mape"].append(mape(fr))
                per["nmape"].append(nmape(fr))
                zones = clarke_zones(refs, np.maximum(preds, 1.0))
                for z in ZONES:
                    zone_pcts[z].append(100.0 * zones.count(z) / len(zones))
            for metric in ("rmse", "mape", "nmape"):
                mean, std = aggregate(per[metric])
                metric_rows.append((model, h, metric, mean, std))
            for z in ZONES:
                mean, std = aggregate(zone_pcts[z])
                clarke_rows.append((model, h, z, mean, std))
    return metric_rows, clarke_rows


def run_evaluate(predictions_csv: str, out_dir: str) -> dict:
    """Metric tables from a predictions.csv produced by `glucast predict`."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    header, rows = read_csv(predictions_csv)
    if header != PREDICTIONS_HEADER:
        raise ValueError(f"{predictions_csv}: expected header {PREDICTIONS_HEADER}, got {header}")
    metric_rows, clarke_rows = _metric_rows_from_predictions(rows)
    write_csv(os.path.join(out_dir, "results.csv"), RESULTS_CSV_HEADER, metric_rows)
    write_csv(os.path.join(out_dir, "clarke.csv"), CLARKE_CSV_HEADER, clarke_rows)
    manifest = _manifest_base("evaluate", None, out_dir, started)
    manifest["artifacts"] = ["results.csv", "clarke.csv"]
    manifest["predictions"] = os.path.abspath(predictions_csv)
    manifest["nmape_definition"] = "100 * sum|ref - pred| / sum(ref) (sum-normalized)"
    _write_manifest(out_dir, manifest)
    return manifest


def _emit_benchmark_outputs(result: BenchmarkResult, cfg: Config, out_dir: str) -> list[str]:
    artifacts = []

    def emit(name, fn):
        path = os.path.join(out_dir, name)
        fn(path)
        artifacts.append(name)

    emit("results.csv", lambda p: write_csv(p, RESULTS_CSV_HEADER, result.metric_rows))
    emit("clarke.csv", lambda p: write_csv(p, CLARKE_CSV_HEADER, result.clarke_rows))
    for model, (refs, preds, zones) in result.clarke_points.items():
        slug = _slug(model)
        emit(f"clarke_points_{slug}.csv",
             lambda p, r=refs, q=preds, z=zones: write_csv(
                 p, ["reference", "predicted", "zone"],
                 [[float(a), float(b), c] for a, b, c in zip(r, q, z)]))
        emit(f"clarke_{slug}.svg",
             lambda p, r=refs, q=preds, m=model: save_svg(
                 render_clarke_figure(r, q, f"Clarke Error Grid: {m} "
                                      f"({horizon_label(result.clarke_horizon, cfg.data.step_minutes)})"), p))
    for model, trace in result.traces.items():
        emit(f"trace_{_slug(model)}.csv", lambda p, t=trace: _write_trace_csv(t, p))
    if result.convergence:
        emit("convergence.csv", lambda p: write_csv(
            p, ["model", "epochs_to_converge"], list(result.convergence.items())))
        emit("convergence.svg", lambda p: save_svg(
            render_convergence_figure(result.traces, result.convergence), p))

    md_parts = [
        "# Benchmark report\n",
        metrics_markdown(result.metric_rows, result.horizons, cfg.data.step_minutes),
        clarke_markdown(result.clarke_rows, result.clarke_horizon, cfg.data.step_minutes),
    ]
    if result.convergence:
        md_parts.append(convergence_markdown(result.convergence))
    md_parts.append("### Notes\n\n" + footnotes_markdown())
    emit("tables.md", lambda p: open(p, "w").write("\n".join(md_parts)))
    return artifacts


def run_benchmark_cmd(cfg: Config, out_dir: str) -> dict:
    """The full comparison: tables, Clarke grids, convergence figure."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    series, _ = build_series(cfg)
    horizons = sorted(set(int(h) for h in cfg.benchmark.horizons))
    result = run_benchmark(
        models=list(cfg.benchmark.models), series=series, horizons=horizons,
        T=cfg.data.T, stride=cfg.data.stride, train_cfg=cfg.train.train_config(),
        settings=cfg.model.settings(), clarke_horizon=cfg.benchmark.clarke_horizon,
        min_observed_frac=cfg.data.min_observed_frac, split_frac=cfg.data.split_frac)
    artifacts = _emit_benchmark_outputs(result, cfg, out_dir)

    manifest = _manifest_base("benchmark", cfg, out_dir, started)
    manifest["artifacts"] = artifacts
    manifest["models"] = {name: {"seed": cfg.train.seed + i}
                          for i, name in enumerate(result.dataset and cfg.benchmark.models)}
    manifest["windows"] = {
        "train": int(result.dataset.train_idx.size),
        "test": int(result.dataset.test_idx.size),
        "dropped_invalid": result.dataset.dropped_invalid,
        "dropped_boundary": result.dataset.dropped_boundary,
    }
    manifest["failures"] = result.failures
    manifest["clamped_predictions_for_clarke"] = result.clamped_predictions
    manifest["epochs_to_converge"] = result.convergence
    manifest["nmape_definition"] = "100 * sum|ref - pred| / sum(ref) (sum-normalized)"
    manifest["arima_orders"] = {"p": cfg.model.ar_p, "d": cfg.model.ar_d}
    manifest["wall_clock_seconds"] = round(time.time() - started, 3)
    _write_manifest(out_dir, manifest)
    manifest["_all_failed"] = len(result.failures) == len(cfg.benchmark.models)
    return manifest


def run_clarke(predictions_csv: str, out_dir: str) -> dict:
    """Zone percentages plus the scatter figure for a ref/pred CSV."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    header, rows = read_csv(predictions_csv)
    lower = [h.strip().lower() for h in header]
    ref_ix = pred_ix = None
    for i, name in enumerate(lower):
        if name in ("ref", "reference"):
            ref_ix = i
        elif name in ("pred", "predicted", "prediction"):
            pred_ix = i
    if ref_ix is None or pred_ix is None:
        raise ValueError(f"{predictions_csv}: need 'ref'/'reference' and 'pred'/'predicted' columns, "
                         f"got {header}")
    refs, preds = [], []
    for line_no, row in enumerate(rows, start=2):
        try:
            refs.append(float(row[ref_ix]))
            preds.append(float(row[pred_ix]))
        except (ValueError, IndexError):
            raise ValueError(f"{predictions_csv}: line {line_no}: malformed row {row!r}") from None
    if not refs:
        raise ValueError(f"{predictions_csv}: no data rows")
    summary = clarke_summary(np.array(refs), np.array(preds))
    zones = clarke_zones(np.array(refs), np.array(preds))

    write_csv(os.path.join(out_dir, "clarke_summary.csv"), ["zone", "percent"],
              [[z, summary.as_dict()[z]] for z in ZONES])
    write_csv(os.path.join(out_dir, "clarke_points.csv"), ["reference", "predicted", "zone"],
              [[r, p, z] for r, p, z in zip(refs, preds, zones)])
    save_svg(render_clarke_figure(refs, preds, "Clarke Error Grid"),
             os.path.join(out_dir, "clarke.svg"))

    manifest = _manifest_base("clarke", None, out_dir, started)
    manifest["artifacts"] = ["clarke_summary.csv", "clarke_points.csv", "clarke.svg"]
    manifest["zones"] = summary.as_dict()
    manifest["n_points"] = summary.n_points
    _write_manifest(out_dir, manifest)
    return manifest


def run_report(results_dir: str, out_dir: str, step_minutes: int = 5) -> dict:
    """Re-render tables.md and figures from an existing benchmark directory."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(results_dir, "results.csv")
    clarke_path = os.path.join(results_dir, "clarke.csv")
    if not os.path.exists(results_path):
        raise ValueError(f"{results_dir} has no results.csv")
    _, metric_raw = read_csv(results_path)
    metric_rows = [(m, int(h), metric, float(mean), float(std))
                   for m, h, metric, mean, std in metric_raw]
    horizons = sorted({r[1] for r in metric_rows})
    clarke_rows = []
    if os.path.exists(clarke_path):
        _, clarke_raw = read_csv(clarke_path)
        clarke_rows = [(m, int(h), z, float(mean), float(std))
                       for m, h, z, mean, std in clarke_raw]
    convergence = {}
    conv_path = os.path.join(results_dir, "convergence.csv")
    if os.path.exists(conv_path):
        _, conv_raw = read_csv(conv_path)
        convergence = {m: int(e) for m, e in conv_raw}

    artifacts = []
    md_parts = ["# Benchmark report\n", metrics_markdown(metric_rows, horizons, step_minutes)]
    if clarke_rows:
        clarke_h = 12 if any(r[1] == 12 for r in clarke_rows) else max(horizons)
        md_parts.append(clarke_markdown(clarke_rows, clarke_h, step_minutes))
    if convergence:
        md_parts.append(convergence_markdown(convergence))
    md_parts.append("### Notes\n\n" + footnotes_markdown())
    with open(os.path.join(out_dir, "tables.md"), "w") as fh:
        fh.write("\n".join(md_parts))
    artifacts.append("tables.md")

    traces = {}
    for entry in sorted(os.listdir(results_dir)):
        if entry.startswith("trace_") and entry.endswith(".csv"):
            traces[entry[len("trace_"):-len(".csv")]] = _read_trace_csv(
                os.path.join(results_dir, entry))
        if entry.startswith("clarke_points_") and entry.endswith(".csv"):
            _, pts = read_csv(os.path.join(results_dir, entry))
            refs = [float(r[0]) for r in pts]
            preds = [float(r[1]) for r in pts]
            name = entry[len("clarke_points_"):-len(".csv")]
            fig_name = f"clarke_{name}.svg"
            save_svg(render_clarke_figure(refs, preds, f"Clarke Error Grid: {name}"),
                     os.path.join(out_dir, fig_name))
            artifacts.append(fig_name)
    if traces:
        conv = {name: epochs_to_converge(tr) for name, tr in traces.items() if len(tr)}
        save_svg(render_convergence_figure(traces, conv),
                 os.path.join(out_dir, "convergence.svg"))
        artifacts.append("convergence.svg")

    manifest = _manifest_base("report", None, out_dir, started)
    manifest["artifacts"] = artifacts
    manifest["source_dir"] = os.path.abspath(results_dir)
    _write_manifest(out_dir, manifest)
    return manifest
