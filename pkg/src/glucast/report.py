"""Rendering: deterministic SVG figures (matplotlib) and CSV/Markdown
tables for benchmark and synthetic-data reports.

SVGs are reproducible byte-for-byte: element ids are salted with a
fixed string and the creation-date metadata is dropped.  CSV cells keep
full float precision (repr); Markdown tables round to 2 decimals and
format aggregate cells as "mean ± std".
"""

from __future__ import annotations

import csv

import matplotlib
import numpy as np

matplotlib.use("Agg")

from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .metrics import ZONES  # noqa: E402

SVG_HASHSALT = "glucast"
METRIC_LABELS = {"rmse": "RMSE", "mape": "MAPE", "nmape": "nMAPE"}
FOOTNOTES = (
    "nMAPE is sum-normalized: 100 * sum|ref - pred| / sum(ref).",
    "ARIMA is AR(p) with differencing fit by least squares (defaults p=6, d=1); "
    "orders are toolkit defaults, the source experiments do not report theirs.",
    "mean ± std aggregates per-series values with the population (n) divisor.",
)


def save_svg(fig: Figure, path: str) -> None:
    """Write a figure as self-contained, reproducible SVG."""
    with rc_context({"svg.hashsalt": SVG_HASHSALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def horizon_label(steps: int, step_minutes: int = 5) -> str:
    total = steps * step_minutes
    if total % 60 == 0:
        return f"{total // 60}h"
    return f"{total}min"


# ---------------------------------------------------------------------------
# CSV / Markdown tables


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        return header, [row for row in reader if row]


def fmt_pm(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    """Pipe table with padded, aligned columns."""
    cols = [headers] + rows
    widths = [max(len(str(r[i])) for r in cols) for i in range(len(headers))]
    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


def metrics_markdown(metric_rows, horizons, step_minutes: int = 5) -> str:
    """One accuracy table per horizon plus the long-horizon nMAPE sweep."""
    models = []
    values = {}
    for model, h, metric, mean, std in metric_rows:
        if model not in models:
            models.append(model)
        values[(model, h, metric)] = (mean, std)
    parts = []
    for h in horizons:
        label = horizon_label(h, step_minutes)
        headers = ["Model", f"{label} RMSE", f"{label} nMAPE", f"{label} MAPE"]
        rows = []
        for m in models:
            if (m, h, "rmse") not in values:
                continue
            rows.append([m] + [fmt_pm(*values[(m, h, metric)])
                               for metric in ("rmse", "nmape", "mape")])
        parts.append(f"### Forecasting accuracy ({label}, {h} steps)\n\n"
                     + markdown_table(headers, rows))
    if len(horizons) > 1:
        headers = ["Model"] + [f"{horizon_label(h, step_minutes)} nMAPE" for h in horizons]
        rows = []
        for m in models:
            cells = [fmt_pm(*values[(m, h, "nmape")]) if (m, h, "nmape") in values else "--"
                     for h in horizons]
            rows.append([m] + cells)
        parts.append("### Long-horizon nMAPE sweep\n\n" + markdown_table(headers, rows))
    return "\n".join(parts)


def clarke_markdown(clarke_rows, clarke_horizon: int, step_minutes: int = 5) -> str:
    models = []
    values = {}
    for model, h, zone, mean, std in clarke_rows:
        if h != clarke_horizon:
            continue
        if model not in models:
            models.append(model)
        values[(model, zone)] = (mean, std)
    headers = ["Model"] + [f"{z} (%)" for z in ZONES]
    rows = [[m] + [fmt_pm(*values[(m, z)]) for z in ZONES] for m in models]
    label = horizon_label(clarke_horizon, step_minutes)
    return (f"### Clarke Error Grid zone mass ({label}, {clarke_horizon} steps)\n\n"
            + markdown_table(headers, rows))


def convergence_markdown(convergence: dict) -> str:
    headers = ["Model", "Epochs to converge"]
    rows = [[m, str(e)] for m, e in convergence.items()]
    note = ("Convergence is the first epoch whose validation loss is within 1% "
            "of the run's minimum validation loss.")
    return "### Learning speed\n\n" + markdown_table(headers, rows) + "\n" + note + "\n"


def footnotes_markdown() -> str:
    return "\n".join(f"- {n}" for n in FOOTNOTES) + "\n"


# ---------------------------------------------------------------------------
# Figures


def render_series_figure(series_list) -> Figure:
    """Stacked line plots of the synthetic series; gaps stay blank."""
    fig = Figure(figsize=(8, 2.2 * len(series_list)))
    axes = fig.subplots(len(series_list), 1, sharex=True)
    if len(series_list) == 1:
        axes = [axes]
    for ax, ts in zip(axes, series_list):
        ax.plot(np.arange(len(ts)), ts.values[:, 0], linewidth=0.8, color="#1f77b4")
        ax.set_ylabel(ts.series_id)
        if not ts.mask.all():
            gap = np.flatnonzero(~ts.mask)
            ax.axvspan(gap[0], gap[-1], color="#d62728", alpha=0.15, label="masked gap")
            ax.legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("step")
    fig.suptitle("Synthetic series")
    fig.tight_layout()
    return fig


def render_imputation_figure(values_with_gap: np.ndarray, imputed: np.ndarray,
                             truth: np.ndarray, gap_start: int, gap_length: int) -> Figure:
    fig = Figure(figsize=(8, 3.2))
    ax = fig.add_subplot(111)
    t = np.arange(len(truth))
    ax.plot(t, truth, linewidth=0.8, color="#7f7f7f", label="ground truth")
    ax.plot(t, values_with_gap, linewidth=0.9, color="#1f77b4", label="observed")
    gap = slice(gap_start, gap_start + gap_length)
    ax.plot(t[gap], imputed[gap], linewidth=1.2, color="#d62728", label="imputed")
    ax.axvspan(gap_start, gap_start + gap_length - 1, color="#d62728", alpha=0.08)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.set_title("Masked-interval imputation")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return fig


def render_clarke_figure(refs, preds, title: str) -> Figure:
    """Clarke scatter with the standard five-zone boundary polylines."""
    refs = np.asarray(refs, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    lim = max(400.0, float(refs.max(initial=0.0)) * 1.05, float(preds.max(initial=0.0)) * 1.05)
    fig = Figure(figsize=(5.2, 5.2))
    ax = fig.add_subplot(111)
    ax.scatter(refs, preds, s=6, color="#1f77b4", alpha=0.5, linewidths=0)
    ax.plot([0, lim], [0, lim], ":", color="#7f7f7f", linewidth=0.8)
    segs = [
        ([0, 175 / 3], [70, 70]),
        ([175 / 3, lim / 1.2], [70, lim]),
        ([70, 70], [84, lim]),
        ([0, 70], [180, 180]),
        ([70, 290], [180, 400]),
        ([70, 70], [0, 56]),
        ([70, lim], [56, 0.8 * lim]),
        ([180, 180], [0, 70]),
        ([180, lim], [70, 70]),
        ([240, 240], [70, 180]),
        ([240, lim], [180, 180]),
        ([130, 180], [0, 70]),
    ]
    for xs, ys in segs:
        ax.plot(xs, ys, "-", color="black", linewidth=0.8)
    labels = [(30, 15, "A"), (370, 260, "B"), (280, 370, "B"), (160, 370, "C"),
              (160, 15, "C"), (30, 140, "D"), (370, 120, "D"), (30, 370, "E"), (370, 15, "E")]
    for x, y, z in labels:
        ax.text(x, y, z, fontsize=9, ha="center", va="center")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("reference glucose (mg/dL)")
    ax.set_ylabel("predicted glucose (mg/dL)")
    ax.set_title(title)
    fig.tight_layout()
    return fig


def render_convergence_figure(traces: dict, convergence: dict) -> Figure:
    """Per-model validation-loss curves, scaled to each first epoch."""
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot(111)
    for name, trace in traces.items():
        if len(trace) == 0:
            continue
        vals = trace.val_losses()
        rel = vals / vals[0]
        epochs = np.arange(1, len(vals) + 1)
        (line,) = ax.plot(epochs, rel, linewidth=1.1, label=name)
        conv = convergence.get(name)
        if conv is not None:
            ax.plot([conv], [rel[conv - 1]], "o", markersize=5, color=line.get_color())
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation loss / first-epoch loss")
    ax.set_title("Learning speed (markers: first epoch within 1% of the minimum)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig
