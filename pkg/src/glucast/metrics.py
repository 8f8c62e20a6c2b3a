"""Statistical forecast accuracy metrics and the Clarke Error Grid.

Clarke zone boundaries follow the standard published piecewise rules,
evaluated in the order A, E, C, D with B as the fallback so every
(reference, prediction) pair lands in exactly one zone:

    A: ref <= 70 and pred <= 70, or pred within +-20% of ref
    E: ref >= 180 and pred <= 70, or ref <= 70 and pred >= 180
    C: 70 <= ref <= 290 and pred >= ref + 110,
       or 130 <= ref <= 180 and pred <= (7/5) ref - 182
    D: ref >= 240 and 70 <= pred <= 180,
       or ref <= 175/3 and 70 <= pred <= 180,
       or 175/3 <= ref <= 70 and pred >= (6/5) ref
    B: everything else

nMAPE here is the sum-normalized variant: 100 * sum|ref - pred| / sum ref.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZONES = ("A", "B", "C", "D", "E")


@dataclass
class ForecastResult:
    """Paired reference/prediction vectors for one model on one series."""

    reference: np.ndarray
    predicted: np.ndarray
    horizon_steps: int = 0
    model_id: str = ""
    series_id: str = ""

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        if self.reference.shape != self.predicted.shape:
            raise ValueError("reference and predicted must have equal lengths")
        if self.reference.size and np.any(self.reference <= 0):
            raise ValueError("reference values must be positive (mg/dL)")


@dataclass
class ClarkeSummary:
    """Percentage of points per Clarke zone; percentages sum to 100."""

    pct_a: float
    pct_b: float
    pct_c: float
    pct_d: float
    pct_e: float
    n_points: int

    def as_dict(self) -> dict[str, float]:
        return {"A": self.pct_a, "B": self.pct_b, "C": self.pct_c,
                "D": self.pct_d, "E": self.pct_e}


def rmse(r: ForecastResult) -> float:
    """Root mean squared error in mg/dL."""
    if r.reference.size == 0:
        raise ValueError("empty forecast result")
    return float(np.sqrt(np.mean((r.reference - r.predicted) ** 2)))


def mape(r: ForecastResult) -> float:
    """Mean absolute percentage error, in percent."""
    if r.reference.size == 0:
        raise ValueError("empty forecast result")
    return float(100.0 * np.mean(np.abs(r.reference - r.predicted) / r.reference))


def nmape(r: ForecastResult) -> float:
    """Sum-normalized MAPE: 100 * sum|ref - pred| / sum(ref), in percent."""
    if r.reference.size == 0:
        raise ValueError("empty forecast result")
    denom = float(np.sum(r.reference))
    if denom <= 0:
        raise ValueError("reference sum must be positive")
    return float(100.0 * np.sum(np.abs(r.reference - r.predicted)) / denom)


METRICS = {"rmse": rmse, "mape": mape, "nmape": nmape}


def aggregate(values) -> tuple[float, float]:
    """Mean and population standard deviation (n divisor) of per-series values."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("nothing to aggregate")
    return float(arr.mean()), float(arr.std())


def clarke_zone(ref: float, pred: float) -> str:
    """Clarke Error Grid zone of one (reference, prediction) pair."""
    if ref <= 0 or pred <= 0:
        raise ValueError("glucose values must be positive")
    if (ref <= 70 and pred <= 70) or (0.8 * ref <= pred <= 1.2 * ref):
        return "A"
    if (ref >= 180 and pred <= 70) or (ref <= 70 and pred >= 180):
        return "E"
    if (70 <= ref <= 290 and pred >= ref + 110) or (130 <= ref <= 180 and pred <= (7.0 / 5.0) * ref - 182):
        return "C"
    if ((ref >= 240 and 70 <= pred <= 180)
            or (ref <= 175.0 / 3.0 and 70 <= pred <= 180)
            or (175.0 / 3.0 <= ref <= 70 and pred >= (6.0 / 5.0) * ref)):
        return "D"
    return "B"


def clarke_zones(refs: np.ndarray, preds: np.ndarray) -> list[str]:
    refs = np.asarray(refs, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if refs.shape != preds.shape:
        raise ValueError("reference and predicted must have equal lengths")
    return [clarke_zone(r, p) for r, p in zip(refs.ravel(), preds.ravel())]


def clarke_summary(refs: np.ndarray, preds: np.ndarray) -> ClarkeSummary:
    """Zone percentages over all pairs."""
    zones = clarke_zones(refs, preds)
    if not zones:
        raise ValueError("empty input")
    n = len(zones)
    pct = {z: 100.0 * zones.count(z) / n for z in ZONES}
    return ClarkeSummary(pct["A"], pct["B"], pct["C"], pct["D"], pct["E"], n)
