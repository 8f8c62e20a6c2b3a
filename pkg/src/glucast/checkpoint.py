"""Versioned model checkpoints.

Layout: a single .npz archive (zip of .npy arrays, shape headers
included) holding every parameter under its params() key, plus a
`__meta__` entry with a JSON document: format version, model class,
constructor arguments, and the fill values.  float64 bits round-trip
exactly, so save/load is bit-for-bit.
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import RnnForecaster
from .model import VaeRnn
from .numeric import SeededRng

FORMAT_VERSION = 1


def _meta_for(model) -> dict:
    if isinstance(model, VaeRnn):
        return {
            "format_version": FORMAT_VERSION,
            "model": "VaeRnn",
            "kind": model.kind,
            "input_size": model.input_size,
            "hidden_size": model.hidden_size,
            "latent_size": model.latent_size,
            "fill_value": list(map(float, model.fill_value)),
        }
    if isinstance(model, RnnForecaster):
        return {
            "format_version": FORMAT_VERSION,
            "model": "RnnForecaster",
            "kind": model.kind,
            "input_size": model.input_size,
            "hidden_size": model.hidden_size,
            "bidirectional": model.bidirectional,
            "fill_value": list(map(float, model.fill_value)),
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(model, path: str, extra: dict | None = None) -> None:
    """Write the model parameters and construction metadata to path."""
    meta = _meta_for(model)
    if extra:
        meta["extra"] = extra
    arrays = {f"param:{k}": v for k, v in model.params().items()}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path: str):
    """Rebuild a model from a checkpoint; parameters are bit-exact."""
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        fill = np.array(meta["fill_value"], dtype=np.float64)
        if meta["model"] == "VaeRnn":
            model = VaeRnn(meta["kind"], meta["input_size"], meta["hidden_size"],
                           meta["latent_size"], SeededRng(0), fill_value=fill)
        elif meta["model"] == "RnnForecaster":
            model = RnnForecaster(meta["kind"], meta["input_size"], meta["hidden_size"],
                                  SeededRng(0), bidirectional=meta["bidirectional"],
                                  fill_value=fill)
        else:
            raise ValueError(f"unknown model class {meta['model']!r}")
        params = model.params()
        for key, target in params.items():
            stored = archive[f"param:{key}"]
            if stored.shape != target.shape:
                raise ValueError(f"checkpoint shape mismatch for {key}")
            target[...] = stored
    return model, meta
