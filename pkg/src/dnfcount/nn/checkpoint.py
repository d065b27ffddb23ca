"""Model files: JSON holding the config, metadata and base64 float64 tensors."""
from __future__ import annotations

import base64
import json

import numpy as np

from .autodiff import Tensor, parameter
from .model import ModelConfig, check_params

FORMAT = "dnfcount-model"
VERSION = 1


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "float64-le", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(entry: dict) -> np.ndarray:
    if entry.get("dtype") != "float64-le":
        raise ValueError(f"unsupported tensor dtype {entry.get('dtype')!r}")
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(np.float64)


def dumps_model(params: dict, cfg: ModelConfig, meta: dict | None = None) -> str:
    check_params(params, cfg)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": cfg.to_dict(),
        "meta": meta or {},
        "params": {
            name: _encode(p.data if isinstance(p, Tensor) else p) for name, p in sorted(params.items())
        },
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def save_model(path, params: dict, cfg: ModelConfig, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(params, cfg, meta))


def loads_model(text: str) -> tuple[dict, ModelConfig, dict]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError("not a dnfcount model file")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported model file version {doc.get('version')}")
    cfg = ModelConfig(**doc["config"])
    params = {name: parameter(_decode(entry)) for name, entry in doc["params"].items()}
    check_params(params, cfg)
    return params, cfg, doc.get("meta", {})


def load_model(path) -> tuple[dict, ModelConfig, dict]:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
