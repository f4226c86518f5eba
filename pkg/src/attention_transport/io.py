"""JSON readers and writers for instances, specs, plans and reports (UTF-8)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .attention import AttentionSpec, TransformerSpec
from .errors import DimensionMismatch
from .measures import DiscreteMeasure, as_points

PathLike = Union[str, Path]


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, default=_default, sort_keys=True, indent=2, allow_nan=True)


def write_json(path: PathLike, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def read_json(path: PathLike):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def measure_to_json(mu: DiscreteMeasure) -> dict:
    return {"dim": mu.dim, "points": mu.points.tolist(), "weights": mu.weights.tolist()}


def measure_from_json(obj) -> DiscreteMeasure:
    """Instance object ``{"dim", "points", "weights"}``; a bare point list or a
    missing ``weights`` field gives the empirical measure."""
    if isinstance(obj, list):
        obj = {"points": obj}
    pts = as_points(obj["points"])
    if "dim" in obj and int(obj["dim"]) != pts.shape[1]:
        raise DimensionMismatch(f"declared dim {obj['dim']} but points have dim {pts.shape[1]}")
    w = obj.get("weights")
    if w is None:
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return DiscreteMeasure(pts, w)


def read_measure(path: PathLike) -> DiscreteMeasure:
    return measure_from_json(read_json(path))


def write_measure(path: PathLike, mu: DiscreteMeasure) -> None:
    write_json(path, measure_to_json(mu))


def read_points(path: PathLike) -> np.ndarray:
    return read_measure(path).points


def read_attention_spec(path: PathLike) -> AttentionSpec:
    return AttentionSpec.from_json(read_json(path))


def read_transformer_spec(path: PathLike, dim: int) -> TransformerSpec:
    return TransformerSpec.from_json(read_json(path), dim)
