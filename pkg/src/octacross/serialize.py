"""JSON with 17-significant-digit floats, and the versioned field format."""

from __future__ import annotations

import json
import math

import numpy as np

from .analysis import CrossField

__all__ = [
    "FIELD_FORMAT",
    "FIELD_VERSION",
    "FieldFormatError",
    "dumps",
    "field_document",
    "load_field",
]

FIELD_FORMAT = "octacross.field"
FIELD_VERSION = "1.0"


class FieldFormatError(ValueError):
    pass


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return f"{x:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # keep numeric rows on one line
        if all(isinstance(v, (int, float, np.number)) for v in obj):
            return "[" + ", ".join(_encode(v, 0, 0) for v in obj) + "]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return "[" + pad + ("," + pad).join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """Deterministic JSON with every float written as ``%.17g``."""
    return _encode(obj, indent, 0) + "\n"


def field_document(f, crosses: CrossField, *, mesh_name: str = "") -> dict:
    f = np.asarray(f, dtype=float).reshape(-1, 9)
    return {
        "format": FIELD_FORMAT,
        "version": FIELD_VERSION,
        "mesh": mesh_name,
        "n_faces": len(f),
        "faces": [
            {
                "frame": f[t],
                "theta": float(crosses.theta[t]),
                "scale": float(crosses.scale[t]),
                "dirs": crosses.dirs[t],
                "degenerate": bool(crosses.degenerate[t]),
            }
            for t in range(len(f))
        ],
    }


def load_field(path) -> np.ndarray:
    """Per-face frames (n, 9) from a field file; rejects unknown major versions."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FIELD_FORMAT:
        raise FieldFormatError(f"not a field file: format {doc.get('format')!r}")
    major = str(doc.get("version", "")).split(".")[0]
    if major != FIELD_VERSION.split(".")[0]:
        raise FieldFormatError(f"unsupported field version {doc.get('version')!r}")
    frames = np.array([face["frame"] for face in doc["faces"]], dtype=float).reshape(-1, 9)
    if len(frames) != doc["n_faces"]:
        raise FieldFormatError("face count does not match n_faces")
    return frames
