"""Deterministic report emission: canonical JSON with fixed float formatting.

json.dumps cannot pin float formatting, so reports go through a small writer:
keys sorted, floats at 17 significant digits (exact round-trip), LF endings.
Identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .containers import ValidationError


def version_string() -> str:
    return f"hrtfspace-v{__version__}"


def _format_float(value: float) -> str:
    if not np.isfinite(value):
        raise ValidationError("cannot serialize non-finite float in report")
    text = format(float(value), ".17g")
    if not any(c in text for c in ".eE"):
        text += ".0"
    return text


def canonical_json(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return canonical_json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise ValidationError("report keys must be strings")
            items.append(json.dumps(key, ensure_ascii=False) + ":" + canonical_json(obj[key]))
        return "{" + ",".join(items) + "}"
    raise ValidationError(f"cannot serialize {type(obj).__name__} in report")


def emit_report(payload: dict, path) -> Path:
    """Write a canonical-JSON report (version string injected) and return the path."""
    doc = dict(payload)
    doc.setdefault("version", version_string())
    Path(path).write_text(canonical_json(doc) + "\n", encoding="utf-8", newline="\n")
    return Path(path)
