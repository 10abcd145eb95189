"""Deterministic CSV/JSON artifacts, written atomically, plus a digest manifest."""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile

import numpy as np

from ..phase import SweepTable, _jsonable


def _cell(value, precision: int) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{precision}e}"


def render_csv(table: SweepTable, precision: int = 12) -> bytes:
    if not 6 <= precision <= 17:
        raise ValueError(f"precision must lie in [6, 17], got {precision}")
    names = table.column_names()
    lines = [",".join(names)]
    for i in range(len(table)):
        lines.append(",".join(_cell(table[name][i], precision) for name in names))
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_json(table: SweepTable, config: dict | None = None) -> bytes:
    doc = table.to_dict()
    if config is not None:
        doc["config"] = _jsonable(config)
    return (json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n").encode("utf-8")


def atomic_write(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_table(table: SweepTable, path: str, fmt: str, precision: int = 12, config: dict | None = None) -> bytes:
    """Write ``table`` to ``path`` as csv or json and return the bytes written."""
    if fmt == "csv":
        data = render_csv(table, precision)
    elif fmt == "json":
        data = render_json(table, config)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    atomic_write(path, data)
    return data


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_artifacts(directory: str, stem: str, table: SweepTable, config: dict) -> dict:
    """Render everything first, then rename into place, then write the manifest."""
    out = config["output"]
    rendered = {}
    for fmt in out["formats"]:
        if fmt == "csv":
            rendered[f"{stem}.csv"] = render_csv(table, out["precision"])
        else:
            rendered[f"{stem}.json"] = render_json(table, config)
    rendered["config.resolved.json"] = (json.dumps(_jsonable(config), indent=2) + "\n").encode("utf-8")
    for name, data in rendered.items():
        atomic_write(os.path.join(directory, name), data)
    manifest = {
        "command": config["command"],
        "files": [{"name": n, "bytes": len(d), "sha256": sha256(d)} for n, d in sorted(rendered.items())],
        "config": _jsonable(config),
    }
    atomic_write(os.path.join(directory, "manifest.json"), (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    return manifest
