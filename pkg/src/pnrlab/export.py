"""Tabular output (CSV or JSON) and run manifests.

CSV is written with LF line endings and Python's shortest round-trip float
repr, so output bytes depend only on the values.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def fmt(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and v != v:
        return None
    if hasattr(v, "item"):
        return v.item()
    return v


def table_json(columns, rows) -> str:
    doc = {"columns": list(columns), "rows": [[_jsonable(v) for v in r] for r in rows]}
    return json.dumps(doc, indent=1) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_table(out_dir: Path, stem: str, columns, rows, as_json: bool = False) -> Path:
    path = Path(out_dir) / f"{stem}.{'json' if as_json else 'csv'}"
    atomic_write(path, table_json(columns, rows) if as_json else table_csv(columns, rows))
    return path


def write_manifest(path: Path, manifest: dict) -> None:
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
