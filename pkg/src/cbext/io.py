"""CSV and JSON writers shared by the CLI.

CSV files start with one ``#`` comment line carrying the seed and the
mechanism, followed by a fixed header.  Floats are written with ``repr``,
which round-trips every double exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header, rows, meta=None):
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={json.dumps(v, sort_keys=True, separators=(',', ':'))}"
                                  for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan; keep them readable and parseable as strings
        return f if math.isfinite(f) else str(f)
    return obj


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def read_csv(text):
    """Parse CSV text written by :func:`csv_text` into ``(meta_line, header, rows)``."""
    lines = text.splitlines()
    meta = lines[0][2:] if lines and lines[0].startswith("#") else None
    body = lines[1:] if meta is not None else lines
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]
