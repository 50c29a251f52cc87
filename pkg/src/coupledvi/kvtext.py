"""Key-value text and CSV helpers shared by every report type.

Reports are written as ``key = value`` lines.  Vectors are comma separated,
floats always carry 17 significant digits so a reload is bit-exact.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def fmt_float(x) -> str:
    return "%.17g" % float(x)


def fmt_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    if isinstance(value, str):
        return value
    arr = np.asarray(value)
    if arr.dtype.kind in "iu":
        return ",".join(str(int(v)) for v in arr.ravel())
    if arr.dtype.kind in "fc":
        return ",".join(fmt_float(v) for v in arr.ravel())
    return ",".join(str(v) for v in arr.ravel())


def dumps(pairs) -> str:
    """Serialize an ordered mapping (or iterable of pairs) to key-value text."""
    items = pairs.items() if hasattr(pairs, "items") else pairs
    lines = []
    for key, value in items:
        text = fmt_value(value)
        if "\n" in text:
            raise ValueError(f"multi-line value for key {key!r}")
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_vector(text: str) -> np.ndarray:
    text = text.strip()
    if not text or text == "none":
        return np.zeros(0)
    return np.array([float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()])


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ',' or whitespace."""
    rows = [r for r in text.strip().split(";") if r.strip()]
    data = [[float(tok) for tok in r.replace(",", " ").split()] for r in rows]
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise ValueError(f"ragged matrix rows: {text!r}")
    return np.array(data, dtype=float)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_value(v) if not isinstance(v, str) else v for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]
