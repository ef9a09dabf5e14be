"""Deterministic CSV and JSON writers for series, moments, portraits and estimates."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """17 significant digits; round-trips any float64."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_series(path, series) -> Path:
    return write_rows(path, ("t", "value"), zip(series.times, series.values))


def write_moments(path, series_by_order) -> Path:
    rows = (
        (t, n, v)
        for n, s in sorted(series_by_order.items())
        for t, v in zip(s.times, s.values)
    )
    return write_rows(path, ("t", "n", "value"), rows)


def write_portrait(path, portrait) -> Path:
    return write_rows(path, ("alpha", "k", "epsilon0_critical", "status"), portrait.rows())


def write_smax_curves(path, curves) -> Path:
    rows = (
        (c.alpha, c.k, e, s, lab)
        for c in curves
        for e, s, lab in zip(c.epsilon0s, c.s_max, c.labels)
    )
    return write_rows(path, ("alpha", "k", "epsilon0", "s_max", "label"), rows)


def write_estimates(path, moments) -> Path:
    rows = (
        (t, n, moments.mean[j, i], moments.stderr[j, i])
        for j, n in enumerate(moments.orders)
        for i, t in enumerate(moments.times)
    )
    return write_rows(path, ("t", "n", "mean", "stderr"), rows)


def read_moments(path) -> dict:
    """Inverse of :func:`write_moments`: ``{n: (times, values)}``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t, v = out.setdefault(int(row["n"]), ([], []))
            t.append(float(row["t"]))
            v.append(float(row["value"]))
    return {n: (np.array(t), np.array(v)) for n, (t, v) in out.items()}


def _clean(obj):
    """Recursively convert numpy values to JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n")
    return path
