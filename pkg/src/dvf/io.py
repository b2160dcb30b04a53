"""CSV, JSON and content-hash helpers for experiment artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from dvf.spaces import pressure_mask

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_trace(path, rows, columns, comment: str | None = None) -> Path:
    """Trace CSV; an optional first line ``# comment`` records run metadata."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])
    return path


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


def _component_names(name: str, shape) -> list[tuple[str, tuple]]:
    if not shape:
        return [(name, ())]
    return [(name + "_" + "".join(str(i) for i in idx), idx) for idx in np.ndindex(*shape)]


def field_names(space, names=None) -> list[str]:
    parts = space.parts
    if names is None:
        names = ("sigma", "u", "p") if len(parts) == 3 else ("u",)
    out = []
    for part, name in zip(parts, names):
        out += [n for n, _ in _component_names(name, part.shape)]
    return out


def write_field_csv(path, values: np.ndarray) -> Path:
    """One row per x index ``i``, one column per y index ``j``, after a header row."""
    values = np.asarray(values)
    header = [f"j{j}" for j in range(values.shape[1])]
    return write_csv(path, header, values.tolist())


def read_field_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def dump_fields(space, v, directory, names=None, prefix: str = "fields") -> list[Path]:
    """One CSV per field component plus ``{prefix}_coords.csv``.

    On composite (Stokes) spaces the pressure is shifted to zero mean over the
    points where it is free, which fixes the constant the problem leaves open.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = space.grid
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (space.dim,):
        raise ValueError(f"dof vector of shape {v.shape}, expected ({space.dim},)")
    parts = space.parts
    if names is None:
        names = ("sigma", "u", "p") if len(parts) == 3 else ("u",)
    paths = []
    for part, off, name in zip(parts, space.offsets, names):
        data = v[off : off + part.dim].reshape(part.shape + grid.shape)
        if name == "p" and len(parts) > 1:
            w = pressure_mask(grid).data
            data = data - np.sum(data * w) / np.sum(w)
        for cname, idx in _component_names(name, part.shape):
            paths.append(write_field_csv(directory / f"{prefix}_{cname}.csv", data[idx]))
    x, y = grid.points
    coords = [(i, j, x[i, j], y[i, j]) for i, j in grid.iter_indices()]
    paths.append(write_csv(directory / f"{prefix}_coords.csv", ["i", "j", "x", "y"], coords))
    return paths


def git_blob_sha1(data: bytes) -> str:
    """Content hash in the format ``git hash-object`` uses."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def thread_info() -> dict:
    keys = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
    return {k: os.environ.get(k, "unset") for k in keys}


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
