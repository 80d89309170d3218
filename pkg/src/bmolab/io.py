"""Atomic file output: CSV tables, JSON and SVG figures."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x):
    # numpy scalars would otherwise print as np.float64(...)
    kind = getattr(getattr(x, "dtype", None), "kind", None)
    if isinstance(x, bool) or kind == "b":
        return str(bool(x)).lower()
    if isinstance(x, float) or kind == "f":
        return repr(float(x))
    if kind in ("i", "u"):
        return str(int(x))
    return x


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def save_svg(fig, path) -> Path:
    """Deterministic SVG (fixed hash salt, no date stamp)."""
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "bmolab"
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return atomic_write_text(path, buf.getvalue())


def heatmap_svg(values, path, title: str = "", xlabel: str = "", ylabel: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    v = np.asarray(values, float)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    if v.ndim == 1:
        ax.plot(np.arange(len(v)), v)
    else:
        im = ax.imshow(v.T, origin="lower", aspect="auto")
        fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    try:
        return save_svg(fig, path)
    finally:
        plt.close(fig)
