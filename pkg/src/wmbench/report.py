"""CSV tables and SVG line plots for analyzer output.

Both writers take either a single :class:`AggregateSeries` /
:class:`PiecewiseCurve` or a mapping of group label to one of them, and
produce byte-identical files for identical input.
"""

from __future__ import annotations

import csv
import io
import math
import os
from pathlib import Path
from typing import Mapping, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analyzer import AggregateSeries, AnalyzerError, PiecewiseCurve  # noqa: E402

Series = Union[AggregateSeries, PiecewiseCurve]

STYLE = {
    "svg.hashsalt": "wmbench",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
    "legend.frameon": False,
    "figure.figsize": (6.4, 4.0),
}


def fmt(v) -> str:
    """Shortest round-trip text for a number; integral values without ``.0``."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _as_groups(data) -> dict[str, Series]:
    if isinstance(data, (AggregateSeries, PiecewiseCurve)):
        label = data.group if isinstance(data, AggregateSeries) else "mean"
        data = {label: data}
    if not isinstance(data, Mapping) or not data:
        raise AnalyzerError("nothing to report")
    kinds = {type(v) for v in data.values()}
    if len(kinds) != 1 or not kinds <= {AggregateSeries, PiecewiseCurve}:
        raise AnalyzerError("report input must be all series or all curves")
    return dict(data)


def _xy(s: Series):
    if isinstance(s, AggregateSeries):
        return list(s.axis), list(s.mean)
    return list(s.xs), list(s.ys)


def format_table(data, axis: str = "x") -> str:
    """CSV text: one row per axis value; per group the mean and its tallies."""
    groups = _as_groups(data)
    series_kind = isinstance(next(iter(groups.values())), AggregateSeries)
    header = [axis]
    for g in groups:
        header += [g, f"{g} count", f"{g} n/a", f"{g} identical"] if series_kind else \
            [g, f"{g} support"]
    rows: dict[float, dict[str, str]] = {}
    for g, s in groups.items():
        if series_kind:
            for i, x in enumerate(s.axis):
                row = rows.setdefault(x, {})
                row[g] = fmt(s.mean[i])
                row[f"{g} count"] = str(s.count[i])
                row[f"{g} n/a"] = str(s.na_count[i])
                row[f"{g} identical"] = str(s.identical_count[i])
        else:
            for i, x in enumerate(s.xs):
                row = rows.setdefault(x, {})
                row[g] = fmt(s.ys[i])
                row[f"{g} support"] = str(s.support[i]) if s.support else "1"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for x in sorted(rows):
        w.writerow([fmt(x)] + [rows[x].get(h, "") for h in header[1:]])
    return buf.getvalue()


def emit_table(data, path: os.PathLike | str, axis: str = "x") -> Path:
    path = Path(path)
    text = format_table(data, axis)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def emit_plot(data, path: os.PathLike | str, xlabel: str = "x", ylabel: str = "y",
              title: str | None = None) -> Path:
    """Line plot with one line per group, a legend and ticks at the data
    extremes. SVG output carries no timestamp and fixed element ids."""
    groups = _as_groups(data)
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            xs_all, ys_all = [], []
            for i, (g, s) in enumerate(groups.items()):
                xs, ys = _xy(s)
                marker = "o" if isinstance(s, AggregateSeries) else None
                (line,) = ax.plot(xs, ys, marker=marker, label=g)
                line.set_gid(f"series-{i}")
                xs_all += xs
                ys_all += [y for y in ys if math.isfinite(y)]
            xlo, xhi = min(xs_all), max(xs_all)
            ylo, yhi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
            ax.set_xticks(_ticks(xlo, xhi))
            ax.set_yticks(_ticks(ylo, yhi))
            pad = 0.05 * (yhi - ylo) if yhi > ylo else 0.5
            ax.set_ylim(ylo - pad, yhi + pad)
            if xhi > xlo:
                ax.set_xlim(xlo - 0.02 * (xhi - xlo), xhi + 0.02 * (xhi - xlo))
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.legend(loc="best")
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
