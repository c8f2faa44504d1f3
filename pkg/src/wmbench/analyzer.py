"""Offline analysis of a results database: per-attack-parameter averages
and bpp-indexed quality curves averaged across images."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import WmBenchError
from .resultsdb import ResultsDatabase, decode_value

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 200


class AnalyzerError(WmBenchError):
    pass


@dataclass(frozen=True)
class PiecewiseCurve:
    """Piecewise-linear function through ``(xs, ys)``, zero outside its domain.

    ``support`` optionally records how many curves contributed to each
    point of an averaged curve.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    support: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if not self.xs or len(self.xs) != len(self.ys):
            raise AnalyzerError("a curve needs at least one (x, y) point")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise AnalyzerError("curve x values must be strictly increasing")

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]]) -> "PiecewiseCurve":
        """Sort by x; repeated x values are merged by averaging their y."""
        acc: dict[float, list[float]] = defaultdict(list)
        for x, y in points:
            acc[float(x)].append(float(y))
        xs = sorted(acc)
        return cls(tuple(xs), tuple(math.fsum(acc[x]) / len(acc[x]) for x in xs))

    @property
    def domain(self) -> tuple[float, float]:
        return self.xs[0], self.xs[-1]

    def covers(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x >= self.xs[0]) & (x <= self.xs[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = self.covers(x)
        y = np.interp(x, self.xs, self.ys)
        y = np.where(inside, y, 0.0)
        return float(y) if y.ndim == 0 else y

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.xs, self.ys))


def average_at(curves: Sequence[PiecewiseCurve], xs) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the curves covering each x, and how many cover it.

    Points covered by no curve come back as NaN with support 0.
    """
    xs = np.asarray(xs, dtype=np.float64)
    total = np.zeros_like(xs)
    support = np.zeros(xs.shape, dtype=np.int64)
    for c in curves:
        inside = c.covers(xs)
        total += np.where(inside, c(xs), 0.0)
        support += inside
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(support > 0, total / np.maximum(support, 1), np.nan)
    return mean, support


def average_curves(curves: Sequence[PiecewiseCurve],
                   sample_count: int = DEFAULT_SAMPLES) -> PiecewiseCurve:
    """Average curves with unaligned domains on a uniform grid over the union
    of their domains; each point averages only the curves defined there."""
    if not curves:
        raise AnalyzerError("no curves to average")
    if sample_count < 2:
        raise AnalyzerError("sample_count must be at least 2")
    lo = min(c.domain[0] for c in curves)
    hi = max(c.domain[1] for c in curves)
    xs = np.linspace(lo, hi, sample_count) if hi > lo else np.array([lo])
    mean, support = average_at(curves, xs)
    keep = support > 0
    return PiecewiseCurve(tuple(xs[keep].tolist()), tuple(mean[keep].tolist()),
                          tuple(int(s) for s in support[keep]))


@dataclass(frozen=True)
class AggregateSeries:
    group: str
    axis: tuple[float, ...]
    mean: tuple[float, ...]
    count: tuple[int, ...]
    na_count: tuple[int, ...]
    identical_count: tuple[int, ...]

    def __len__(self):
        return len(self.axis)


def _records(db) -> list[dict]:
    if isinstance(db, ResultsDatabase):
        return db.ok_records()
    return [r for r in db if r.get("status") == "ok"]


def group_label(record: Mapping, group_by_scheme: bool = True) -> str:
    if not group_by_scheme:
        return "all"
    s = record["scheme"]
    params = ",".join(f"{k}={v}" for k, v in sorted(s["params"].items()))
    return f"{s['id']}({params})" if params else s["id"]


def metric_key(records: Sequence[Mapping], metric: str) -> str:
    """Resolve a bare full-reference metric name to its ``restored.`` value."""
    for r in records:
        if metric in r["metrics"]:
            return metric
    for r in records:
        if f"restored.{metric}" in r["metrics"]:
            return f"restored.{metric}"
    raise AnalyzerError(f"metric {metric!r} not present in the records")


def _param_value(record: Mapping, attack_id: Optional[str], param: str):
    hits = [(st["id"], st["params"][param]) for st in record["pipeline"]["stages"]
            if param in st["params"] and (attack_id is None or st["id"] == attack_id)]
    return hits


def aggregate_by_attack_param(db, metric: str, attack_param: str,
                              group_by_scheme: bool = True) -> dict[str, AggregateSeries]:
    """Average ``metric`` over images for every value of ``attack_param``.

    ``attack_param`` is ``"param"`` or ``"attack-id.param"``; the qualified
    form is required when several attacks share the parameter name.
    Identical-PSNR and not-applicable values are counted, never averaged.
    """
    records = _records(db)
    if not records:
        return {}
    attack_id, _, param = attack_param.rpartition(".")
    attack_id = attack_id or None
    matched = [(r, _param_value(r, attack_id, param)) for r in records]
    matched = [(r, hits) for r, hits in matched if hits]
    owners = sorted({a for _, hits in matched for a, _ in hits})
    if len(owners) > 1:
        raise AnalyzerError(f"parameter {param!r} belongs to several attacks; use one of "
                            + ", ".join(f"{a}.{param}" for a in owners))
    if not matched:
        return {}
    key = metric_key([r for r, _ in matched], metric)
    cells: dict[str, dict[float, list]] = defaultdict(lambda: defaultdict(list))
    for r, hits in matched:
        cells[group_label(r, group_by_scheme)][float(hits[0][1])].append(
            decode_value(r["metrics"].get(key)))
    out = {}
    for g in sorted(cells):
        axis = sorted(cells[g])
        means, counts, nas, idents = [], [], [], []
        for a in axis:
            vals = cells[g][a]
            finite = [v for v in vals if v is not None and math.isfinite(v)]
            counts.append(len(finite))
            nas.append(sum(v is None for v in vals))
            idents.append(sum(v is not None and math.isinf(v) for v in vals))
            means.append(math.fsum(finite) / len(finite) if finite else math.nan)
        out[g] = AggregateSeries(g, tuple(axis), tuple(means), tuple(counts), tuple(nas),
                                 tuple(idents))
    return out


def build_curve(records: Sequence[Mapping], metric: str) -> PiecewiseCurve:
    """(bpp, metric) curve for the records of one image and scheme."""
    records = _records(records)
    if not records:
        raise AnalyzerError("no ok records to build a curve from")
    key = metric_key(records, metric)
    points = []
    for r in records:
        if r.get("bpp") is None:
            continue
        y = decode_value(r["metrics"].get(key))
        if y is None:
            continue
        if math.isinf(y):
            log.warning("cell %s: identical %s at bpp %s dropped from curve",
                        r.get("cell"), key, r["bpp"])
            continue
        points.append((r["bpp"], y))
    if not points:
        names = sorted({r["pipeline"]["name"] for r in records})
        raise AnalyzerError(f"no bpp values in pipeline(s) {names}: no JPEG stage?")
    return PiecewiseCurve.from_points(points)


def curves_by_group(db, metric: str, group_by_scheme: bool = True
                    ) -> dict[str, list[PiecewiseCurve]]:
    """One bpp curve per image and group, from records that carry a bpp."""
    buckets: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for r in _records(db):
        if r.get("bpp") is not None:
            buckets[group_label(r, group_by_scheme)][r["image"]].append(r)
    out = {}
    for g in sorted(buckets):
        curves = []
        for image in sorted(buckets[g]):
            try:
                curves.append(build_curve(buckets[g][image], metric))
            except AnalyzerError as exc:
                log.warning("%s / %s: %s", g, image, exc)
        if curves:
            out[g] = curves
    return out


def average_bpp_curves(db, metric: str, group_by_scheme: bool = True,
                       sample_count: int = DEFAULT_SAMPLES) -> dict[str, PiecewiseCurve]:
    return {g: average_curves(cs, sample_count)
            for g, cs in curves_by_group(db, metric, group_by_scheme).items()}
