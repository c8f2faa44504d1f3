import logging
import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmbench.analyzer import (AnalyzerError, PiecewiseCurve, aggregate_by_attack_param,
                              average_at, average_curves, build_curve, curves_by_group)
from wmbench.report import emit_plot, emit_table, fmt, format_table
from wmbench.resultsdb import (FORMAT, IDENTICAL, NOT_APPLICABLE, ResultsDatabase, ResultsError,
                               decode_value, encode_value, write_all)


def record(image, qf, metrics, scheme="s", delta=None, bpp=None, cell=0, status="ok",
           pipeline="p"):
    params = {} if delta is None else {"delta": delta}
    return {"cell": cell, "image": image, "status": status, "bpp": bpp, "metrics": metrics,
            "scheme": {"id": scheme, "params": params},
            "pipeline": {"name": pipeline, "stages": [
                {"id": "copy-paste", "params": {"area_fraction": 0.1}},
                {"id": "jpeg", "params": {"qf": qf}}]}}


def literal_average(curves, x):
    """Average the way the defining formula reads: sum f_i over sum sign(f_i)."""
    vals = [c(x) for c in curves]
    signs = [1 if v > 0 else 0 for v in vals]
    return sum(vals) / sum(signs) if sum(signs) else None


# results database encoding

def test_value_encoding():
    assert encode_value(math.inf) == IDENTICAL
    assert encode_value(None) == NOT_APPLICABLE
    assert encode_value(float("nan")) == NOT_APPLICABLE
    assert decode_value(IDENTICAL) == math.inf
    assert decode_value({"error": "x"}) is None
    assert decode_value(3) == 3.0


def test_database_round_trip(tmp_path):
    recs = [record("a", 90, {"fp": 0.5}, cell=1), record("a", 80, {"fp": 0.25}, cell=0)]
    write_all(tmp_path / "db.jsonl", {"created": "now"}, recs)
    db = ResultsDatabase.load(tmp_path / "db.jsonl")
    assert db.header["format"] == FORMAT and db.records == recs
    write_all(tmp_path / "db2.jsonl", {"created": "later"}, recs[::-1])
    assert ResultsDatabase.load(tmp_path / "db2.jsonl").canonical() == db.canonical()


def test_database_rejects_foreign_file(tmp_path):
    (tmp_path / "x.jsonl").write_text('{"hello": 1}\n')
    with pytest.raises(ResultsError):
        ResultsDatabase.load(tmp_path / "x.jsonl")
    (tmp_path / "y.jsonl").write_text("")
    with pytest.raises(ResultsError):
        ResultsDatabase.load(tmp_path / "y.jsonl")


# aggregation

def test_flat_series():
    recs = [record("a", qf, {"fp": 0}) for qf in range(100, 49, -5)]
    series = aggregate_by_attack_param(recs, "fp", "qf")
    s = series["s"]
    assert s.axis == tuple(float(q) for q in range(50, 101, 5))
    assert s.mean == (0.0,) * 11


def test_mean_of_two_images():
    recs = [record("a", 75, {"fp": 0.1}), record("b", 75, {"fp": 0.3})]
    s = aggregate_by_attack_param(recs, "fp", "jpeg.qf")["s"]
    assert s.mean[0] == pytest.approx(0.2)
    assert s.count == (2,)


def test_not_applicable_and_identical_counted():
    recs = [record("a", 90, {"fn": NOT_APPLICABLE, "restored.psnr": IDENTICAL}),
            record("b", 90, {"fn": 0.5, "restored.psnr": 30.0}),
            record("c", 90, {"fn": {"error": "boom"}, "restored.psnr": 20.0})]
    fn = aggregate_by_attack_param(recs, "fn", "qf")["s"]
    assert (fn.mean, fn.count, fn.na_count) == ((0.5,), (1,), (2,))
    ps = aggregate_by_attack_param(recs, "psnr", "qf")["s"]
    assert ps.mean == (25.0,) and ps.identical_count == (1,)
    for i in range(len(fn)):
        assert fn.count[i] + fn.na_count[i] + fn.identical_count[i] == 3


def test_grouping_by_scheme_params():
    recs = [record("a", 90, {"fp": 0.0}, scheme="x", delta=8),
            record("a", 90, {"fp": 1.0}, scheme="x", delta=12)]
    groups = aggregate_by_attack_param(recs, "fp", "qf")
    assert sorted(groups) == ["x(delta=12)", "x(delta=8)"]
    merged = aggregate_by_attack_param(recs, "fp", "qf", group_by_scheme=False)
    assert merged["all"].mean == (0.5,)


def test_failed_records_ignored_and_empty_selection():
    recs = [record("a", 90, {"fp": 1.0}, status="cell-error"), record("b", 90, {"fp": 0.0})]
    assert aggregate_by_attack_param(recs, "fp", "qf")["s"].mean == (0.0,)
    assert aggregate_by_attack_param([], "fp", "qf") == {}
    assert aggregate_by_attack_param(recs, "fp", "variance") == {}


def test_ambiguous_param():
    recs = [record("a", 90, {"fp": 0.0})]
    recs[0]["pipeline"]["stages"].append({"id": "other", "params": {"qf": 3}})
    with pytest.raises(AnalyzerError, match="jpeg.qf"):
        aggregate_by_attack_param(recs, "fp", "qf")
    assert aggregate_by_attack_param(recs, "fp", "other.qf")["s"].axis == (3.0,)


def test_unknown_metric():
    with pytest.raises(AnalyzerError):
        aggregate_by_attack_param([record("a", 90, {"fp": 0.0})], "vmaf", "qf")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from([50, 75, 100]),
                          st.floats(0, 1)), min_size=1, max_size=30), st.randoms())
def test_aggregation_permutation_invariant(rows, shuffler):
    recs = [record(img, qf, {"fp": v}) for img, qf, v in rows]
    before = aggregate_by_attack_param(recs, "fp", "qf")
    shuffler.shuffle(recs)
    after = aggregate_by_attack_param(recs, "fp", "qf")
    assert before.keys() == after.keys()
    for k in before:
        assert before[k].axis == after[k].axis and before[k].count == after[k].count
        assert np.allclose(before[k].mean, after[k].mean, rtol=0, atol=1e-12)


# curves

def test_single_point_curve():
    c = PiecewiseCurve.from_points([(1.0, 30.0)])
    assert c.domain == (1.0, 1.0)
    assert c(1.0) == 30.0 and c(1.1) == 0.0


def test_interpolation_and_canonical_order():
    c = PiecewiseCurve.from_points([(1.5, 40.0), (0.5, 30.0)])
    assert c(1.0) == 35.0
    assert c == PiecewiseCurve.from_points([(0.5, 30.0), (1.5, 40.0)])
    assert c(0.4) == 0.0 and c(1.6) == 0.0


def test_duplicate_x_averaged():
    c = PiecewiseCurve.from_points([(1.0, 30.0), (1.0, 34.0), (2.0, 10.0)])
    assert c.points() == [(1.0, 32.0), (2.0, 10.0)]


def test_curve_invariants():
    with pytest.raises(AnalyzerError):
        PiecewiseCurve((), ())
    with pytest.raises(AnalyzerError):
        PiecewiseCurve((1.0, 1.0), (2.0, 3.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 8), st.floats(1, 60)), min_size=1, max_size=12,
                unique_by=lambda p: p[0]))
def test_curve_returns_samples_exactly(points):
    c = PiecewiseCurve.from_points(points)
    for x, y in points:
        assert c(x) == y


def test_hand_evaluated_average():
    f1 = PiecewiseCurve.from_points([(0.5, 30.0), (1.5, 40.0)])
    f2 = PiecewiseCurve.from_points([(1.0, 20.0), (2.0, 30.0)])
    mean, support = average_at([f1, f2], [0.75, 1.25, 1.75])
    assert mean.tolist() == [32.5, 30.0, 27.5]
    assert support.tolist() == [1, 2, 1]
    avg = average_curves([f1, f2], sample_count=7)
    assert avg.xs == (0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    assert avg.ys[1] == 32.5 and avg.ys[3] == 30.0 and avg.ys[5] == 27.5
    assert avg.support == (1, 1, 2, 2, 2, 1, 1)


def test_single_curve_average():
    c = PiecewiseCurve.from_points([(1.0, 10.0), (3.0, 30.0)])
    avg = average_curves([c], sample_count=5)
    assert avg.xs == (1.0, 1.5, 2.0, 2.5, 3.0)
    assert np.allclose(avg.ys, [10, 15, 20, 25, 30])


def test_identical_curves_idempotent():
    c = PiecewiseCurve.from_points([(0.3, 25.0), (1.1, 31.0), (2.9, 40.0)])
    avg = average_curves([c] * 4, sample_count=50)
    assert np.allclose(avg.ys, c(np.array(avg.xs)), rtol=0, atol=1e-12)


def test_uncovered_points_omitted():
    f1 = PiecewiseCurve.from_points([(0.0, 1.0), (1.0, 1.0)])
    f2 = PiecewiseCurve.from_points([(3.0, 2.0), (4.0, 2.0)])
    avg = average_curves([f1, f2], sample_count=5)
    assert avg.xs == (0.0, 1.0, 3.0, 4.0)


def test_average_errors():
    with pytest.raises(AnalyzerError):
        average_curves([])
    with pytest.raises(AnalyzerError):
        average_curves([PiecewiseCurve((1.0,), (1.0,))], sample_count=1)


def _random_curve(rng):
    n = int(rng.integers(1, 12))
    lo = rng.uniform(0.1, 3)
    xs = np.sort(rng.uniform(lo, lo + rng.uniform(0.2, 4), n))
    return PiecewiseCurve.from_points(zip(xs.tolist(), rng.uniform(5, 50, n).tolist()))


def test_literal_formula_oracle():
    rng = np.random.default_rng(31)
    for _ in range(20):
        curves = [_random_curve(rng) for _ in range(int(rng.integers(1, 10)))]
        avg = average_curves(curves, 200)
        for x, y in zip(avg.xs, avg.ys):
            assert y == pytest.approx(literal_average(curves, x), rel=1e-12)


def test_average_within_contributing_range():
    rng = np.random.default_rng(8)
    for _ in range(20):
        curves = [_random_curve(rng) for _ in range(5)]
        avg = average_curves(curves, 100)
        for x, y in zip(avg.xs, avg.ys):
            vals = [c(x) for c in curves if c.covers(x)]
            assert min(vals) - 1e-9 <= y <= max(vals) + 1e-9


def test_build_curve_from_records(caplog):
    recs = [record("a", 90, {"restored.psnr": 31.0}, bpp=2.0),
            record("a", 70, {"restored.psnr": 28.0}, bpp=1.0),
            record("a", 100, {"restored.psnr": IDENTICAL}, bpp=4.0)]
    with caplog.at_level(logging.WARNING):
        c = build_curve(recs, "psnr")
    assert c.points() == [(1.0, 28.0), (2.0, 31.0)]
    assert "identical" in caplog.text


def test_build_curve_needs_bpp():
    with pytest.raises(AnalyzerError, match="noise-pipe"):
        build_curve([record("a", 90, {"fp": 0.0}, pipeline="noise-pipe")], "fp")


def test_curves_by_group():
    recs = [record(img, qf, {"restored.psnr": 20.0 + qf / 10}, bpp=qf / 25, scheme=s)
            for img in "ab" for qf in (50, 75, 100) for s in ("x", "y")]
    groups = curves_by_group(recs, "psnr")
    assert sorted(groups) == ["x", "y"]
    assert len(groups["x"]) == 2


# report emission

def _series():
    recs = [record(img, qf, {"fp": 0.0 if s == "x" else qf / 100}, scheme=s)
            for img in "ab" for qf in range(50, 101, 5) for s in ("x", "y")]
    return aggregate_by_attack_param(recs, "fp", "qf")


def test_table_rows(tmp_path):
    flat = {"x": _series()["x"]}
    path = emit_table(flat, tmp_path / "t.csv", axis="qf")
    text = path.read_bytes().decode()
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == "qf,x,x count,x n/a,x identical"
    assert len(lines) == 12
    assert lines[1] == "50,0,2,0,0"


def test_table_for_curves():
    c = average_curves([PiecewiseCurve.from_points([(0.5, 30.0), (1.5, 40.0)]),
                        PiecewiseCurve.from_points([(1.0, 20.0), (2.0, 30.0)])], 7)
    text = format_table({"m": c}, axis="bpp")
    assert text.splitlines()[2] == "0.75,32.5,1"


def test_number_format():
    assert fmt(100.0) == "100" and fmt(0.1) == "0.1" and fmt(None) == ""
    assert fmt(float("nan")) == "" and fmt(1 / 3) == repr(1 / 3)


def test_plot_two_groups(tmp_path):
    path = emit_plot(_series(), tmp_path / "p.svg", "QF", "FP rate")
    root = ET.parse(path).getroot()
    ids = {el.get("id") for el in root.iter()}
    assert {"series-0", "series-1"} <= ids
    text = path.read_text()
    assert text.count("series-") == 2
    # legend entries carry the group labels
    assert ">x<" in text and ">y<" in text


def test_emission_byte_identical(tmp_path):
    data = _series()
    for name in ("a", "b"):
        emit_table(data, tmp_path / f"{name}.csv", axis="qf")
        emit_plot(data, tmp_path / f"{name}.svg", "QF", "FP")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_report_rejects_empty(tmp_path):
    with pytest.raises(AnalyzerError):
        emit_table({}, tmp_path / "x.csv")
    with pytest.raises(OSError):
        emit_table(_series(), tmp_path / "missing" / "x.csv")


def test_plot_ticks_cover_extremes(tmp_path):
    c = PiecewiseCurve.from_points([(0.25, 12.0), (3.75, 48.0)])
    text = emit_plot({"m": c}, tmp_path / "c.svg", "bpp", "PSNR").read_text()
    labels = re.findall(r">([^<>\n]+)</text>", text)
    values = [float(v) for v in labels if re.fullmatch(r"[-0-9.]+", v)]
    for extreme in (0.25, 3.75, 12.0, 48.0):
        assert extreme in values
