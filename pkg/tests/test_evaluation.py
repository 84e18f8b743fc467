import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wifiloc.errors import DataError
from wifiloc.evaluation import (
    ConfusionMatrix,
    EvalReport,
    EvalStats,
    ap_ablation,
    evaluate_once,
    evaluate_repeated,
    export_report,
    load_report,
    mean_confusion,
    subsample_curve,
)
from wifiloc.fingerprints import Band, BandProfile
from wifiloc.synthetic import (
    SyntheticConfig,
    generate_synthetic,
    grid_config,
    path_loss_rssi,
    rectangle,
)

# evaluate_repeated(noisy_ds, repeats=5, base_seed=42): frozen regression anchor
NOISY_ANCHOR = (0.6458333333333334, 0.6458333333333334, 0.7083333333333334, 0.75,
                0.7291666666666666)


# -- confusion and stats ------------------------------------------------------------

def test_confusion_by_hand():
    cm = ConfusionMatrix.from_predictions([1, 1, 1, 1, 2, 2, 3], [1, 1, 2, 3, 2, 2, 1], [1, 2, 3])
    np.testing.assert_array_equal(cm.matrix, [[0.5, 0.25, 0.25], [0, 1, 0], [1, 0, 0]])
    np.testing.assert_array_equal(cm.support, [4, 2, 1])
    assert cm.accuracy == pytest.approx(4 / 7, abs=1e-15)
    assert cm.off_diagonal_mass() == {1: 0.5, 2: 0.0, 3: 1.0}


def test_row_without_test_points_is_zero():
    cm = ConfusionMatrix.from_predictions([1, 1], [1, 2], [1, 2])
    np.testing.assert_array_equal(cm.matrix[1], [0, 0])


@given(st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)), min_size=1, max_size=80))
def test_confusion_rows_sum_to_one(pairs):
    truth, pred = [t for t, _ in pairs], [p for _, p in pairs]
    cm = ConfusionMatrix.from_predictions(truth, pred, range(1, 6))
    sums = cm.matrix.sum(axis=1)
    for s, n in zip(sums, cm.support):
        assert abs(s - 1.0) <= 1e-9 if n else s == 0
    assert ((cm.matrix >= 0) & (cm.matrix <= 1)).all()
    assert cm.accuracy == pytest.approx(np.mean(np.array(truth) == np.array(pred)), abs=1e-12)


def test_mean_confusion_skips_rows_without_support():
    a = ConfusionMatrix.from_predictions([1, 2], [1, 1], [1, 2])
    b = ConfusionMatrix.from_predictions([1], [2], [1, 2])
    m = mean_confusion([a, b])
    np.testing.assert_array_equal(m.matrix, [[0.5, 0.5], [1.0, 0.0]])


def test_stats_linear_quantiles():
    s = EvalStats((4.0, 1.0, 3.0, 2.0))
    assert (s.min, s.q25, s.mean, s.q75, s.max) == (1.0, 1.75, 2.5, 3.25, 4.0)
    one = EvalStats((0.7,))
    assert one.summary() == {"mean": 0.7, "q25": 0.7, "q75": 0.7, "min": 0.7, "max": 0.7,
                             "count": 1}
    with pytest.raises(ValueError):
        EvalStats(())


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_stats_ordering(values):
    s = EvalStats(tuple(values))
    assert s.min <= s.q25 <= s.q75 <= s.max
    assert s.min <= s.mean <= s.max


# -- evaluation runs --------------------------------------------------------------

def test_noiseless_fixture_is_perfect(noiseless_ds):
    res = evaluate_once(noiseless_ds, seed=0)
    assert res.accuracy == 1.0
    np.testing.assert_array_equal(res.confusion.matrix, np.eye(4))
    assert res.model_accuracies == {a: 1.0 for a in res.model_accuracies}
    assert len(res.model_accuracies) == 6


def test_two_distant_cells_every_classifier_perfect():
    ds = generate_synthetic(grid_config(cells=2, aps=3, sigma_db=0.0, samples=50, seed=1, gap=30.0))
    res = evaluate_repeated(ds, repeats=3, base_seed=0)
    assert res.stats.values == (1.0, 1.0, 1.0)
    assert all(s.values == (1.0, 1.0, 1.0) for s in res.model_stats.values())


def test_noisy_anchor(noisy_ds):
    res = evaluate_repeated(noisy_ds, repeats=5, base_seed=42)
    assert res.stats.values == pytest.approx(NOISY_ANCHOR, abs=1e-12)
    assert 0.6 < res.stats.mean < 1.0


def test_repeated_runs_are_bit_identical(noisy_ds):
    a = evaluate_repeated(noisy_ds, repeats=3, base_seed=7)
    b = evaluate_repeated(noisy_ds, repeats=3, base_seed=7, jobs=2)
    assert a.stats.values == b.stats.values
    np.testing.assert_array_equal(a.confusion.matrix, b.confusion.matrix)
    assert [r.seed for r in a.runs] == [7, 8, 9]


def test_single_repeat_collapses(noisy_ds):
    res = evaluate_repeated(noisy_ds, repeats=1, base_seed=3)
    once = evaluate_once(noisy_ds, seed=3)
    s = res.stats.summary()
    assert s["min"] == s["q25"] == s["mean"] == s["q75"] == s["max"] == once.accuracy
    with pytest.raises(ValueError):
        evaluate_repeated(noisy_ds, repeats=0)


def test_only24_band_evaluation(small_museum_ds):
    res = evaluate_once(small_museum_ds, BandProfile.ONLY24, seed=1)
    assert 0.0 < res.accuracy <= 1.0
    assert res.confusion.labels == tuple(range(1, 17))


# -- curves ---------------------------------------------------------------------

def test_ablation_at_full_count_equals_baseline(noisy_ds):
    [point] = ap_ablation(noisy_ds, [3], repeats=2, base_seed=5)
    base = evaluate_repeated(noisy_ds, repeats=2, base_seed=5)
    assert point.stats.values == base.stats.values
    assert point.info["removed_aps"] == []


def test_ablation_trend_and_bookkeeping(small_museum_ds):
    points = ap_ablation(small_museum_ds, [15, 5], repeats=3, base_seed=1)
    assert [p.x for p in points] == [15, 5]
    assert points[-1].stats.mean <= points[0].stats.mean
    assert len(points[-1].info["removed_aps"]) == 10
    assert points[-1].info["min_covering_aps"] <= points[0].info["min_covering_aps"]


def test_ablation_rejects_bad_counts(noisy_ds):
    with pytest.raises(DataError):
        ap_ablation(noisy_ds, [4])
    with pytest.raises(DataError):
        ap_ablation(noisy_ds, [0])


def test_subsample_full_fraction_is_baseline(noisy_ds):
    [point] = subsample_curve(noisy_ds, [1.0], repeats=3, base_seed=2)
    base = evaluate_repeated(noisy_ds, repeats=3, base_seed=2)
    assert point.stats.values == base.stats.values
    assert point.info["fingerprints"] == len(noisy_ds)
    with pytest.raises(DataError):
        subsample_curve(noisy_ds, [1.5])


def test_subsample_trend():
    # small enough per location that the amount of training data matters
    ds = generate_synthetic(grid_config(cells=8, aps=4, sigma_db=6.0, samples=40, seed=3))
    points = subsample_curve(ds, [0.3, 1.0], repeats=10, base_seed=42)
    assert points[0].info["fingerprints"] == 8 * 12
    assert points[0].stats.mean <= points[1].stats.mean


# -- synthetic generator -------------------------------------------------------------

def test_path_loss_doubling():
    r = path_loss_rssi(np.array([3.0, 6.0]), -40.0, 2.0)
    assert r[0] - r[1] == pytest.approx(20 * np.log10(2), abs=1e-12)
    assert r[0] - r[1] == pytest.approx(6.02, abs=0.005)


def test_generated_rssi_follows_model():
    cfg = SyntheticConfig(20.0, 20.0, ((0.0, 0.0),), (rectangle(2, 2, 3, 3), rectangle(10, 10, 11, 11)),
                          sigma_db=0.0, samples_per_location=20, seed=0, dual_band=False,
                          path_loss_exponent=2.0)
    ds = generate_synthetic(cfg)
    for fp in ds.fingerprints:
        assert -100.0 <= fp.signals["02:00:00:00:01:24"] <= -30.0
    a = [fp.signals["02:00:00:00:01:24"] for fp in ds.fingerprints if fp.location == 1]
    b = [fp.signals["02:00:00:00:01:24"] for fp in ds.fingerprints if fp.location == 2]
    # cell 1 is 2.8..4.2 m away, cell 2 14..15.6 m
    assert min(a) >= -40 - 20 * np.log10(np.hypot(3, 3)) - 1e-9
    assert max(b) <= -40 - 20 * np.log10(np.hypot(10, 10)) + 1e-9


def test_generator_is_seeded_and_drops_invisible_readings():
    cfg = grid_config(cells=3, aps=4, sigma_db=6.0, samples=30, seed=9)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)
    ds = generate_synthetic(cfg)
    values = [v for fp in ds.fingerprints for v in fp.signals.values()]
    assert min(values) >= -95.0 and max(values) <= -30.0
    assert ds.bands() == {Band.GHZ24, Band.GHZ5}


@pytest.mark.parametrize("bad", [
    dict(cells=(rectangle(0, 0, 1, 1),)),
    dict(aps=()),
    dict(sigma_db=-1.0),
    dict(cells=(rectangle(0, 0, 1, 1), ((0, 0), (1, 1), (2, 2)))),
    dict(cells=(rectangle(0, 0, 1, 1), rectangle(5, 5, 50, 6))),
    dict(samples_per_location=(3,)),
])
def test_invalid_geometry(bad):
    base = dict(width=10.0, height=10.0, aps=((5.0, 5.0),),
                cells=(rectangle(0, 0, 1, 1), rectangle(3, 3, 4, 4)), samples_per_location=5)
    with pytest.raises(DataError):
        generate_synthetic(SyntheticConfig(**{**base, **bad}))


# -- export ----------------------------------------------------------------------

def test_identity_confusion_csv(tmp_path):
    cm = ConfusionMatrix((1, 2, 3), np.eye(3), np.array([2.0, 2.0, 2.0]))
    report = EvalReport("evaluate", "dual", 1, 42, EvalStats((1.0,)), EvalStats((1.0,)), cm)
    export_report(report, "csv", tmp_path)
    rows = list(csv.reader(open(tmp_path / "confusion.csv")))
    assert rows[0][1:] == ["1", "2", "3"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    for i, r in enumerate(rows[1:]):
        assert [float(v) for v in r[1:]] == [1.0 if j == i else 0.0 for j in range(3)]


def test_json_round_trip_and_curve_schema(noisy_ds, tmp_path):
    points = subsample_curve(noisy_ds, [0.5, 1.0], repeats=2, base_seed=0)
    res = evaluate_repeated(noisy_ds, repeats=2, base_seed=0)
    report = EvalReport.from_repeated(res, "dual", 2, 0)
    report.curve = points
    export_report(report, "json", tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.to_dict() == report.to_dict()
    assert json.loads((tmp_path / "r.json").read_text())["quantile_method"] == "linear"

    export_report(report, "csv", tmp_path / "csv")
    rows = list(csv.DictReader(open(tmp_path / "csv" / "curve.csv")))
    assert len(rows) == 2
    assert list(rows[0]) == ["x", "mean", "q25", "q75", "min", "max", "count"]
    assert float(rows[1]["mean"]) == points[1].stats.mean
    acc = list(csv.reader(open(tmp_path / "csv" / "accuracy.csv")))
    assert acc[0][:2] == ["repeat", "meta"] and len(acc) == 3
    with pytest.raises(ValueError):
        export_report(report, "xml", tmp_path / "x")
