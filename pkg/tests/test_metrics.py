"""Detection metrics over observation weights and run traces."""

import csv

import numpy as np
import pytest

from drfit.metrics import (
    SeparationCurve,
    UndefinedAucError,
    WeightHistogram,
    crash_detector,
    detection_auc,
    separation_curve,
    weight_histogram,
    write_curve_csv,
    write_histogram_csv,
)
from drfit.train import EpochRecord, TrainTrace


def _pairwise_auc(omega, mask):
    """Brute force: fraction of (correct, mislabelled) pairs ranked the
    right way, ties counting half."""
    hi = omega[~mask]
    lo = omega[mask]
    wins = 0.0
    for a in hi:
        for b in lo:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (hi.size * lo.size)


@pytest.mark.parametrize("seed", range(6))
def test_auc_matches_pairwise_count(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 120))
    omega = rng.uniform(0.0, 2.0, size=n)
    if seed % 2:
        omega = np.round(omega, 1)  # force heavy ties
    mask = rng.random(n) < 0.3
    mask[0], mask[1] = True, False  # both groups nonempty
    assert detection_auc(omega, mask) == pytest.approx(
        _pairwise_auc(omega, mask), abs=1e-12
    )


def test_auc_hand_values():
    omega = np.array([0.1, 0.9, 0.8])
    mask = np.array([True, False, False])
    assert detection_auc(omega, mask) == 1.0
    assert detection_auc(1.0 - omega, mask) == 0.0
    assert detection_auc(np.ones(4), np.array([True, False, True, False])) == 0.5


def test_auc_needs_both_groups():
    with pytest.raises(UndefinedAucError):
        detection_auc(np.ones(3), np.zeros(3, dtype=bool))
    with pytest.raises(UndefinedAucError):
        detection_auc(np.ones(3), np.ones(3, dtype=bool))


def test_separation_curve_endpoints_and_monotonicity():
    rng = np.random.default_rng(2)
    omega = rng.uniform(0.1, 1.0, size=50)
    mask = rng.random(50) < 0.4
    mask[0], mask[1] = True, False
    curve = separation_curve(omega, mask)
    # a zero threshold keeps everything; past the top it catches everything
    assert curve.correct_kept[0] == 1.0
    assert curve.mislabelled_caught[0] == 0.0
    assert curve.correct_kept[-1] == 0.0
    assert curve.mislabelled_caught[-1] == 1.0
    assert np.all(np.diff(curve.correct_kept) <= 0)
    assert np.all(np.diff(curve.mislabelled_caught) >= 0)


def test_separation_curve_perfect_split():
    omega = np.array([0.1, 0.2, 1.0, 1.1, 1.2])
    mask = np.array([True, True, False, False, False])
    curve = separation_curve(omega, mask)
    t, kept, caught = curve.best_pair()
    assert kept == 1.0 and caught == 1.0
    assert 0.2 < t <= 1.0


def test_separation_curve_explicit_thresholds():
    omega = np.array([0.5, 1.5])
    mask = np.array([True, False])
    curve = separation_curve(omega, mask, thresholds=np.array([0.0, 1.0, 2.0]))
    assert np.array_equal(curve.thresholds, [0.0, 1.0, 2.0])
    assert np.array_equal(curve.correct_kept, [1.0, 1.0, 0.0])
    assert np.array_equal(curve.mislabelled_caught, [0.0, 1.0, 1.0])


def test_histogram_conserves_counts():
    rng = np.random.default_rng(3)
    omega = rng.uniform(0.0, 2.0, size=200)
    mask = rng.random(200) < 0.25
    hist = weight_histogram(omega, mask, bins=50)
    assert hist.edges.size == 51
    assert hist.correct_counts.sum() == (~mask).sum()
    assert hist.mislabelled_counts.sum() == mask.sum()
    assert hist.edges[0] == 0.0
    assert hist.edges[-1] == pytest.approx(omega.max())
    assert not hist.correct_empty and not hist.mislabelled_empty


def test_histogram_flags_empty_groups():
    omega = np.array([0.5, 0.7])
    hist = weight_histogram(omega, np.array([False, False]))
    assert hist.mislabelled_empty and not hist.correct_empty
    assert hist.mislabelled_counts.sum() == 0


def test_histogram_handles_all_zero_weights():
    hist = weight_histogram(np.zeros(4), np.array([True, False, True, False]))
    assert hist.edges[-1] == 1.0
    assert hist.correct_counts.sum() == 2


def _trace(vals):
    t = TrainTrace()
    for i, v in enumerate(vals, start=1):
        t.append(EpochRecord(epoch=i, train_loss=0.5, train_acc=0.9, val_acc=v))
    return t


def test_crash_detector_window_rule():
    # accuracy pinned at chance over the whole back half of the run
    crashed = [0.9] * 40 + [0.5] * 60
    assert crash_detector(_trace(crashed), chance=0.5)
    healthy = [0.6] * 30 + [0.9] * 70
    assert not crash_detector(_trace(healthy), chance=0.5)
    # a dip that recovers before the window is not a crash
    recovered = [0.5] * 60 + [0.9] * 40
    assert not crash_detector(_trace(recovered), chance=0.5)
    # near-chance within tolerance still counts
    wobbling = [0.9] * 50 + [0.51, 0.49] * 25
    assert crash_detector(_trace(wobbling), chance=0.5)


def test_csv_writers_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    omega = rng.uniform(0.0, 1.5, size=64)
    mask = rng.random(64) < 0.3
    hist = weight_histogram(omega, mask, bins=10)
    curve = separation_curve(omega, mask, thresholds=np.linspace(0, 1.6, 9))

    hp = tmp_path / "hist.csv"
    write_histogram_csv(hist, hp)
    with open(hp, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    assert sum(int(r["correct_count"]) for r in rows) == (~mask).sum()
    assert float(rows[0]["bin_lo"]) == 0.0

    cp = tmp_path / "curve.csv"
    write_curve_csv(curve, cp)
    with open(cp, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert [float(r["threshold"]) for r in rows] == list(np.linspace(0, 1.6, 9))
