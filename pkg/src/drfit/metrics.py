"""Post-training analysis of observation weights and learning traces:
weight histograms split by label correctness, threshold separation
curves, mislabel-detection AUC, and crash detection on accuracy traces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .train import TrainTrace


class UndefinedAucError(ValueError):
    """AUC needs at least one point in each group."""


@dataclass(frozen=True)
class WeightHistogram:
    """Counts of correct-label and mislabelled weights over shared bins."""

    edges: np.ndarray
    correct_counts: np.ndarray
    mislabelled_counts: np.ndarray
    correct_empty: bool
    mislabelled_empty: bool


@dataclass(frozen=True)
class SeparationCurve:
    """Per threshold t: the fraction of correctly labelled points kept
    (omega >= t) and the fraction of mislabelled points caught (omega < t)."""

    thresholds: np.ndarray
    correct_kept: np.ndarray
    mislabelled_caught: np.ndarray

    def best_pair(self) -> tuple[float, float, float]:
        """(t, kept, caught) maximising min(kept, caught)."""
        score = np.minimum(self.correct_kept, self.mislabelled_caught)
        i = int(np.argmax(score))
        return (
            float(self.thresholds[i]),
            float(self.correct_kept[i]),
            float(self.mislabelled_caught[i]),
        )


def _split_groups(omega, mask):
    omega = np.asarray(omega, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if omega.shape != mask.shape:
        raise ValueError("omega and mislabel mask must have the same length")
    return omega[~mask], omega[mask]


def weight_histogram(omega, mask, bins: int = 50) -> WeightHistogram:
    """Histograms of the two groups over identical edges on [0, max omega]."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    correct, wrong = _split_groups(omega, mask)
    top = float(np.max(omega)) if len(omega) else 1.0
    if top <= 0.0:
        top = 1.0
    edges = np.linspace(0.0, top, bins + 1)
    c_counts, _ = np.histogram(correct, bins=edges)
    w_counts, _ = np.histogram(wrong, bins=edges)
    return WeightHistogram(
        edges=edges,
        correct_counts=c_counts,
        mislabelled_counts=w_counts,
        correct_empty=correct.size == 0,
        mislabelled_empty=wrong.size == 0,
    )


def separation_curve(omega, mask, thresholds=None) -> SeparationCurve:
    """Sweep a threshold t: points with omega < t are flagged as
    mislabelled. Reports what that keeps and what it catches."""
    correct, wrong = _split_groups(omega, mask)
    if thresholds is None:
        top = float(np.max(omega)) if len(omega) else 1.0
        thresholds = np.linspace(0.0, top * 1.0001, 201)
    t = np.asarray(thresholds, dtype=float)
    kept = (
        (correct[None, :] >= t[:, None]).mean(axis=1)
        if correct.size
        else np.zeros_like(t)
    )
    caught = (
        (wrong[None, :] < t[:, None]).mean(axis=1) if wrong.size else np.zeros_like(t)
    )
    return SeparationCurve(t, kept, caught)


def detection_auc(omega, mask) -> float:
    """Probability that a random mislabelled point has a lower weight
    than a random correctly labelled one; ties count one half."""
    correct, wrong = _split_groups(omega, mask)
    if correct.size == 0 or wrong.size == 0:
        raise UndefinedAucError("both label groups must be nonempty")
    ranks = stats.rankdata(np.concatenate([correct, wrong]))
    r_correct = ranks[: correct.size].sum()
    u = r_correct - correct.size * (correct.size + 1) / 2.0
    return float(u / (correct.size * wrong.size))


def crash_detector(trace: TrainTrace, chance: float, window: float = 0.5, tol: float = 0.02) -> bool:
    """True when validation accuracy sits within tol of the chance level
    for the entire final `window` fraction of epochs."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    vals = trace.column("val_acc")
    if any(v is None for v in vals):
        raise ValueError("trace has no validation accuracy")
    tail = vals[int(len(vals) * (1.0 - window)):]
    return all(abs(v - chance) <= tol for v in tail)


# ---------------------------------------------------------------------------
# CSV emission for external plotting

def write_histogram_csv(hist: WeightHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "correct_count", "mislabelled_count"])
        for i in range(len(hist.correct_counts)):
            w.writerow(
                [
                    repr(float(hist.edges[i])),
                    repr(float(hist.edges[i + 1])),
                    int(hist.correct_counts[i]),
                    int(hist.mislabelled_counts[i]),
                ]
            )


def write_curve_csv(curve: SeparationCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "correct_kept", "mislabelled_caught"])
        for t, a, b in zip(curve.thresholds, curve.correct_kept, curve.mislabelled_caught):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
