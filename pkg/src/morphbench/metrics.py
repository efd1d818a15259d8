"""ROC curves and the detection equal error rate.

Score convention, fixed artifact-wide: higher scores mean more attack-like,
and a sample scoring at or above a threshold is classified as an attack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _as_scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contain non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Detector outputs for the two classes, higher = more attack-like."""

    bonafide_scores: np.ndarray
    attack_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "bonafide_scores", _as_scores(self.bonafide_scores, "bonafide scores")
        )
        object.__setattr__(
            self, "attack_scores", _as_scores(self.attack_scores, "attack scores")
        )


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points of the threshold sweep.

    apcer[i] is the fraction of attacks scored below thresholds[i] (missed
    attacks); bpcer[i] the fraction of bonafide scored at or above it
    (false alarms).  apcer is nondecreasing and bpcer nonincreasing.
    """

    thresholds: np.ndarray
    apcer: np.ndarray
    bpcer: np.ndarray


def roc(scores: ScoreSet) -> RocCurve:
    """Exact error rates at every distinct score value plus ±inf sentinels."""
    bona = np.sort(scores.bonafide_scores)
    attack = np.sort(scores.attack_scores)
    if bona.size == 0:
        raise DataError("no bonafide scores")
    if attack.size == 0:
        raise DataError("no attack scores")
    thresholds = np.concatenate(
        ([-np.inf], np.unique(np.concatenate([bona, attack])), [np.inf])
    )
    apcer = np.searchsorted(attack, thresholds, side="left") / attack.size
    bpcer = (bona.size - np.searchsorted(bona, thresholds, side="left")) / bona.size
    return RocCurve(thresholds=thresholds, apcer=apcer, bpcer=bpcer)


def deer(scores: ScoreSet) -> float:
    """Detection equal error rate: the common rate where apcer meets bpcer.

    When the step curves cross between two adjacent operating points, the
    crossing is located by linear interpolation along the segment joining
    them.  0.0 means some threshold separates the classes perfectly; 1.0
    flags an inverted detector.
    """
    curve = roc(scores)
    diff = curve.apcer - curve.bpcer
    i = int(np.argmax(diff >= 0.0))
    if diff[i] == 0.0:
        return float(curve.apcer[i])
    a0, a1 = curve.apcer[i - 1], curve.apcer[i]
    b0, b1 = curve.bpcer[i - 1], curve.bpcer[i]
    s = (b0 - a0) / ((a1 - a0) - (b1 - b0))
    return float(a0 + s * (a1 - a0))


def format_percent(rate: float) -> str:
    """Rate rendered as a percentage with two decimals, e.g. 0.067 -> '6.70'."""
    return f"{100.0 * rate:.2f}"
