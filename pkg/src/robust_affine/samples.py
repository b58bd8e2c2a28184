"""Point clouds with an active mask and hidden ground-truth labels.

Estimators never receive a :class:`SampleSet`; they receive ``SampleSet.view()``,
a plain ``(n, d)`` array of the active rows.  Only the evaluation layer reads
``truth_label``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

INLIER = 0
OUTLIER = 1
DELETED = 2  # original point removed by the adversary
UNKNOWN = -1

LABEL_NAMES = {INLIER: "inlier", OUTLIER: "outlier", DELETED: "deleted_by_adversary", UNKNOWN: "unknown"}


@dataclass
class SampleSet:
    points: np.ndarray
    active: np.ndarray
    truth_label: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise ValueError("points must be an (m, d) array with d >= 1")
        m = self.points.shape[0]
        self.active = np.asarray(self.active, dtype=bool)
        self.truth_label = np.asarray(self.truth_label, dtype=np.int8)
        if self.active.shape != (m,) or self.truth_label.shape != (m,):
            raise ValueError("active and truth_label must have one entry per point")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")

    @classmethod
    def from_points(cls, points, label: int = INLIER) -> "SampleSet":
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        m = points.shape[0]
        return cls(points, np.ones(m, bool), np.full(m, label, np.int8))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        """Number of active points."""
        return int(self.active.sum())

    def active_rows(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def view(self) -> np.ndarray:
        """Active points only; the array handed to estimators."""
        out = self.points[self.active]
        out.setflags(write=False)
        return out

    def view_labels(self) -> np.ndarray:
        return self.truth_label[self.active]

    def without_labels(self) -> "SampleSet":
        return SampleSet(self.points.copy(), self.active.copy(),
                         np.full(len(self.active), UNKNOWN, np.int8))

    def count(self, label: int) -> int:
        return int(np.sum(self.truth_label == label))


def as_points(s) -> np.ndarray:
    """Accept a SampleSet or an array-like and return the estimator-facing array."""
    if isinstance(s, SampleSet):
        return s.view()
    x = np.asarray(s, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected an (n, d) array of points")
    return x
