"""Scoring of estimates against the truth.

This is the only layer that reads ground-truth labels.  Bodies are compared
after matching rows up to permutation and sign, so that every per-row
quantity refers to the same facet pair in both bodies.
"""

from __future__ import annotations

import numpy as np

from .geometry import AxisBox, Parallelopiped, match_rows, tv_exact_axis_aligned, tv_monte_carlo
from .samples import DELETED, INLIER, OUTLIER, SampleSet


def aligned_truth(est: Parallelopiped, truth: Parallelopiped) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truth normals and bounds reordered and re-signed to line up with ``est``."""
    perm, signs, _ = match_rows(est.normals, truth.normals)
    normals = signs[:, None] * truth.normals[perm]
    lo, hi = truth.lower[perm], truth.upper[perm]
    lower = np.where(signs > 0, lo, -hi)
    upper = np.where(signs > 0, hi, -lo)
    return normals, lower, upper


def delta_r(est: Parallelopiped, truth: Parallelopiped) -> np.ndarray:
    """Per-row normal error ``||a_i - a*_pi(i)||``."""
    normals, _, _ = aligned_truth(est, truth)
    return np.linalg.norm(est.normals - normals, axis=1)


def delta_s(est: Parallelopiped, truth: Parallelopiped) -> np.ndarray:
    """Per-row offset error relative to the true width."""
    _, lower, upper = aligned_truth(est, truth)
    return (np.abs(est.upper - upper) + np.abs(est.lower - lower)) / (upper - lower)


def as_axis_box(p: Parallelopiped, tol: float = 1e-12) -> AxisBox | None:
    """The body as an :class:`AxisBox` when its normals are signed coordinate axes."""
    a = p.normals
    idx = np.argmax(np.abs(a), axis=1)
    if len(set(idx.tolist())) != p.d or not np.allclose(np.abs(a[np.arange(p.d), idx]), 1.0, atol=tol):
        return None
    lower, upper = np.empty(p.d), np.empty(p.d)
    for row, i in enumerate(idx):
        if a[row, i] > 0:
            lower[i], upper[i] = p.lower[row], p.upper[row]
        else:
            lower[i], upper[i] = -p.upper[row], -p.lower[row]
    return AxisBox(lower, upper)


def tv_summary(est: Parallelopiped, truth: Parallelopiped, m: int, seed) -> dict:
    tv, se = tv_monte_carlo(est, truth, m, seed)
    out = {"estimate": tv, "stderr": se, "exact": None}
    b1, b2 = as_axis_box(est), as_axis_box(truth)
    if b1 is not None and b2 is not None:
        out["exact"] = tv_exact_axis_aligned(b1, b2)
    return out


def row_contamination(sample: SampleSet, est: Parallelopiped, truth: Parallelopiped) -> dict:
    """Per-row analogues of the contamination and loss rates.

    ``eps_i``: active outliers inside the estimated slab ``i`` but outside the
    true slab ``i``, over ``n``.  ``eta_i``: active inliers outside the estimated
    slab ``i``, over ``n``.
    """
    x, lab = sample.view(), sample.view_labels()
    n = len(x)
    normals, lower, upper = aligned_truth(est, truth)
    p_est = x @ est.normals.T
    p_true = x @ normals.T
    in_est = (p_est >= est.lower) & (p_est <= est.upper)
    in_true = (p_true >= lower) & (p_true <= upper)
    out_mask = (lab == OUTLIER)[:, None]
    in_mask = (lab == INLIER)[:, None]
    return {"eps_i": (np.sum(in_est & ~in_true & out_mask, axis=0) / n).tolist(),
            "eta_i": (np.sum(~in_est & in_mask, axis=0) / n).tolist()}


def deletion_summary(sample: SampleSet, removed: np.ndarray) -> dict:
    """Composition of the points an estimator deleted (indices into ``sample.view()``)."""
    lab = sample.view_labels()
    removed = np.asarray(removed, dtype=int)
    n = len(lab)
    n_out = int(np.sum(lab == OUTLIER))
    hit = lab[removed]
    return {
        "deleted": int(len(removed)),
        "deleted_outliers": int(np.sum(hit == OUTLIER)),
        "deleted_inliers": int(np.sum(hit == INLIER)),
        "inlier_deleted_fraction": float(np.sum(hit == INLIER) / n) if n else 0.0,
        "outlier_recall": float(np.sum(hit == OUTLIER) / n_out) if n_out else None,
    }


def escape_summary(sample: SampleSet, est: Parallelopiped) -> dict:
    x, lab = sample.view(), sample.view_labels()
    inside = est.contains(x)
    n = len(x)
    return {
        "inside_fraction": float(inside.mean()),
        "inlier_escape_fraction": float(np.mean(~inside[lab == INLIER])) if np.any(lab == INLIER) else None,
        "outliers_inside": int(np.sum(inside & (lab == OUTLIER))),
        "outlier_fraction": float(np.sum(lab == OUTLIER) / n),
        "adversary_deleted": sample.count(DELETED),
    }


def evaluate(sample: SampleSet, est: Parallelopiped, truth: Parallelopiped, m: int, seed) -> dict:
    dr, ds = delta_r(est, truth), delta_s(est, truth)
    return {
        "tv": tv_summary(est, truth, m, seed),
        "column_error": float(dr.sum()),
        "delta_r": dr.tolist(),
        "delta_s": ds.tolist(),
        "offset_error": float(ds.sum()),
        "escape": escape_summary(sample, est),
        "rows": row_contamination(sample, est, truth),
    }
