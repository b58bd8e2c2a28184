"""Robust mean / covariance by spectral filtering, and the rotation warm start.

All entry points take a plain ``(n, d)`` array (``SampleSet.view()``); none of
them can see ground-truth labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Parallelopiped, unit_at_distance
from .samples import as_points

MAD_TO_SD = 1.4826
PRUNE_FACTOR = 10.0


@dataclass
class RobustMeanReport:
    estimate: np.ndarray
    removed_indices: np.ndarray
    filter_iterations: int
    final_top_eigenvalue: float
    flagged: bool = False


@dataclass
class WarmStartReport:
    normals: np.ndarray
    mode: str
    per_row_alignment: np.ndarray | None = None  # filled in by evaluation only
    converged: bool = True
    flagged: bool = False
    fourth_moments: np.ndarray | None = None


@dataclass
class FilterConfig:
    c_filter: float = 4.0
    cap_factor: float = 2.0  # removal cap is cap_factor * eps * n
    max_iterations: int = 500
    min_step_fraction: float = 1.0 / 50  # of eps * n_current


def _check_input(x: np.ndarray, eps: float) -> None:
    n, d = x.shape
    if n < max(d + 1, 10):
        raise ValueError(f"need at least max(d+1, 10) = {max(d + 1, 10)} points, got {n}")
    if not 0 <= eps < 0.25:
        raise ValueError("eps must lie in [0, 1/4)")


def _prune_far(x: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Mask of points within ``PRUNE_FACTOR`` median distances of ``center``."""
    dist = np.linalg.norm(x - center, axis=1)
    return dist <= PRUNE_FACTOR * np.median(dist)


def _robust_sd2(values: np.ndarray) -> float:
    mad = np.median(np.abs(values - np.median(values)))
    return float((MAD_TO_SD * mad) ** 2)


def _filter(features: np.ndarray, keep: np.ndarray, eps: float, cap: int, cfg: FilterConfig):
    """Iterative top-eigenvector filter over ``features`` restricted to ``keep``.

    Returns the final keep mask, iteration count, last top eigenvalue and
    whether the removal cap was hit.
    """
    keep = keep.copy()
    removed = int(np.sum(~keep))
    flagged = removed > cap
    lam = 0.0
    it = 0
    while it < cfg.max_iterations:
        idx = np.flatnonzero(keep)
        f = features[idx]
        mu = f.mean(axis=0)
        c = np.cov(f, rowvar=False, bias=True).reshape(f.shape[1], f.shape[1])
        vals, vecs = np.linalg.eigh(c)
        lam, v = float(vals[-1]), vecs[:, -1]
        proj = (f - mu) @ v
        thr = (1 + cfg.c_filter * math.sqrt(eps)) * _robust_sd2(proj)
        if lam <= thr or thr == 0.0 and lam == 0.0:
            break
        it += 1
        excess = min(1.0, (lam - thr) / thr) if thr > 0 else 1.0
        k = math.ceil(len(idx) * eps * max(excess / 2, cfg.min_step_fraction))
        if removed + k > cap:
            k = cap - removed
            flagged = True
        if k <= 0:
            break
        order = np.argsort(-(proj**2), kind="stable")[:k]
        keep[idx[order]] = False
        removed += k
    return keep, it, lam, flagged


def robust_mean(s, eps: float, cfg: FilterConfig | None = None) -> RobustMeanReport:
    """Filtered mean with error O(sqrt(eps)) ||Sigma||^{1/2} under bounded covariance.

    A coarse prune first drops points further than ten median distances from
    the coordinatewise median, which makes the result exactly independent of
    how far away distant outliers sit.  The spectral filter then removes the
    largest squared projections onto the top eigenvector while its eigenvalue
    exceeds ``(1 + c_filter sqrt(eps))`` times a MAD-based variance.
    """
    cfg = cfg or FilterConfig()
    x = as_points(s)
    _check_input(x, eps)
    n, d = x.shape
    if eps == 0:
        c = np.cov(x, rowvar=False, bias=True).reshape(d, d)
        return RobustMeanReport(x.mean(axis=0), np.empty(0, int), 0, float(np.linalg.eigvalsh(c)[-1]))
    cap = math.floor(cfg.cap_factor * eps * n)
    keep = _prune_far(x, np.median(x, axis=0))
    keep, it, lam, flagged = _filter(x, keep, eps, cap, cfg)
    return RobustMeanReport(x[keep].mean(axis=0), np.flatnonzero(~keep), it, lam, flagged)


def _quad_features(z: np.ndarray) -> np.ndarray:
    """Upper-triangular entries of ``z z^T`` with off-diagonals scaled by sqrt 2."""
    d = z.shape[1]
    iu = np.triu_indices(d)
    w = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return z[:, iu[0]] * z[:, iu[1]] * w


def inv_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= 0:
        raise ValueError("covariance is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def robust_covariance(s, eps: float, mean: np.ndarray | None = None,
                      cfg: FilterConfig | None = None) -> np.ndarray:
    """Filtered covariance about a robust mean.

    Filtering runs on the quadratic features of the data whitened by the
    current covariance, so a single direction of excess fourth moment is
    what triggers a removal.
    """
    cfg = cfg or FilterConfig()
    x = as_points(s)
    _check_input(x, eps)
    n, d = x.shape
    if eps == 0:
        out = np.cov(x, rowvar=False, bias=True).reshape(d, d)
    else:
        mu = robust_mean(x, eps, cfg).estimate if mean is None else np.asarray(mean, float)
        y = x - mu
        keep = _prune_far(x, mu)
        cap = math.floor(cfg.cap_factor * eps * n)
        feats = _quad_features(y @ inv_sqrt(_second_moment(y[keep])))
        keep, _, _, _ = _filter(feats, keep, eps, cap, cfg)
        out = _second_moment(y[keep])
    out = (out + out.T) / 2
    if np.linalg.eigvalsh(out)[0] <= 0:
        raise ValueError("filtered covariance is not positive definite")
    return out


def _second_moment(y: np.ndarray) -> np.ndarray:
    return y.T @ y / len(y)


# --------------------------------------------------------------------------- warm start

def fourth_moment(x: np.ndarray, u: np.ndarray) -> tuple[float, float]:
    """Empirical ``E (u.x)^4`` with its standard error."""
    p = (np.asarray(x) @ np.asarray(u, dtype=float)) ** 4
    return float(p.mean()), float(p.std() / math.sqrt(len(p)))


@dataclass
class WarmStartConfig:
    restarts: int = 3
    max_iterations: int = 200
    tol: float = 1e-10
    max_points: int = 200_000
    trim_factor: float = 2.0


def _fixed_point(y: np.ndarray, found: list[np.ndarray], rng, cfg: WarmStartConfig):
    d = y.shape[1]
    w = rng.standard_normal(d)
    basis = np.array(found) if found else np.empty((0, d))

    def deflate(v):
        v = v - basis.T @ (basis @ v) if len(basis) else v
        return v / np.linalg.norm(v)

    w = deflate(w)
    for it in range(cfg.max_iterations):
        p = y @ w
        w_new = deflate(y.T @ p**3 / len(y) - 3 * w)
        if abs(abs(w_new @ w) - 1) < cfg.tol:
            return w_new, True
        w = w_new
    return w, False


def warm_start(s, eps: float, mode: str = "moment", oracle_truth: Parallelopiped | None = None,
               oracle_delta: float | None = None, seed=None,
               cfg: WarmStartConfig | None = None) -> WarmStartReport:
    """Constant-accuracy estimate of the facet normals.

    ``moment`` mode whitens with the robust mean and covariance, trims the
    ``2 eps`` fraction of largest norms, and runs a kurtosis fixed point with
    Gram-Schmidt deflation, keeping the restart of lowest fourth moment (the
    cube's coordinate directions are the minima of the fourth moment in the
    whitened frame).  ``oracle`` mode rotates each true normal by exactly
    ``oracle_delta`` in a random direction.
    """
    cfg = cfg or WarmStartConfig()
    rng = np.random.default_rng(seed)
    if mode == "oracle":
        if oracle_truth is None or oracle_delta is None:
            raise ValueError("oracle mode needs oracle_truth and oracle_delta")
        rows = np.array([unit_at_distance(a, oracle_delta, rng) for a in oracle_truth.normals])
        return WarmStartReport(rows, "oracle")
    if mode != "moment":
        raise ValueError(f"unknown warm start mode {mode!r}")

    x = as_points(s)
    if len(x) > cfg.max_points:
        x = x[np.sort(rng.choice(len(x), cfg.max_points, replace=False))]
    mu = robust_mean(x, eps).estimate
    try:
        w_half = inv_sqrt(robust_covariance(x, eps, mean=mu))
    except ValueError as exc:
        raise ValueError(f"whitening failed: {exc}") from exc
    y = (x - mu) @ w_half
    if eps > 0:
        norms = np.linalg.norm(y, axis=1)
        y = y[norms <= np.quantile(norms, 1 - min(cfg.trim_factor * eps, 0.5))]
    d = y.shape[1]
    found: list[np.ndarray] = []
    moments = []
    converged = True
    for _ in range(d):
        best = None
        for _ in range(cfg.restarts):
            w, ok = _fixed_point(y, found, rng, cfg)
            m4 = float(np.mean((y @ w) ** 4))
            if best is None or m4 < best[1]:
                best = (w, m4, ok)
        found.append(best[0])
        moments.append(best[1])
        converged &= best[2]
    normals = np.array(found) @ w_half  # functional w.(W(x - mu)) has normal W w
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return WarmStartReport(normals, "moment", converged=converged, flagged=not converged,
                           fourth_moments=np.array(moments))
