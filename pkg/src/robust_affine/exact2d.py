"""Exact planar oracles: convex polygon clipping and polygon moments.

Used as ground truth for Monte Carlo quantities in two dimensions.  Nothing in
the estimators depends on this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Parallelopiped

SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def clip_halfplane(poly: np.ndarray, a: np.ndarray, t: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to ``{x : a.x >= t}``."""
    if len(poly) == 0:
        return poly
    out = []
    vals = poly @ a - t
    for k in range(len(poly)):
        p, q = poly[k], poly[(k + 1) % len(poly)]
        fp, fq = vals[k], vals[(k + 1) % len(poly)]
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            lam = fp / (fp - fq)
            out.append(p + lam * (q - p))
    return np.array(out).reshape(-1, 2)


def body_polygon(p: Parallelopiped) -> np.ndarray:
    """Vertices of a planar parallelogram (orientation follows the map)."""
    if p.d != 2:
        raise ValueError("body_polygon needs d = 2")
    return p.to_affine().apply(SQUARE)


def clip_to_body(poly: np.ndarray, p: Parallelopiped) -> np.ndarray:
    for a, lo, hi in zip(p.normals, p.lower, p.upper):
        poly = clip_halfplane(poly, a, lo)
        poly = clip_halfplane(poly, -a, -hi)
    return poly


@dataclass(frozen=True)
class PolygonMoments:
    area: float
    mean: np.ndarray
    cov: np.ndarray

    def along(self, u: np.ndarray) -> tuple[float, float]:
        u = np.asarray(u, dtype=float)
        return float(self.mean @ u), float(u @ self.cov @ u)


def polygon_moments(poly: np.ndarray) -> PolygonMoments:
    """Area, centroid and covariance of the uniform law on a simple polygon."""
    if len(poly) < 3:
        return PolygonMoments(0.0, np.full(2, np.nan), np.full((2, 2), np.nan))
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = cr.sum() / 2
    if area < 0:
        return polygon_moments(poly[::-1])
    if area == 0:
        return PolygonMoments(0.0, np.full(2, np.nan), np.full((2, 2), np.nan))
    sx = np.sum((x + xn) * cr) / 6
    sy = np.sum((y + yn) * cr) / 6
    sxx = np.sum((x * x + x * xn + xn * xn) * cr) / 12
    syy = np.sum((y * y + y * yn + yn * yn) * cr) / 12
    sxy = np.sum((x * yn + 2 * x * y + 2 * xn * yn + xn * y) * cr) / 24
    mean = np.array([sx, sy]) / area
    second = np.array([[sxx, sxy], [sxy, syy]]) / area
    return PolygonMoments(float(area), mean, second - np.outer(mean, mean))


def halfplane_region(a: np.ndarray, t: float) -> np.ndarray:
    """``[-1,1]^2 & {x.a >= t}``."""
    return clip_halfplane(SQUARE, np.asarray(a, dtype=float), t)


def escape_fraction(a: np.ndarray, t: float) -> float:
    """Exact mass of ``{|x.a| > t}`` under the uniform law on ``[-1,1]^2``."""
    return 2 * polygon_moments(halfplane_region(a, t)).area / 4.0


def slab_stats(a: np.ndarray, t: float, direction: np.ndarray) -> tuple[float, float]:
    """Exact mean and variance of ``(sign x).direction`` over the symmetrized escape set.

    ``-[-1,1]^2 = [-1,1]^2``, so the negated lower tail coincides with the upper
    tail and the symmetrized law is uniform on ``{x.a > t}``.
    """
    return polygon_moments(halfplane_region(a, t)).along(direction)


def truncated_mean(a: np.ndarray, t: float) -> float:
    """Exact ``E(x.a | x.a >= t)`` on ``[-1,1]^2``."""
    m = polygon_moments(halfplane_region(a, t))
    return m.along(a)[0]


def tv_exact_2d(p: Parallelopiped, q: Parallelopiped) -> float:
    """Exact total variation between uniform laws on two planar parallelograms."""
    inter = clip_to_body(body_polygon(p), q)
    area = polygon_moments(inter).area if len(inter) >= 3 else 0.0
    vol = max(np.exp(p.log_volume()), np.exp(q.log_volume()))
    return float(np.clip(1 - area / vol, 0.0, 1.0))
