"""Cube and parallelopiped primitives.

Bodies are stored in facet form ``{x : lower <= N x <= upper}`` with unit rows
in ``N``.  Every body is also the image of the standard cube ``[-1, 1]^d``
under an affine map, which is how uniform samples are drawn from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .samples import INLIER, SampleSet, as_points

UNIT_TOL = 1e-12
MEMBERSHIP_RTOL = 1e-9
EXACT_MATCH_MAX_D = 12


@dataclass(frozen=True)
class AffineMap:
    """``x -> matrix @ x + shift``."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        b = np.array(self.shift, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or b.shape != (m.shape[0],):
            raise ValueError("matrix must be d x d and shift length d")
        if not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) == 0.0:
            raise ValueError("affine map must be invertible")
        if np.linalg.cond(m) > 1e12:
            raise ValueError("affine map is numerically singular")
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", b)

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d), np.zeros(d))

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T + self.shift

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.shift)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self(inner(x))``."""
        return AffineMap(self.matrix @ inner.matrix, self.matrix @ inner.shift + self.shift)


@dataclass(frozen=True)
class AxisBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper must have the same nonzero length")
        if not np.all(lo < hi):
            raise ValueError("AxisBox needs lower[i] < upper[i] for every i")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    def log_volume(self) -> float:
        return float(np.sum(np.log(self.sides)))

    def contains(self, x: np.ndarray, rtol: float = MEMBERSHIP_RTOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        tol = rtol * np.maximum(1.0, np.maximum(np.abs(self.lower), np.abs(self.upper)))
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=1)

    def to_parallelopiped(self) -> "Parallelopiped":
        return Parallelopiped(np.eye(self.d), self.lower, self.upper)


@dataclass(frozen=True)
class Parallelopiped:
    """``{x : lower[i] <= normals[i] . x <= upper[i]}`` with unit-norm rows."""

    normals: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    max_condition: float = 1e10

    def __post_init__(self):
        n = np.array(self.normals, dtype=float)
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if n.ndim != 2 or n.shape[0] != n.shape[1] or lo.shape != (n.shape[0],) or hi.shape != lo.shape:
            raise ValueError("normals must be d x d with d lower and d upper offsets")
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("parallelopiped parameters must be finite")
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > UNIT_TOL):
            raise ValueError("facet normals must have unit norm")
        if np.linalg.cond(n) > self.max_condition:
            raise ValueError("facet normals are not linearly independent")
        if not np.all(lo < hi):
            raise ValueError("lower[i] < upper[i] required")
        for arr in (n, lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_rows(cls, rows, lower, upper) -> "Parallelopiped":
        """Normalize arbitrary nonzero rows, rescaling the offsets to match."""
        rows = np.asarray(rows, dtype=float)
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero facet normal")
        return cls(rows / norms[:, None], np.asarray(lower) / norms, np.asarray(upper) / norms)

    @classmethod
    def from_affine(cls, amap: AffineMap) -> "Parallelopiped":
        """Image of the standard cube under ``amap``."""
        raw = np.linalg.inv(amap.matrix)
        c = raw @ amap.shift
        return cls.from_rows(raw, c - 1.0, c + 1.0)

    @classmethod
    def standard(cls, d: int) -> "Parallelopiped":
        return cls(np.eye(d), -np.ones(d), np.ones(d))

    @property
    def d(self) -> int:
        return self.normals.shape[0]

    def to_affine(self) -> AffineMap:
        center = (self.lower + self.upper) / 2
        half = (self.upper - self.lower) / 2
        inv = np.linalg.inv(self.normals)
        return AffineMap(inv * half[None, :], inv @ center)

    def log_volume(self) -> float:
        _, logdet = np.linalg.slogdet(self.normals)
        return float(np.sum(np.log(self.upper - self.lower)) - logdet)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.normals.T

    def contains(self, x: np.ndarray, rtol: float = MEMBERSHIP_RTOL) -> np.ndarray:
        p = self.project(x)
        tol = rtol * np.maximum(1.0, np.maximum(np.abs(self.lower), np.abs(self.upper)))
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=1)

    def inside_fraction(self, x: np.ndarray) -> float:
        x = np.asarray(x)
        return float(np.mean(self.contains(x))) if len(x) else 0.0

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        return self.to_affine().apply(rng.uniform(-1.0, 1.0, size=(m, self.d)))

    def to_dict(self) -> dict:
        return {"normals": self.normals.tolist(), "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Parallelopiped":
        return cls.from_rows(obj["normals"], obj["lower"], obj["upper"])


@dataclass(frozen=True)
class SlabSet:
    """Indices of points escaping a slab; ``sign=-1`` rows stand for ``-x``."""

    indices: np.ndarray
    sign: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def oriented(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.indices] * self.sign[:, None]


# --------------------------------------------------------------------------- sampling

def sample_standard_cube(d: int, n: int, seed) -> SampleSet:
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, size=(n, d))
    return SampleSet(pts, np.ones(n, bool), np.full(n, INLIER, np.int8))


def apply_affine(amap: AffineMap, s: SampleSet) -> SampleSet:
    if amap.d != s.d:
        raise ValueError(f"map dimension {amap.d} does not match sample dimension {s.d}")
    return SampleSet(amap.apply(s.points), s.active.copy(), s.truth_label.copy(), dict(s.meta))


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def unit_at_distance(target: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """A unit vector at Euclidean distance ``delta`` from the unit vector ``target``."""
    target = np.asarray(target, dtype=float)
    if not 0 <= delta <= 2:
        raise ValueError("delta must lie in [0, 2]")
    u = rng.standard_normal(target.size)
    u -= (u @ target) * target
    u /= np.linalg.norm(u)
    theta = 2 * np.arcsin(delta / 2)
    v = np.cos(theta) * target + np.sin(theta) * u
    return v / np.linalg.norm(v)


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))[None, :]
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_affine_map(d: int, rng: np.random.Generator, max_condition: float = 5.0,
                      shift_scale: float = 1.0) -> AffineMap:
    """Random ``U diag(s) V^T`` with singular values in ``[1, max_condition]``."""
    s = np.exp(rng.uniform(0.0, np.log(max_condition), size=d))
    s[0], s[-1] = 1.0, max_condition if d > 1 else 1.0
    m = random_rotation(d, rng) @ np.diag(s) @ random_rotation(d, rng).T
    return AffineMap(m, shift_scale * rng.standard_normal(d))


# --------------------------------------------------------------------------- slabs

def _check_unit(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return a


def _active_points(s) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(s, SampleSet):
        rows = s.active_rows()
        return s.points[rows], rows
    x = as_points(s)
    return x, np.arange(len(x))


def slab_outside(s, a: np.ndarray, threshold: float) -> SlabSet:
    """Points with ``x.a > threshold`` (sign +1) and ``x.a < -threshold`` (sign -1)."""
    a = _check_unit(a)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    x, rows = _active_points(s)
    p = x @ a
    hit = np.abs(p) > threshold
    return SlabSet(rows[hit], np.where(p[hit] > 0, 1, -1).astype(np.int8))


def truncated_direction_stats(s, slab: SlabSet, direction: np.ndarray) -> tuple[float, float]:
    if len(slab) == 0:
        raise ValueError("empty slab")
    pts = s.points if isinstance(s, SampleSet) else as_points(s)
    z = slab.oriented(pts) @ np.asarray(direction, dtype=float)
    return float(np.mean(z)), float(np.var(z))


def truncated_mean_along(s, a: np.ndarray, t: float) -> float:
    """Empirical ``E(x.a | x.a >= t)``."""
    x, _ = _active_points(s)
    p = x @ np.asarray(a, dtype=float)
    p = p[p >= t]
    if p.size == 0:
        raise ValueError("no active point satisfies x.a >= t")
    return float(np.mean(p))


# --------------------------------------------------------------------------- distances

def tv_exact_axis_aligned(h1: AxisBox, h2: AxisBox) -> float:
    """``1 - vol(h1 & h2) / max(vol h1, vol h2)`` evaluated in log space."""
    if h1.d != h2.d:
        raise ValueError("dimension mismatch")
    overlap = np.minimum(h1.upper, h2.upper) - np.maximum(h1.lower, h2.lower)
    if np.any(overlap <= 0):
        return 1.0
    log_ratio = np.sum(np.log(overlap)) - max(h1.log_volume(), h2.log_volume())
    return float(np.clip(-np.expm1(log_ratio), 0.0, 1.0))


def _body_key(p: Parallelopiped) -> bytes:
    return p.normals.tobytes() + p.lower.tobytes() + p.upper.tobytes()


def tv_monte_carlo(p: Parallelopiped, q: Parallelopiped, m: int, seed) -> tuple[float, float]:
    """Monte Carlo total variation between uniform laws on two bodies.

    The intersection volume is estimated twice, once from ``m`` points of each
    body, and the two estimates are pooled with weights inverse to their
    variance scale.  Both escape fractions are then read off the pooled value,
    so the larger one is ``1 - vol(p & q) / max(vol p, vol q)``.  Bodies are put
    in a canonical order before sampling, which makes the result exactly
    symmetric in its arguments.
    """
    if p.d != q.d:
        raise ValueError("dimension mismatch")
    if m < 1:
        raise ValueError("m must be positive")
    if _body_key(q) < _body_key(p):
        p, q = q, p
    rng = np.random.default_rng(seed)
    xp = p.sample(m, rng)
    xq = q.sample(m, rng)
    fp = float(np.mean(q.contains(xp)))
    fq = float(np.mean(p.contains(xq)))
    lp, lq = p.log_volume(), q.log_volume()
    top = max(lp, lq)
    rp, rq = np.exp(lp - top), np.exp(lq - top)
    wp = rq**2 / (rp**2 + rq**2)
    wq = rp**2 / (rp**2 + rq**2)
    inter = wp * rp * fp + wq * rq * fq
    var = (wp * rp) ** 2 * fp * (1 - fp) / m + (wq * rq) ** 2 * fq * (1 - fq) / m
    return float(np.clip(1.0 - inter, 0.0, 1.0)), float(np.sqrt(var))


def match_rows(est: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Match rows of ``est`` to rows of ``truth`` up to permutation and sign.

    Returns ``(perm, signs, dist)`` with ``est[i] ~ signs[i] * truth[perm[i]]``.
    Exact assignment up to ``d = 12``, greedy largest-|inner product| above.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError("dimension mismatch")
    d = est.shape[0]
    plus = np.linalg.norm(est[:, None, :] - truth[None, :, :], axis=2)
    minus = np.linalg.norm(est[:, None, :] + truth[None, :, :], axis=2)
    cost = np.minimum(plus, minus)
    if d <= EXACT_MATCH_MAX_D:
        _, perm = linear_sum_assignment(cost)
    else:
        perm = np.full(d, -1)
        inner = np.abs(est @ truth.T)
        for _ in range(d):
            i, j = np.unravel_index(np.argmax(inner), inner.shape)
            perm[i] = j
            inner[i, :] = -1
            inner[:, j] = -1
    rows = np.arange(d)
    signs = np.where(plus[rows, perm] <= minus[rows, perm], 1.0, -1.0)
    return perm, signs, cost[rows, perm]


def column_error(est: Parallelopiped, truth: Parallelopiped) -> float:
    """Sum of row distances after the best permutation / sign matching."""
    if est.d != truth.d:
        raise ValueError("dimension mismatch")
    _, _, dist = match_rows(est.normals, truth.normals)
    return float(np.sum(dist))
