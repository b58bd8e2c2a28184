"""Row-by-row recovery of a rotation of the standard cube.

For a current row estimate ``a`` the escape set ``S(a)`` collects the points
with ``x.a > 1`` together with the negations of the points with ``x.a < -1``.
Its robust mean points away from the true facet normal, so a normalized step
``a - beta * mean`` moves ``a`` toward it.  Before each step, the part of
``S(a)`` shared with the escape set of an already-finalized row is set aside
when it is too dense to be explained by independent coordinates; the removed
points come back before the next iteration.  Each row returns the iterate
with the fewest escaping points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Parallelopiped, SlabSet, slab_outside
from .robust_stats import FilterConfig, WarmStartReport, robust_mean, warm_start
from .samples import as_points


@dataclass
class RotationConfig:
    c1: float = 8.0
    c2: float = 1.0 / 32
    beta_max: float = 0.5
    iteration_cap: int = 5000
    threshold: float = 1.0
    min_slab_points: int = 50
    eps_local_cap: float = 0.24  # robust mean needs eps < 1/4
    patience: int | None = None  # stop a row after this many steps without a new best
    filter_opposite_sign: bool = True
    norm_cap: float | None = 2.0  # ignore points with ||x|| > norm_cap * sqrt(d); None keeps all
    mean_filter: FilterConfig = field(default_factory=FilterConfig)

    def iterations(self, d: int) -> int:
        theory = math.ceil(2**12 * d * math.log(d)) if d > 1 else 1
        return max(1, min(theory, self.iteration_cap))


@dataclass
class RowTrace:
    a: list[np.ndarray] = field(default_factory=list)  # a^0, a^1, ...
    escape: list[int] = field(default_factory=list)  # s^t for each a^t
    beta: list[float] = field(default_factory=list)
    slab_size: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    removed_indices: list[np.ndarray] = field(default_factory=list)
    status: str = "running"
    best_t: int = 0

    @property
    def best(self) -> np.ndarray:
        return self.a[self.best_t]


@dataclass
class RotationTrace:
    rows: list[RowTrace] = field(default_factory=list)
    warm: WarmStartReport | None = None
    flags: list[str] = field(default_factory=list)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _plausible(x: np.ndarray, cfg: RotationConfig) -> np.ndarray:
    """Points that can belong to a unit-offset cube: ``||x|| <= norm_cap sqrt(d)``."""
    if cfg.norm_cap is None:
        return np.ones(len(x), bool)
    return np.linalg.norm(x, axis=1) <= cfg.norm_cap * cfg.threshold * np.sqrt(x.shape[1])


def band_intersection_filter(s, a_current: np.ndarray, fixed_rows, c1: float,
                             threshold: float = 1.0, both_signs: bool = True) -> np.ndarray:
    """Indices of points in over-dense intersections of ``S(a_current)`` with ``S(b)``.

    ``both_signs`` also tests ``S(a) & S(-b)``; ``b`` and ``-b`` describe the
    same pair of facets.
    """
    x = as_points(s)
    n = len(x)
    sa = slab_outside(x, a_current, threshold)
    removed = []
    for b in fixed_rows:
        sb = slab_outside(x, b, threshold)
        if len(sa) == 0 or len(sb) == 0:
            continue
        pb = x[sa.indices] @ np.asarray(b, float) * sa.sign
        classes = [pb > threshold] + ([pb < -threshold] if both_signs else [])
        for cls in classes:
            if cls.sum() / n > 2 * c1 * len(sa) * len(sb) / n**2:
                removed.append(sa.indices[cls])
    return np.unique(np.concatenate(removed)) if removed else np.empty(0, int)


def _step(z: np.ndarray, n: int, a: np.ndarray, eps_local: float, cfg: RotationConfig):
    mu = robust_mean(z, eps_local, cfg.mean_filter).estimate
    norm2 = float(mu @ mu)
    if norm2 < 1e-18:
        return a, {"beta": 0.0, "mu": mu, "status": "degenerate"}
    beta = min(max(cfg.c2 * len(z) / (norm2 * n), 0.0), cfg.beta_max)
    return _unit(a - beta * mu), {"beta": beta, "mu": mu, "status": "step"}


def robust_gd_step(s, a: np.ndarray, threshold: float, eps_local: float,
                   cfg: RotationConfig | None = None, exclude=None) -> tuple[np.ndarray, dict]:
    """One robust gradient step on the escape set of ``a``.

    ``exclude`` lists point indices to leave out (the band filter's removals);
    ``n`` in the step size is the full sample size.
    """
    cfg = cfg or RotationConfig()
    x = as_points(s)
    a = np.asarray(a, float)
    slab = slab_outside(x, a, threshold)
    keep = _plausible(x[slab.indices], cfg)
    if exclude is not None and len(exclude):
        keep &= ~np.isin(slab.indices, exclude)
    slab = SlabSet(slab.indices[keep], slab.sign[keep])
    if len(slab) < max(cfg.min_slab_points, x.shape[1] + 1, 10):
        return a, {"beta": 0.0, "slab_size": len(slab), "status": "converged"}
    a_next, info = _step(slab.oriented(x), len(x), a, eps_local, cfg)
    info["slab_size"] = len(slab)
    return a_next, info


def improve_row(s, a0: np.ndarray, fixed_rows, eps: float,
                cfg: RotationConfig | None = None) -> tuple[np.ndarray, RowTrace]:
    """Iterate filter, step and escape count; return the iterate with fewest escapes."""
    cfg = cfg or RotationConfig()
    x = as_points(s)
    n, d = x.shape
    kept = np.flatnonzero(_plausible(x, cfg))
    x = x[kept]  # n stays the full sample size in the step and filter rules
    thr = cfg.threshold
    fixed = [np.asarray(b, float) for b in fixed_rows]
    fixed_proj = [x @ b for b in fixed]
    fixed_size = [int(np.sum(np.abs(p) > thr)) for p in fixed_proj]

    a = _unit(np.asarray(a0, float))
    p = x @ a
    trace = RowTrace(a=[a], escape=[int(np.sum(np.abs(p) > thr))])
    best_s, since_best = trace.escape[0], 0
    for _ in range(cfg.iterations(d)):
        idx = np.flatnonzero(np.abs(p) > thr)
        sign = np.where(p[idx] > 0, 1.0, -1.0)
        drop = np.zeros(len(idx), bool)
        for pb_full, sb in zip(fixed_proj, fixed_size):
            if sb == 0 or len(idx) == 0:
                continue
            pb = pb_full[idx] * sign
            classes = [pb > thr] + ([pb < -thr] if cfg.filter_opposite_sign else [])
            for cls in classes:
                if cls.sum() / n > 2 * cfg.c1 * len(idx) * sb / n**2:
                    drop |= cls
        use = idx[~drop]
        if len(use) < max(cfg.min_slab_points, d + 1, 10):
            trace.status = "converged"
            break
        eps_local = min(eps * n / len(use), cfg.eps_local_cap)
        z = x[use] * sign[~drop][:, None]
        a, info = _step(z, n, a, eps_local, cfg)
        if info["status"] == "degenerate":
            trace.status = "degenerate"
            break
        p = x @ a
        s_next = int(np.sum(np.abs(p) > thr))
        trace.a.append(a)
        trace.escape.append(s_next)
        trace.beta.append(info["beta"])
        trace.slab_size.append(len(use))
        trace.removed.append(int(drop.sum()))
        trace.removed_indices.append(kept[idx[drop]])
        if s_next < best_s:
            best_s, since_best = s_next, 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                trace.status = "patience"
                break
    else:
        trace.status = "cap"
    esc = np.asarray(trace.escape)
    trace.best_t = int(np.flatnonzero(esc == esc.min())[-1])
    return trace.best, trace


def estimate_rotation(s, eps: float, cfg: RotationConfig | None = None,
                      warm: WarmStartReport | None = None, seed=None) -> tuple[Parallelopiped, RotationTrace]:
    """Improve each warm-start row in turn against the rows already finalized."""
    cfg = cfg or RotationConfig()
    x = as_points(s)
    if warm is None:
        warm = warm_start(x, eps, "moment", seed=seed)
    trace = RotationTrace(warm=warm)
    rows: list[np.ndarray] = []
    for a0 in warm.normals:
        best, row = improve_row(x, a0, rows, eps, cfg)
        if row.status == "degenerate":
            trace.flags.append(f"row{len(rows)}_degenerate")
        trace.rows.append(row)
        rows.append(_unit(best))
    normals = np.array(rows)
    d = len(normals)
    return Parallelopiped(normals, -cfg.threshold * np.ones(d), cfg.threshold * np.ones(d)), trace
