"""Robust recovery of an axis-aligned box (shift plus diagonal scaling).

Range finding gives a box that contains the truth and is at most a constant
factor too large.  Density certificates then drive it inward:

* one-dimensional: the slab of relative depth ``k eps / d`` against each face
  must hold at least ``k eps n / (2 d)`` points, otherwise that face moves in
  by ``k eps / d`` of the current side;
* two-dimensional: the intersection of two such slabs on different
  coordinates may hold at most ``10 k1 k2 eps^2 n / d^2`` points, otherwise
  the points of that intersection are deleted.

Counts only use active points inside the current box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AxisBox
from .samples import as_points


@dataclass
class ShiftScaleConfig:
    eps_min: float = 1e-3
    eps_max: float = 0.2
    n_min_factor: float = 50.0  # n_min = n_min_factor * d^2 / eps^2
    enforce_n_min: bool = False
    iteration_cap_factor: float = 10.0  # cap = factor * d^2 / eps boundary updates
    deletion_cap_factor: float = 2.0  # at most factor * eps * n deletions
    expansion: float = 4.0
    one_d_factor: float = 0.5  # slab must hold >= one_d_factor * k eps n / d
    two_d_factor: float = 10.0  # intersection may hold <= two_d_factor * k1 k2 eps^2 n / d^2

    def n_min(self, d: int, eps: float) -> int:
        return math.ceil(self.n_min_factor * d * d / (eps * eps))


@dataclass
class ShiftScaleState:
    box: AxisBox
    active: np.ndarray
    n_original: int
    eps: float
    iteration: int = 0
    deletions: list[dict] = field(default_factory=list)
    updates: list[dict] = field(default_factory=list)
    history: list[AxisBox] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    initial_box: AxisBox | None = None

    @property
    def deleted_indices(self) -> np.ndarray:
        if not self.deletions:
            return np.empty(0, int)
        return np.concatenate([np.asarray(r["indices"], int) for r in self.deletions])

    @property
    def n_deleted(self) -> int:
        return sum(len(r["indices"]) for r in self.deletions)

    @property
    def failed(self) -> bool:
        return any(f in ("iteration_cap", "deletion_cap") for f in self.flags)


def robust_range_find(s, eps: float, expansion: float = 4.0) -> AxisBox:
    """Shortest window of ``ceil((1/2 + eps) n)`` order statistics per coordinate,
    expanded about its own center by ``expansion``."""
    x = as_points(s)
    n, d = x.shape
    m = math.ceil((0.5 + eps) * n)
    if m < 2 or m > n:
        raise ValueError(f"window of {m} points does not fit in a sample of {n}")
    xs = np.sort(x, axis=0)
    widths = xs[m - 1:] - xs[: n - m + 1]
    start = np.argmin(widths, axis=0)  # first minimum: ties go to the smallest start
    cols = np.arange(d)
    lo, hi = xs[start, cols], xs[start + m - 1, cols]
    if np.any(hi <= lo):
        raise ValueError("degenerate coordinate: minimum window has zero length")
    center, half = (lo + hi) / 2, (hi - lo) / 2
    return AxisBox(center - expansion * half, center + expansion * half)


def _inside(x: np.ndarray, active: np.ndarray, box: AxisBox) -> np.ndarray:
    return active & np.all((x >= box.lower) & (x <= box.upper), axis=1)


def _levels(col: np.ndarray, box: AxisBox, i: int, eps: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``k`` with the point in the upper / lower slab of depth ``k eps / d``
    (``d + 1`` when it lies in none)."""
    side = box.upper[i] - box.lower[i]
    ks = np.arange(1, d + 1)
    up_cut = box.upper[i] - ks * eps * side / d
    lo_cut = box.lower[i] + ks * eps * side / d
    # number of cuts with x >= up_cut (resp. x <= lo_cut); cuts are monotone in k
    up = d + 1 - np.searchsorted(up_cut[::-1], col, side="right")
    lo = 1 + np.searchsorted(lo_cut, col, side="left")
    return up, lo


def _slab_counts(level: np.ndarray, d: int) -> np.ndarray:
    """``counts[k-1] = #{level <= k}`` for ``k = 1..d``."""
    return np.cumsum(np.bincount(level, minlength=d + 2)[1 : d + 1])


def one_d_threshold(k: int, eps: float, d: int, n: int, cfg: ShiftScaleConfig | None = None) -> float:
    f = (cfg or ShiftScaleConfig()).one_d_factor
    return f * k * eps * n / d


def two_d_threshold(k1: int, k2: int, eps: float, d: int, n: int, cfg: ShiftScaleConfig | None = None) -> float:
    f = (cfg or ShiftScaleConfig()).two_d_factor
    return f * k1 * k2 * eps * eps * n / (d * d)


def one_d_density_check(s, state: ShiftScaleState, i: int, k: int,
                        cfg: ShiftScaleConfig | None = None) -> tuple[bool, bool]:
    """``(upper passes, lower passes)`` for coordinate ``i`` at grid index ``k``."""
    x = as_points(s)
    d = x.shape[1]
    if not 1 <= k <= d:
        raise ValueError("grid index k must lie in 1..d")
    col = x[_inside(x, state.active, state.box), i]
    up, lo = _levels(col, state.box, i, state.eps, d)
    thr = one_d_threshold(k, state.eps, d, state.n_original, cfg)
    return bool(np.sum(up <= k) >= thr), bool(np.sum(lo <= k) >= thr)


def _pair_counts(up_i, lo_i, up_j, lo_j, d):
    """Cumulative intersection counts for the four sign combinations."""
    out = {}
    for si, li in ((1, up_i), (-1, lo_i)):
        for sj, lj in ((1, up_j), (-1, lo_j)):
            h = np.zeros((d + 2, d + 2), int)
            np.add.at(h, (li, lj), 1)
            out[(si, sj)] = np.cumsum(np.cumsum(h[1 : d + 1, 1 : d + 1], axis=0), axis=1)
    return out


def two_d_density_check(s, state: ShiftScaleState, i: int, j: int, k1: int, k2: int,
                        cfg: ShiftScaleConfig | None = None) -> tuple[bool, list[dict]]:
    """Check all four sign combinations of the ``(i, k1) x (j, k2)`` slab intersection.

    Returns whether every combination passes and, for the failing ones, the
    indices (into ``s``) of the points in the intersection.
    """
    if i == j:
        raise ValueError("two-dimensional check needs i != j")
    x = as_points(s)
    d = x.shape[1]
    rows = np.flatnonzero(_inside(x, state.active, state.box))
    up_i, lo_i = _levels(x[rows, i], state.box, i, state.eps, d)
    up_j, lo_j = _levels(x[rows, j], state.box, j, state.eps, d)
    thr = two_d_threshold(k1, k2, state.eps, d, state.n_original, cfg)
    bad = []
    for si, li in ((1, up_i), (-1, lo_i)):
        for sj, lj in ((1, up_j), (-1, lo_j)):
            hit = (li <= k1) & (lj <= k2)
            if hit.sum() > thr:
                bad.append({"i": i, "j": j, "k1": k1, "k2": k2, "sign_i": si, "sign_j": sj,
                            "indices": rows[hit]})
    return not bad, bad


def _shrink(box: AxisBox, i: int, side: int, k: int, eps: float, d: int) -> AxisBox:
    lo, hi = box.lower.copy(), box.upper.copy()
    step = k * eps / d * (hi[i] - lo[i])
    if side > 0:
        hi[i] -= step
    else:
        lo[i] += step
    return AxisBox(lo, hi)


def estimate_shift_scale(s, eps: float, cfg: ShiftScaleConfig | None = None,
                         init_box: AxisBox | None = None) -> tuple[AxisBox, ShiftScaleState]:
    """Certificate-driven box estimate from an eps-corrupted sample.

    One-dimensional failures are applied in batches: every failing face moves
    in by its largest failing ``k``.  A failing one-dimensional check keeps
    failing when other faces move (counts only drop and its own cut points are
    unchanged), so a batch is the same as applying the updates one at a time.
    Two-dimensional checks run once all one-dimensional checks pass; the
    intersection with the largest count-to-threshold ratio is deleted.
    """
    cfg = cfg or ShiftScaleConfig()
    x = as_points(s)
    n, d = x.shape
    if not cfg.eps_min <= eps <= cfg.eps_max:
        raise ValueError(f"eps must lie in [{cfg.eps_min}, {cfg.eps_max}]")
    box = init_box if init_box is not None else robust_range_find(x, eps, cfg.expansion)
    state = ShiftScaleState(box, np.ones(n, bool), n, eps, initial_box=box, history=[box])
    if n < cfg.n_min(d, eps):
        if cfg.enforce_n_min:
            raise ValueError(f"n = {n} is below n_min = {cfg.n_min(d, eps)}")
        state.flags.append("below_n_min")
    cap_updates = math.ceil(cfg.iteration_cap_factor * d * d / eps)
    cap_deletions = math.floor(cfg.deletion_cap_factor * eps * n)
    ks = np.arange(1, d + 1)
    thr1 = cfg.one_d_factor * ks * eps * n / d
    thr2 = cfg.two_d_factor * np.outer(ks, ks) * eps * eps * n / (d * d)

    while True:
        rows = np.flatnonzero(_inside(x, state.active, state.box))
        levels = [_levels(x[rows, i], state.box, i, eps, d) for i in range(d)]
        moved = False
        for i in range(d):
            for side, lev in ((1, levels[i][0]), (-1, levels[i][1])):
                failing = np.flatnonzero(_slab_counts(lev, d) < thr1)
                if failing.size == 0:
                    continue
                if state.iteration >= cap_updates:
                    state.flags.append("iteration_cap")
                    return state.box, state
                k = int(failing[-1]) + 1
                old = state.box.upper[i] - state.box.lower[i]
                state.box = _shrink(state.box, i, side, k, eps, d)
                state.iteration += 1
                state.updates.append({"i": i, "side": side, "k": k, "old_side": float(old),
                                      "new_side": float(state.box.upper[i] - state.box.lower[i])})
                state.history.append(state.box)
                moved = True
        if moved:
            continue

        worst = None
        for i in range(d):
            for j in range(i + 1, d):
                counts = _pair_counts(*levels[i], *levels[j], d)
                for (si, sj), c in counts.items():
                    ratio = c / thr2
                    k1, k2 = np.unravel_index(np.argmax(ratio), ratio.shape)
                    if ratio[k1, k2] > 1 and (worst is None or ratio[k1, k2] > worst[0]):
                        worst = (float(ratio[k1, k2]), i, j, int(k1) + 1, int(k2) + 1, si, sj)
        if worst is None:
            return state.box, state
        _, i, j, k1, k2, si, sj = worst
        li = levels[i][0] if si > 0 else levels[i][1]
        lj = levels[j][0] if sj > 0 else levels[j][1]
        victims = rows[(li <= k1) & (lj <= k2)]
        if state.n_deleted + len(victims) > cap_deletions:
            state.flags.append("deletion_cap")
            return state.box, state
        state.active[victims] = False
        state.deletions.append({"i": i, "j": j, "k1": k1, "k2": k2, "sign_i": si, "sign_j": sj,
                                "indices": victims})


def all_checks_pass(s, state: ShiftScaleState, cfg: ShiftScaleConfig | None = None) -> bool:
    cfg = cfg or ShiftScaleConfig()
    x = as_points(s)
    d = x.shape[1]
    for i in range(d):
        for k in range(1, d + 1):
            if not all(one_d_density_check(x, state, i, k, cfg)):
                return False
    for i in range(d):
        for j in range(i + 1, d):
            for k1 in range(1, d + 1):
                for k2 in range(1, d + 1):
                    if not two_d_density_check(x, state, i, j, k1, k2, cfg)[0]:
                        return False
    return True
