"""Replacement-style epsilon corruption with pluggable adversaries.

Every strategy deletes ``ceil(eps * n)`` clean points and (except
``delete_only``) inserts the same number of adversarial points.  Deleted rows
stay in the output as inactive rows labeled ``DELETED`` so that evaluation can
account for them; estimators only ever see the active rows.

Adversary geometry is described in the cube frame of the target body, i.e. in
coordinates ``s`` where the body is ``[-1, 1]^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .geometry import AxisBox, Parallelopiped
from .samples import DELETED, INLIER, OUTLIER, SampleSet

ADVERSARIES = ("none", "corner_shift", "facet_cluster", "band_intersection", "far_uniform", "delete_only")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "none": {},
    "corner_shift": {"gap": 0.02, "spread": 0.02},
    "facet_cluster": {"facet": 0, "side": 1, "offset": 0.05, "spread": 0.05},
    "band_intersection": {"multiplier": 1.5, "placement": "inside", "width": 0.1},
    "far_uniform": {"radius": 100.0},
    "delete_only": {"facet": 0, "side": 1},
}


@dataclass
class CorruptionSpec:
    epsilon: float
    adversary: str = "corner_shift"
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.adversary not in ADVERSARIES:
            raise ValueError(f"unknown adversary {self.adversary!r}; choose from {ADVERSARIES}")
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must lie in [0, 0.5)")
        if self.adversary == "none" and self.epsilon != 0:
            raise ValueError("adversary 'none' requires epsilon = 0")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.adversary])
        if unknown:
            raise ValueError(f"unknown parameters for {self.adversary}: {sorted(unknown)}")

    def resolved_params(self) -> dict[str, Any]:
        return {**DEFAULT_PARAMS[self.adversary], **self.params}

    def count(self, n: int) -> int:
        return corruption_count(self.epsilon, n)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "adversary": self.adversary,
                "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, obj: dict) -> "CorruptionSpec":
        return cls(float(obj["epsilon"]), obj.get("adversary", "corner_shift"),
                   dict(obj.get("params", {})), int(obj.get("seed", 0)))


def corruption_count(eps: float, n: int) -> int:
    # the small offset keeps e.g. 0.05 * 200000 from rounding up to 10001
    return int(math.ceil(eps * n - 1e-9))


def bounding_box(points: np.ndarray) -> Parallelopiped:
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
    return AxisBox(lo - pad, hi + pad).to_parallelopiped()


# --------------------------------------------------------------------------- strategies
# Each returns (outlier points, meta).  Points are in the cube frame except for
# far_uniform, which works directly in x-space.

def _corner_shift(x, body, k, prm, rng):
    if prm["gap"] <= 0 or prm["spread"] < 0:
        raise ValueError("corner_shift needs gap > 0 and spread >= 0")
    t = rng.uniform(prm["gap"], prm["gap"] + prm["spread"], size=k)
    s = (1.0 + t)[:, None] * np.ones((1, body.d))
    return s, {"corner": [1.0] * body.d}


def _facet_cluster(x, body, k, prm, rng):
    facet, side = int(prm["facet"]), int(prm["side"])
    if not 0 <= facet < body.d or side not in (-1, 1):
        raise ValueError("facet_cluster needs 0 <= facet < d and side in {-1, 1}")
    if prm["offset"] <= 0 or prm["spread"] < 0:
        raise ValueError("facet_cluster cluster must sit outside the body: offset > 0")
    s = rng.uniform(-1.0, 1.0, size=(k, body.d))
    s[:, facet] = side * (1.0 + prm["offset"] + rng.uniform(0.0, prm["spread"], size=k))
    return s, {"facet": facet, "side": side}


def band_cells(d: int, eps: float) -> list[tuple[int, int, int, int, int, int]]:
    """Target cells ``(i, j, k1, k2, sign_i, sign_j)`` ordered from smallest."""
    cells = []
    ks = sorted(((k1, k2) for k1 in range(1, d + 1) for k2 in range(1, d + 1)),
                key=lambda kk: (kk[0] * kk[1], kk))
    for k1, k2 in ks:
        for i in range(d):
            for j in range(i + 1, d):
                for si in (1, -1):
                    for sj in (1, -1):
                        cells.append((i, j, k1, k2, si, sj))
    return cells


def _band_intersection(x, body, k, prm, rng, n, eps):
    d = body.d
    if d < 2:
        raise ValueError("band_intersection needs d >= 2")
    mult = float(prm["multiplier"])
    placement = prm["placement"]
    if mult <= 0 or placement not in ("inside", "outside"):
        raise ValueError("band_intersection needs multiplier > 0 and placement inside|outside")
    owner = np.empty(k, int)
    targeted = []
    used = 0
    for (i, j, k1, k2, si, sj) in band_cells(d, eps):
        if used >= k:
            break
        m = min(k - used, math.ceil(mult * 10 * k1 * k2 * eps**2 / d**2 * n))
        owner[used:used + m] = len(targeted)
        targeted.append({"i": i, "j": j, "k1": k1, "k2": k2, "sign_i": si, "sign_j": sj, "count": m})
        used += m
    if used < k:
        # budget left after every cell got its share: deal the rest round robin
        extra = np.arange(k - used) % len(targeted)
        owner[used:] = extra
        for c in extra:
            targeted[c]["count"] += 1
    s = rng.uniform(-1.0, 1.0, size=(k, d))
    for c, cell in enumerate(targeted):
        rows = np.flatnonzero(owner == c)
        for axis, kk, sign in ((cell["i"], cell["k1"], cell["sign_i"]), (cell["j"], cell["k2"], cell["sign_j"])):
            if placement == "inside":
                # slab of relative depth k eps / d of a side of length 2
                depth = rng.uniform(1 - 2 * kk * eps / d, 1.0, size=len(rows))
            else:
                depth = rng.uniform(1.0, 1.0 + prm["width"], size=len(rows))
            s[rows, axis] = sign * depth
    return s, {"cells": targeted}


def _far_uniform(x, body, k, prm, rng):
    radius = float(prm["radius"])
    amap = body.to_affine()
    center = amap.shift
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * body.d)).reshape(body.d, -1).T if body.d <= 12 else None
    reach = (np.max(np.linalg.norm(amap.apply(corners) - center, axis=1)) if corners is not None
             else float(np.sum(np.linalg.norm(amap.matrix, axis=0))))
    if radius <= reach:
        raise ValueError(f"far_uniform radius {radius} does not clear the body (circumradius {reach:.4g})")
    u = rng.standard_normal((k, body.d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return center + radius * u, {"radius": radius}


def corrupt(clean: SampleSet, spec: CorruptionSpec, body: Parallelopiped | None = None) -> SampleSet:
    """Replace ``ceil(eps n)`` active clean points by adversarial ones.

    ``body`` is the support the adversary targets (the true parallelopiped);
    when omitted the bounding box of the clean sample is used.
    """
    rows = clean.active_rows()
    x = clean.points[rows]
    n = len(rows)
    k = spec.count(n)
    if k > n / 2:
        raise ValueError("epsilon * n exceeds n / 2")
    if body is None:
        body = bounding_box(x)
    if body.d != clean.d:
        raise ValueError("body dimension does not match sample dimension")
    prm = spec.resolved_params()
    rng = np.random.default_rng(spec.seed)

    meta: dict[str, Any] = {}
    new_s = new_x = None
    if spec.adversary == "delete_only":
        facet, side = int(prm["facet"]), int(prm["side"])
        if not 0 <= facet < clean.d or side not in (-1, 1):
            raise ValueError("delete_only needs 0 <= facet < d and side in {-1, 1}")
        score = side * (x @ body.normals[facet])
        drop = np.argsort(-score, kind="stable")[:k]
    else:
        drop = rng.choice(n, size=k, replace=False) if k else np.empty(0, int)
        if spec.adversary == "corner_shift":
            new_s, meta = _corner_shift(x, body, k, prm, rng)
        elif spec.adversary == "facet_cluster":
            new_s, meta = _facet_cluster(x, body, k, prm, rng)
        elif spec.adversary == "band_intersection":
            new_s, meta = _band_intersection(x, body, k, prm, rng, n, spec.epsilon)
        elif spec.adversary == "far_uniform":
            new_x, meta = _far_uniform(x, body, k, prm, rng)
    if new_s is not None:
        new_x = body.to_affine().apply(new_s)
    if new_x is None:
        new_x = np.empty((0, clean.d))

    keep_mask = np.ones(n, bool)
    keep_mask[drop] = False
    pieces = [
        (x[keep_mask], True, INLIER),
        (new_x, True, OUTLIER),
        (x[~keep_mask], False, DELETED),
    ]
    inactive = np.flatnonzero(~clean.active)
    if len(inactive):
        pieces.append((clean.points[inactive], False, None))
    pts = np.concatenate([p for p, _, _ in pieces])
    active = np.concatenate([np.full(len(p), a) for p, a, _ in pieces])
    labels = np.concatenate([np.full(len(p), lab, np.int8) if lab is not None
                             else clean.truth_label[inactive] for p, _, lab in pieces])
    perm = rng.permutation(len(pts))
    out_meta = dict(clean.meta)
    out_meta["corruption"] = {**spec.to_dict(), "count": k, **meta}
    return SampleSet(pts[perm], active[perm], labels[perm], out_meta)
