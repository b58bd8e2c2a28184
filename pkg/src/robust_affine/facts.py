"""Monte-Carlo checks of the cube facts the estimators rely on.

Each check draws a fresh uniform sample per random configuration and compares
an estimate against its inequality with a slack of ``SLACK`` standard errors.
Checks with an unspecified constant report the fitted constant instead and
do not gate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import random_unit_vector, unit_at_distance

SLACK = 3.0


@dataclass
class FactCheck:
    name: str
    gating: bool = True
    records: list[dict] = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r["ok"] for r in self.records)

    def to_dict(self) -> dict:
        return {"name": self.name, "gating": self.gating, "passed": self.passed,
                "n_configs": len(self.records), "fitted": self.fitted,
                "seconds": round(self.seconds, 3), "records": self.records}


def _cube(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(m, d))


def _frac(mask: np.ndarray) -> tuple[float, float]:
    p = float(mask.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / mask.size)


def _mean(v: np.ndarray) -> tuple[float, float]:
    if v.size < 2:
        return float("nan"), float("inf")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _symmetrized(x: np.ndarray, a: np.ndarray, t: float) -> np.ndarray:
    """Points with ``x.a > t`` together with the negations of those with ``x.a < -t``."""
    p = x @ a
    return np.concatenate([x[p > t], -x[p < -t]])


def _near_axis(d: int, delta: float, rng) -> tuple[int, np.ndarray]:
    i = int(rng.integers(d))
    return i, unit_at_distance(np.eye(d)[i], delta, rng)


# --------------------------------------------------------------------------- gating checks

def escape_bounds(d, m, rng, delta_range=(0.01, 0.1)) -> dict:
    """``delta/5 <= frac{|x.a| > 1} <= (1 + delta) delta / 4`` for ``||a - e_i|| = delta``."""
    delta = float(rng.uniform(*delta_range))
    _, a = _near_axis(d, delta, rng)
    p, se = _frac(np.abs(_cube(d, m, rng) @ a) > 1)
    lo, hi = delta / 5, (1 + delta) * delta / 4
    return {"d": d, "delta": delta, "value": p, "se": se, "lower": lo, "upper": hi,
            "ok": lo - SLACK * se <= p <= hi + SLACK * se}


def slab_volume(d, m, rng) -> dict:
    """On the volume-one cube, ``vol{|x.a| > t/2} <= 1 - t`` for ``t <= 3/4``."""
    t = float(rng.uniform(0.0, 0.75))
    a = random_unit_vector(d, rng)
    p, se = _frac(np.abs(_cube(d, m, rng) @ a) > t)  # x in [-1,1]^d, so x/2 . a > t/2
    return {"d": d, "t": t, "value": p, "se": se, "upper": 1 - t, "ok": p <= 1 - t + SLACK * se}


def mean_projection(d, m, rng, delta_range=(0.05, 0.3)) -> dict:
    """Mean of the escape set along the nearby axis is at most ``1 - delta/32``."""
    delta = float(rng.uniform(*delta_range))
    i, a = _near_axis(d, delta, rng)
    z = _symmetrized(_cube(d, m, rng), a, 1.0)
    mu, se = _mean(z[:, i])
    bound = 1 - delta / 32
    return {"d": d, "delta": delta, "value": mu, "se": se, "upper": bound, "size": len(z),
            "var": float(z[:, i].var()), "ok": mu <= bound + SLACK * se}


def tail_bound(d, m, rng, delta_range=(0.05, 0.3)) -> dict:
    """``frac{|x.a| > 1 + delta/2} >= delta/64``."""
    delta = float(rng.uniform(*delta_range))
    _, a = _near_axis(d, delta, rng)
    p, se = _frac(np.abs(_cube(d, m, rng) @ a) > 1 + delta / 2)
    return {"d": d, "delta": delta, "value": p, "se": se, "lower": delta / 64,
            "ok": p >= delta / 64 - SLACK * se}


def mean_gap(d, m, rng, delta_range=(0.05, 0.3)) -> dict:
    """Mean ``mu`` of ``{a.x > 1 + D}``, ``|D| <= delta/2``, has ``mu.a - mu.e_i >= delta/64``."""
    delta = float(rng.uniform(*delta_range))
    shift = float(rng.uniform(-delta / 2, delta / 2))
    i, a = _near_axis(d, delta, rng)
    z = _symmetrized(_cube(d, m, rng), a, 1.0 + shift)
    g, se = _mean(z @ a - z[:, i])
    return {"d": d, "delta": delta, "shift": shift, "value": g, "se": se, "lower": delta / 64,
            "size": len(z), "ok": g >= delta / 64 - SLACK * se}


# --------------------------------------------------------------------------- reported checks

def section_volume(d, m, rng, width=0.01) -> dict:
    """Thin-slab quotient for the section ``{x.a = t}`` of the volume-one cube, bounded by ``sqrt 2``."""
    a = random_unit_vector(d, rng)
    t = float(rng.uniform(-0.2, 0.2))
    x = _cube(d, m, rng) / 2
    p, se = _frac(np.abs(x @ a - t) < width / 2)
    return {"d": d, "t": t, "value": p / width, "se": se / width, "upper": math.sqrt(2),
            "ok": p / width <= math.sqrt(2) + SLACK * se / width}


def truncated_mean_gap(d, m, rng) -> dict:
    """``E(x.a | x.a >= t) - t`` for ``0 <= t <= 1/2`` on ``[-1,1]^d``."""
    a = random_unit_vector(d, rng)
    t = float(rng.uniform(0.0, 0.5))
    y = _cube(d, m, rng) @ a
    mu, se = _mean(y[y >= t])
    return {"d": d, "t": t, "value": mu - t, "se": se, "ok": mu - t - SLACK * se > 0}


def band_intersection(d, m, rng, rel_density=0.5) -> dict:
    """``nu(H_u & H_v) / (nu(H_u) nu(H_v))`` for ``|u.v| <= 1/2``.

    The cut of each band sits where the marginal density is at least
    ``rel_density`` times its value at the center.
    """
    while True:
        u, v = random_unit_vector(d, rng), random_unit_vector(d, rng)
        if abs(u @ v) <= 0.5:
            break
    x = _cube(d, m, rng)
    pu, pv = x @ u, x @ v
    cuts = []
    for p in (pu, pv):
        hist, edges = np.histogram(p, bins=200)
        peak = hist.max()
        centers = (edges[:-1] + edges[1:]) / 2
        allowed = centers[(hist >= rel_density * peak) & (centers >= 0)]
        cuts.append(float(rng.uniform(0.0, allowed.max())))
        del hist
    hu, hv = pu >= cuts[0], pv >= cuts[1]
    ratio = float((hu & hv).mean() / (hu.mean() * hv.mean()))
    return {"d": d, "cut_u": cuts[0], "cut_v": cuts[1], "value": ratio, "ok": True}


GATING = {
    "escape_bounds": escape_bounds,
    "slab_volume": slab_volume,
    "mean_projection": mean_projection,
    "tail_bound": tail_bound,
    "mean_gap": mean_gap,
}
REPORTED = {
    "section_volume": section_volume,
    "truncated_mean_gap": truncated_mean_gap,
    "band_intersection": band_intersection,
}


def run_check(name: str, n_configs: int = 20, m: int = 10**6, dims=(2, 5, 10), seed=0) -> FactCheck:
    fn = GATING.get(name) or REPORTED.get(name)
    if fn is None:
        raise ValueError(f"unknown fact check {name!r}")
    rng = np.random.default_rng([seed, sorted(GATING | REPORTED).index(name)])
    out = FactCheck(name, gating=name in GATING)
    t0 = time.perf_counter()
    for k in range(n_configs):
        out.records.append(fn(dims[k % len(dims)], m, rng))
    out.seconds = time.perf_counter() - t0
    vals = [r["value"] for r in out.records]
    if name == "truncated_mean_gap":
        out.fitted["c"] = min(vals)
    elif name == "band_intersection":
        for d in dims:
            out.fitted[f"C_d{d}"] = max(r["value"] for r in out.records if r["d"] == d)
    elif name == "mean_projection":
        out.fitted["var_over_delta2"] = max(r["var"] / r["delta"] ** 2 for r in out.records)
    elif name == "section_volume":
        out.fitted["max_section"] = max(vals)
    return out


def run_facts(n_configs: int = 20, m: int = 10**6, dims=(2, 5, 10), seed: int = 0,
              include_reported: bool = True) -> dict:
    names = list(GATING) + (list(REPORTED) if include_reported else [])
    # sections are only estimated in low dimension, where the thin slab is well populated
    checks = [run_check(nm, n_configs, m, (2, 3) if nm == "section_volume" else dims, seed) for nm in names]
    return {"passed": all(c.passed for c in checks if c.gating),
            "checks": {c.name: c.to_dict() for c in checks}}
