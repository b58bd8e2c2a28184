"""Full pipeline for a general affine image of the cube.

1. robust mean and covariance, then whitening;
2. warm start for the facet normals in the whitened frame (scaled by
   ``1/sqrt 3`` so the model body is a rotated standard cube);
3. rounds of
   (a) the box certificate on the projections onto the current normals, and
   (b) the rotation step after mapping the current box to the standard cube,
   until the body holds ``(1 - c_stop eps) n`` points, the inside count stops
   improving, or the round cap is reached.

The round with the largest inside count is returned, in original coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AffineMap, Parallelopiped
from .robust_stats import WarmStartConfig, WarmStartReport, inv_sqrt, robust_covariance, robust_mean, warm_start
from .rotation import RotationConfig, RotationTrace, estimate_rotation
from .samples import as_points
from .shift_scale import ShiftScaleConfig, ShiftScaleState, estimate_shift_scale

SQRT3 = math.sqrt(3.0)


@dataclass
class AffineConfig:
    c_stop: float = 1.0
    max_rounds: int = 10
    plateau_rounds: int = 2  # stop after this many rounds without a better inside count
    warm_mode: str = "moment"
    oracle_delta: float = 0.05
    max_condition: float = 100.0
    shift_scale: ShiftScaleConfig = field(default_factory=ShiftScaleConfig)
    rotation: RotationConfig = field(default_factory=lambda: RotationConfig(patience=200))
    warm: WarmStartConfig = field(default_factory=WarmStartConfig)


@dataclass
class RoundRecord:
    round: int
    body_after_scale: Parallelopiped  # original coordinates
    inside_after_scale: float
    body_after_rotation: Parallelopiped | None = None
    inside_after_rotation: float | None = None
    scale_state: ShiftScaleState | None = None
    rotation_trace: RotationTrace | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class AffineState:
    frame: AffineMap  # original -> model frame (rotated standard cube)
    mean: np.ndarray
    cov: np.ndarray
    warm: WarmStartReport
    rounds: list[RoundRecord] = field(default_factory=list)
    best_round: int = 0
    stop_reason: str = ""

    @property
    def inside_fractions(self) -> list[float]:
        return [r.inside_after_scale for r in self.rounds]


def normalize_frame(s, mean, cov) -> tuple[np.ndarray, AffineMap]:
    """Center by ``mean`` and whiten by ``cov^{-1/2}``; the returned map sends the
    original points to the new frame and inverts exactly."""
    x = as_points(s)
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    w = inv_sqrt(cov)  # raises on a non positive definite matrix
    amap = AffineMap(w, -w @ np.asarray(mean, dtype=float))
    return amap.apply(x), amap


def pull_back(body: Parallelopiped, amap: AffineMap) -> Parallelopiped:
    """Body ``{l <= a.y <= u}`` with ``y = amap(x)`` expressed in ``x``."""
    rows = body.normals @ amap.matrix
    offset = body.normals @ amap.shift
    return Parallelopiped.from_rows(rows, body.lower - offset, body.upper - offset)


def _rotation_frame(normals: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> AffineMap:
    """Map sending ``{lower <= normals y <= upper}`` to the standard cube."""
    scale = 2.0 / (upper - lower)
    center = (upper + lower) / 2
    return AffineMap(scale[:, None] * normals, -scale * center)


def estimate_affine(s, eps: float, cfg: AffineConfig | None = None, seed=None,
                    oracle_truth: Parallelopiped | None = None) -> tuple[Parallelopiped, AffineState]:
    cfg = cfg or AffineConfig()
    x = as_points(s)
    n, d = x.shape
    mu = robust_mean(x, eps).estimate
    cov = robust_covariance(x, eps, mean=mu)
    _, white = normalize_frame(x, mu, cov)
    frame = AffineMap(white.matrix / SQRT3, white.shift / SQRT3)
    y = frame.apply(x)

    if cfg.warm_mode == "oracle":
        if oracle_truth is None:
            raise ValueError("oracle warm start needs the true body")
        truth_y = pull_back(oracle_truth, frame.inverse())
        warm = warm_start(y, eps, "oracle", oracle_truth=truth_y, oracle_delta=cfg.oracle_delta, seed=seed)
    else:
        warm = warm_start(y, eps, "moment", seed=seed, cfg=cfg.warm)
    state = AffineState(frame, mu, cov, warm)

    # the box certificate needs eps in [eps_min, eps_max]; clean runs use eps_min
    eps_box = min(max(eps, cfg.shift_scale.eps_min), cfg.shift_scale.eps_max)
    normals = warm.normals
    best_inside, since_best = -1.0, 0
    for r in range(cfg.max_rounds):
        rec_flags = []
        proj = y @ normals.T
        box, ss_state = estimate_shift_scale(proj, eps_box, cfg.shift_scale)
        rec_flags += [f"scale:{f}" for f in ss_state.flags if f != "below_n_min"]
        body_y = Parallelopiped(normals, box.lower, box.upper)
        inside = body_y.inside_fraction(y)
        rec = RoundRecord(r + 1, pull_back(body_y, frame), inside, scale_state=ss_state, flags=rec_flags)
        state.rounds.append(rec)
        if inside > best_inside:
            best_inside, since_best, state.best_round = inside, 0, r
        else:
            since_best += 1
        if inside >= 1 - cfg.c_stop * eps:
            state.stop_reason = "inside_count"
            break
        if since_best >= cfg.plateau_rounds:
            state.stop_reason = "plateau"
            break
        if r == cfg.max_rounds - 1:
            state.stop_reason = "round_cap"
            break

        # (b) rotation in the frame where the current body is the standard cube
        zmap = _rotation_frame(normals, box.lower, box.upper)
        z = zmap.apply(y)
        ident = WarmStartReport(np.eye(d), "previous_round")
        try:
            body_z, rot_trace = estimate_rotation(z, eps, cfg.rotation, warm=ident)
        except ValueError as exc:  # rows collapsed onto each other
            rec.flags.append(f"rotation_failed:{exc}")
            state.stop_reason = "rotation_failed"
            break
        body_y2 = pull_back(body_z, zmap)
        rec.body_after_rotation = pull_back(body_y2, frame)
        rec.inside_after_rotation = body_y2.inside_fraction(y)
        rec.rotation_trace = rot_trace
        if np.linalg.cond(body_y2.normals) > cfg.max_condition:
            rec.flags.append("ill_conditioned_normals")
        normals = body_y2.normals

    return state.rounds[state.best_round].body_after_scale, state
