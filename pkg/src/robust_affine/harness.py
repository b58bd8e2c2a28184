"""Experiment orchestration: truth, sample, corruption, estimate, evaluate.

Estimators receive ``SampleSet.view()`` only; labels reach the evaluation
layer and nothing else.  A report embeds the resolved config, so
``replay(report)`` reruns the experiment and reproduces every numeric field
except wall-clock timings.
"""

from __future__ import annotations

import dataclasses
import time
from typing import Any

import numpy as np

from . import evaluation
from .affine import estimate_affine
from .config import ExperimentConfig, derive_seed
from .corruption import corrupt
from .geometry import AxisBox, Parallelopiped, apply_affine, random_affine_map, random_rotation, sample_standard_cube
from .robust_stats import warm_start
from .rotation import estimate_rotation
from .samples import SampleSet
from .shift_scale import estimate_shift_scale

REPORT_VERSION = 1


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def make_truth(cfg: ExperimentConfig) -> Parallelopiped:
    t = cfg.truth
    if t.body is not None:
        body = Parallelopiped.from_dict(t.body)
        if body.d != cfg.d:
            raise ValueError("truth body dimension does not match d")
        return body
    rng = np.random.default_rng(derive_seed(cfg.seed, "truth"))
    d = cfg.d
    if t.mode == "shift_scale":
        sides = rng.uniform(*t.side_range, size=d)
        centers = rng.uniform(*t.center_range, size=d)
        return AxisBox(centers - sides / 2, centers + sides / 2).to_parallelopiped()
    if t.mode == "rotation":
        q = random_rotation(d, rng)
        return Parallelopiped(q.T.copy(), -np.ones(d), np.ones(d))
    return Parallelopiped.from_affine(random_affine_map(d, rng, t.max_condition))


def generate(cfg: ExperimentConfig) -> tuple[Parallelopiped, SampleSet]:
    truth = make_truth(cfg)
    clean = apply_affine(truth.to_affine(), sample_standard_cube(cfg.d, cfg.n, derive_seed(cfg.seed, "sample")))
    return truth, corrupt(clean, cfg.corruption_spec(), truth)


def run_estimator(mode: str, x: np.ndarray, eps: float, cfg: ExperimentConfig,
                  oracle_truth: Parallelopiped | None = None) -> tuple[Parallelopiped, dict, list[str]]:
    """Dispatch to one estimator.  ``oracle_truth`` is used only for an oracle warm start."""
    est = cfg.estimator
    seed = derive_seed(cfg.seed, "estimator")
    flags: list[str] = []
    if mode == "shift_scale":
        ss = est.shift_scale
        eps_box = min(max(eps, ss.eps_min), ss.eps_max)
        if eps_box != eps:
            flags.append(f"eps_clamped_to_{eps_box}")
        box, state = estimate_shift_scale(x, eps_box, ss)
        flags += state.flags
        if state.failed:
            flags.append("estimator_failure")
        diag = {"updates": state.iteration, "deleted": state.n_deleted,
                "deletion_events": len(state.deletions), "removed": state.deleted_indices}
        return box.to_parallelopiped(), diag, flags
    if mode == "rotation":
        rot = dataclasses.replace(est.rotation, mean_filter=est.robust)
        if est.warm_mode == "oracle":
            if oracle_truth is None:
                raise ValueError("oracle warm start needs the truth")
            warm = warm_start(x, eps, "oracle", oracle_truth=oracle_truth, oracle_delta=est.oracle_delta, seed=seed)
        else:
            warm = warm_start(x, eps, "moment", seed=seed, cfg=est.warm)
        body, trace = estimate_rotation(x, eps, rot, warm=warm)
        flags += trace.flags
        diag = {"warm_normals": warm.normals,
                "rows": [{"steps": len(r.a) - 1, "status": r.status, "best_t": r.best_t,
                          "best_escape": r.escape[r.best_t], "start_escape": r.escape[0]} for r in trace.rows]}
        return body, diag, flags
    if mode == "affine":
        body, state = estimate_affine(x, eps, est.affine(), seed=seed, oracle_truth=oracle_truth)
        for r in state.rounds:
            flags += [f"round{r.round}:{f}" for f in r.flags]
        diag = {"rounds": len(state.rounds), "best_round": state.best_round + 1,
                "stop_reason": state.stop_reason, "inside_fractions": state.inside_fractions,
                "round_bodies": [r.body_after_scale.to_dict() for r in state.rounds]}
        return body, diag, flags
    raise ValueError(f"unknown estimator mode {mode!r}")


def _round_diagnostics(diag: dict, truth: Parallelopiped) -> None:
    """Per-round normal and offset errors, from the truth (evaluation only)."""
    bodies = [Parallelopiped.from_dict(b) for b in diag.get("round_bodies", [])]
    diag["delta_r_rounds"] = [evaluation.delta_r(b, truth).tolist() for b in bodies]
    diag["delta_s_rounds"] = [evaluation.delta_s(b, truth).tolist() for b in bodies]


def run_experiment(cfg: ExperimentConfig) -> dict:
    timing = {}
    t0 = time.perf_counter()
    truth, sample = generate(cfg)
    timing["generate"] = time.perf_counter() - t0

    mode = cfg.estimator_mode
    oracle = truth if cfg.estimator.warm_mode == "oracle" else None
    t0 = time.perf_counter()
    body, diag, flags = run_estimator(mode, sample.view(), cfg.epsilon, cfg, oracle_truth=oracle)
    timing["estimate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ev = evaluation.evaluate(sample, body, truth, cfg.estimator.mc_samples, derive_seed(cfg.seed, "tv"))
    removed = diag.pop("removed", None)
    if removed is not None:
        ev["deletions"] = evaluation.deletion_summary(sample, removed)
    if mode == "affine":
        _round_diagnostics(diag, truth)
    timing["evaluate"] = time.perf_counter() - t0

    report = {
        "version": REPORT_VERSION,
        "mode": mode,
        "status": "estimator_failure" if "estimator_failure" in flags else "ok",
        "estimate": body.to_dict(),
        "truth": truth.to_dict(),
        "evaluation": ev,
        "diagnostics": diag,
        "flags": flags,
        "seeds": cfg.seeds(),
        "config": cfg.to_dict(),
        "timing": timing,
    }
    return jsonable(report)


def numeric_view(report: dict) -> dict:
    """Report without wall-clock fields, for replay comparison."""
    return {k: v for k, v in report.items() if k != "timing"}


def replay(report: dict) -> dict:
    return run_experiment(ExperimentConfig.from_dict(report["config"]))


def sweep(base: ExperimentConfig, eps_values, seeds=(0,)) -> list[dict]:
    """One row per ``(eps, seed)`` run plus one mean row per ``eps``."""
    rows = []
    for eps in eps_values:
        per = []
        for s in seeds:
            cfg = dataclasses.replace(base, seed=int(s), corruption={**base.corruption, "epsilon": float(eps)})
            cfg.corruption.pop("seed", None)
            rep = run_experiment(cfg)
            ev = rep["evaluation"]
            row = {"eps": float(eps), "seed": int(s), "tv": ev["tv"]["estimate"], "tv_stderr": ev["tv"]["stderr"],
                   "column_error": ev["column_error"], "rounds": rep["diagnostics"].get("rounds", 1),
                   "status": rep["status"]}
            per.append(row)
            rows.append(row)
        rows.append({"eps": float(eps), "seed": "mean", "tv": float(np.mean([r["tv"] for r in per])),
                     "tv_stderr": float(np.sqrt(np.sum([r["tv_stderr"] ** 2 for r in per])) / len(per)),
                     "column_error": float(np.mean([r["column_error"] for r in per])),
                     "rounds": float(np.mean([r["rounds"] for r in per])),
                     "status": "ok" if all(r["status"] == "ok" for r in per) else "estimator_failure"})
    return rows
