"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from robust_affine import evaluation, exact2d
from robust_affine.affine import AffineConfig, estimate_affine
from robust_affine.config import ExperimentConfig
from robust_affine.corruption import CorruptionSpec, corrupt
from robust_affine.facts import run_facts
from robust_affine.geometry import (
    AffineMap,
    AxisBox,
    Parallelopiped,
    apply_affine,
    random_affine_map,
    random_rotation,
    sample_standard_cube,
    slab_outside,
    truncated_direction_stats,
    tv_exact_axis_aligned,
    tv_monte_carlo,
    unit_at_distance,
)
from robust_affine.harness import generate, numeric_view, replay, run_estimator, run_experiment
from robust_affine.robust_stats import robust_mean, warm_start
from robust_affine.rotation import RotationConfig, estimate_rotation, improve_row
from robust_affine.samples import INLIER
from robust_affine.set_lemma import run_suite
from robust_affine.shift_scale import estimate_shift_scale

pytestmark = pytest.mark.slow


def _finish(acceptance, key, ok, detail, t0):
    acceptance(key, ok, f"{detail} [{time.perf_counter() - t0:.0f}s]")
    assert ok, detail


# --------------------------------------------------------------------------- 1

def test_c1_shift_scale_recovery(acceptance):
    t0 = time.perf_counter()
    d, n = 4, 2 * 10**5
    worst, bad = 0.0, []
    for eps in (0.02, 0.05):
        for adv in ("corner_shift", "far_uniform", "band_intersection"):
            for seed in range(5):
                rng = np.random.default_rng([1, seed])
                sides = rng.uniform(0.5, 2.0, d)
                centers = rng.uniform(-1, 1, d)
                truth = AxisBox(centers - sides / 2, centers + sides / 2)
                clean = apply_affine(AffineMap(np.diag(sides / 2), centers), sample_standard_cube(d, n, seed))
                out = corrupt(clean, CorruptionSpec(eps, adv, seed=100 + seed), truth.to_parallelopiped())
                box, _ = estimate_shift_scale(out.view(), eps)
                tv = tv_exact_axis_aligned(box, truth)
                worst = max(worst, tv / (4 * eps + 0.02))
                if tv > 4 * eps + 0.02:
                    bad.append((eps, adv, seed, round(tv, 4)))
    _finish(acceptance, "C1 shift/scale recovery", not bad,
            f"30 runs, max tv/(4eps+0.02) = {worst:.3f}, violations {bad}", t0)


# --------------------------------------------------------------------------- 2

def test_c2_rotation_improvement(acceptance):
    t0 = time.perf_counter()
    d, n = 3, 10**6
    x = sample_standard_cube(d, n, 0).view()
    e = np.eye(d)[0]
    a0 = unit_at_distance(e, 0.1, np.random.default_rng(1))
    cfg = RotationConfig()
    best, tr = improve_row(x, a0, [], 0.0, cfg)
    ratios = []
    for t, beta in enumerate(tr.beta):
        a, a2 = tr.a[t], tr.a[t + 1]
        if beta > 0:
            ratios.append((a2 @ e - a @ e) / (beta * np.linalg.norm(a - e) / 128))
    final = float(np.linalg.norm(best - e))
    steps = len(tr.a) - 1
    ok = bool(ratios) and min(ratios) >= 1 and final < 0.01 and steps <= cfg.iterations(d)
    _finish(acceptance, "C2 rotation improvement", ok,
            f"{steps} steps ({tr.status}), min gain/(beta*delta/128) = {min(ratios):.1f}, final distance {final:.2e}",
            t0)


# --------------------------------------------------------------------------- 3

def test_c3_rotation_under_corruption(acceptance):
    t0 = time.perf_counter()
    d, n = 3, 2 * 10**5
    eps_grid = (0.005, 0.01, 0.02)
    c_rot = c_tv = 0.0
    means = {}
    for adv in ("far_uniform", "corner_shift"):
        for eps in eps_grid:
            esc_all, tv_all, se_esc, se_tv = [], [], [], []
            for seed in range(5):
                rng = np.random.default_rng(seed)
                q = random_rotation(d, rng)
                truth = Parallelopiped(q.T.copy(), -np.ones(d), np.ones(d))
                clean = apply_affine(AffineMap(q, np.zeros(d)), sample_standard_cube(d, n, seed))
                out = corrupt(clean, CorruptionSpec(eps, adv, {}, seed), truth)
                warm = warm_start(None, eps, "oracle", oracle_truth=truth, oracle_delta=0.05, seed=seed)
                body, _ = estimate_rotation(out.view(), eps, RotationConfig(patience=200), warm=warm)
                x, lab = out.view(), out.view_labels()
                inl = x[lab == INLIER]
                esc = 1 - body.inside_fraction(inl)
                tv, se = tv_monte_carlo(body, truth, 10**6, seed)
                esc_all.append(esc)
                tv_all.append(tv)
                se_esc.append(math.sqrt(max(esc * (1 - esc), 1e-12) / len(inl)))
                se_tv.append(se)
                c_rot, c_tv = max(c_rot, esc / eps), max(c_tv, tv / eps)
            means[adv, eps] = (np.mean(esc_all), np.sqrt(np.sum(np.square(se_esc))) / 5,
                               np.mean(tv_all), np.sqrt(np.sum(np.square(se_tv))) / 5)
    # monotone in the mean: a later mean may not drop below an earlier one by more than 2 combined standard errors
    mono = True
    for adv in ("far_uniform", "corner_shift"):
        for lo, hi in zip(eps_grid, eps_grid[1:]):
            m_lo, m_hi = means[adv, lo], means[adv, hi]
            for k in (0, 2):
                if m_hi[k] < m_lo[k] - 2 * math.hypot(m_lo[k + 1], m_hi[k + 1]):
                    mono = False
    ok = c_rot <= 64 and mono
    table = ", ".join(f"{a[:4]}@{e}: esc {m[0]:.4f} tv {m[2]:.4f}" for (a, e), m in means.items())
    _finish(acceptance, "C3 rotation under corruption", ok,
            f"C_rot = {c_rot:.2f} (<= 64), C_tv = {c_tv:.2f}, monotone in mean: {mono}; {table}", t0)


# --------------------------------------------------------------------------- 4

def _affine_instance(d, seed, n, eps):
    rng = np.random.default_rng(1000 + seed)
    amap = random_affine_map(d, rng, 5.0)
    truth = Parallelopiped.from_affine(amap)
    clean = apply_affine(amap, sample_standard_cube(d, n, seed))
    return truth, corrupt(clean, CorruptionSpec(eps, "corner_shift", {}, seed), truth)


def test_c4_affine_pipeline(acceptance):
    t0 = time.perf_counter()
    n, eps = 2 * 10**5, 0.02
    tvs, rounds, contraction_bad, pairs_tested = [], [], [], 0
    for d in (2, 3):
        for seed in range(5):
            truth, out = _affine_instance(d, seed, n, eps)
            x = out.view()
            body, state = estimate_affine(x, eps, seed=seed)
            tv, _ = tv_monte_carlo(body, truth, 2 * 10**5, seed)
            tvs.append(tv)
            rounds.append(len(state.rounds))
            # noise floor: the per-row error a truth-initialized run settles at on the same sample
            floor_cfg = AffineConfig(warm_mode="oracle", oracle_delta=0.0, max_rounds=3, plateau_rounds=99,
                                     c_stop=0.0)
            _, fstate = estimate_affine(x, eps, floor_cfg, seed=seed, oracle_truth=truth)
            floor = 1.5 * max(evaluation.delta_r(r.body_after_scale, truth).max() for r in fstate.rounds)
            dr = [evaluation.delta_r(r.body_after_scale, truth) for r in state.rounds]
            for k in range(len(dr) - 1):
                for i in range(d):
                    if dr[k][i] > floor:
                        pairs_tested += 1
                        if dr[k + 1][i] > 0.9 * dr[k][i]:
                            contraction_bad.append((d, seed, k + 1, i, round(dr[k][i], 4), round(dr[k + 1][i], 4)))
    ok = max(tvs) <= 0.25 and np.mean(tvs) <= 0.15 and max(rounds) <= 10 and not contraction_bad
    _finish(acceptance, "C4 affine pipeline", ok,
            f"max tv {max(tvs):.4f} (<= 0.25), mean tv {np.mean(tvs):.4f} (<= 0.15), max rounds {max(rounds)}, "
            f"contraction pairs above floor {pairs_tested}, violations {contraction_bad}", t0)


# --------------------------------------------------------------------------- 5

def test_c5_fact_suite(acceptance):
    t0 = time.perf_counter()
    res = run_facts(n_configs=20, m=10**6, dims=(2, 5, 10), seed=0)
    gating = {k: v for k, v in res["checks"].items() if v["gating"]}
    enough = all(v["n_configs"] >= 20 for v in gating.values())
    detail = ", ".join(f"{k} {'ok' if v['passed'] else 'FAILED'}" for k, v in gating.items())
    fitted = {k: v["fitted"] for k, v in res["checks"].items() if v["fitted"]}
    _finish(acceptance, "C5 geometry facts", res["passed"] and enough, f"{detail}; fitted {fitted}", t0)


# --------------------------------------------------------------------------- 6

def test_c6_set_lemmas(acceptance):
    t0 = time.perf_counter()
    res = run_suite(10_000, 10_000, seed=0)
    a, b = res["intersection_sum"], res["pairwise_expectation"]
    _finish(acceptance, "C6 intersection-sum suite", res["passed"],
            f"systems {a['applicable']} applicable / {a['violations']} violations, "
            f"matrices {b['applicable']} applicable / {b['violations']} violations", t0)


# --------------------------------------------------------------------------- 7

def test_c7_robust_mean(acceptance):
    t0 = time.perf_counter()
    d, n = 4, 10**5
    clean = sample_standard_cube(d, n, 7).view()
    sigma_half = 1 / math.sqrt(3)
    ok, parts = True, []
    for eps in (0.02, 0.1):
        k = math.ceil(eps * n)
        rows = np.random.default_rng(8).choice(n, k, replace=False)
        errs = []
        for radius in (1e2, 1e4):
            x = clean.copy()
            x[rows] = radius * np.eye(d)[0]
            errs.append(float(np.linalg.norm(robust_mean(x, eps).estimate)))
        bound = 5 * math.sqrt(eps) * sigma_half
        invariant = abs(errs[0] - errs[1]) <= 0.1 * max(errs)
        ok &= max(errs) <= bound and invariant
        parts.append(f"eps {eps}: errors {errs[0]:.4f}/{errs[1]:.4f} (bound {bound:.3f})")
    _finish(acceptance, "C7 robust mean", ok, "; ".join(parts), t0)


# --------------------------------------------------------------------------- 8

def test_c8_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(80)
    tv_bad = 0
    for k in range(50):
        d = int(rng.integers(1, 6))
        lo1 = rng.uniform(-1, 0, d)
        b1 = AxisBox(lo1, lo1 + rng.uniform(0.5, 2, d))
        lo2 = lo1 + rng.uniform(-0.3, 0.3, d)
        b2 = AxisBox(lo2, lo2 + rng.uniform(0.5, 2, d))
        tv, se = tv_monte_carlo(b1.to_parallelopiped(), b2.to_parallelopiped(), 10**5, k)
        tv_bad += abs(tv - tv_exact_axis_aligned(b1, b2)) > 3 * se + 1e-12
    stats_bad = 0
    x = sample_standard_cube(2, 10**6, 81)
    for k in range(20):
        a = unit_at_distance(np.array([1.0, 0.0]), rng.uniform(0.02, 0.5), rng)
        t = rng.uniform(0.5, 1.0)
        u = unit_at_distance(np.array([1.0, 0.0]), rng.uniform(0.0, 1.5), rng)
        slab = slab_outside(x, a, t)
        mean, var = truncated_direction_stats(x, slab, u)
        ex_mean, ex_var = exact2d.slab_stats(a, t, u)
        p = slab.oriented(x.view()) @ u
        se_mean = math.sqrt(var / len(p))
        se_var = math.sqrt(max(np.mean((p - p.mean()) ** 4) - var**2, 0) / len(p))
        stats_bad += abs(mean - ex_mean) > 3 * se_mean or abs(var - ex_var) > 3 * se_var
    _finish(acceptance, "C8 oracle equivalence", tv_bad == 0 and stats_bad == 0,
            f"TV pairs outside 3 se: {tv_bad}/50, truncated stats configs outside 3 se: {stats_bad}/20", t0)


# --------------------------------------------------------------------------- 9

def test_c9_determinism_and_firewall(acceptance):
    t0 = time.perf_counter()
    replay_ok, firewall_ok = [], []
    for mode, d, n in (("shift_scale", 3, 20000), ("rotation", 2, 20000), ("affine", 2, 20000)):
        cfg = ExperimentConfig.from_dict({
            "d": d, "n": n, "mode": mode, "truth": {"mode": mode},
            "corruption": {"epsilon": 0.02, "adversary": "corner_shift"},
            "estimator": {"mc_samples": 20000, "max_rounds": 3, "rotation": {"patience": 50}}, "seed": 9})
        rep = run_experiment(cfg)
        replay_ok.append(numeric_view(replay(rep)) == numeric_view(rep))
        truth, sample = generate(cfg)
        oracle = truth if cfg.estimator.warm_mode == "oracle" else None
        b1, _, _ = run_estimator(mode, sample.view(), cfg.epsilon, cfg, oracle)
        b2, _, _ = run_estimator(mode, sample.without_labels().view(), cfg.epsilon, cfg, oracle)
        firewall_ok.append(b1.normals.tobytes() == b2.normals.tobytes() and b1.lower.tobytes() == b2.lower.tobytes()
                           and b1.upper.tobytes() == b2.upper.tobytes())
    ok = all(replay_ok) and all(firewall_ok)
    _finish(acceptance, "C9 determinism and label firewall", ok,
            f"bit-exact replay {replay_ok}, outputs unchanged without labels {firewall_ok}", t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-rA"]))
