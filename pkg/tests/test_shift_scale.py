from __future__ import annotations

import math

import numpy as np
import pytest

from robust_affine.corruption import CorruptionSpec, corrupt
from robust_affine.geometry import AffineMap, AxisBox, apply_affine, sample_standard_cube, tv_exact_axis_aligned
from robust_affine.samples import OUTLIER
from robust_affine.set_lemma import SetSystem, intersection_sum_check
from robust_affine.shift_scale import (
    ShiftScaleState,
    estimate_shift_scale,
    one_d_density_check,
    robust_range_find,
    two_d_density_check,
)


def box_sample(lower, upper, n, seed):
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    amap = AffineMap(np.diag((upper - lower) / 2), (upper + lower) / 2)
    return apply_affine(amap, sample_standard_cube(len(lower), n, seed)), AxisBox(lower, upper)


def state_at(box, x, eps):
    return ShiftScaleState(box, np.ones(len(x), bool), len(x), eps)


# --------------------------------------------------------------------------- range finding

def test_range_find_clean_interval():
    s = sample_standard_cube(1, 10**5, 0)
    box = robust_range_find(s, 0.0)
    center, half = (box.lower + box.upper) / 2, (box.upper - box.lower) / 2
    # any width-1 window holds half the mass of [-1, 1], so only the width is pinned
    assert abs(center[0]) <= 0.5 and abs(half[0] / 4 - 0.5) < 0.02
    assert box.lower[0] <= -1 and box.upper[0] >= 1
    assert box.lower[0] >= -4 and box.upper[0] <= 4


def test_range_find_matches_brute_force_with_outliers():
    s, _ = box_sample([3.0], [7.0], 2000, 1)
    x = s.view().copy()
    x[:100, 0] = 100.0
    eps = 0.05
    box = robust_range_find(x, eps)
    assert box.lower[0] <= 3 and box.upper[0] >= 7
    xs = np.sort(x[:, 0])
    m = math.ceil((0.5 + eps) * len(xs))
    best = min(range(len(xs) - m + 1), key=lambda s0: (xs[s0 + m - 1] - xs[s0], s0))
    lo, hi = xs[best], xs[best + m - 1]
    assert box.lower[0] == pytest.approx((lo + hi) / 2 - 4 * (hi - lo) / 2)
    assert box.upper[0] == pytest.approx((lo + hi) / 2 + 4 * (hi - lo) / 2)
    assert np.sum(xs[best:best + m] == 100.0) == 0


def test_range_find_degenerate():
    with pytest.raises(ValueError):
        robust_range_find(np.ones((100, 1)), 0.05)
    with pytest.raises(ValueError):
        robust_range_find(np.zeros((1, 1)), 0.05)


# --------------------------------------------------------------------------- checks

@pytest.fixture(scope="module")
def clean3():
    return box_sample([-1.0, 0.0, 2.0], [1.0, 3.0, 2.5], 2 * 10**5, 2)


def test_one_d_passes_at_truth(clean3):
    s, truth = clean3
    x = s.view()
    st = state_at(truth, x, 0.05)
    for i in range(3):
        for k in range(1, 4):
            assert one_d_density_check(x, st, i, k) == (True, True)


def test_one_d_fails_on_inflated_face(clean3):
    s, truth = clean3
    x = s.view()
    up = truth.upper.copy()
    up[1] += 0.3 * truth.sides[1]
    st = state_at(AxisBox(truth.lower, up), x, 0.05)
    hi_ok, lo_ok = one_d_density_check(x, st, 1, 3)
    assert not hi_ok and lo_ok
    with pytest.raises(ValueError):
        one_d_density_check(x, st, 1, 0)


def test_one_d_eps_zero_vacuous(clean3):
    s, truth = clean3
    x = s.view()
    st = state_at(AxisBox(truth.lower - 5, truth.upper + 5), x, 0.0)
    assert one_d_density_check(x, st, 0, 1) == (True, True)
    with pytest.raises(ValueError):
        estimate_shift_scale(x, 0.0)


def test_two_d_passes_at_truth(clean3):
    s, truth = clean3
    x = s.view()
    st = state_at(truth, x, 0.05)
    for i in range(3):
        for j in range(i + 1, 3):
            for k1 in range(1, 4):
                for k2 in range(1, 4):
                    assert two_d_density_check(x, st, i, j, k1, k2)[0]
    with pytest.raises(ValueError):
        two_d_density_check(x, st, 1, 1, 1, 1)


def test_two_d_empty_outer_slabs(clean3):
    s, truth = clean3
    x = s.view()
    st = state_at(AxisBox(truth.lower - truth.sides, truth.upper + truth.sides), x, 0.05)
    assert two_d_density_check(x, st, 0, 1, 3, 3)[0]


def test_two_d_flags_band_intersection_cells():
    d, eps, n = 3, 0.05, 2 * 10**5
    clean = sample_standard_cube(d, n, 3)
    out = corrupt(clean, CorruptionSpec(eps, "band_intersection", seed=4))
    truth = AxisBox(-np.ones(d), np.ones(d))
    x = out.view()
    st = state_at(truth, x, eps)
    targeted = {(c["i"], c["j"], c["sign_i"], c["sign_j"]) for c in out.meta["corruption"]["cells"]
                if (c["k1"], c["k2"]) == (1, 1)}
    flagged = set()
    for i in range(d):
        for j in range(i + 1, d):
            ok, bad = two_d_density_check(x, st, i, j, 1, 1)
            flagged |= {(b["i"], b["j"], b["sign_i"], b["sign_j"]) for b in bad}
            for b in bad:
                assert len(b["indices"]) > 10 * eps**2 * n / d**2
    assert flagged == targeted and flagged


# --------------------------------------------------------------------------- estimator

def test_clean_2d_recovery():
    s, truth = box_sample([-2.0, 1.0], [0.0, 1.5], 2 * 10**5, 5)
    box, st = estimate_shift_scale(s, 0.01)
    assert tv_exact_axis_aligned(box, truth) <= 0.02
    assert st.n_deleted == 0


def test_corner_shift_4d():
    clean, truth = box_sample(-np.ones(4), np.ones(4), 2 * 10**5, 6)
    out = corrupt(clean, CorruptionSpec(0.05, "corner_shift", seed=7), truth.to_parallelopiped())
    box, st = estimate_shift_scale(out.view(), 0.05)
    assert tv_exact_axis_aligned(box, truth) <= 0.2
    assert not st.failed


def test_far_uniform_1d():
    clean, truth = box_sample([3.0], [7.0], 2 * 10**5, 8)
    out = corrupt(clean, CorruptionSpec(0.02, "far_uniform", seed=9), truth.to_parallelopiped())
    box, _ = estimate_shift_scale(out.view(), 0.02)
    assert tv_exact_axis_aligned(box, truth) <= 0.08


def test_update_invariants_and_deletion_accounting():
    d, eps = 3, 0.05
    clean, truth = box_sample(-np.ones(d), np.ones(d), 2 * 10**5, 10)
    out = corrupt(clean, CorruptionSpec(eps, "band_intersection", seed=11), truth.to_parallelopiped())
    x = out.view()
    box, st = estimate_shift_scale(x, eps)
    for u, (prev, cur) in zip(st.updates, zip(st.history, st.history[1:])):
        assert np.all(cur.sides <= prev.sides + 1e-15)
        assert u["new_side"] == pytest.approx(u["old_side"] * (1 - u["k"] * eps / d))
    assert st.n_deleted <= 2 * eps * len(x)
    if st.n_deleted:
        lab = out.view_labels()[st.deleted_indices]
        assert np.mean(lab == OUTLIER) >= 0.5
    # certificate passed, so both one-sided volume gaps are within 4 eps
    inter = np.prod(np.minimum(box.upper, truth.upper) - np.maximum(box.lower, truth.lower))
    assert 1 - inter / np.prod(box.sides) <= 4 * eps
    assert 1 - inter / np.prod(truth.sides) <= 4 * eps


def test_intersection_sum_bound_on_escape_sets():
    d, eps = 4, 0.05
    clean, truth = box_sample(-np.ones(d), np.ones(d), 10**5, 12)
    out = corrupt(clean, CorruptionSpec(eps, "corner_shift", seed=13), truth.to_parallelopiped())
    x = out.view()
    box, _ = estimate_shift_scale(x, eps)
    inside = box.contains(x)
    sets = []
    for i in range(d):
        sets.append(np.flatnonzero(inside & (x[:, i] > truth.upper[i])))
        sets.append(np.flatnonzero(inside & (x[:, i] < truth.lower[i])))
    res = intersection_sum_check(SetSystem(len(x), sets), 40.0)
    assert res.holds


def test_iteration_cap_flag():
    from robust_affine.shift_scale import ShiftScaleConfig

    s, _ = box_sample([0.0, 0.0], [1.0, 1.0], 20000, 14)
    cfg = ShiftScaleConfig(iteration_cap_factor=1e-6)
    init = AxisBox(np.array([-5.0, -5.0]), np.array([6.0, 6.0]))
    _, st = estimate_shift_scale(s, 0.05, cfg, init_box=init)
    assert "iteration_cap" in st.flags and st.failed
