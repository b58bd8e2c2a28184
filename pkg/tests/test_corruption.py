from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_affine.corruption import ADVERSARIES, CorruptionSpec, band_cells, corrupt, corruption_count
from robust_affine.geometry import Parallelopiped, apply_affine, random_affine_map, sample_standard_cube
from robust_affine.robust_stats import robust_mean
from robust_affine.samples import DELETED, INLIER, OUTLIER


@pytest.fixture(scope="module")
def clean4():
    return sample_standard_cube(4, 20000, 3)


def _rows(points):
    return {r.tobytes() for r in points}


def test_none_is_a_shuffle(clean4):
    out = corrupt(clean4, CorruptionSpec(0.0, "none", seed=1))
    assert out.count(OUTLIER) == 0 and out.count(DELETED) == 0
    assert _rows(out.points) == _rows(clean4.points)
    assert not np.array_equal(out.points, clean4.points)


@pytest.mark.parametrize("adv", [a for a in ADVERSARIES if a not in ("none", "delete_only")])
def test_replacement_accounting(clean4, adv):
    eps = 0.05
    out = corrupt(clean4, CorruptionSpec(eps, adv, seed=2), Parallelopiped.standard(4))
    k = corruption_count(eps, clean4.n)
    assert out.count(OUTLIER) == k and out.count(DELETED) == k
    assert out.n == clean4.n
    inl = out.points[out.truth_label == INLIER]
    dele = out.points[out.truth_label == DELETED]
    # inliers and deletions partition the clean sample exactly
    assert _rows(inl) | _rows(dele) == _rows(clean4.points)
    assert not (_rows(inl) & _rows(dele))
    assert not out.active[out.truth_label == DELETED].any()


def test_delete_only(clean4):
    out = corrupt(clean4, CorruptionSpec(0.05, "delete_only", seed=0), Parallelopiped.standard(4))
    assert out.count(OUTLIER) == 0 and out.n == clean4.n - corruption_count(0.05, clean4.n)
    # the deleted points are the ones closest to the chosen facet
    kept = out.view()[:, 0]
    gone = out.points[out.truth_label == DELETED][:, 0]
    assert gone.min() >= kept.max()


def test_corner_shift_geometry(clean4):
    out = corrupt(clean4, CorruptionSpec(0.05, "corner_shift", seed=4), Parallelopiped.standard(4))
    o = out.points[out.truth_label == OUTLIER]
    assert np.allclose(o, o[:, :1])  # on the all-ones diagonal
    assert np.all(o > 1.0) and np.all(o < 1.05)
    # the naive mean moves by about eps along the diagonal while the robust mean stays put
    naive = np.linalg.norm(out.view().mean(axis=0))
    assert naive > 0.04


def test_corner_shift_follows_body():
    rng = np.random.default_rng(5)
    amap = random_affine_map(3, rng)
    body = Parallelopiped.from_affine(amap)
    clean = apply_affine(amap, sample_standard_cube(3, 5000, 1))
    out = corrupt(clean, CorruptionSpec(0.05, "corner_shift", seed=6), body)
    o = out.points[out.truth_label == OUTLIER]
    s = amap.inverse().apply(o)
    assert np.all(s > 1.0)


def test_far_uniform_radius_and_robust_mean_invariance(clean4):
    errs = []
    for radius in (100.0, 1e4):
        out = corrupt(clean4, CorruptionSpec(0.05, "far_uniform", {"radius": radius}, seed=7),
                      Parallelopiped.standard(4))
        o = out.points[out.truth_label == OUTLIER]
        assert np.allclose(np.linalg.norm(o, axis=1), radius)
        errs.append(np.linalg.norm(robust_mean(out.view(), 0.05).estimate))
    assert errs[0] == pytest.approx(errs[1], rel=0.1, abs=1e-3)


def test_far_uniform_radius_must_clear_body(clean4):
    with pytest.raises(ValueError):
        corrupt(clean4, CorruptionSpec(0.05, "far_uniform", {"radius": 1.5}, seed=0), Parallelopiped.standard(4))


def test_band_intersection_fills_targeted_cells(clean4):
    eps = 0.05
    out = corrupt(clean4, CorruptionSpec(eps, "band_intersection", seed=8), Parallelopiped.standard(4))
    cells = out.meta["corruption"]["cells"]
    assert sum(c["count"] for c in cells) == corruption_count(eps, clean4.n)
    first = cells[0]
    assert (first["k1"], first["k2"]) == (1, 1)
    assert first["count"] >= 1.5 * 10 * eps**2 / 16 * clean4.n
    assert band_cells(3, eps)[0][2:4] == (1, 1)


def test_spec_validation():
    with pytest.raises(ValueError):
        CorruptionSpec(0.5)
    with pytest.raises(ValueError):
        CorruptionSpec(0.1, "none")
    with pytest.raises(ValueError):
        CorruptionSpec(0.1, "teleport")
    with pytest.raises(ValueError):
        CorruptionSpec(0.1, "corner_shift", {"radius": 3})
    with pytest.raises(ValueError):
        corrupt(sample_standard_cube(2, 100, 0), CorruptionSpec(0.1, "facet_cluster", {"offset": -0.5}))
    spec = CorruptionSpec(0.1, "facet_cluster", {"offset": 0.2}, seed=3)
    assert CorruptionSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.45), st.integers(10, 500), st.integers(0, 1000))
def test_count_and_determinism(eps, n, seed):
    clean = sample_standard_cube(2, n, seed)
    adv = "none" if eps == 0 else "facet_cluster"
    a = corrupt(clean, CorruptionSpec(eps, adv, seed=seed))
    b = corrupt(clean, CorruptionSpec(eps, adv, seed=seed))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.truth_label, b.truth_label)
    assert a.count(OUTLIER) == corruption_count(eps, n) <= n / 2 + 1
    assert len(a.points) == n + a.count(OUTLIER)
