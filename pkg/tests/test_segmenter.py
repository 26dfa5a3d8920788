import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import ndimage

from conftest import make_case
from longitrack.errors import ConfigError, EmptyEnsemble, SeedInPadding, ShapeMismatch, UnknownLesion
from longitrack.patcher import PatchPair, PatchSpec, infer_patch, paste_patch
from longitrack.promptenc import CROSS_SECTIONAL_MASK, CROSS_SECTIONAL_POINT, normalize_hu, rasterize_point
from longitrack.segmenter import (
    RegionGrowConfig,
    binarize,
    build_backend,
    ensemble_mean,
    oracle_segment,
    region_grow,
    relaxed_zone,
)
from oracles import bfs_flood_fill, brute_relaxed_zone


def make_pair(hu, seed, prior_mask=None, valid=None, lesion_id=1):
    hu = np.asarray(hu, dtype=np.float32)
    return PatchPair(
        lesion_id=lesion_id,
        curr_patch=normalize_hu(hu),
        curr_hu=hu,
        prior_patch=normalize_hu(hu),
        prior_hu=hu,
        prior_mask_patch=None if prior_mask is None else prior_mask.astype(np.float32),
        point_channel=rasterize_point(seed, hu.shape),
        origin_curr=(0, 0, 0),
        origin_prior=(0, 0, 0),
        center_in_patch=tuple(seed),
        valid_curr=np.ones(hu.shape, bool) if valid is None else valid,
    )


def sphere_phantom(shape, center, radius):
    zz, yy, xx = np.ogrid[: shape[0], : shape[1], : shape[2]]
    ball = (zz - center[0]) ** 2 + (yy - center[1]) ** 2 + (xx - center[2]) ** 2 <= radius ** 2
    return ball, np.where(ball, 100.0, -1000.0)


def test_sphere_exact():
    ball, hu = sphere_phantom((24, 24, 24), (12, 12, 12), 6)
    pair = make_pair(hu, (12, 12, 12))
    out = region_grow(pair, RegionGrowConfig(tau_hu=150))
    oracle = bfs_flood_fill(hu, (12, 12, 12), 150, 24, np.ones(hu.shape, bool))
    np.testing.assert_array_equal(oracle, ball)
    np.testing.assert_array_equal(out.astype(bool), oracle)


def test_homogeneous_ball():
    hu = np.zeros((16, 16, 16))
    seed = (8, 7, 9)
    out = region_grow(make_pair(hu, seed), RegionGrowConfig(r_max_vox=5))
    expected = np.zeros(hu.shape, bool)
    for v in np.ndindex(hu.shape):
        if sum((a - b) ** 2 for a, b in zip(v, seed)) <= 25:
            expected[v] = True
    np.testing.assert_array_equal(out.astype(bool), expected)


def test_tight_band_is_seed_only(rng):
    hu = rng.permutation(np.arange(10 * 10 * 10, dtype=np.float64)).reshape(10, 10, 10)
    out = region_grow(make_pair(hu, (5, 5, 5)), RegionGrowConfig(tau_hu=0.5))
    assert out.sum() == 1 and out[5, 5, 5] == 1


def test_seed_in_padding():
    valid = np.ones((8, 8, 8), bool)
    valid[:4] = False
    with pytest.raises(SeedInPadding):
        region_grow(make_pair(np.zeros((8, 8, 8)), (2, 4, 4), valid=valid))


def test_padding_blocks_growth():
    valid = np.ones((8, 8, 8), bool)
    valid[:3] = False
    out = region_grow(make_pair(np.zeros((8, 8, 8)), (5, 4, 4), valid=valid), RegionGrowConfig(r_max_vox=50))
    np.testing.assert_array_equal(out.astype(bool), valid)


def test_relaxed_zone_brute_force(rng):
    for _ in range(5):
        mask = rng.random((10, 10, 10)) < 0.02
        for d in (0, 1, 2, 3):
            np.testing.assert_array_equal(relaxed_zone(mask, d), brute_relaxed_zone(mask, d))
    assert not relaxed_zone(np.zeros((4, 4, 4)), 3).any()


def test_mask_relaxation_extends_region():
    # a 150 HU shell around a 100 HU core: out of band for tau=40, inside for tau*1.5=60 only if near the mask
    hu = np.full((20, 20, 20), 100.0)
    zz, yy, xx = np.ogrid[:20, :20, :20]
    d2 = (zz - 10) ** 2 + (yy - 10) ** 2 + (xx - 10) ** 2
    hu[d2 > 9] = 150.0
    mask = d2 <= 16
    cfg = RegionGrowConfig(tau_hu=40, mask_tau_relax=1.5, mask_dilation_vox=0, r_max_vox=100)
    without = region_grow(make_pair(hu, (10, 10, 10), mask), cfg, use_prior_mask=False).astype(bool)
    with_ = region_grow(make_pair(hu, (10, 10, 10), mask), cfg).astype(bool)
    np.testing.assert_array_equal(without, d2 <= 9)
    np.testing.assert_array_equal(with_, d2 <= 16)


@pytest.mark.parametrize("connectivity", [6, 26])
def test_random_phantoms_match_bfs(rng, connectivity):
    for _ in range(6):
        shape = (12, 12, 12)
        hu = rng.normal(0, 60, shape)
        seed = tuple(int(s) for s in rng.integers(2, 10, 3))
        mask = rng.random(shape) < 0.03
        valid = np.ones(shape, bool)
        valid[: rng.integers(0, 2)] = False
        cfg = RegionGrowConfig(tau_hu=70, r_max_vox=5.5, connectivity=connectivity, mask_dilation_vox=1)
        got = region_grow(make_pair(hu, seed, mask, valid), cfg).astype(bool)
        expected = bfs_flood_fill(hu, seed, 70, 5.5, valid, connectivity, brute_relaxed_zone(mask, 1), 1.5)
        np.testing.assert_array_equal(got, expected)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float64, (8, 8, 8), elements=st.floats(-300, 300)),
       st.tuples(*[st.integers(0, 7)] * 3), st.sampled_from([6, 26]))
def test_output_range_and_single_component(hu, seed, connectivity):
    out = region_grow(make_pair(hu, seed), RegionGrowConfig(tau_hu=100, connectivity=connectivity))
    assert out.min() >= 0 and out.max() <= 1
    assert out[seed] == 1
    structure = ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)
    _, n = ndimage.label(out, structure=structure)
    assert n == 1


def test_region_grow_config_invariants():
    for bad in ({"tau_hu": 0}, {"r_max_vox": -1}, {"connectivity": 18}, {"mask_tau_relax": 0.5}):
        with pytest.raises(ValueError):
            RegionGrowConfig(**bad)


def test_oracle_segment_matches_gt():
    case = make_case(shape=(40, 40, 40), lesions=((1, (20, 20, 20), (22, 19, 21)), (2, (8, 8, 8), (9, 9, 9))))
    spec = PatchSpec(patch_size=(16, 16, 16))
    pair = infer_patch(case, 2, spec)
    patch = oracle_segment(pair, case.gt_followup, case.lesion_ids)
    upd = paste_patch(case.followup.shape, pair.origin_curr, patch)
    np.testing.assert_array_equal(upd.to_dense() > 0, case.gt_mask(2))


def test_oracle_segment_clipped_window():
    case = make_case(shape=(40, 40, 40), lesions=((1, (20, 20, 20), (20, 20, 20)),), radius=10)
    spec = PatchSpec(patch_size=(8, 8, 8))
    pair = infer_patch(case, 1, spec)
    patch = oracle_segment(pair, case.gt_followup)
    window = tuple(slice(o, o + 8) for o in pair.origin_curr)
    np.testing.assert_array_equal(patch.astype(bool), case.gt_mask(1)[window])
    assert patch.all()


def test_oracle_empty_and_unknown():
    case = make_case()
    empty_gt = type(case.gt_followup)(np.zeros(case.followup.shape, np.uint16))
    pair = infer_patch(case, 1, PatchSpec(patch_size=(8, 8, 8)))
    assert oracle_segment(pair, empty_gt, [1]).sum() == 0
    with pytest.raises(UnknownLesion):
        oracle_segment(pair, case.gt_followup, known_ids=[2, 3])


def test_backends_by_name(case):
    pair = infer_patch(case, 1, PatchSpec(patch_size=(16, 16, 16)))
    rg = build_backend("region_grow", {"tau_hu": 150}, case)
    assert rg(pair, CROSS_SECTIONAL_POINT).sum() == case.gt_mask(1).sum()
    orc = build_backend("oracle", None, case)
    assert orc(pair, CROSS_SECTIONAL_MASK).sum() == case.gt_mask(1).sum()
    with pytest.raises(ConfigError):
        build_backend("unet", None, case)
    with pytest.raises(ConfigError):
        build_backend("region_grow", {"bogus": 1}, case)


def test_ensemble_identical_maps_bitwise(rng):
    m = rng.random((6, 6, 6)).astype(np.float32)
    for k in (1, 2, 3, 5, 7):
        assert ensemble_mean([m] * k).tobytes() == m.tobytes()


def test_ensemble_zero_one():
    out = ensemble_mean([np.zeros((3, 3, 3)), np.ones((3, 3, 3))])
    assert np.all(out == 0.5)
    assert binarize(out, 0.5).all()


def test_ensemble_permutation_invariant(rng):
    maps = [rng.random((5, 5, 5)).astype(np.float32) ** (i + 1) for i in range(5)]
    ref = ensemble_mean(maps).tobytes()
    for _ in range(10):
        order = rng.permutation(5)
        assert ensemble_mean([maps[i] for i in order]).tobytes() == ref


def test_ensemble_errors():
    with pytest.raises(EmptyEnsemble):
        ensemble_mean([])
    with pytest.raises(ShapeMismatch):
        ensemble_mean([np.zeros((2, 2, 2)), np.zeros((2, 2, 3))])


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float32, (3, 4, 4), elements=st.floats(0, 1, width=32)),
       hnp.arrays(np.float32, (3, 4, 4), elements=st.floats(0, 1, width=32)),
       hnp.arrays(np.float32, (3, 4, 4), elements=st.floats(0, 1, width=32)))
def test_ensemble_monotone(a, b, other):
    hi, lo = np.maximum(a, b), np.minimum(a, b)
    assert np.all(ensemble_mean([hi, other]) >= ensemble_mean([lo, other]))


def test_binarize_rules(rng):
    assert binarize(np.array([0.5]), 0.5)[0]
    assert not binarize(np.zeros((3, 3, 3)), 0.5).any()
    m = rng.random((6, 6, 6)) < 0.4
    np.testing.assert_array_equal(binarize(ensemble_mean([m.astype(np.float32)] * 3), 0.5), m)
