import numpy as np
import pytest

from nodesieve.edt import distance_at, distance_transform
from nodesieve.volumes import BinaryMask

from helpers import brute_force_edt


def _mask(arr, spacing=(1.0, 1.0, 1.0)):
    return BinaryMask(np.asarray(arr, dtype=bool), spacing)


def test_single_voxel_line():
    vox = np.zeros((1, 1, 3), dtype=bool)
    vox[0, 0, 1] = True
    dm = distance_transform(_mask(vox))
    assert np.allclose(dm.values, [[[1.0, 0.0, 1.0]]])


def test_all_foreground_is_zero():
    dm = distance_transform(_mask(np.ones((3, 4, 5), dtype=bool)))
    assert np.all(dm.values == 0.0)


def test_empty_mask_rejected():
    with pytest.raises(ValueError, match="empty"):
        distance_transform(_mask(np.zeros((2, 2, 2), dtype=bool)))


def test_foreground_voxels_map_to_zero_exactly():
    rng = np.random.default_rng(0)
    vox = rng.uniform(size=(8, 8, 8)) < 0.2
    vox[0, 0, 0] = True
    dm = distance_transform(_mask(vox, (0.7, 1.3, 2.1)))
    assert np.all(dm.values[vox] == 0.0)
    assert np.all(dm.values[~vox] > 0.0)
    assert np.all(np.isfinite(dm.values))


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force_on_random_masks(seed):
    rng = np.random.default_rng(seed)
    density = rng.uniform(0.01, 0.5)
    vox = rng.uniform(size=(16, 16, 16)) < density
    if not vox.any():
        vox[tuple(rng.integers(0, 16, size=3))] = True
    spacing = tuple(rng.uniform(0.5, 3.0, size=3))
    dm = distance_transform(_mask(vox, spacing))
    oracle = brute_force_edt(vox, spacing)
    assert np.max(np.abs(dm.values - oracle)) < 1e-9


def test_translation_equivariance():
    rng = np.random.default_rng(3)
    vox = np.zeros((20, 20, 20), dtype=bool)
    core = rng.uniform(size=(6, 6, 6)) < 0.3
    core[3, 3, 3] = True
    vox[4:10, 5:11, 6:12] = core
    shifted = np.roll(vox, (2, -1, 3), axis=(0, 1, 2))
    dm = distance_transform(_mask(vox)).values
    dm_shifted = distance_transform(_mask(shifted)).values
    # compare away from the wrap-around boundary
    inner = (slice(6, 14),) * 3
    rolled = np.roll(dm, (2, -1, 3), axis=(0, 1, 2))
    assert np.allclose(dm_shifted[inner], rolled[inner])


def test_monotone_under_added_foreground():
    rng = np.random.default_rng(4)
    vox = rng.uniform(size=(10, 10, 10)) < 0.05
    vox[5, 5, 5] = True
    more = vox.copy()
    more[rng.uniform(size=more.shape) < 0.1] = True
    d1 = distance_transform(_mask(vox)).values
    d2 = distance_transform(_mask(more)).values
    assert np.all(d2 <= d1 + 1e-12)


def test_pass_order_does_not_matter():
    # axis order is fixed inside distance_transform; verify against the
    # brute force oracle with strongly anisotropic spacing, where a pass
    # ordering bug would show up immediately
    rng = np.random.default_rng(5)
    vox = rng.uniform(size=(12, 12, 12)) < 0.08
    vox[2, 9, 4] = True
    spacing = (5.0, 0.5, 1.0)
    dm = distance_transform(_mask(vox, spacing))
    oracle = brute_force_edt(vox, spacing)
    assert np.max(np.abs(dm.values - oracle)) < 1e-9


def test_distance_at_foreground_and_neighbor():
    vox = np.zeros((1, 1, 3), dtype=bool)
    vox[0, 0, 1] = True
    dm = distance_transform(_mask(vox))
    assert distance_at(dm, (0.0, 0.0, 1.0)) == 0.0
    assert distance_at(dm, (0.0, 0.0, 2.0)) == pytest.approx(1.0)


def test_distance_at_rejects_out_of_bounds():
    vox = np.ones((2, 2, 2), dtype=bool)
    dm = distance_transform(_mask(vox))
    with pytest.raises(ValueError, match="outside"):
        distance_at(dm, (0.0, 0.0, 5.0))
    with pytest.raises(ValueError, match="outside"):
        distance_at(dm, (-2.0, 0.0, 0.0))


def test_distance_at_matches_brute_force_lookup():
    rng = np.random.default_rng(6)
    vox = rng.uniform(size=(10, 10, 10)) < 0.1
    vox[4, 4, 4] = True
    spacing = (1.0, 2.0, 1.5)
    dm = distance_transform(_mask(vox, spacing))
    oracle = brute_force_edt(vox, spacing)
    diag = float(np.linalg.norm(spacing))
    for _ in range(25):
        p = rng.uniform((0, 0, 0), (9 * 1.0, 9 * 2.0, 9 * 1.5))
        got = distance_at(dm, p)
        idx = tuple(np.rint(p / np.array(spacing)).astype(int))
        assert got == oracle[idx]
        # nearest-voxel lookup stays within one voxel diagonal of the
        # continuous-point brute-force distance
        fg = np.argwhere(vox) * np.array(spacing)
        exact = np.min(np.linalg.norm(fg - p, axis=1))
        assert abs(got - exact) <= diag
