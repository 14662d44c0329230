import json

import numpy as np
import pytest

from bsm.hrtf import (
    HrtfFormatError,
    HrtfSet,
    hrirs_from_spectra,
    hrtf_to_sh,
    hrtf_vector,
    load_hrtf,
    resolve_hrtf,
    sphere_head_surrogate,
    write_hrtf,
)
from bsm.sh import DirectionSet, equal_angle_sampling, rotate_directions, sft_inverse, spiral_sampling


@pytest.fixture(scope="module")
def surrogate():
    return sphere_head_surrogate()


def test_surrogate_defaults(surrogate):
    assert len(surrogate.grid) == 180
    assert surrogate.freqs.size == 129 and surrogate.sample_rate == 48000.0


def test_mirror_symmetry_is_exact(surrogate):
    grid = surrogate.grid
    mirror = DirectionSet(grid.theta, -grid.phi)
    for f in (0.0, 750.0, 3000.0, 9000.0):
        l, r = surrogate.model(grid, f)
        lm, rm = surrogate.model(mirror, f)
        np.testing.assert_allclose(l, rm, rtol=0, atol=1e-13)
        np.testing.assert_allclose(r, lm, rtol=0, atol=1e-13)


def test_head_shadow_at_3khz(surrogate):
    d = DirectionSet([np.pi / 2], [np.radians(100.0)])
    l, r = hrtf_vector(surrogate, d, 3000.0)
    assert abs(l[0]) >= abs(r[0])
    assert 20 * np.log10(abs(l[0]) / abs(r[0])) > 6.0


def test_rotated_lookup_matches_model(surrogate):
    dirs = spiral_sampling(40)
    rot = (0.0, np.radians(30.0))
    l, r = hrtf_vector(surrogate, dirs, 1500.0, rot)
    l2, r2 = surrogate.model(rotate_directions(dirs, *rot), 1500.0)
    np.testing.assert_allclose(l, l2, atol=1e-12)
    np.testing.assert_allclose(r, r2, atol=1e-12)


def test_grid_lookup_and_rotation_inverse(surrogate):
    grid_only = HrtfSet(surrogate.grid, surrogate.freqs, surrogate.left, surrogate.right, 48000.0)
    dirs = DirectionSet(np.full(5, np.pi / 2), np.radians([0, 10, 90, 200, 358]))
    l, _ = hrtf_vector(grid_only, dirs, 1000.0)
    fi = grid_only.freq_index(1000.0)
    idx = np.rint(np.degrees(dirs.phi) / 2).astype(int) % 180
    np.testing.assert_array_equal(l, grid_only.left[idx, fi])
    # rotation by +30 deg then -30 deg lands on the same cells
    step = rotate_directions(rotate_directions(dirs, 0, np.radians(30)), 0, np.radians(-30))
    np.testing.assert_array_equal(hrtf_vector(grid_only, step, 1000.0)[0], l)


def test_sh_round_trip_order_14():
    grid = equal_angle_sampling(20)
    s = sphere_head_surrogate(grid=grid, freqs=[1000.0])
    coeffs = hrtf_to_sh(s, 14)
    for ear, vals in (("left", s.left[:, 0]), ("right", s.right[:, 0])):
        back = sft_inverse(coeffs.at(1000.0, ear), grid)
        err = np.sum(np.abs(back - vals) ** 2) / np.sum(np.abs(vals) ** 2)
        assert 10 * np.log10(err) < -40


def test_container_round_trip_is_lossless(tmp_path, surrogate):
    write_hrtf(tmp_path / "s", surrogate)
    a = load_hrtf(tmp_path / "s")
    write_hrtf(tmp_path / "t", a)
    b = load_hrtf(tmp_path / "t")
    assert (tmp_path / "s" / "irs.f32").read_bytes() == (tmp_path / "t" / "irs.f32").read_bytes()
    np.testing.assert_array_equal(a.left, b.left)
    # float32 storage of the original spectra; a real IR drops Im at Nyquist
    np.testing.assert_allclose(a.left[:, :-1], surrogate.left[:, :-1], atol=1e-5)
    meta = json.loads((tmp_path / "s" / "meta.json").read_text())
    assert meta["ir_length"] == 256 and len(meta["grid"]) == 180


def test_container_errors(tmp_path, surrogate):
    write_hrtf(tmp_path / "s", surrogate)
    with pytest.raises(HrtfFormatError):
        load_hrtf(tmp_path / "s", sample_rate=44100)
    with pytest.raises(HrtfFormatError):
        load_hrtf(tmp_path / "missing")
    raw = (tmp_path / "s" / "irs.f32").read_bytes()
    (tmp_path / "s" / "irs.f32").write_bytes(raw[:-8])
    with pytest.raises(HrtfFormatError):
        load_hrtf(tmp_path / "s")


def test_degenerate_grid(tmp_path):
    one = sphere_head_surrogate(grid=DirectionSet([np.pi / 2], [0.0]))
    write_hrtf(tmp_path / "one", one)
    with pytest.raises(HrtfFormatError):
        load_hrtf(tmp_path / "one")
    loaded = load_hrtf(tmp_path / "one", min_directions=1)
    assert len(loaded.grid) == 1


def test_irs_need_rfft_grid():
    s = sphere_head_surrogate(freqs=[100.0, 200.0])
    with pytest.raises(HrtfFormatError):
        hrirs_from_spectra(s)


def test_resolve():
    assert resolve_hrtf("surrogate:0.09").metadata["radius_m"] == "0.09"
    with pytest.raises(ValueError):
        resolve_hrtf("surrogate:-1")


def test_set_validation(surrogate):
    with pytest.raises(ValueError):
        HrtfSet(surrogate.grid, surrogate.freqs[::-1], surrogate.left, surrogate.right, 48000.0)
    with pytest.raises(ValueError):
        HrtfSet(surrogate.grid, surrogate.freqs, surrogate.left[:, :3], surrogate.right, 48000.0)
