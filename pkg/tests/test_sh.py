import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import sph_harm_y

from bsm.sh import (
    FOUR_PI,
    Direction,
    DirectionSet,
    SamplingError,
    Scheme,
    ShVector,
    equal_angle_sampling,
    load_direction_table,
    pinv_sh,
    quadrature_is_exact,
    rotate_directions,
    save_direction_table,
    sft_forward,
    sft_inverse,
    sh_basis_matrix,
    sh_index,
    spiral_sampling,
)


def random_dirs(rng, n):
    return DirectionSet(np.arccos(rng.uniform(-1, 1, n)), rng.uniform(0, 2 * np.pi, n))


def closed_form(theta, phi):
    """Orthonormal complex SH up to order 2 written out by hand (Condon-Shortley phase)."""
    c, s, e = np.cos(theta), np.sin(theta), np.exp(1j * phi)
    return np.stack(
        [
            np.full_like(c, 1 / np.sqrt(4 * np.pi), dtype=complex),
            np.sqrt(3 / (8 * np.pi)) * s / e,
            np.sqrt(3 / (4 * np.pi)) * c + 0j,
            -np.sqrt(3 / (8 * np.pi)) * s * e,
            np.sqrt(15 / (32 * np.pi)) * s**2 / e**2,
            np.sqrt(15 / (8 * np.pi)) * s * c / e,
            np.sqrt(5 / (16 * np.pi)) * (3 * c**2 - 1) + 0j,
            -np.sqrt(15 / (8 * np.pi)) * s * c * e,
            np.sqrt(15 / (32 * np.pi)) * s**2 * e**2,
        ],
        axis=1,
    )


def test_basis_matches_closed_form_up_to_order_2(rng):
    d = random_dirs(rng, 50)
    np.testing.assert_allclose(sh_basis_matrix(d, 2), closed_form(d.theta, d.phi), atol=1e-13)


def test_basis_matches_scipy_at_order_12(rng):
    d = random_dirs(rng, 40)
    Y = sh_basis_matrix(d, 12)
    for n in range(13):
        for m in range(-n, n + 1):
            np.testing.assert_allclose(Y[:, sh_index(n, m)], sph_harm_y(n, m, d.theta, d.phi), atol=1e-12)


def test_index_layout():
    assert [sh_index(n, m) for n in range(3) for m in range(-n, n + 1)] == list(range(9))


def test_y00_everywhere(rng):
    d = random_dirs(rng, 10)
    np.testing.assert_allclose(sh_basis_matrix(d, 0)[:, 0], 1 / np.sqrt(4 * np.pi))


def test_equal_angle_quadrature_is_exact():
    d = equal_angle_sampling(6)
    assert len(d) == 4 * 49
    assert quadrature_is_exact(d, 6)
    Y = sh_basis_matrix(d, 6)
    G = (Y.conj().T * d.weights) @ Y
    assert np.linalg.norm(G - np.eye(49)) < 1e-12


def test_spiral_weights_and_single_point():
    d = spiral_sampling(240)
    assert len(d) == 240 and d.scheme is Scheme.spiral
    assert abs(d.weights.sum() - FOUR_PI) < 1e-12
    one = spiral_sampling(1)
    assert one.theta[0] == 0 and one.weights[0] == pytest.approx(FOUR_PI)
    with pytest.raises(ValueError):
        spiral_sampling(0)


def test_spiral_points_are_spread():
    u = spiral_sampling(240).cartesian()
    dots = u @ u.T - 2 * np.eye(240)
    # nearest-neighbour angle of an even covering is about sqrt(4 pi / 240) rad
    nearest = np.degrees(np.arccos(np.clip(dots.max(axis=1), -1, 1)))
    assert nearest.min() > 5.0 and nearest.max() < 20.0


def test_lstsq_round_trip_on_spiral(rng):
    d = spiral_sampling(240)
    f = rng.standard_normal(121) + 1j * rng.standard_normal(121)
    vals = sft_inverse(ShVector(10, f), d)
    np.testing.assert_allclose(sft_forward(vals, d, 10).coeffs, f, atol=1e-10)


def test_auto_method_uses_quadrature_only_when_exact(rng):
    d = equal_angle_sampling(4)
    f = rng.standard_normal(25) + 0j
    vals = sft_inverse(ShVector(4, f), d)
    q = sft_forward(vals, d, 4, method="quadrature").coeffs
    np.testing.assert_allclose(q, f, atol=1e-12)
    np.testing.assert_allclose(sft_forward(vals, d, 4).coeffs, f, atol=1e-12)


def test_sft_trailing_axes(rng):
    d = spiral_sampling(100)
    F = rng.standard_normal((16, 3)) + 0j
    vals = sh_basis_matrix(d, 3) @ F
    np.testing.assert_allclose(sft_forward(vals, d, 3).coeffs, F, atol=1e-10)


def test_too_few_directions_raises():
    with pytest.raises(SamplingError):
        pinv_sh(sh_basis_matrix(spiral_sampling(8), 2))
    with pytest.raises(SamplingError):
        sft_forward(np.ones(8), spiral_sampling(8), 2)


def test_degenerate_directions_raise():
    ring = DirectionSet(np.full(30, np.pi / 2), np.linspace(0, 2 * np.pi, 30, endpoint=False))
    with pytest.raises(SamplingError):
        pinv_sh(sh_basis_matrix(ring, 3))


def test_weights_must_sum_to_four_pi():
    with pytest.raises(ValueError):
        DirectionSet([0.1, 0.2], [0, 0], [1.0, 1.0])
    with pytest.raises(ValueError):
        DirectionSet([0.1, 0.2], [0.0])


def test_wrapping_and_direction():
    d = Direction(-0.2, 0.5)
    assert d.theta == pytest.approx(0.2) and d.phi == pytest.approx(0.5 + np.pi)
    s = DirectionSet([np.pi + 0.1], [-0.5])
    assert s.theta[0] == pytest.approx(np.pi - 0.1)
    assert s.phi[0] == pytest.approx(np.pi - 0.5)


def test_rotation_by_pi_twice_is_identity():
    d = spiral_sampling(50)
    r = rotate_directions(rotate_directions(d, 0, np.pi), 0, np.pi)
    np.testing.assert_allclose(r.cartesian(), d.cartesian(), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-2 * np.pi, 2 * np.pi), st.integers(1, 60))
def test_rotation_inverse_property(dphi, n):
    d = spiral_sampling(n)
    back = rotate_directions(rotate_directions(d, 0, dphi), 0, -dphi)
    np.testing.assert_allclose(back.cartesian(), d.cartesian(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_addition_theorem(theta, phi):
    """sum_m |Y_n^m|^2 = (2n+1)/(4 pi) at every direction."""
    Y = sh_basis_matrix(DirectionSet([theta], [phi]), 8)[0]
    for n in range(9):
        block = Y[n * n : (n + 1) ** 2]
        assert np.sum(np.abs(block) ** 2) == pytest.approx((2 * n + 1) / (4 * np.pi), rel=1e-12)


def test_direction_table_round_trip(tmp_path):
    d = equal_angle_sampling(2)
    save_direction_table(tmp_path / "t.txt", d)
    back = load_direction_table(tmp_path / "t.txt")
    np.testing.assert_allclose(back.cartesian(), d.cartesian(), atol=1e-12)
    np.testing.assert_allclose(back.weights, d.weights, rtol=1e-12)
    (tmp_path / "u.txt").write_text("# comment\n90 0\n90 90  # east\n")
    u = load_direction_table(tmp_path / "u.txt")
    assert len(u) == 2 and u.weights.sum() == pytest.approx(FOUR_PI)
    (tmp_path / "bad.txt").write_text("1 2 3 4\n")
    with pytest.raises(ValueError):
        load_direction_table(tmp_path / "bad.txt")


def test_shvector_access_and_add():
    a = ShVector(1, [1, 2, 3, 4])
    assert a[1, -1] == 2 and (a + a)[1, 1] == 8
    with pytest.raises(ValueError):
        ShVector(2, [1, 2])
    with pytest.raises(ValueError):
        a + ShVector(0, [1])
