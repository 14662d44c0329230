import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsm.design import FilterBank, Mode
from bsm.hrtf import hrtf_to_sh, hrtf_vector, sphere_head_surrogate
from bsm.render import (
    MultichannelSignal,
    WavError,
    bank_to_impulse_responses,
    interpolate_bank,
    read_wav,
    render,
    render_hoa_reference,
    write_wav,
)
from bsm.scene import plane_wave_sh
from bsm.sh import DirectionSet, ShVector, equal_angle_sampling, sh_basis_matrix

FS = 48000.0


def bank(freqs, left, right=None):
    left = np.asarray(left, dtype=complex)
    right = left if right is None else np.asarray(right, dtype=complex)
    return FilterBank(np.asarray(freqs, float), left, right, [Mode.complex_ls] * len(freqs))


def smooth_bank(rng, M, freqs):
    """Random filters that vary slowly with frequency."""
    knots = np.linspace(freqs[0], freqs[-1], 6)
    out = []
    for _ in range(2):
        vals = rng.standard_normal((6, M)) + 1j * rng.standard_normal((6, M))
        out.append(np.stack([np.interp(freqs, knots, vals[:, m].real) + 1j * np.interp(freqs, knots, vals[:, m].imag)
                             for m in range(M)], axis=1))
    return bank(freqs, out[0], out[1])


def test_all_ones_is_delayed_impulse():
    b = bank([75.0, 150.0, 10000.0], np.ones((3, 1)))
    ir = bank_to_impulse_responses(b, 2048, FS)
    assert ir.shape == (2, 1, 2048)
    expected = np.zeros(2048)
    expected[1024] = 1.0
    np.testing.assert_allclose(ir[0, 0], expected, atol=1e-12)


def test_pure_delay_shifts_impulse():
    """A bank applies conj(c), so c = exp(+i 2 pi f d) delays by d."""
    nfft, d = 1024, 37
    f = np.fft.rfftfreq(nfft, 1 / FS)
    c = np.exp(2j * np.pi * f * d / FS)[:, None]
    ir = bank_to_impulse_responses(bank(f, c), nfft, FS)
    assert np.argmax(ir[0, 0]) == nfft // 2 + d
    assert ir[0, 0, nfft // 2 + d] == pytest.approx(1.0, abs=1e-9)


def test_ir_spectrum_matches_interpolated_bank(rng):
    freqs = np.arange(75.0, 10000.0, 75.0)
    b = smooth_bank(rng, 3, freqs)
    nfft = 2048
    ir = bank_to_impulse_responses(b, nfft, FS)
    f = np.fft.rfftfreq(nfft, 1 / FS)
    H = np.fft.rfft(np.roll(ir, -nfft // 2, axis=-1), axis=-1)  # undo the latency shift
    target = np.conj(interpolate_bank(b, f))  # (2, F, M)
    band = (f > 0) & (f < FS / 2)
    err = np.sum(np.abs(H[:, :, band] - np.moveaxis(target, 1, 2)[:, :, band]) ** 2)
    assert 10 * np.log10(err / np.sum(np.abs(target[:, band]) ** 2)) < -80


def test_interpolation_holds_ends():
    b = bank([100.0, 200.0], [[1.0], [3.0]])
    np.testing.assert_allclose(interpolate_bank(b, [0.0, 150.0, 5000.0])[0, :, 0], [1, 2, 3])


def test_nfft_must_be_power_of_two():
    with pytest.raises(ValueError):
        bank_to_impulse_responses(bank([100.0], [[1.0]]), 1000, FS)


@pytest.fixture(scope="module")
def random_case():
    rng = np.random.default_rng(7)
    b = smooth_bank(rng, 4, np.arange(75.0, 10000.0, 75.0))
    x = MultichannelSignal(rng.standard_normal((4, 48000)), FS)
    return b, x


def test_render_matches_direct_convolution(random_case):
    b, x = random_case
    y = render(b, x, 2048)
    ir = bank_to_impulse_responses(b, 2048, FS)
    for ear, out in ((0, y.left), (1, y.right)):
        ref = sum(np.convolve(ir[ear, m], x.samples[m]) for m in range(4))
        assert out.size == ref.size == 48000 + 2047
        assert np.sqrt(np.mean((out - ref) ** 2) / np.mean(ref**2)) < 1e-6


def test_render_is_block_size_independent(random_case):
    b, x = random_case
    a = render(b, x, 2048, block_size=2048)
    c = render(b, x, 2048, block_size=4 * 2048)
    assert np.array_equal(a.left, c.left) and np.array_equal(a.right, c.right)
    with pytest.raises(ValueError):
        render(b, x, 2048, block_size=3000)


def test_render_linearity(random_case):
    b, x = random_case
    rng = np.random.default_rng(2)
    z = MultichannelSignal(rng.standard_normal(x.samples.shape), FS)
    mix = MultichannelSignal(2.5 * x.samples - 0.7 * z.samples, FS)
    lhs = render(b, mix).left
    rhs = 2.5 * render(b, x).left - 0.7 * render(b, z).left
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_identity_bank_delays_first_channel(rng):
    freqs = np.arange(75.0, 10000.0, 75.0)
    c = np.zeros((freqs.size, 3))
    c[:, 0] = 1.0
    x = MultichannelSignal(rng.standard_normal((3, 5000)), FS)
    y = render(bank(freqs, c), x, 1024)
    np.testing.assert_allclose(y.left[512 : 512 + 5000], x.samples[0], atol=1e-12)
    np.testing.assert_allclose(y.right, y.left)


def test_render_channel_mismatch(random_case):
    b, _ = random_case
    with pytest.raises(ValueError):
        render(b, MultichannelSignal(np.zeros((2, 100)), FS))


# SH-domain reference


def test_hoa_order_zero_literal():
    from bsm.hrtf import HrtfShCoeffs

    h = HrtfShCoeffs(0, np.array([1000.0]), np.array([[1.0 + 0j]]), np.array([[2.0 + 0j]]))
    p = render_hoa_reference(np.array([[np.sqrt(4 * np.pi)]]), h, 0)
    np.testing.assert_allclose(p, [[np.sqrt(4 * np.pi), 2 * np.sqrt(4 * np.pi)]])


@pytest.fixture(scope="module")
def hrtf_sh():
    grid = equal_angle_sampling(24)
    s = sphere_head_surrogate(grid=grid, freqs=[1000.0, 4000.0])
    return s, hrtf_to_sh(s, 24)


def _rel_err_db(a, b):
    return 10 * np.log10(np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(b) ** 2))


def test_plane_wave_order_14_matches_lookup(hrtf_sh):
    s, coeffs = hrtf_sh
    src = DirectionSet([1.2], [0.7])
    a = plane_wave_sh(src, np.ones((1, 2)), 24)
    p = render_hoa_reference(a, coeffs, 14)
    direct = np.array(hrtf_vector(s, src, 1000.0))[:, 0]
    assert _rel_err_db(p[0], direct) < -40
    # first order falls well short at 4 kHz
    direct4 = np.array(hrtf_vector(s, src, 4000.0))[:, 0]
    assert _rel_err_db(render_hoa_reference(a, coeffs, 1)[1], direct4) > _rel_err_db(p[1], direct4)


def test_hoa_equals_sphere_integral(rng):
    """For order-limited fields the coefficient sum equals the quadrature integral of a*h."""
    N = 5
    grid = equal_angle_sampling(2 * N)
    Y = sh_basis_matrix(grid, N)
    a_nm, h_nm = (rng.standard_normal((2, (N + 1) ** 2)) + 1j * rng.standard_normal((2, (N + 1) ** 2)))
    a = Y @ a_nm
    h = Y @ h_nm
    integral = np.sum(grid.weights * a * h)
    a_tilde = Y.conj().T @ (grid.weights * np.conj(a))  # SFT of conj(a)
    from bsm.hrtf import HrtfShCoeffs

    hs = HrtfShCoeffs(N, np.array([1.0]), h_nm[None], h_nm[None])
    p = render_hoa_reference(a_tilde[None], hs, N)[0, 0]
    assert abs(p - integral) <= 1e-8 * abs(integral)


def test_hoa_order_checks(hrtf_sh):
    _, coeffs = hrtf_sh
    with pytest.raises(ValueError):
        render_hoa_reference(np.zeros((2, 16)), coeffs, 4)
    with pytest.raises(ValueError):
        render_hoa_reference(np.zeros((2, 15)), coeffs, 2)


# WAV


def test_float32_round_trip_is_bit_identical(tmp_path, rng):
    x = MultichannelSignal(rng.uniform(-1, 1, (3, 1000)).astype(np.float32), FS)
    assert write_wav(tmp_path / "a.wav", x) == 0
    y = read_wav(tmp_path / "a.wav")
    assert y.channels == 3 and y.sample_rate == FS
    assert np.array_equal(y.samples, x.samples)


@pytest.mark.parametrize("enc,bound", [("pcm24", 2.0**-23), ("pcm16", 2.0**-15)])
def test_pcm_round_trip(tmp_path, rng, enc, bound):
    x = MultichannelSignal(rng.uniform(-1, 1, (2, 2000)), FS)
    x.samples[0, :2] = [1.0, -1.0]
    write_wav(tmp_path / "p.wav", x, enc)
    y = read_wav(tmp_path / "p.wav")
    assert y.channels == 2 and y.sample_rate == 48000
    assert np.max(np.abs(y.samples - x.samples)) <= bound
    with wave.open(str(tmp_path / "p.wav")) as w:
        assert w.getsampwidth() == (3 if enc == "pcm24" else 2)


def test_clipping_is_counted(tmp_path):
    x = MultichannelSignal(np.array([[0.5, 1.5, -2.0, 0.0]]), FS)
    assert write_wav(tmp_path / "c.wav", x, "pcm16") == 2
    assert read_wav(tmp_path / "c.wav").samples.max() <= 1.0


def test_wav_errors(tmp_path):
    x = MultichannelSignal(np.zeros((1, 100)), FS)
    write_wav(tmp_path / "t.wav", x, "pcm16")
    raw = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "t2.wav").write_bytes(raw[:30])
    with pytest.raises(WavError):
        read_wav(tmp_path / "t2.wav")
    with pytest.raises(WavError):
        write_wav(tmp_path / "u.wav", x, "pcm8")
    with pytest.raises(ValueError):
        MultichannelSignal(np.array([[np.nan]]), FS)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3000), st.sampled_from([256, 512]))
def test_render_length_property(T, nfft):
    b = bank([75.0, 20000.0], np.ones((2, 2)))
    x = MultichannelSignal(np.random.default_rng(T).standard_normal((2, T)), FS)
    y = render(b, x, nfft)
    assert y.left.size == T + nfft - 1
    np.testing.assert_allclose(y.left[nfft // 2 : nfft // 2 + T], x.samples.sum(0), atol=1e-10)
