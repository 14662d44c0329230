"""Binaural rendering: filter banks to impulse responses, overlap-save
convolution of microphone signals, the SH-domain reference renderer and
WAV input/output.

A bank applies ``p_hat = c^H x``, so the impulse response of mic ``m`` is the
inverse DFT of ``conj(c_m)``. Responses are circularly shifted by ``nfft/2``
samples; that shift is the renderer's latency.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .design import FilterBank
from .hrtf import HrtfShCoeffs
from .metrics import BinauralSignal

DEFAULT_NFFT = 2048
DEFAULT_RATE = 48000.0


class WavError(ValueError):
    pass


@dataclass(eq=False)
class MultichannelSignal:
    samples: np.ndarray  # (channels, T)
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[None]
        if x.ndim != 2:
            raise ValueError("samples must be (channels, T)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        self.samples = x

    @property
    def channels(self):
        return self.samples.shape[0]

    @property
    def length(self):
        return self.samples.shape[1]


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


def interpolate_bank(bank: FilterBank, freqs) -> np.ndarray:
    """Filters on ``freqs`` by linear interpolation of real and imaginary
    parts, holding the end values outside the designed band. Shape (2, F, M)."""
    out = np.empty((2, len(freqs), bank.num_mics), dtype=complex)
    for e, c in enumerate((bank.left, bank.right)):
        for m in range(bank.num_mics):
            re = np.interp(freqs, bank.freqs, c[:, m].real)
            im = np.interp(freqs, bank.freqs, c[:, m].imag)
            out[e, :, m] = re + 1j * im
    return out


def bank_to_impulse_responses(bank: FilterBank, nfft: int = DEFAULT_NFFT, sample_rate: float = DEFAULT_RATE):
    """Real impulse responses, shape (2, M, nfft), latency ``nfft // 2``.

    The imaginary parts at DC and Nyquist are dropped so the responses are real.
    """
    if not _is_pow2(int(nfft)) or int(nfft) != nfft:
        raise ValueError(f"nfft must be a power of two, got {nfft}")
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    H = np.conj(interpolate_bank(bank, f))  # (2, F, M)
    H = H * np.where(np.arange(f.size) % 2, -1.0, 1.0)[None, :, None]  # shift by nfft/2
    return np.fft.irfft(np.moveaxis(H, 1, 2), nfft, axis=-1)


def _overlap_save(irs, x, hop, batch_hops):
    """Sum over channels of ``irs[c] * x[c]``, full linear convolution.

    The FFT size (2 * hop) and the per-segment arithmetic do not depend on
    ``batch_hops``, so results are bitwise identical for any batching.
    """
    C, L = irs.shape
    T = x.shape[1]
    n_out = T + L - 1
    nseg = -(-n_out // hop)
    N = 2 * hop
    Hf = np.fft.rfft(irs, N, axis=1)
    padded = np.zeros((C, hop + nseg * hop))
    padded[:, hop : hop + T] = x
    y = np.empty(nseg * hop)
    for s0 in range(0, nseg, batch_hops):
        s1 = min(s0 + batch_hops, nseg)
        idx = np.arange(s0, s1)[:, None] * hop + np.arange(N)[None]
        seg = padded[:, idx]  # (C, S, N)
        Y = np.fft.rfft(seg, axis=2) * Hf[:, None, :]
        acc = Y[0].copy()
        for c in range(1, C):
            acc += Y[c]
        y[s0 * hop : s1 * hop] = np.fft.irfft(acc, N, axis=1)[:, hop:].reshape(-1)
    return y[:n_out]


def render(
    bank: FilterBank, x: MultichannelSignal, nfft: int = DEFAULT_NFFT, block_size: int | None = None
) -> BinauralSignal:
    """Binaural output ``c^H x`` of length ``T + nfft - 1`` with latency ``nfft // 2``.

    ``block_size`` (a multiple of ``nfft``) only sets how much input is
    transformed at once.
    """
    if x.channels != bank.num_mics:
        raise ValueError(f"bank has {bank.num_mics} mics, signal has {x.channels} channels")
    irs = bank_to_impulse_responses(bank, nfft, x.sample_rate)
    block_size = block_size or 4 * nfft
    if block_size % nfft:
        raise ValueError("block_size must be a multiple of nfft")
    batch = block_size // nfft
    left = _overlap_save(irs[0], x.samples, nfft, batch)
    right = _overlap_save(irs[1], x.samples, nfft, batch)
    return BinauralSignal(left, right, x.sample_rate)


def render_hoa_reference(a_tilde, hrtf_sh: HrtfShCoeffs, order: int, a_order: int | None = None):
    """Ear spectra ``sum_nm conj(a~_nm) h_nm`` per frequency, shape (F, 2).

    ``a_tilde`` (F, K) holds SH coefficients of the conjugated plane-wave
    density, on the same frequencies as ``hrtf_sh``. ``order`` may not exceed
    either representation's order.
    """
    a_tilde = np.atleast_2d(np.asarray(a_tilde))
    a_order = a_order if a_order is not None else int(round(np.sqrt(a_tilde.shape[1]))) - 1
    if (a_order + 1) ** 2 != a_tilde.shape[1]:
        raise ValueError("a_tilde width is not a full SH order")
    if order > min(a_order, hrtf_sh.order) or order < 0:
        raise ValueError(f"order {order} exceeds min(N_a={a_order}, N_H={hrtf_sh.order})")
    if a_tilde.shape[0] != hrtf_sh.freqs.size:
        raise ValueError("frequency counts differ")
    K = (order + 1) ** 2
    a = np.conj(a_tilde[:, :K])
    return np.stack(
        [np.sum(a * hrtf_sh.left_nm[:, :K], axis=1), np.sum(a * hrtf_sh.right_nm[:, :K], axis=1)], axis=1
    )


# -- WAV I/O ---------------------------------------------------------------------------

ENCODINGS = ("pcm16", "pcm24", "float32")


def read_wav(path) -> MultichannelSignal:
    """16/24/32-bit PCM or 32-bit float WAV as floats in [-1, 1)."""
    try:
        fs, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as exc:
        raise WavError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:  # 24-bit data is returned left-justified in int32
        x = data / 2147483648.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(float)
    else:
        raise WavError(f"{path}: unsupported sample type {data.dtype}")
    x = x.T if x.ndim == 2 else x[None]
    return MultichannelSignal(np.ascontiguousarray(x), float(fs))


def write_wav(path, signal: MultichannelSignal | BinauralSignal, encoding: str = "float32") -> int:
    """Write atomically; samples are clamped to [-1, 1]. Returns the clip count."""
    if encoding not in ENCODINGS:
        raise WavError(f"unsupported encoding {encoding!r}")
    if isinstance(signal, BinauralSignal):
        signal = MultichannelSignal(np.stack([signal.left, signal.right]), signal.sample_rate)
    x = signal.samples
    clips = int(np.count_nonzero(np.abs(x) > 1.0))
    x = np.clip(x, -1.0, 1.0)
    fs = int(round(signal.sample_rate))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if encoding == "float32":
        wavfile.write(tmp, fs, np.ascontiguousarray(x.T, dtype=np.float32))
    else:
        bits = 16 if encoding == "pcm16" else 24
        scale = 2 ** (bits - 1)
        q = np.ascontiguousarray(np.clip(np.rint(x.T * scale), -scale, scale - 1).astype("<i4"))
        raw = q.astype("<i2").tobytes() if bits == 16 else q.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
        with wave.open(str(tmp), "wb") as w:
            w.setnchannels(x.shape[0])
            w.setsampwidth(bits // 8)
            w.setframerate(fs)
            w.writeframes(raw)
    tmp.replace(path)
    return clips
