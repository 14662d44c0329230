"""Figure-style evaluations of a filter bank: error curves over frequency,
effective HRTF order, and ITD/ILD sweeps over source azimuth.

Azimuth sweeps treat the source as a unit impulse plane wave on the
horizontal plane. Ear spectra on the bank's frequency grid are turned into
impulse responses by an inverse DFT whose bin spacing equals the grid step;
bins outside the grid (DC and above the top design frequency) are left empty
for both the reference and the reproduction, and a bulk delay of a quarter
frame keeps the two-sided responses inside the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array import rotate_array, steering_matrix
from .design import FilterBank
from .hrtf import HrtfSet, hrtf_to_sh, hrtf_vector
from .metrics import BinauralSignal, effective_sh_order, estimate_ild, estimate_itd, magnitude_nmse, nmse
from .sh import DirectionSet, equal_angle_sampling

ANALYSIS_RATE = 48000.0


def error_curves(bank: FilterBank, hrtf: HrtfSet, kind: str = "nmse") -> np.ndarray:
    """Per-frequency error in dB for both ears, shape (F, 2).

    ``kind`` is ``"nmse"`` or ``"magnitude"``; the HRTF target includes the
    bank's rotation.
    """
    fn = {"nmse": nmse, "magnitude": magnitude_nmse}[kind]
    spec = bank.spec
    out = np.empty((bank.freqs.size, 2))
    for i, f in enumerate(bank.freqs):
        V = spec.steering(f).values
        hl, hr = hrtf_vector(hrtf, spec.design_dirs, f, spec.rotation)
        out[i, 0] = fn(V, bank.left[i], hl, spec.snr_db)
        out[i, 1] = fn(V, bank.right[i], hr, spec.snr_db)
    return out


def hrtf_order_curve(hrtf: HrtfSet, freqs, order: int = 30, percent: float = 99.0, grid=None):
    """Effective SH order ``b_X`` of each ear's HRTF at every frequency, shape (F, 2).

    Analytic sets are sampled on an equal-angle grid exact to ``order``;
    measured sets use their own grid.
    """
    freqs = np.asarray(freqs, dtype=float)
    if hrtf.model is not None:
        grid = grid or equal_angle_sampling(order)
        left = np.empty((len(grid), freqs.size), dtype=complex)
        right = np.empty_like(left)
        for i, f in enumerate(freqs):
            left[:, i], right[:, i] = hrtf.model(grid, f)
        hrtf = HrtfSet(grid, freqs, left, right, hrtf.sample_rate)
    coeffs = hrtf_to_sh(hrtf, order)
    out = np.empty((freqs.size, 2), dtype=int)
    for i, f in enumerate(freqs):
        out[i, 0] = effective_sh_order(coeffs.at(f, "left"), percent)
        out[i, 1] = effective_sh_order(coeffs.at(f, "right"), percent)
    return out


def horizontal_directions(azimuths_deg) -> DirectionSet:
    az = np.radians(np.asarray(azimuths_deg, dtype=float))
    return DirectionSet(np.full(az.size, np.pi / 2), az)


@dataclass(eq=False)
class AzimuthResponses:
    """Ear spectra per source azimuth: arrays of shape (A, F) for each ear."""

    azimuths_deg: np.ndarray
    freqs: np.ndarray
    left: np.ndarray
    right: np.ndarray


def reproduced_responses(bank: FilterBank, azimuths_deg) -> AzimuthResponses:
    """``c^H v(phi)`` for a unit plane wave from each azimuth, noise-free."""
    dirs = horizontal_directions(azimuths_deg)
    spec = bank.spec
    left = np.empty((len(dirs), bank.freqs.size), dtype=complex)
    right = np.empty_like(left)
    for i, f in enumerate(bank.freqs):
        V = _steering_for(spec, dirs, f)
        left[:, i] = bank.left[i].conj() @ V
        right[:, i] = bank.right[i].conj() @ V
    return AzimuthResponses(np.asarray(azimuths_deg, dtype=float), bank.freqs.copy(), left, right)


def _steering_for(spec, dirs, f):
    geom = rotate_array(spec.geom, spec.array_rotation) if spec.array_rotation else spec.geom
    return steering_matrix(geom, dirs, f, spec.max_order).values


def reference_responses(hrtf: HrtfSet, freqs, azimuths_deg, rotation=(0.0, 0.0)) -> AzimuthResponses:
    dirs = horizontal_directions(azimuths_deg)
    freqs = np.asarray(freqs, dtype=float)
    left = np.empty((len(dirs), freqs.size), dtype=complex)
    right = np.empty_like(left)
    for i, f in enumerate(freqs):
        left[:, i], right[:, i] = hrtf_vector(hrtf, dirs, f, rotation)
    return AzimuthResponses(np.asarray(azimuths_deg, dtype=float), freqs.copy(), left, right)


def analysis_frame(freqs, sample_rate=ANALYSIS_RATE):
    """DFT length whose bins coincide with a uniform grid ``k * step``, and the bin indices."""
    freqs = np.asarray(freqs, dtype=float)
    step = freqs[0]
    idx = np.rint(freqs / step).astype(int)
    nfft = int(round(sample_rate / step))
    if not np.allclose(idx * step, freqs) or abs(nfft * step - sample_rate) > 1e-6 * sample_rate:
        raise ValueError("frequency grid must be k * step with step dividing the sample rate")
    if idx[-1] > nfft // 2:
        raise ValueError("frequency grid exceeds Nyquist at this sample rate")
    return nfft, idx


def impulse_signals(resp: AzimuthResponses, sample_rate=ANALYSIS_RATE) -> list:
    """One :class:`BinauralSignal` per azimuth from on-grid ear spectra."""
    nfft, idx = analysis_frame(resp.freqs, sample_rate)
    delay = nfft // 4
    shift = np.exp(-2j * np.pi * resp.freqs * delay / sample_rate)
    out = []
    for a in range(resp.azimuths_deg.size):
        chans = []
        for ear in (resp.left, resp.right):
            spec = np.zeros(nfft // 2 + 1, dtype=complex)
            spec[idx] = ear[a] * shift
            chans.append(np.fft.irfft(spec, nfft))
        out.append(BinauralSignal(chans[0], chans[1], sample_rate))
    return out


def itd_curve(signals) -> np.ndarray:
    return np.array([estimate_itd(s) for s in signals])


def ild_curve(signals) -> np.ndarray:
    """Per-azimuth ERB-band ILDs, shape (A, bands)."""
    return np.array([estimate_ild(s).per_band for s in signals])


@dataclass(eq=False)
class CueComparison:
    azimuths_deg: np.ndarray
    itd_ref: np.ndarray
    itd: np.ndarray
    ild_ref: np.ndarray  # (A, bands)
    ild: np.ndarray

    @property
    def itd_error(self):
        return np.abs(self.itd - self.itd_ref)

    @property
    def ild_error(self):
        return np.mean(np.abs(self.ild - self.ild_ref), axis=1)


def compare_cues(bank: FilterBank, hrtf: HrtfSet, azimuths_deg=None, sample_rate=ANALYSIS_RATE):
    """ITD and ILD of the reproduction and of the (rotated) reference per azimuth."""
    az = np.arange(360.0) if azimuths_deg is None else np.asarray(azimuths_deg, dtype=float)
    rep = impulse_signals(reproduced_responses(bank, az), sample_rate)
    ref = impulse_signals(reference_responses(hrtf, bank.freqs, az, bank.spec.rotation), sample_rate)
    return CueComparison(az, itd_curve(ref), itd_curve(rep), ild_curve(ref), ild_curve(rep))
