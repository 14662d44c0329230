"""Free-field plane-wave scenes: array recordings, reference binaural signals
and SH coefficients of the plane-wave density.

Time-domain synthesis runs on 2048-sample Hann-windowed blocks with 50 %
overlap; within a block each DFT bin is multiplied by the transfer function of
that frequency and the blocks are overlap-added.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .array import DEFAULT_SH_ORDER, ArrayGeometry, steering_matrix
from .hrtf import HrtfSet, hrtf_vector
from .metrics import BinauralSignal
from .render import MultichannelSignal, read_wav
from .sh import Direction, DirectionSet, rotate_directions, sh_basis_matrix

BLOCK = 2048
HOP = BLOCK // 2


@dataclass(frozen=True, eq=False)
class Source:
    """A plane-wave source. ``signal`` is a sample vector or the tag
    ``"impulse"`` / ``"noise"``."""

    direction: Direction
    signal: object = "impulse"


@dataclass(frozen=True, eq=False)
class Scene:
    sources: tuple
    snr_db: float | None = None
    sample_rate: float = 48000.0
    duration: float = 1.0
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise ValueError("scene needs at least one source")
        if self.sample_rate <= 0 or self.duration <= 0:
            raise ValueError("sample_rate and duration must be positive")

    @property
    def length(self):
        return int(round(self.duration * self.sample_rate))

    def directions(self) -> DirectionSet:
        return DirectionSet([s.direction.theta for s in self.sources], [s.direction.phi for s in self.sources])

    def source_signals(self) -> np.ndarray:
        """(S, T) source waveforms; tagged signals are generated from the seed."""
        if "signals" in self._cache:
            return self._cache["signals"]
        T = self.length
        rng = np.random.default_rng([self.seed, 1])
        out = np.zeros((len(self.sources), T))
        for i, src in enumerate(self.sources):
            if isinstance(src.signal, str):
                if src.signal == "impulse":
                    out[i, 0] = 1.0
                elif src.signal == "noise":
                    out[i] = rng.standard_normal(T) * 0.1
                else:
                    raise ValueError(f"unknown source tag {src.signal!r}")
            else:
                s = np.asarray(src.signal, dtype=float)
                out[i, : min(T, s.size)] = s[:T]
        self._cache["signals"] = out
        return out


def load_scene(path) -> Scene:
    """JSON ``{sources: [{theta_deg, phi_deg, wav_path | "impulse" | "noise"}], snr_db, duration_s, seed}``."""
    path = Path(path)
    d = json.loads(path.read_text())
    sources = []
    fs = float(d.get("sample_rate", 48000.0))
    for s in d["sources"]:
        direction = Direction(np.radians(float(s["theta_deg"])), np.radians(float(s["phi_deg"])))
        if "wav_path" in s:
            wav = read_wav(path.parent / s["wav_path"])
            if wav.sample_rate != fs:
                raise ValueError(f"{s['wav_path']}: sample rate {wav.sample_rate:g}, scene uses {fs:g}")
            sig = wav.samples[0]
        else:
            sig = s.get("signal", "impulse")
        sources.append(Source(direction, sig))
    snr = d.get("snr_db")
    return Scene(tuple(sources), None if snr is None else float(snr), fs, float(d["duration_s"]), int(d.get("seed", 0)))


def _blocks(T):
    """Padded length and block start indices covering ``T`` samples."""
    n = -(-(T + HOP) // HOP) + 1
    return n * HOP + HOP, range(0, n * HOP, HOP)


def _block_filter(signals, transfer):
    """Apply per-bin transfer functions to (S, T) signals.

    ``transfer`` maps (S, F) source bins to (C, F) output bins. The periodic
    Hann window at 50 % overlap sums to one, so a flat transfer function
    reproduces the input exactly.
    """
    S, T = signals.shape
    total, starts = _blocks(T)
    padded = np.zeros((S, total))
    padded[:, HOP : HOP + T] = signals
    win = get_window("hann", BLOCK)
    out = None
    for t0 in starts:
        spec = np.fft.rfft(padded[:, t0 : t0 + BLOCK] * win, axis=1)
        y = np.fft.irfft(transfer(spec), BLOCK, axis=1)
        if out is None:
            out = np.zeros((y.shape[0], total))
        out[:, t0 : t0 + BLOCK] += y
    return out[:, HOP : HOP + T]


def _freqs(fs):
    return np.fft.rfftfreq(BLOCK, 1.0 / fs)


def array_transfer(scene: Scene, geom: ArrayGeometry, max_order=DEFAULT_SH_ORDER) -> np.ndarray:
    """Steering matrices on the block DFT grid, shape (F, M, S)."""
    dirs = scene.directions()
    return np.stack([steering_matrix(geom, dirs, f, max_order).values for f in _freqs(scene.sample_rate)])


def simulate_array(scene: Scene, geom: ArrayGeometry, max_order=DEFAULT_SH_ORDER) -> MultichannelSignal:
    """Recordings ``x = V s + n``; noise is white Gaussian at ``snr_db`` below
    the mean per-mic signal power (omitted when ``snr_db`` is None)."""
    V = array_transfer(scene, geom, max_order)
    x = _block_filter(scene.source_signals(), lambda S: np.einsum("fms,sf->mf", V, S))
    if scene.snr_db is not None and np.isfinite(scene.snr_db):
        power = np.mean(x**2)
        rng = np.random.default_rng([scene.seed, 2])
        x = x + rng.standard_normal(x.shape) * np.sqrt(power * 10 ** (-scene.snr_db / 10))
    return MultichannelSignal(x, scene.sample_rate)


def simulate_reference_binaural(scene: Scene, hrtf: HrtfSet, rotation=(0.0, 0.0)) -> BinauralSignal:
    """Noise-free ``p = h^T s`` with optionally rotated HRTFs.

    Analytic sets are applied per block bin; measured sets are convolved with
    the impulse response of the nearest (rotated) grid direction.
    """
    s = scene.source_signals()
    dirs = scene.directions()
    if hrtf.model is None and hrtf.irs is not None and hrtf.sample_rate == scene.sample_rate:
        idx = hrtf.nearest(rotate_directions(dirs, *rotation))
        out = np.zeros((2, s.shape[1]))
        for i, q in enumerate(idx):
            for e in range(2):
                out[e] += np.convolve(s[i], hrtf.irs[q, e].astype(float))[: s.shape[1]]
        return BinauralSignal(out[0], out[1], scene.sample_rate)
    H = np.stack([np.stack(hrtf_vector(hrtf, dirs, f, rotation)) for f in _freqs(scene.sample_rate)])  # (F, 2, S)
    out = _block_filter(s, lambda S: np.einsum("fes,sf->ef", H, S))
    return BinauralSignal(out[0], out[1], scene.sample_rate)


def plane_wave_sh(dirs: DirectionSet, amplitudes, order: int) -> np.ndarray:
    """SH coefficients of the conjugated plane-wave density.

    ``amplitudes`` is (S, F); a unit wave from ``Omega_s`` contributes
    ``conj(s) * conj(Y_nm(Omega_s))``. Returns (F, (order+1)^2).
    """
    Y = sh_basis_matrix(dirs, order)  # (S, K)
    return np.conj(np.asarray(amplitudes)).T @ np.conj(Y)


def scene_to_sh(scene: Scene, order: int, nfft: int | None = None):
    """Frequencies and plane-wave-density coefficients of the scene's source spectra."""
    if order < 0:
        raise ValueError("order must be >= 0")
    s = scene.source_signals()
    nfft = nfft or s.shape[1]
    spec = np.fft.rfft(s, nfft, axis=1)
    return np.fft.rfftfreq(nfft, 1.0 / scene.sample_rate), plane_wave_sh(scene.directions(), spec, order)
