"""HRTF sets: container I/O, directional lookup, SH coefficients and an
analytic rigid-sphere head model.

Container layout (a directory)::

    meta.json  {"name", "sample_rate", "ir_length", "grid": [{"theta_deg", "phi_deg", "weight"?}]}
    irs.f32    little-endian float32, [direction][ear (L, R)][sample]

HRTFs share the array module's phase convention: they are the ear pressure
for a unit plane wave, referenced to the head centre.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .array import rigid_sphere_pressure, wavenumber
from .sh import FOUR_PI, DirectionSet, Scheme, ShVector, rotate_directions, sft_forward

IR_DTYPE = np.dtype("<f4")
MIN_GRID_DIRECTIONS = 4


class HrtfFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HrtfSet:
    """Two-ear transfer functions on a direction grid.

    ``left``/``right`` have shape (Q_grid, F). ``model``, when present, is an
    exact evaluator ``model(dirs, freq) -> (left, right)`` used for lookups
    instead of the nearest grid point. ``irs`` keeps loaded float32 impulse
    responses so that a load/write round trip is lossless.
    """

    grid: DirectionSet
    freqs: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sample_rate: float
    metadata: dict = field(default_factory=dict)
    model: Callable | None = None
    irs: np.ndarray | None = None

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        if freqs.ndim != 1 or np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        shape = (len(self.grid), freqs.size)
        for ear in ("left", "right"):
            arr = np.asarray(getattr(self, ear), dtype=complex)
            if arr.shape != shape:
                raise ValueError(f"{ear} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, ear, arr)
        object.__setattr__(self, "freqs", freqs)

    def freq_index(self, freq):
        return int(np.argmin(np.abs(self.freqs - freq)))

    def nearest(self, dirs: DirectionSet):
        """Grid index of the nearest direction for every entry of ``dirs``."""
        g = self.grid.cartesian()
        return np.argmax(dirs.cartesian() @ g.T, axis=1)


@dataclass(frozen=True, eq=False)
class HrtfShCoeffs:
    order: int
    freqs: np.ndarray
    left_nm: np.ndarray  # (F, (order+1)**2)
    right_nm: np.ndarray

    def at(self, freq, ear="left") -> ShVector:
        i = int(np.argmin(np.abs(self.freqs - freq)))
        return ShVector(self.order, (self.left_nm if ear == "left" else self.right_nm)[i])


def hrtf_vector(hrtf: HrtfSet, dirs: DirectionSet, freq: float, rotation=(0.0, 0.0)):
    """HRTFs at the (optionally rotated) directions, one array per ear."""
    dtheta, dphi = rotation
    if dtheta or dphi:
        dirs = rotate_directions(dirs, dtheta, dphi)
    if hrtf.model is not None:
        return hrtf.model(dirs, freq)
    f = hrtf.freq_index(freq)
    idx = hrtf.nearest(dirs)
    return hrtf.left[idx, f], hrtf.right[idx, f]


# -- analytic head model -------------------------------------------------------

DEFAULT_HEAD_RADIUS = 0.0875
DEFAULT_EAR_AZIMUTHS = (np.radians(100.0), np.radians(-100.0))


def _surrogate_order(k, radius):
    return int(np.ceil(2 * k * radius)) + 10


def _sphere_ear_response(dirs, freq, radius, ear_phi):
    k = float(wavenumber(freq))
    # cosine of the angle to an ear on the horizontal plane; written out
    # explicitly so that left(phi) == right(-phi) holds bit for bit
    cosang = np.clip(np.sin(dirs.theta) * np.cos(dirs.phi - ear_phi), -1.0, 1.0)
    p, _ = rigid_sphere_pressure(k, radius, radius, cosang, _surrogate_order(k, radius))
    return p


def sphere_head_model(radius=DEFAULT_HEAD_RADIUS, ear_azimuths=DEFAULT_EAR_AZIMUTHS):
    left_phi, right_phi = ear_azimuths

    def model(dirs, freq):
        return (
            _sphere_ear_response(dirs, freq, radius, left_phi),
            _sphere_ear_response(dirs, freq, radius, right_phi),
        )

    return model


def sphere_head_surrogate(
    radius: float = DEFAULT_HEAD_RADIUS,
    grid: DirectionSet | None = None,
    freqs=None,
    ear_azimuths=DEFAULT_EAR_AZIMUTHS,
    sample_rate: float = 48000.0,
) -> HrtfSet:
    """Rigid-sphere head with point ears on the horizontal plane.

    ``freqs`` defaults to the rFFT grid of a 256-sample response at
    ``sample_rate``; ``grid`` defaults to a 2-degree horizontal ring.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if grid is None:
        phi = np.radians(np.arange(0.0, 360.0, 2.0))
        grid = DirectionSet(np.full(phi.size, np.pi / 2), phi)
    if freqs is None:
        freqs = np.fft.rfftfreq(256, 1.0 / sample_rate)
    freqs = np.asarray(freqs, dtype=float)
    model = sphere_head_model(radius, ear_azimuths)
    left = np.empty((len(grid), freqs.size), dtype=complex)
    right = np.empty_like(left)
    for i, f in enumerate(freqs):
        left[:, i], right[:, i] = model(grid, f)
    meta = {"name": f"sphere-head r={radius:g} m", "radius_m": str(radius)}
    return HrtfSet(grid, freqs, left, right, sample_rate, meta, model)


# -- SH domain -------------------------------------------------------------------


def hrtf_to_sh(hrtf: HrtfSet, order: int) -> HrtfShCoeffs:
    left = sft_forward(hrtf.left, hrtf.grid, order).coeffs.T
    right = sft_forward(hrtf.right, hrtf.grid, order).coeffs.T
    return HrtfShCoeffs(order, hrtf.freqs.copy(), left, right)


# -- container I/O ---------------------------------------------------------------


def hrirs_from_spectra(hrtf: HrtfSet) -> np.ndarray:
    """Time-domain responses [direction][ear][sample] from an rFFT-grid set."""
    n = 2 * (hrtf.freqs.size - 1)
    expected = np.fft.rfftfreq(n, 1.0 / hrtf.sample_rate)
    if expected.shape != hrtf.freqs.shape or not np.allclose(expected, hrtf.freqs):
        raise HrtfFormatError("set is not sampled on an rFFT grid; cannot form impulse responses")
    return np.stack(
        [np.fft.irfft(hrtf.left, n, axis=1), np.fft.irfft(hrtf.right, n, axis=1)], axis=1
    )


def write_hrtf(path, hrtf: HrtfSet):
    path = Path(path)
    irs = hrtf.irs if hrtf.irs is not None else hrirs_from_spectra(hrtf)
    irs = np.ascontiguousarray(irs, dtype=IR_DTYPE)
    grid = []
    for i in range(len(hrtf.grid)):
        row = {
            "theta_deg": float(np.degrees(hrtf.grid.theta[i])),
            "phi_deg": float(np.degrees(hrtf.grid.phi[i])),
        }
        if hrtf.grid.weights is not None:
            row["weight"] = float(hrtf.grid.weights[i])
        grid.append(row)
    meta = {
        "name": hrtf.metadata.get("name", ""),
        "sample_rate": hrtf.sample_rate,
        "ir_length": int(irs.shape[2]),
        "grid": grid,
    }
    path.mkdir(parents=True, exist_ok=True)
    _atomic_write(path / "irs.f32", irs.tobytes())
    _atomic_write(path / "meta.json", json.dumps(meta, indent=1).encode())


def _atomic_write(target: Path, data: bytes):
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(target)


def load_hrtf(path, sample_rate=None, min_directions=MIN_GRID_DIRECTIONS) -> HrtfSet:
    """Read a container directory.

    ``sample_rate``, if given, must match the stored rate. Sets with fewer
    than ``min_directions`` grid points are rejected as degenerate.
    """
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
        fs = float(meta["sample_rate"])
        n = int(meta["ir_length"])
        rows = meta["grid"]
        theta = np.radians([float(r["theta_deg"]) for r in rows])
        phi = np.radians([float(r["phi_deg"]) for r in rows])
        weights = [float(r["weight"]) for r in rows] if rows and all("weight" in r for r in rows) else None
        raw = np.fromfile(path / "irs.f32", dtype=IR_DTYPE)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise HrtfFormatError(f"{path}: malformed HRTF container ({exc})") from exc
    if sample_rate is not None and float(sample_rate) != fs:
        raise HrtfFormatError(f"{path}: sample rate {fs:g} Hz, expected {float(sample_rate):g} Hz")
    Q = len(rows)
    if Q < min_directions:
        raise HrtfFormatError(f"{path}: degenerate grid with {Q} direction(s)")
    if n < 2 or raw.size != Q * 2 * n:
        raise HrtfFormatError(f"{path}: irs.f32 holds {raw.size} samples, expected {Q * 2 * n}")
    irs = raw.reshape(Q, 2, n)
    if weights is not None and abs(sum(weights) - FOUR_PI) > 1e-6 * FOUR_PI:
        weights = None
    grid = DirectionSet(theta, phi, weights, Scheme.table_import)
    spec = np.fft.rfft(irs.astype(float), axis=2)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    return HrtfSet(grid, freqs, spec[:, 0], spec[:, 1], fs, {"name": meta.get("name", "")}, None, irs)


def resolve_hrtf(source: str, **surrogate_kwargs) -> HrtfSet:
    """``surrogate[:radius_m]`` or a container directory."""
    if source.startswith("surrogate"):
        _, _, radius = source.partition(":")
        return sphere_head_surrogate(float(radius) if radius else DEFAULT_HEAD_RADIUS, **surrogate_kwargs)
    return load_hrtf(source)
