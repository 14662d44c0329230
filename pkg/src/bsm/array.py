"""Array transfer functions for free-field and rigid-sphere arrays.

Phase convention: a plane wave arriving from direction ``u`` has the value
``exp(1j * k * u . d)`` at position ``d`` (unit amplitude at the origin). Time
dependence is ``exp(+i w t)``, matching numpy's DFT sign, so scattered waves
are outgoing as ``exp(-ikr)`` and use spherical Hankel functions of the second
kind.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import special

from .sh import DirectionSet, rotate_directions

SPEED_OF_SOUND = 343.0


class ArrayKind(str, enum.Enum):
    free_field = "free_field"
    rigid_sphere = "rigid_sphere"


@dataclass(frozen=True)
class Mic:
    r: float
    theta: float
    phi: float


@dataclass(frozen=True)
class ArrayGeometry:
    kind: ArrayKind
    mics: tuple[Mic, ...]
    sphere_radius: float = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        object.__setattr__(self, "mics", tuple(self.mics))
        if not self.mics:
            raise ValueError("array needs at least one microphone")
        if self.kind is ArrayKind.rigid_sphere:
            if self.sphere_radius <= 0:
                raise ValueError("rigid_sphere arrays need a positive sphere_radius")
            for mic in self.mics:
                if mic.r < self.sphere_radius * (1 - 1e-12):
                    raise ValueError("microphones cannot sit inside the rigid sphere")

    @property
    def num_mics(self):
        return len(self.mics)

    def mic_directions(self):
        return DirectionSet([m.theta for m in self.mics], [m.phi for m in self.mics])

    def mic_radii(self):
        return np.array([m.r for m in self.mics])

    def positions(self):
        """Cartesian mic positions, shape (M, 3)."""
        return self.mic_radii()[:, None] * self.mic_directions().cartesian()

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind.value,
            "sphere_radius_m": self.sphere_radius,
            "mics": [
                {"r_m": m.r, "theta_deg": float(np.degrees(m.theta)), "phi_deg": float(np.degrees(m.phi))}
                for m in self.mics
            ],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            mics = [
                Mic(float(m["r_m"]), np.radians(float(m["theta_deg"])), np.radians(float(m["phi_deg"])))
                for m in d["mics"]
            ]
            return cls(d["kind"], tuple(mics), float(d.get("sphere_radius_m", 0.0)), d.get("name", ""))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed geometry: {exc}") from exc


def save_geometry(path, geom: ArrayGeometry):
    Path(path).write_text(json.dumps(geom.to_dict(), indent=2))


def load_geometry(path) -> ArrayGeometry:
    return ArrayGeometry.from_dict(json.loads(Path(path).read_text()))


def semi_circular_preset(M: int = 6, radius: float = 0.1) -> ArrayGeometry:
    """M mics on the horizontal semicircle of a rigid sphere, phi from +90 to -90 deg."""
    if M < 2:
        raise ValueError("M must be >= 2")
    mics = tuple(
        Mic(radius, np.pi / 2, np.pi / 2 - np.pi * (m - 1) / (M - 1)) for m in range(1, M + 1)
    )
    return ArrayGeometry(ArrayKind.rigid_sphere, mics, radius, f"semi{M}")


def rotate_array(geom: ArrayGeometry, dphi: float) -> ArrayGeometry:
    """Yaw every microphone by ``dphi`` about +z."""
    mics = tuple(
        Mic(m.r, m.theta, float(np.mod(m.phi + dphi, 2 * np.pi))) for m in geom.mics
    )
    return replace(geom, mics=mics)


def wavenumber(freq):
    return 2 * np.pi * np.asarray(freq, dtype=float) / SPEED_OF_SOUND


# -- radial functions ---------------------------------------------------------


def spherical_hankel2(n, x, derivative=False):
    return special.spherical_jn(n, x, derivative) - 1j * special.spherical_yn(n, x, derivative)


def rigid_sphere_radial(order: int, kr, ka) -> np.ndarray:
    """Radial terms ``b_n(kr; ka)`` for n = 0..order (last axis).

    ``b_n = 4 pi i^n (j_n(kr) - j_n'(ka)/h_n'(ka) h_n(kr))``; on the surface
    (r == a) the Wronskian form ``4 pi i^n * (-i) / ((ka)^2 h_n'(ka))`` is used,
    which avoids cancelling the incident and scattered parts at high n.
    """
    n = np.arange(order + 1)
    kr = np.asarray(kr, dtype=float)[..., None]
    ka = np.asarray(ka, dtype=float)[..., None]
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dh = spherical_hankel2(n, ka, derivative=True)
        surface = -1j / (ka**2 * dh)
        on_surface = np.isclose(kr, ka, rtol=1e-12, atol=0)
        if np.all(on_surface):
            radial = surface
        else:
            jr = special.spherical_jn(n, kr)
            hr = spherical_hankel2(n, kr)
            general = jr - special.spherical_jn(n, ka, derivative=True) / dh * hr
            radial = np.where(on_surface, surface, general)
    radial = np.where(np.isfinite(radial), radial, 0.0)
    return 4 * np.pi * (1j**n) * radial


def _legendre_series(order, x):
    """P_n(x) for n = 0..order, stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    P = np.empty(x.shape + (order + 1,))
    P[..., 0] = 1.0
    if order >= 1:
        P[..., 1] = x
    for n in range(2, order + 1):
        P[..., n] = ((2 * n - 1) * x * P[..., n - 1] - (n - 1) * P[..., n - 2]) / n
    return P


def rigid_sphere_pressure(k, a, r, cos_angle, order):
    """Pressure on/around a rigid sphere of radius ``a`` for unit plane waves.

    Uses the addition theorem ``sum_m Y_n^m(u)* Y_n^m(d) = (2n+1)/(4pi) P_n(cos)``.
    ``cos_angle`` is the cosine between arrival direction and the field point;
    ``r`` must broadcast against it.
    Returns (pressure, warning_flag).
    """
    if k == 0:
        return np.ones(np.shape(cos_angle), dtype=complex), False
    b = rigid_sphere_radial(order, k * np.asarray(r), k * a)
    P = _legendre_series(order, cos_angle)
    weights = b * (2 * np.arange(order + 1) + 1) / (4 * np.pi)
    mag = np.abs(b)
    warn = bool(np.any(mag[..., -1] > 1e-6 * mag.max(axis=-1)))
    return np.sum(weights * P, axis=-1), warn


@dataclass(frozen=True, eq=False)
class SteeringMatrix:
    freq: float
    wavenumber: float
    values: np.ndarray  # (M, Q)
    order_warning: bool = field(default=False)

    @property
    def shape(self):
        return self.values.shape


DEFAULT_SH_ORDER = 30


def steering_matrix(
    geom: ArrayGeometry, dirs: DirectionSet, freq: float, max_order: int = DEFAULT_SH_ORDER
) -> SteeringMatrix:
    """ATF matrix V (M x Q) at one frequency."""
    if freq < 0:
        raise ValueError("freq must be >= 0")
    k = float(wavenumber(freq))
    M, Q = geom.num_mics, len(dirs)
    if freq == 0:
        return SteeringMatrix(0.0, 0.0, np.ones((M, Q), dtype=complex))
    u = dirs.cartesian()
    if geom.kind is ArrayKind.free_field:
        V = np.exp(1j * k * geom.positions() @ u.T)
        return SteeringMatrix(float(freq), k, V)
    cosang = np.clip(geom.mic_directions().cartesian() @ u.T, -1.0, 1.0)
    r = geom.mic_radii()[:, None]
    V, warn = rigid_sphere_pressure(k, geom.sphere_radius, r, cosang, max_order)
    return SteeringMatrix(float(freq), k, V, warn)


def steering_equivalent(geom, dirs, freq, dphi, max_order=DEFAULT_SH_ORDER):
    """Steering matrix of the yawed array, computed by counter-rotating the sources."""
    return steering_matrix(geom, rotate_directions(dirs, 0.0, -dphi), freq, max_order)
