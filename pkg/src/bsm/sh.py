"""Spherical coordinates, complex spherical harmonics and discrete SFTs.

Conventions used throughout the package:

* ``theta`` is the polar angle measured from +z (0..pi), ``phi`` the azimuth
  measured from +x towards +y, normalized into [0, 2*pi).
* Complex SH with Condon-Shortley phase, orthonormal over the unit sphere::

      Y_n^m(theta, phi) = sqrt((2n+1)/(4 pi) (n-m)!/(n+m)!) P_n^m(cos theta) e^{i m phi}

* Coefficients are stored in the linear order ``n**2 + n + m``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FOUR_PI = 4.0 * np.pi


class SamplingError(ValueError):
    """Raised when a direction set cannot support the requested SH order."""


class Scheme(str, enum.Enum):
    spiral = "spiral"
    equal_angle = "equal_angle"
    table_import = "table_import"
    custom = "custom"


@dataclass(frozen=True)
class Direction:
    theta: float
    phi: float

    def __post_init__(self):
        theta, phi = _wrap(np.asarray(self.theta, float), np.asarray(self.phi, float))
        object.__setattr__(self, "theta", float(theta))
        object.__setattr__(self, "phi", float(phi))


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Points on the unit sphere, optionally with quadrature weights.

    Angles are stored as read-only float arrays. ``weights`` (if given) must
    sum to 4*pi.
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray | None = None
    scheme: Scheme = Scheme.custom

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).ravel()
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float)).ravel()
        if theta.shape != phi.shape:
            raise ValueError("theta and phi must have the same length")
        theta, phi = _wrap(theta, phi)
        theta.flags.writeable = False
        phi.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel().copy()
            if w.shape != theta.shape:
                raise ValueError("weights must match the number of directions")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if abs(w.sum() - FOUR_PI) > 1e-6 * FOUR_PI:
                raise ValueError(f"weights must sum to 4*pi, got {w.sum():.8g}")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.theta.size

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Direction(self.theta[idx], self.phi[idx])
        return DirectionSet(self.theta[idx], self.phi[idx], scheme=Scheme.custom)

    def __iter__(self):
        for t, p in zip(self.theta, self.phi):
            yield Direction(t, p)

    @classmethod
    def from_directions(cls, dirs, weights=None, scheme=Scheme.custom):
        dirs = list(dirs)
        return cls(
            np.array([d.theta for d in dirs]),
            np.array([d.phi for d in dirs]),
            weights,
            scheme,
        )

    @classmethod
    def from_degrees(cls, theta_deg, phi_deg, weights=None, scheme=Scheme.custom):
        return cls(np.radians(theta_deg), np.radians(phi_deg), weights, scheme)

    def cartesian(self):
        """Unit vectors, shape (Q, 3)."""
        st = np.sin(self.theta)
        return np.stack(
            [st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=-1
        )


def _wrap(theta, phi):
    """Fold theta into [0, pi] (reflecting across the poles) and phi into [0, 2pi)."""
    theta = np.mod(theta, 2 * np.pi)
    over = theta > np.pi
    theta = np.where(over, 2 * np.pi - theta, theta)
    phi = np.where(over, phi + np.pi, phi)
    phi = np.mod(phi, 2 * np.pi)
    # mod can round up to exactly 2*pi for tiny negative inputs
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    return theta, phi


def sh_index(n, m):
    return n * n + n + m


def sh_orders(order):
    """Arrays ``(n, m)`` of length (order+1)**2 in linear SH order."""
    n = np.concatenate([np.full(2 * k + 1, k) for k in range(order + 1)])
    m = np.concatenate([np.arange(-k, k + 1) for k in range(order + 1)])
    return n, m


def _legendre_normalized(order, x):
    """Normalized associated Legendre values for m >= 0.

    Returns an array ``P[n, m, q]`` such that
    ``Y_n^m(theta, phi) = P[n, m] * exp(1j*m*phi)`` with ``x = cos(theta)``.
    Condon-Shortley phase is included. Diagonal seeded, three-term recurrence in n.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((order + 1, order + 1) + x.shape)
    P[0, 0] = 1.0 / np.sqrt(FOUR_PI)
    for m in range(1, order + 1):
        P[m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(order):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
    for m in range(order + 1):
        for n in range(m + 2, order + 1):
            a = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
            P[n, m] = a * (x * P[n - 1, m] - b * P[n - 2, m])
    return P


def sh_basis_matrix(dirs: DirectionSet, order: int) -> np.ndarray:
    """Complex SH matrix ``Y`` of shape (Q, (order+1)**2).

    Row q holds ``Y_n^m(theta_q, phi_q)`` for all n <= order.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    P = _legendre_normalized(order, np.cos(dirs.theta))
    Q = len(dirs)
    Y = np.empty((Q, (order + 1) ** 2), dtype=complex)
    for m in range(order + 1):
        e = np.exp(1j * m * dirs.phi)
        sign = (-1.0) ** m
        for n in range(m, order + 1):
            pos = P[n, m] * e
            Y[:, sh_index(n, m)] = pos
            if m:
                Y[:, sh_index(n, -m)] = sign * np.conj(pos)
    return Y


@dataclass(frozen=True, eq=False)
class ShVector:
    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[0] != (self.order + 1) ** 2:
            raise ValueError(
                f"expected {(self.order + 1) ** 2} coefficients for order {self.order}, "
                f"got {c.shape[0]}"
            )
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, nm):
        n, m = nm
        return self.coeffs[sh_index(n, m)]

    def __add__(self, other):
        if other.order != self.order:
            raise ValueError("order mismatch")
        return ShVector(self.order, self.coeffs + other.coeffs)


_RCOND = 1e-10
_MAX_COND = 1e12


def quadrature_is_exact(dirs: DirectionSet, order: int, tol: float = 1e-10) -> bool:
    """True if the set's weights integrate all SH products up to ``order`` exactly."""
    if dirs.weights is None:
        return False
    Y = sh_basis_matrix(dirs, order)
    G = (Y.conj().T * dirs.weights) @ Y
    return np.linalg.norm(G - np.eye(G.shape[0])) < tol


def sft_forward(values, dirs: DirectionSet, order: int, method: str = "auto") -> ShVector:
    """Spherical Fourier transform of sampled values.

    ``method="quadrature"`` uses the weights, ``"lstsq"`` the truncated-SVD
    pseudo-inverse of the SH matrix. ``"auto"`` uses quadrature only when the
    weights are exact for ``order`` and falls back to least squares otherwise
    (nominal area weights, e.g. on a spiral, are not an exact quadrature).

    ``values`` may have extra trailing axes; they are transformed independently.
    """
    values = np.asarray(values)
    if values.shape[0] != len(dirs):
        raise ValueError("values must have one entry per direction")
    Y = sh_basis_matrix(dirs, order)
    if method == "auto":
        method = "quadrature" if quadrature_is_exact(dirs, order) else "lstsq"
    if method == "quadrature":
        if dirs.weights is None:
            raise SamplingError("quadrature SFT requires weights")
        w = dirs.weights.reshape((-1,) + (1,) * (values.ndim - 1))
        coeffs = Y.conj().T @ (w * values) if values.ndim > 1 else Y.conj().T @ (dirs.weights * values)
    elif method == "lstsq":
        coeffs = pinv_sh(Y) @ values
    else:
        raise ValueError(f"unknown method {method!r}")
    return ShVector(order, coeffs)


def pinv_sh(Y: np.ndarray) -> np.ndarray:
    """Truncated-SVD pseudo-inverse with the checks the LS SFT needs."""
    Q, K = Y.shape
    if Q < K:
        raise SamplingError(f"{Q} directions cannot support {K} SH coefficients")
    U, s, Vh = np.linalg.svd(Y, full_matrices=False)
    if s[-1] == 0 or s[0] / s[-1] > _MAX_COND:
        raise SamplingError(
            f"SH matrix is rank deficient (condition number {s[0] / max(s[-1], 1e-300):.3g})"
        )
    keep = s > _RCOND * s[0]
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def sft_inverse(coeffs: ShVector, dirs: DirectionSet) -> np.ndarray:
    return sh_basis_matrix(dirs, coeffs.order) @ coeffs.coeffs


def spiral_sampling(count: int) -> DirectionSet:
    """Saff-Kuijlaars generalized spiral with nominal weights 4*pi/count."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return DirectionSet([0.0], [0.0], [FOUR_PI], Scheme.spiral)
    k = np.arange(count)
    h = -1.0 + 2.0 * k / (count - 1)
    theta = np.arccos(h)
    phi = np.zeros(count)
    for i in range(1, count - 1):
        phi[i] = phi[i - 1] + 3.6 / np.sqrt(count * (1.0 - h[i] ** 2))
    return DirectionSet(theta, phi, np.full(count, FOUR_PI / count), Scheme.spiral)


def equal_angle_sampling(order: int) -> DirectionSet:
    """Equiangle grid with exact quadrature weights for SH order ``order``.

    2(order+1) polar by 2(order+1) azimuth samples (Driscoll-Healy weights).
    """
    L = 2 * (order + 1)
    j = np.arange(L)
    theta = np.pi * j / L
    phi = 2 * np.pi * j / L
    q = np.arange(order + 1)
    wt = (
        2 * np.pi / L**2
        * 4.0
        / np.pi
        * np.sin(theta)
        * np.sum(np.sin((2 * q[:, None] + 1) * theta) / (2 * q[:, None] + 1), axis=0)
    )
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.repeat(wt, L)
    return DirectionSet(T.ravel(), P.ravel(), W * FOUR_PI / W.sum(), Scheme.equal_angle)


def rotate_directions(dirs: DirectionSet, dtheta: float, dphi: float) -> DirectionSet:
    """Literal index shift (theta + dtheta, phi + dphi); weights carried along."""
    return DirectionSet(dirs.theta + dtheta, dirs.phi + dphi, dirs.weights, dirs.scheme)


def load_direction_table(path) -> DirectionSet:
    """Read ``theta_deg phi_deg [weight]`` rows; ``#`` starts a comment."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows:
        raise ValueError(f"{path}: no directions found")
    widths = {len(r) for r in rows}
    if widths - {2, 3} or len(widths) != 1:
        raise ValueError(f"{path}: rows must all have 2 or 3 columns")
    arr = np.array(rows)
    w = arr[:, 2] if arr.shape[1] == 3 else np.full(len(arr), FOUR_PI / len(arr))
    return DirectionSet.from_degrees(arr[:, 0], arr[:, 1], w, Scheme.table_import)


def save_direction_table(path, dirs: DirectionSet):
    w = dirs.weights if dirs.weights is not None else np.full(len(dirs), FOUR_PI / len(dirs))
    data = np.column_stack([np.degrees(dirs.theta), np.degrees(dirs.phi), w])
    np.savetxt(path, data, fmt="%.17g", header="theta_deg phi_deg weight")
