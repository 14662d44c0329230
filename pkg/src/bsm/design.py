"""BSM filter design: regularized least squares, magnitude least squares
(variable exchange), the combined cutoff filter bank, the beamformer
decomposition and the design-generalization checks.

Filters follow ``p_hat = c^H x``; the least-squares target for ``V^H c`` is
the conjugated HRTF vector.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .array import DEFAULT_SH_ORDER, ArrayGeometry, SteeringMatrix, rotate_array, steering_matrix
from .hrtf import HrtfSet, hrtf_vector
from .sh import DirectionSet, SamplingError, pinv_sh, sh_basis_matrix, spiral_sampling

log = logging.getLogger(__name__)

_COND_LIMIT = 1e10


class SingularSystemError(np.linalg.LinAlgError):
    pass


class DesignError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    complex_ls = "complex_ls"
    magls = "magls"


def snr_to_reg(snr_db: float) -> float:
    """Noise-to-signal power ratio sigma_n^2 / sigma_s^2."""
    return 10.0 ** (-snr_db / 10.0)


def _values(V):
    return V.values if isinstance(V, SteeringMatrix) else np.asarray(V, dtype=complex)


def _regularized_solve(V, rhs, reg):
    """Solve (V V^H + reg I) X = rhs; Hermitian solve with SVD fallback."""
    M = V.shape[0]
    A = V @ V.conj().T + reg * np.eye(M)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= s[0] * 1e-15 or s[-1] == 0:
        if reg == 0:
            raise SingularSystemError("V V^H is singular; use a positive regularization")
    if s[-1] > 0 and s[0] / s[-1] <= _COND_LIMIT:
        return scipy.linalg.solve(A, rhs, assume_a="her")
    return np.linalg.pinv(A, rcond=1e-15, hermitian=True) @ rhs


def bsm_ls_filter(V, h, reg: float) -> np.ndarray:
    """Minimizer of ``||V^H c - conj(h)||^2 + reg ||c||^2``.

    ``h`` may be a Q-vector or a (Q, K) stack (e.g. both ears).
    """
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    V = _values(V)
    return _regularized_solve(V, V @ np.conj(np.asarray(h)), reg)


def bfbr_decompose(V, reg: float) -> np.ndarray:
    """Beamformer matrix ``W = (V V^H + reg I)^-1 V``; column q steers to source q."""
    V = _values(V)
    return _regularized_solve(V, V, reg)


def bfbr_render(W, h, x):
    """Sum of beamformer outputs ``w_q^H x`` weighted by the HRTFs."""
    y = W.conj().T @ x
    return np.asarray(h) @ y


def ls_objective(V, c, h, reg):
    V = _values(V)
    return np.sum(np.abs(V.conj().T @ c - np.conj(h)) ** 2) + reg * np.sum(np.abs(c) ** 2)


def magls_objective(V, c, h_mag, reg):
    V = _values(V)
    return np.sum((np.abs(V.conj().T @ c) - h_mag) ** 2) + reg * np.sum(np.abs(c) ** 2)


@dataclass(frozen=True)
class MaglsOptions:
    """``ls_restart`` also starts the iteration from the phase of the complex
    LS solution and keeps whichever run reaches the lower objective."""

    init_phase: float = np.pi / 2
    tol: float = 1e-20
    max_iters: int = 100_000
    ls_restart: bool = True


@dataclass(eq=False)
class MaglsResult:
    c: np.ndarray
    iterations: int
    converged: bool
    objective: float
    trace: np.ndarray | None = None


def _magls_batch(W, VH, h_mag, phase0, reg, tol, max_iters, record=False):
    """Variable exchange on a stack of independent problems.

    W: (B, M, Q) regularized beamformers, VH: (B, Q, M), h_mag/phase0: (B, Q).
    Each step solves the LS problem for the current target phase, then sets the
    phase to that of ``V^H c``. A problem stops once its objective decreases by
    less than ``tol``.
    """
    B, M, Q = W.shape
    phase = np.broadcast_to(phase0, (B, Q)).astype(float)
    target = h_mag * np.exp(1j * phase)
    c = np.einsum("bmq,bq->bm", W, target)
    y = np.einsum("bqm,bm->bq", VH, c)
    obj = np.sum((np.abs(y) - h_mag) ** 2, axis=1) + reg * np.sum(np.abs(c) ** 2, axis=1)
    iters = np.ones(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    traces = [[o] for o in obj] if record else None
    active = np.arange(B)
    while active.size and iters[active[0]] < max_iters:
        Wa, VHa, ma = W[active], VH[active], h_mag[active]
        ya = y[active]
        target = ma * np.exp(1j * np.angle(ya))
        ca = np.matmul(Wa, target[..., None])[..., 0]
        ya = np.matmul(VHa, ca[..., None])[..., 0]
        new = np.sum((np.abs(ya) - ma) ** 2, axis=1) + reg[active] * np.sum(np.abs(ca) ** 2, axis=1)
        c[active], y[active] = ca, ya
        iters[active] += 1
        if record:
            for i, o in zip(active, new):
                traces[i].append(o)
        stop = obj[active] - new < tol
        obj[active] = new
        done[active[stop]] = True
        active = active[~stop]
    trace = [np.array(t) for t in traces] if record else None
    return c, iters, done, obj, trace


def magls_filter(
    V, h_mag, h_phase_init=np.pi / 2, reg: float = 0.0, tol: float = 1e-20,
    max_iters: int = 100_000, record_trace: bool = False,
) -> MaglsResult:
    """Magnitude least squares: minimize ``||(|V^H c| - h_mag)||^2 + reg ||c||^2``.

    Non-convergence within ``max_iters`` is reported through ``converged``.
    """
    V = _values(V)
    h_mag = np.asarray(h_mag, dtype=float)
    if np.any(h_mag < 0):
        raise ValueError("h_mag must be nonnegative")
    W = bfbr_decompose(V, reg)
    phase0 = np.broadcast_to(np.asarray(h_phase_init, dtype=float), h_mag.shape)
    c, iters, done, obj, trace = _magls_batch(
        W[None], V.conj().T[None], h_mag[None], phase0[None], np.array([reg]), tol, max_iters,
        record_trace,
    )
    return MaglsResult(c[0], int(iters[0]), bool(done[0]), float(obj[0]), trace[0] if trace else None)


# -- filter banks ------------------------------------------------------------------


def default_freq_grid():
    return np.arange(75.0, 10000.0 + 1e-9, 75.0)


@dataclass(frozen=True, eq=False)
class DesignSpec:
    geom: ArrayGeometry
    design_dirs: DirectionSet = field(default_factory=lambda: spiral_sampling(240))
    snr_db: float = 20.0
    freq_grid: np.ndarray = field(default_factory=default_freq_grid)
    cutoff_hz: float = 1500.0
    rotation: tuple = (0.0, 0.0)
    array_rotation: float = 0.0
    magls: MaglsOptions = field(default_factory=MaglsOptions)
    max_order: int = DEFAULT_SH_ORDER

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freq_grid, dtype=float))
        if len(self.design_dirs) < 1:
            raise ValueError("need at least one design direction")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if np.any(np.diff(freqs) <= 0) or np.any(freqs < 0):
            raise ValueError("freq_grid must be nonnegative and strictly increasing")
        object.__setattr__(self, "freq_grid", freqs)
        object.__setattr__(self, "rotation", tuple(float(r) for r in self.rotation))

    @property
    def reg(self):
        return snr_to_reg(self.snr_db)

    def steering(self, freq) -> SteeringMatrix:
        geom = rotate_array(self.geom, self.array_rotation) if self.array_rotation else self.geom
        return steering_matrix(geom, self.design_dirs, freq, self.max_order)


@dataclass(eq=False)
class FilterBank:
    freqs: np.ndarray
    left: np.ndarray  # (F, M)
    right: np.ndarray
    modes: list
    spec: DesignSpec | None = None
    iterations: np.ndarray | None = None  # (F, 2), MagLS bins only
    converged: np.ndarray | None = None
    traces: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_mics(self):
        return self.left.shape[1]

    def ear(self, name):
        return self.left if name == "left" else self.right


def _bin_mode(freq, cutoff):
    if freq == 0 or freq < cutoff:
        return Mode.complex_ls
    return Mode.magls


def design_filter_bank(spec: DesignSpec, hrtf: HrtfSet, record_traces: bool = False) -> FilterBank:
    """Complex LS below ``cutoff_hz`` and MagLS at and above it (hard switch).

    The DC bin is always complex LS.
    """
    freqs = spec.freq_grid
    F, M = freqs.size, spec.geom.num_mics
    left = np.zeros((F, M), dtype=complex)
    right = np.zeros_like(left)
    modes = [_bin_mode(f, spec.cutoff_hz) for f in freqs]
    iterations = np.zeros((F, 2), dtype=int)
    converged = np.ones((F, 2), dtype=bool)
    reg = spec.reg
    mag_bins, Ws, VHs, mags, ls_targets = [], [], [], [], []
    for i, f in enumerate(freqs):
        try:
            V = spec.steering(f).values
            hl, hr = hrtf_vector(hrtf, spec.design_dirs, f, spec.rotation)
            if modes[i] is Mode.complex_ls:
                c = bsm_ls_filter(V, np.stack([hl, hr], axis=1), reg)
                left[i], right[i] = c[:, 0], c[:, 1]
            else:
                W = bfbr_decompose(V, reg)
                mag_bins.append(i)
                Ws += [W, W]
                VHs += [V.conj().T, V.conj().T]
                mags += [np.abs(hl), np.abs(hr)]
                ls_targets += [hl, hr]
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DesignError(f"design failed at {f:g} Hz: {exc}") from exc
    traces = None
    if mag_bins:
        opts = spec.magls
        W, VH, h_mag = np.array(Ws), np.array(VHs), np.array(mags)
        regs = np.full(len(mags), reg)
        c, iters, done, obj, trace = _magls_batch(
            W, VH, h_mag, np.full(h_mag.shape, opts.init_phase), regs, opts.tol, opts.max_iters,
            record_traces,
        )
        if opts.ls_restart:
            c_ls = np.einsum("bmq,bq->bm", W, np.conj(np.array(ls_targets)))
            phase_ls = np.angle(np.einsum("bqm,bm->bq", VH, c_ls))
            c2, iters2, done2, obj2, trace2 = _magls_batch(
                W, VH, h_mag, phase_ls, regs, opts.tol, opts.max_iters, record_traces
            )
            better = obj2 < obj
            c[better], iters[better], done[better] = c2[better], iters2[better], done2[better]
            if record_traces:
                trace = [t2 if b else t1 for t1, t2, b in zip(trace, trace2, better)]
        idx = np.array(mag_bins)
        left[idx], right[idx] = c[0::2], c[1::2]
        iterations[idx, 0], iterations[idx, 1] = iters[0::2], iters[1::2]
        converged[idx, 0], converged[idx, 1] = done[0::2], done[1::2]
        if record_traces:
            traces = {(int(b), ear): trace[2 * j + e] for j, b in enumerate(mag_bins)
                      for e, ear in enumerate(("left", "right"))}
        if not done.all():
            log.warning("MagLS hit max_iters in %d of %d problems", (~done).sum(), done.size)
    meta = {
        "cutoff_hz": float(spec.cutoff_hz),
        "snr_db": float(spec.snr_db),
        "rotation_deg": [float(np.degrees(r)) for r in spec.rotation],
        "array_rotation_deg": float(np.degrees(spec.array_rotation)),
        "design_directions": len(spec.design_dirs),
        "geometry": spec.geom.name,
    }
    return FilterBank(freqs.copy(), left, right, modes, spec, iterations, converged, traces, meta)


# -- filter files ------------------------------------------------------------------
# filters.json holds the header, filters.c64 little-endian complex64 values laid
# out [freq][ear (L, R)][mic].

FILTER_DTYPE = np.dtype("<c8")


def save_filter_bank(directory, bank: FilterBank):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = {
        "M": bank.num_mics,
        "freqs_hz": [float(f) for f in bank.freqs],
        "modes": [Mode(m).value for m in bank.modes],
        "cutoff_hz": None,
        "snr_db": None,
        "rotation_deg": [0.0, 0.0],
    }
    header.update(bank.meta)
    if header["cutoff_hz"] is not None and not np.isfinite(header["cutoff_hz"]):
        header["cutoff_hz"] = None  # all-LS bank; JSON has no infinity
    data = np.stack([bank.left, bank.right], axis=1).astype(FILTER_DTYPE)
    for name, payload in (("filters.c64", data.tobytes()), ("filters.json", json.dumps(header, indent=1).encode())):
        tmp = d / (name + ".tmp")
        tmp.write_bytes(payload)
        tmp.replace(d / name)


def load_filter_bank(directory) -> FilterBank:
    d = Path(directory)
    header_text = (d / "filters.json").read_text()  # missing files raise OSError
    try:
        header = json.loads(header_text)
        freqs = np.asarray(header["freqs_hz"], dtype=float)
        M = int(header["M"])
        modes = [Mode(m) for m in header["modes"]]
        raw = np.fromfile(d / "filters.c64", dtype=FILTER_DTYPE)
    except (KeyError, TypeError, ValueError) as exc:
        raise DesignError(f"{d}: malformed filter files ({exc})") from exc
    if raw.size != freqs.size * 2 * M or len(modes) != freqs.size:
        raise DesignError(f"{d}: filters.c64 size does not match header")
    data = raw.reshape(freqs.size, 2, M).astype(complex)
    meta = {k: v for k, v in header.items() if k not in ("M", "freqs_hz", "modes")}
    return FilterBank(freqs, data[:, 0], data[:, 1], modes, meta=meta)


# -- generalization conditions -----------------------------------------------------


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class GeneralizationReport:
    conditions: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def __getitem__(self, i):
        return self.conditions[i]

    def __str__(self):
        lines = [f"generalization conditions: {'PASS' if self.passed else 'FAIL'}"]
        for i, c in enumerate(self.conditions, 1):
            lines.append(f"  {i}. [{'ok' if c.passed else '!!'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def _order_residual(samples, grid, order):
    """Relative energy of ``samples`` outside the order-``order`` SH subspace."""
    Y = sh_basis_matrix(grid, order)
    proj = Y @ (pinv_sh(Y) @ samples)
    return np.linalg.norm(samples - proj) / np.linalg.norm(samples)


def check_generalization(
    design_dirs: DirectionSet,
    snr_db: float,
    atf_order: int,
    hrtf_order: int,
    *,
    snr_threshold_db: float = 20.0,
    grid: DirectionSet | None = None,
    atf_samples=None,
    hrtf_samples=None,
    order_tol: float = 1e-6,
    pinv_tol: float = 1e-8,
) -> GeneralizationReport:
    """Evaluate the five conditions under which a BSM design generalizes.

    Order-limitedness is verified only when ATF/HRTF samples on ``grid`` are
    supplied; otherwise the supplied orders are taken as given.
    """
    conds = [
        Condition("SNR", snr_db >= snr_threshold_db, f"{snr_db:g} dB (threshold {snr_threshold_db:g} dB)")
    ]

    if grid is not None and (atf_samples is not None or hrtf_samples is not None):
        res = []
        try:
            if atf_samples is not None:
                res.append(("ATF", _order_residual(np.asarray(atf_samples).T, grid, atf_order)))
            if hrtf_samples is not None:
                res.append(("HRTF", _order_residual(np.asarray(hrtf_samples), grid, hrtf_order)))
            ok = all(r < order_tol for _, r in res)
            detail = ", ".join(f"{n} residual {r:.2e}" for n, r in res)
        except SamplingError as exc:
            ok, detail = False, f"cannot verify: {exc}"
        conds.append(Condition("order-limited", ok, detail))
    else:
        conds.append(Condition("order-limited", True, f"assumed N_V={atf_order}, N_H={hrtf_order}"))

    Q = len(design_dirs)
    need = (max(atf_order, hrtf_order) + 1) ** 2
    conds.append(Condition("Q >= (N_V+1)^2", Q >= need, f"Q={Q}, need {need}"))

    try:
        Y = sh_basis_matrix(design_dirs, atf_order)
        resid = np.linalg.norm(pinv_sh(Y) @ Y - np.eye(Y.shape[1]))
        cond = np.linalg.cond(Y)
        conds.append(Condition("aliasing-free", resid < pinv_tol, f"||Y+Y - I||_F={resid:.2e}, cond={cond:.3g}"))
    except SamplingError as exc:
        conds.append(Condition("aliasing-free", False, str(exc)))

    conds.append(Condition("N_V >= N_H", atf_order >= hrtf_order, f"N_V={atf_order}, N_H={hrtf_order}"))
    return GeneralizationReport(tuple(conds))
