"""Evaluation measures: normalized reproduction error, magnitude error,
effective SH order, ITD from interaural cross-correlation and ERB-band ILD.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .sh import ShVector

DB_FLOOR = -200.0
ILD_LIMIT = 120.0
SILENCE_DBFS = -120.0


class MetricError(ValueError):
    pass


def _db(num, den):
    if den <= 0:
        raise MetricError("zero-norm HRTF vector")
    if num <= 0:
        return DB_FLOOR
    return max(10 * np.log10(num / den), DB_FLOOR)


def _vals(V):
    return getattr(V, "values", V)


def nmse(V, c, h, snr_db, signal_power: float = 1.0) -> float:
    """Normalized error of ``p_hat = c^H x`` against ``h^T s`` in dB.

    ``(s2 ||V^H c - h*||^2 + n2 ||c||^2) / (s2 ||h||^2)`` with
    ``n2 / s2 = 10^(-snr_db/10)``.
    """
    V = _vals(V)
    s2 = signal_power
    n2 = s2 * 10.0 ** (-snr_db / 10.0)
    err = np.sum(np.abs(V.conj().T @ c - np.conj(h)) ** 2)
    return _db(s2 * err + n2 * np.sum(np.abs(c) ** 2), s2 * np.sum(np.abs(h) ** 2))


def magnitude_nmse(V, c, h, snr_db, signal_power: float = 1.0) -> float:
    """As :func:`nmse` but comparing magnitudes only."""
    V = _vals(V)
    s2 = signal_power
    n2 = s2 * 10.0 ** (-snr_db / 10.0)
    err = np.sum((np.abs(V.conj().T @ c) - np.abs(h)) ** 2)
    return _db(s2 * err + n2 * np.sum(np.abs(c) ** 2), s2 * np.sum(np.abs(h) ** 2))


def effective_sh_order(coeffs: ShVector, percent: float = 99.0) -> int:
    """Order whose normalized cumulative energy is closest to ``percent``/100.

    Ties go to the smaller order.
    """
    if not 0 < percent <= 100:
        raise ValueError("percent must be in (0, 100]")
    f = np.asarray(coeffs.coeffs)
    n = np.floor(np.sqrt(np.arange(f.size))).astype(int)
    energy = np.bincount(n, weights=np.abs(f) ** 2, minlength=coeffs.order + 1)
    cum = np.cumsum(energy)
    if cum[-1] == 0:
        raise MetricError("all-zero coefficients")
    return int(np.argmin(np.abs(cum / cum[-1] - percent / 100.0)))


# -- binaural cues -------------------------------------------------------------------


@dataclass(eq=False)
class BinauralSignal:
    left: np.ndarray
    right: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        if self.left.shape != self.right.shape or self.left.ndim != 1:
            raise ValueError("left and right must be 1-D and of equal length")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


def _check_audible(p: BinauralSignal):
    peak = max(np.max(np.abs(p.left), initial=0), np.max(np.abs(p.right), initial=0))
    if peak == 0 or 20 * np.log10(peak) < SILENCE_DBFS:
        raise MetricError("silent input")


def estimate_itd(p: BinauralSignal, lpf_cutoff: float = 1500.0, max_lag_s: float = 1e-3) -> float:
    """Lag of the interaural cross-correlation maximum, in seconds.

    Both channels pass an 8th-order zero-phase Butterworth low-pass first.
    The correlation is ``sum_t l(t + tau) r(t)``, so the result is positive
    when the left channel lags.
    """
    _check_audible(p)
    fs = p.sample_rate
    left, right = p.left, p.right
    if lpf_cutoff is not None and lpf_cutoff < fs / 2:
        sos = signal.butter(8, lpf_cutoff, fs=fs, output="sos")
        left, right = signal.sosfiltfilt(sos, left), signal.sosfiltfilt(sos, right)
    lags = signal.correlation_lags(left.size, right.size)
    xc = signal.correlate(left, right, method="direct" if left.size < 4096 else "fft")
    max_lag = int(np.floor(max_lag_s * fs))
    keep = np.abs(lags) <= max_lag
    return float(lags[keep][np.argmax(xc[keep])] / fs)


def itd_error(p: BinauralSignal, ref: BinauralSignal, **kwargs) -> float:
    return abs(estimate_itd(p, **kwargs) - estimate_itd(ref, **kwargs))


# ERB-band ILD


def erb_bandwidth(fc):
    """Equivalent rectangular bandwidth in Hz (Glasberg and Moore)."""
    return 24.7 * (4.37 * np.asarray(fc) / 1000.0 + 1.0)


def erb_space(f_lo=50.0, f_hi=6000.0, count=29):
    """Centre frequencies equally spaced on the ERB-number scale."""
    e = lambda f: 21.4 * np.log10(1 + 0.00437 * f)
    e_inv = lambda E: (10 ** (E / 21.4) - 1) / 0.00437
    return e_inv(np.linspace(e(f_lo), e(f_hi), count))


GAMMATONE_ORDER = 4
CUTOFF_DROP_DB = 60.0


def gammatone_magnitude(freqs, fc, order=GAMMATONE_ORDER):
    """Magnitude response of the all-pole gammatone approximation, unit peak."""
    b = 1.019 * erb_bandwidth(fc)
    x = (np.asarray(freqs) - fc) / b
    return (1 + x**2) ** (-order / 2)


def gammatone_upper_edge(fc, order=GAMMATONE_ORDER, drop_db=CUTOFF_DROP_DB):
    """Frequency above ``fc`` where the band response is ``drop_db`` below peak."""
    b = 1.019 * erb_bandwidth(fc)
    return fc + b * np.sqrt(10 ** (drop_db / (10 * order)) - 1)


@dataclass(frozen=True)
class IldResult:
    centre_freqs: np.ndarray
    per_band: np.ndarray
    average: float


def _band_powers(x, fs, centres):
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.size, 1.0 / fs)
    out = np.empty(centres.size)
    for i, fc in enumerate(centres):
        sel = f <= gammatone_upper_edge(fc)
        out[i] = np.sum(gammatone_magnitude(f[sel], fc) ** 2 * spec[sel])
    return out


def estimate_ild(p: BinauralSignal, centres=None) -> IldResult:
    """Per-band ``10 log10(P_left / P_right)`` over 29 ERB-spaced gammatone bands
    on [50, 6000] Hz, and their arithmetic mean. Values are clamped to +-120 dB."""
    centres = erb_space() if centres is None else np.asarray(centres, dtype=float)
    pl = _band_powers(p.left, p.sample_rate, centres)
    pr = _band_powers(p.right, p.sample_rate, centres)
    with np.errstate(divide="ignore", invalid="ignore"):
        ild = 10 * np.log10(pl / pr)
    ild = np.where(np.isnan(ild), 0.0, ild)
    ild = np.clip(ild, -ILD_LIMIT, ILD_LIMIT)
    return IldResult(centres, ild, float(np.mean(ild)))


def ild_error(p: BinauralSignal, ref: BinauralSignal, centres=None) -> float:
    a, b = estimate_ild(p, centres), estimate_ild(ref, centres)
    return float(np.mean(np.abs(a.per_band - b.per_band)))


# -- curves --------------------------------------------------------------------------


class Axis(str, enum.Enum):
    frequency_hz = "frequency_hz"
    azimuth_deg = "azimuth_deg"
    sh_order = "sh_order"


CSV_COLUMNS = ("axis", "value", "ear", "metric", "method")


@dataclass
class MetricCurve:
    """One metric as a function of frequency, azimuth or SH order.

    ``points`` holds ``(axis_value, value, ear)`` tuples; ``ear`` may be None.
    Rows are written as ``axis,value,ear,metric,method`` where ``axis`` is the
    abscissa value.
    """

    axis: Axis
    metric: str
    method: str = ""
    points: list = field(default_factory=list)

    def __post_init__(self):
        self.axis = Axis(self.axis)
        self.validate()

    def add(self, x, value, ear=None):
        self.points.append((float(x), float(value), ear))

    def validate(self):
        last = {}
        for x, _, ear in self.points:
            if ear in last and x <= last[ear]:
                raise ValueError(f"axis values must increase per ear (ear={ear!r}, {x} after {last[ear]})")
            last[ear] = x

    def series(self, ear=None):
        pts = [(x, v) for x, v, e in self.points if e == ear]
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def rows(self):
        for x, v, ear in self.points:
            yield {"axis": repr(x), "value": repr(v), "ear": ear or "", "metric": self.metric, "method": self.method}


def curves_to_csv(curves, path=None) -> str:
    """Serialize curves as CSV; writes atomically when ``path`` is given."""
    for c in curves:
        c.validate()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for c in curves:
        w.writerows(c.rows())
    text = buf.getvalue()
    if path is not None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        tmp.replace(path)
    return text


def read_curves_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
