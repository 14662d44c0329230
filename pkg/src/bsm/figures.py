"""Metric curves for the standard simulation study of the six-microphone
semicircular array, as lists of :class:`MetricCurve`.

Method tags: ``bsm`` is complex LS at every frequency, ``bsm_magls`` switches
to MagLS at the cutoff (0 Hz for magnitude-error curves, 1.5 kHz for cue
curves), ``reference`` is the HRTF itself. Rotated variants append
``_rot<deg>``.
"""

from __future__ import annotations

import numpy as np

from .array import wavenumber
from .design import DesignSpec, design_filter_bank
from .evaluation import compare_cues, error_curves, hrtf_order_curve
from .hrtf import DEFAULT_HEAD_RADIUS
from .metrics import MetricCurve

EARS = ("left", "right")
FIGURES = ("fig4", "fig5", "fig6", "fig7", "fig8")


def _tag(method, rot):
    return method if not rot else f"{method}_rot{rot:g}"


def _freq_curves(freqs, values, metric, method):
    out = []
    for e, ear in enumerate(EARS):
        c = MetricCurve("frequency_hz", metric, method)
        for f, v in zip(freqs, values[:, e]):
            c.add(f, v, ear)
        out.append(c)
    return out


def _spec(base: DesignSpec, cutoff, rot_deg):
    return DesignSpec(
        base.geom, base.design_dirs, base.snr_db, base.freq_grid, cutoff,
        (0.0, np.radians(rot_deg)), base.array_rotation, base.magls, base.max_order,
    )


def fig4(base: DesignSpec, hrtf):
    bank = design_filter_bank(_spec(base, np.inf, 0), hrtf)
    return _freq_curves(bank.freqs, error_curves(bank, hrtf, "nmse"), "nmse_db", "bsm")


def fig5(base: DesignSpec, hrtf, order=30, radius=DEFAULT_HEAD_RADIUS):
    freqs = base.freq_grid
    curves = _freq_curves(freqs, hrtf_order_curve(hrtf, freqs, order), "b99", "hrtf")
    ref = MetricCurve("frequency_hz", "b99", "ceil_kr")
    for f in freqs:
        ref.add(f, np.ceil(wavenumber(f) * radius))
    return curves + [ref]


def fig6(base: DesignSpec, hrtf, rotations=(0.0, 30.0, 60.0)):
    curves = []
    for rot in rotations:
        for method, cutoff in (("bsm", np.inf), ("bsm_magls", 0.0)):
            bank = design_filter_bank(_spec(base, cutoff, rot), hrtf)
            err = error_curves(bank, hrtf, "magnitude")
            curves += _freq_curves(bank.freqs, err, "magnitude_nmse_db", _tag(method, rot))
    return curves


def _cue_banks(base, hrtf, rot):
    return {
        "bsm": design_filter_bank(_spec(base, np.inf, rot), hrtf),
        "bsm_magls": design_filter_bank(_spec(base, base.cutoff_hz, rot), hrtf),
    }


def _azimuth_curve(az, values, metric, method, scale=1.0):
    c = MetricCurve("azimuth_deg", metric, method)
    for a, v in zip(az, values):
        c.add(a, v * scale)
    return c


def fig7(base: DesignSpec, hrtf, rotation=0.0, azimuths=None):
    curves, ref_done = [], False
    for method, bank in _cue_banks(base, hrtf, rotation).items():
        cmp = compare_cues(bank, hrtf, azimuths)
        if not ref_done:
            curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.itd_ref, "itd_us", _tag("reference", rotation), 1e6))
            ref_done = True
        curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.itd, "itd_us", _tag(method, rotation), 1e6))
        curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.itd_error, "itd_error_us", _tag(method, rotation), 1e6))
    return curves


def fig8(base: DesignSpec, hrtf, rotation=60.0, azimuths=None):
    curves, ref_done = [], False
    for method, bank in _cue_banks(base, hrtf, rotation).items():
        cmp = compare_cues(bank, hrtf, azimuths)
        if not ref_done:
            curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.ild_ref.mean(1), "ild_db", _tag("reference", rotation)))
            ref_done = True
        curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.ild.mean(1), "ild_db", _tag(method, rotation)))
        curves.append(_azimuth_curve(cmp.azimuths_deg, cmp.ild_error, "ild_error_db", _tag(method, rotation)))
    return curves


def reproduce(figure: str, base: DesignSpec, hrtf, rotation=None):
    if figure == "fig4":
        return fig4(base, hrtf)
    if figure == "fig5":
        return fig5(base, hrtf)
    if figure == "fig6":
        return fig6(base, hrtf) if rotation is None else fig6(base, hrtf, (rotation,))
    if figure == "fig7":
        return fig7(base, hrtf, 0.0 if rotation is None else rotation)
    if figure == "fig8":
        return fig8(base, hrtf, 60.0 if rotation is None else rotation)
    raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
