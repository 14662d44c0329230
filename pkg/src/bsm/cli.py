"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4

log = logging.getLogger("bsm")


class ConfigError(Exception):
    pass


def _set_threads(n):
    if n and n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _geometry(spec: str):
    from .array import load_geometry, semi_circular_preset

    if spec.startswith("semi"):
        try:
            return semi_circular_preset(int(spec[4:] or 6))
        except ValueError as exc:
            raise ConfigError(f"bad preset {spec!r}: {exc}") from exc
    return load_geometry(spec)


def _freq_grid(args):
    import numpy as np

    if args.fstep <= 0 or args.fmin <= 0 or args.fmax < args.fmin:
        raise ConfigError("frequency grid needs 0 < fmin <= fmax and fstep > 0")
    return np.arange(args.fmin, args.fmax + 1e-9, args.fstep)


def _design_spec(args):
    import numpy as np

    from .design import DesignSpec, MaglsOptions
    from .sh import load_direction_table, spiral_sampling

    geom = _geometry(args.geometry or args.preset)
    dirs = load_direction_table(args.directions_file) if args.directions_file else spiral_sampling(args.directions)
    return DesignSpec(
        geom,
        dirs,
        args.snr,
        _freq_grid(args),
        args.cutoff,
        (np.radians(args.rotate_elevation), np.radians(args.rotate_head)),
        np.radians(args.rotate_array),
        MaglsOptions(max_iters=args.max_iters, ls_restart=not args.single_start),
    )


def _hrtf(args):
    from .hrtf import resolve_hrtf

    return resolve_hrtf(args.hrtf)


# -- commands ----------------------------------------------------------------------


def cmd_geometry(args):
    from .array import save_geometry

    geom = _geometry(args.from_file or args.preset)
    save_geometry(args.out, geom)
    print(f"wrote {geom.name or 'geometry'} ({geom.num_mics} mics) to {args.out}")


def cmd_simulate(args):
    from .render import write_wav
    from .scene import Scene, load_scene, simulate_array

    scene = load_scene(args.scene)
    if args.seed is not None:
        scene = Scene(scene.sources, scene.snr_db, scene.sample_rate, scene.duration, args.seed)
    x = simulate_array(scene, _geometry(args.geometry))
    clips = write_wav(args.out, x, args.encoding)
    print(f"wrote {x.channels} channels, {x.length} samples to {args.out}" + (f" ({clips} clipped)" if clips else ""))


def cmd_design(args):
    import numpy as np

    from .design import check_generalization, design_filter_bank, save_filter_bank

    spec = _design_spec(args)
    hrtf = _hrtf(args)
    bank = design_filter_bank(spec, hrtf)
    save_filter_bank(args.out, bank)
    modes = np.array([m.value for m in bank.modes])
    for mode in ("complex_ls", "magls"):
        sel = bank.freqs[modes == mode]
        if sel.size:
            print(f"{mode:>10}: {sel.size:4d} bins, {sel[0]:g}-{sel[-1]:g} Hz")
    if (modes == "magls").any():
        it = bank.iterations[modes == "magls"]
        print(f"MagLS iterations: median {int(np.median(it))}, max {int(it.max())}; "
              f"converged {int(bank.converged.sum())}/{bank.converged.size}")
    k_max = 2 * np.pi * spec.freq_grid[-1] / 343.0
    atf_order = int(np.ceil(k_max * max(spec.geom.mic_radii())))
    hrtf_order = int(np.ceil(k_max * 0.0875))
    print(check_generalization(spec.design_dirs, spec.snr_db, atf_order, hrtf_order))
    print(f"wrote {bank.freqs.size}-frequency bank to {args.out}")


def cmd_render(args):
    from .design import load_filter_bank
    from .render import read_wav, render, write_wav

    bank = load_filter_bank(args.filters)
    x = read_wav(args.inp)
    y = render(bank, x, args.nfft)
    clips = write_wav(args.out, y, args.encoding)
    print(f"wrote binaural output ({y.left.size} samples, latency {args.nfft // 2}) to {args.out}"
          + (f" ({clips} clipped)" if clips else ""))


def _bank_with_spec(args):
    """Load filters and attach a design spec rebuilt from the header."""
    import numpy as np

    from .design import DesignSpec, load_filter_bank
    from .sh import spiral_sampling

    bank = load_filter_bank(args.filters)
    m = bank.meta
    rot = m.get("rotation_deg") or [0.0, 0.0]
    cutoff = m.get("cutoff_hz")
    bank.spec = DesignSpec(
        _geometry(args.geometry),
        spiral_sampling(int(m.get("design_directions", 240))),
        float(m.get("snr_db") if m.get("snr_db") is not None else 20.0),
        bank.freqs,
        np.inf if cutoff is None else float(cutoff),
        tuple(np.radians(rot)),
        np.radians(float(m.get("array_rotation_deg", 0.0))),
    )
    if bank.spec.geom.num_mics != bank.num_mics:
        raise ConfigError(f"geometry has {bank.spec.geom.num_mics} mics, filters have {bank.num_mics}")
    return bank


def cmd_analyze(args):
    from .evaluation import compare_cues, error_curves, hrtf_order_curve
    from .figures import _azimuth_curve, _freq_curves
    from .metrics import BinauralSignal, MetricCurve, curves_to_csv, estimate_ild, estimate_itd
    from .render import read_wav

    curves = []
    if args.measure in ("itd", "ild") and args.inp:
        def binaural(path):
            w = read_wav(path)
            if w.channels != 2:
                raise ConfigError(f"{path}: expected 2 channels, found {w.channels}")
            return BinauralSignal(w.samples[0], w.samples[1], w.sample_rate)

        p = binaural(args.inp)
        if args.measure == "itd":
            value = estimate_itd(p) * 1e6
            metric = "itd_us"
            if args.ref:
                value = abs(value - estimate_itd(binaural(args.ref)) * 1e6)
                metric = "itd_error_us"
        else:
            value = estimate_ild(p).average
            metric = "ild_db"
            if args.ref:
                r = estimate_ild(binaural(args.ref))
                value = float(abs(estimate_ild(p).per_band - r.per_band).mean())
                metric = "ild_error_db"
        c = MetricCurve("azimuth_deg", metric, "signal")
        c.add(0.0, value)
        curves.append(c)
    elif args.measure == "shorder":
        import numpy as np

        hrtf = _hrtf(args)
        freqs = np.arange(args.fmin, args.fmax + 1e-9, args.fstep)
        curves = _freq_curves(freqs, hrtf_order_curve(hrtf, freqs), "b99", "hrtf")
    else:
        if not (args.filters and args.geometry):
            raise ConfigError(f"analyze {args.measure} needs --filters and --geometry (or --in for itd/ild)")
        bank = _bank_with_spec(args)
        hrtf = _hrtf(args)
        if args.measure in ("nmse", "mag"):
            kind, metric = ("nmse", "nmse_db") if args.measure == "nmse" else ("magnitude", "magnitude_nmse_db")
            curves = _freq_curves(bank.freqs, error_curves(bank, hrtf, kind), metric, "bank")
        else:
            cmp = compare_cues(bank, hrtf)
            if args.measure == "itd":
                curves = [_azimuth_curve(cmp.azimuths_deg, cmp.itd_error, "itd_error_us", "bank", 1e6)]
            else:
                curves = [_azimuth_curve(cmp.azimuths_deg, cmp.ild_error, "ild_error_db", "bank")]
    text = curves_to_csv(curves, args.out)
    if args.out is None:
        sys.stdout.write(text)


def cmd_reproduce(args):
    from .figures import reproduce
    from .metrics import curves_to_csv

    spec = _design_spec(args)
    curves = reproduce(args.figure, spec, _hrtf(args), args.rotation)
    text = curves_to_csv(curves, args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {sum(len(c.points) for c in curves)} rows to {args.out}")


# -- parser ------------------------------------------------------------------------


def _add_design_options(p, out_required=True):
    p.add_argument("--preset", default="semi6", help="array preset (semiM), default semi6")
    p.add_argument("--geometry", help="geometry JSON file (overrides --preset)")
    p.add_argument("--hrtf", default="surrogate", help="HRTF container directory or surrogate[:radius_m]")
    p.add_argument("--snr", type=float, default=20.0, help="design SNR in dB")
    p.add_argument("--cutoff", type=float, default=1500.0, help="MagLS cutoff in Hz (0 = MagLS everywhere)")
    p.add_argument("--rotate-head", type=float, default=0.0, metavar="DEG", help="playback yaw compensation")
    p.add_argument("--rotate-elevation", type=float, default=0.0, metavar="DEG")
    p.add_argument("--rotate-array", type=float, default=0.0, metavar="DEG", help="recording yaw compensation")
    p.add_argument("--directions", type=int, default=240, help="spiral design directions")
    p.add_argument("--directions-file", help="direction table (theta_deg phi_deg [weight])")
    p.add_argument("--fmin", type=float, default=75.0)
    p.add_argument("--fmax", type=float, default=10000.0)
    p.add_argument("--fstep", type=float, default=75.0)
    p.add_argument("--max-iters", type=int, default=100_000, help="MagLS iteration cap")
    p.add_argument("--single-start", action="store_true", help="MagLS from the uniform initial phase only")
    p.add_argument("--out", required=out_required)


def build_parser():
    parser = argparse.ArgumentParser(prog="bsm", description="Binaural signal matching for microphone arrays")
    parser.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument("--seed", type=int, default=None, help="override scene seeds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="write an array geometry file")
    p.add_argument("--preset", default="semi6")
    p.add_argument("--from", dest="from_file", help="re-save an existing geometry JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("simulate", help="simulate array recordings of a plane-wave scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--geometry", default="semi6", help="geometry JSON or preset")
    p.add_argument("--out", required=True)
    p.add_argument("--encoding", choices=("float32", "pcm16", "pcm24"), default="float32")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design", help="design a BSM filter bank")
    _add_design_options(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("render", help="apply a filter bank to a multichannel WAV")
    p.add_argument("--filters", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nfft", type=int, default=2048)
    p.add_argument("--encoding", choices=("float32", "pcm16", "pcm24"), default="float32")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("analyze", help="evaluate filters or binaural signals, CSV output")
    p.add_argument("measure", choices=("nmse", "mag", "shorder", "itd", "ild"))
    p.add_argument("--filters")
    p.add_argument("--geometry", default="semi6")
    p.add_argument("--hrtf", default="surrogate")
    p.add_argument("--in", dest="inp", help="binaural WAV (itd/ild)")
    p.add_argument("--ref", help="reference binaural WAV (itd/ild error)")
    p.add_argument("--fmin", type=float, default=75.0)
    p.add_argument("--fmax", type=float, default=10000.0)
    p.add_argument("--fstep", type=float, default=75.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", help="emit the simulation-study curves as CSV")
    p.add_argument("figure", choices=("fig4", "fig5", "fig6", "fig7", "fig8"))
    p.add_argument("--rotation", type=float, default=None, metavar="DEG",
                   help="head rotation (fig6 default 0/30/60, fig7 default 0, fig8 default 60)")
    _add_design_options(p, out_required=False)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    import numpy as np

    from .design import DesignError
    from .hrtf import HrtfFormatError
    from .metrics import MetricError
    from .render import WavError
    from .sh import SamplingError

    try:
        args.func(args)
    except (HrtfFormatError, WavError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DesignError, MetricError, SamplingError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
