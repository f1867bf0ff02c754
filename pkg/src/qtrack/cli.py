"""Command-line front end: ``qtrack <subcommand> ...``.

Every subcommand writes its outputs plus one ``manifest.json`` into the
output directory (the parent directory when ``--out`` names a file).

Exit status: 0 on success, 1 on configuration, input or I/O errors,
2 on usage errors, 3 when outputs were written but a self-check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import (
    __version__, demod, ensemble, filters, model, recordio, riccati, simulate, spectral, verify,
)

log = logging.getLogger("qtrack")

EXIT_ERROR = 1
EXIT_SELF_CHECK = 3


class SelfCheckFailed(RuntimeError):
    pass


# --- shared plumbing --------------------------------------------------------


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def positive_float(text):
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _load_config(args):
    if args.params is None:
        text, source = model.table_s2_text(), "builtin:table_s2.yaml"
    else:
        text, source = Path(args.params).read_text(encoding="utf-8"), str(args.params)
    params = model.params_from_config(text)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return params, {"path": source, "sha256": digest}


def _out_dir(path, is_file):
    path = Path(path)
    out = path.parent if is_file else path
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_safe(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def write_manifest(out_dir, args, config, outputs, checks):
    options = {
        k: _json_safe(v) for k, v in sorted(vars(args).items())
        if k not in ("func", "command")
    }
    manifest = {
        "tool": "qtrack",
        "version": __version__,
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "options": options,
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "self_checks": checks,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _finish(args, out_dir, config, outputs, checks):
    write_manifest(out_dir, args, config, outputs, checks)
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise SelfCheckFailed(", ".join(failed))
    return 0


def _ensemble_config(args, **extra):
    return ensemble.EnsembleConfig(
        n_segments=args.n_segments, segment=args.segment_s, seed=args.seed,
        pipeline=getattr(args, "pipeline", "baseband"), threads=args.threads, **extra,
    )


def _write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


# --- subcommands -------------------------------------------------------------


def cmd_gen(args):
    params, config = _load_config(args)
    out = _out_dir(args.out, is_file=False)
    dt = simulate.carrier_baseband_dt(params) if args.carrier else args.dt_s
    n = int(round(args.segment_s / dt))
    outputs = []
    for lo in range(0, args.n_segments, ensemble.CHUNK):
        idx = np.arange(lo, min(lo + ensemble.CHUNK, args.n_segments))
        truth = simulate.simulate_truth(params, dt, n, args.seed, idx)
        if args.carrier:
            carrier = simulate.synthesize_carrier(truth, params, seed=args.seed, index=idx)
        else:
            record = simulate.measure(truth, params, args.seed, idx)
        for row, k in enumerate(idx):
            path = out / f"seg_{k:05d}.qtrk"
            if args.carrier:
                recordio.write_carrier(path, simulate.CarrierRecord(
                    carrier.fs, carrier.current[row], carrier.omega_m, args.seed,
                    carrier.params_hash,
                ))
            else:
                recordio.write_record(path, record[row])
                if args.csv:
                    csv_path = path.with_suffix(".csv")
                    recordio.record_to_csv(csv_path, record[row])
                    outputs.append(csv_path)
            outputs.append(path)
    log.info("wrote %d segments to %s", args.n_segments, out)
    return _finish(args, out, config, outputs, {})


def _filter_spec(args):
    return demod.DemodFilterSpec(
        order=args.order, stages=args.stages, cutoff=args.cutoff_hz, zero_phase=args.zero_phase
    )


def cmd_demod(args):
    carrier = recordio.read(args.input)
    if not isinstance(carrier, simulate.CarrierRecord):
        raise ValueError(f"{args.input} is not a carrier file")
    omega_m = carrier.omega_m if args.omega_m_hz is None else model.hz_to_rad(args.omega_m_hz)
    record = demod.demodulate(carrier, omega_m=omega_m, spec=_filter_spec(args))
    out = _out_dir(args.out, is_file=True)
    recordio.write_record(args.out, record)
    outputs = [args.out]
    if args.psd_csv:
        valid = record.i[..., record.n_invalid:]
        seg = min(args.psd_segment, valid.shape[-1])
        psd_x, psd_y = (demod.estimate_psd(ch, record.dt, seg) for ch in valid)
        recordio.write_csv(args.psd_csv, {
            "freq_hz": psd_x.freq, "psd_x": psd_x.density, "psd_y": psd_y.density,
        })
        outputs.append(args.psd_csv)
    return _finish(args, out, {"path": None, "sha256": None}, outputs, {})


def _filter_common(args, run):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    record = recordio.read(args.input)
    if not isinstance(record, simulate.MeasurementRecord):
        raise ValueError(f"{args.input} is not a baseband record")
    traj = run(record, rates)
    out = _out_dir(args.out, is_file=True)
    recordio.write_trajectory(args.out, traj, record.seed, record.params_hash)
    outputs = [args.out]
    if args.csv:
        recordio.trajectory_to_csv(args.csv, traj)
        outputs.append(args.csv)
    return _finish(args, out, config, outputs, {})


def cmd_filter(args):
    return _filter_common(args, lambda rec, rates: filters.predict(rec, rates, args.v0))


def cmd_retro(args):
    return _filter_common(args, lambda rec, rates: filters.retrodict(rec, rates, args.ve_final))


def _records_ensemble(args, params, rates):
    paths = sorted(Path(args.records).glob("*.qtrk"))
    record = recordio.read_records(paths)
    if record.params_hash is not None and record.params_hash != params.params_hash:
        raise filters.ParameterMismatchError("record files were generated with other parameters")
    pred = filters.predict(record, rates)
    retro = filters.retrodict(record, rates, rates.v_bath)
    return pred, retro, record.n_invalid


def cmd_verify(args):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    if args.records:
        pred, retro, n_invalid = _records_ensemble(args, params, rates)
    elif args.seed is None:
        raise ValueError("--seed is required unless --records is given")
    else:
        ens = ensemble.run_ensemble(params, _ensemble_config(args, keep_truth=False))
        pred, retro, n_invalid = ens.pred, ens.retro, ens.n_invalid
    t0 = args.t0_s if args.t0_s else verify.steady_t0(pred.t, rates, n_invalid)
    correction = None
    if getattr(args, "pipeline", "baseband") != "baseband" and not args.records:
        correction = spectral.filter_correction(spectral.SpectralModel(rates, demod.DemodFilterSpec()))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", verify.NonSteadyStateWarning)
        report = verify.relative_variance(pred, retro, t0, rates=rates, correction=correction)
    steady = not any(issubclass(w.category, verify.NonSteadyStateWarning) for w in caught)
    out = _out_dir(args.out, is_file=False)
    report_path = out / "report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    curve_path = out / "sigma2_t0.csv"
    sigma2, stderr = verify.sigma2_curve(pred, retro, t0)
    k = np.rint(np.asarray(t0) / pred.dt).astype(int)
    recordio.write_csv(curve_path, {
        "t0_s": t0, "sigma2": sigma2, "stderr": stderr,
        "theory": pred.variance[k] + retro.variance[k],
    })
    log.info("sigma2 = %.4f +- %.4f (V + V_E = %.4f)",
             report.sigma2, report.sigma2_stderr, rates.sigma2_steady)
    return _finish(args, out, config, [report_path, curve_path], {"steady_state": steady})


def _curve_csv(path, curve: verify.CollapseCurve):
    recordio.write_csv(path, {
        "t0_s": curve.t0, "sigma2": curve.sigma2, "stderr": curve.stderr, "theory": curve.theory,
    })


def _time_grid(t, stride):
    return t[:: max(1, stride)]


def cmd_collapse(args):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    ens = ensemble.run_ensemble(params, _ensemble_config(args, keep_truth=False))
    curve = verify.collapse_curve(params, _time_grid(ens.t, args.stride), ensemble=ens)
    out = _out_dir(args.out, is_file=False)
    path = out / "collapse.csv"
    _curve_csv(path, curve)
    steady = bool(np.any(riccati.is_steady(ens.pred.variance, rates.v_steady)))
    return _finish(args, out, config, [path], {"steady_state": steady})


def cmd_decohere(args):
    params, config = _load_config(args)
    ens = ensemble.run_ensemble(
        params, _ensemble_config(args, keep_truth=False, t_star=args.t_star_s)
    )
    curve = verify.decoherence_curve(
        params, args.t_star_s, _time_grid(ens.t, args.stride), ensemble=ens
    )
    out = _out_dir(args.out, is_file=False)
    path = out / "decoherence.csv"
    _curve_csv(path, curve)
    return _finish(args, out, config, [path], {})


def cmd_riccati(args):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    t_max = args.t_max_s if args.t_max_s else 50.0 / rates.gamma_meas
    v0 = rates.v_bath if args.v0 is None else args.v0
    closed = riccati.v_analytic if args.direction == "forward" else riccati.v_e_backward
    t = np.linspace(0.0, t_max, args.points)
    out = _out_dir(args.out, is_file=False)
    path = out / "riccati.csv"
    column = "t_before_end_s" if args.direction == "backward" else "t_s"
    recordio.write_csv(path, {column: t, "v": closed(rates, v0, t)})
    # self-check on a grid fine enough for the integrator's step condition
    stiffness = 8.0 * rates.gamma_meas * v0 + rates.gamma_m
    fine = np.linspace(0.0, t_max, int(math.ceil(t_max * stiffness / 0.05)) + 1)
    oracle = riccati.v_ode_oracle(rates, v0, fine, direction=args.direction)
    err = float(np.max(np.abs(closed(rates, v0, fine) / oracle.v - 1.0)))
    log.info("closed form vs ODE integration: max relative error %.2e", err)
    return _finish(args, out, config, [path], {"ode_agreement": err < 1e-6})


def _write_table_s1(path, rates, spec):
    sm = spectral.SpectralModel(rates, spec)
    if spec is None:
        rows = [(k, "", v, "") for k, v in spectral.table_s1(sm, False).as_dict().items()]
    else:
        rows = spectral.table_s1_rows(sm)
    _write_table(path, ["statistic", "with_filter", "without_filter", "difference_pct"], rows)


def cmd_spectral(args):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    spec = None if args.filter == "none" else _filter_spec(args)
    out = _out_dir(args.out, is_file=True)
    try:
        _write_table_s1(args.out, rates, spec)
        converged = True
    except spectral.ResolutionError as exc:
        log.error("%s", exc)
        converged = False
    outputs = [args.out] if converged else []
    return _finish(args, out, config, outputs, {"quadrature_converged": converged})


def _fig1(args, params, rates, out):
    dt = args.dt_s
    n = int(round(args.segment_s / dt))
    truth, record = simulate.simulate_record(params, dt, n, args.seed, args.index)
    pred = filters.predict(record, rates)
    retro = filters.retrodict(record, rates, rates.v_bath)
    path = out / "fig1_trajectory.csv"
    recordio.write_csv(path, {
        "t_s": record.t, "x_X": truth.x[0], "x_Y": truth.x[1],
        "i_X": record.i[0], "i_Y": record.i[1],
        "rX_pred": pred.mean[0], "rY_pred": pred.mean[1], "V": pred.variance,
        "rX_retro": retro.mean[0], "rY_retro": retro.mean[1], "V_E": retro.variance,
    })
    return [path], {}


def _fig3(args, params, rates, out):
    ens = ensemble.run_ensemble(params, _ensemble_config(args, keep_truth=False))
    k = ens.pred.index_of(args.t0_s)
    rp, rr = ens.pred.mean[..., k], ens.retro.mean[..., k]
    pairs = out / "fig3_endpoints.csv"
    recordio.write_csv(pairs, {
        "realization": np.arange(ens.n_realizations),
        "rX_pred": rp[:, 0], "rY_pred": rp[:, 1], "rX_retro": rr[:, 0], "rY_retro": rr[:, 1],
        "dX": rp[:, 0] - rr[:, 0], "dY": rp[:, 1] - rr[:, 1],
    })
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", verify.NonSteadyStateWarning)
        report = verify.relative_variance(ens.pred, ens.retro, args.t0_s, rates=rates)
    radius = out / "fig3_radius.csv"
    recordio.write_csv(radius, {
        "t0_s": [args.t0_s], "sigma2": [report.sigma2], "stderr": [report.sigma2_stderr],
        "radius_2sd": [2.0 * math.sqrt(report.sigma2)], "pure_radius_2sd": [2.0],
    })
    return [pairs, radius], {"steady_state": not caught}


def _fig4(args, params, rates, out):
    ens = ensemble.run_ensemble(
        params, _ensemble_config(args, keep_truth=False, t_star=args.t_star_s)
    )
    t = _time_grid(ens.t, args.stride)
    curve = verify.decoherence_curve(params, args.t_star_s, t, ensemble=ens)
    path = out / "fig4_sigma2.csv"
    recordio.write_csv(path, {
        "t_s": curve.t0, "sigma2": curve.sigma2, "stderr": curve.stderr,
        "theory": curve.theory, "conditioned": (curve.t0 <= args.t_star_s).astype(int),
    })
    return [path], {}


def _table(args, params, rates, out):
    path = out / "table_s1.csv"
    _write_table_s1(path, rates, _filter_spec(args))
    return [path], {}


FIGURES = {"fig1": _fig1, "fig3": _fig3, "fig4": _fig4, "tableS1": _table}


def cmd_figures(args):
    params, config = _load_config(args)
    rates = model.derive_rates(params)
    out = _out_dir(args.out, is_file=False)
    outputs, checks = FIGURES[args.which](args, params, rates, out)
    return _finish(args, out, config, outputs, checks)


# --- parser -------------------------------------------------------------------


def _add_ensemble(p, seed_required=True):
    p.add_argument("--n-segments", type=positive_int, default=1000)
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--segment-s", type=positive_float, default=simulate.DEFAULT_SEGMENT)
    p.add_argument("--pipeline", choices=("baseband", "carrier", "lowpass"), default="baseband")


def _add_filter_spec(p):
    p.add_argument("--cutoff-hz", type=positive_float, default=60e3)
    p.add_argument("--order", type=positive_int, default=7)
    p.add_argument("--stages", type=positive_int, default=2)
    p.add_argument("--zero-phase", action="store_true")


def _add_common(p, default):
    # Subcommands accept the global options too; SUPPRESS keeps them from
    # overwriting a value given before the subcommand name.
    p.add_argument("--params", type=Path, default=default(None),
                   help="YAML parameter file (default: built-in membrane parameters)")
    p.add_argument("--threads", type=positive_int, default=default(None),
                   help="worker threads (env QTRACK_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, lambda value: argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="qtrack",
        description="Predicted and retrodicted quantum trajectories of a measured oscillator.",
    )
    _add_common(parser, lambda value: value)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="simulate measurement records")
    p.add_argument("--n-segments", type=positive_int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--segment-s", type=positive_float, default=simulate.DEFAULT_SEGMENT)
    p.add_argument("--dt-s", type=positive_float, default=simulate.DEFAULT_DT)
    p.add_argument("--carrier", action="store_true", help="write carrier photocurrents instead")
    p.add_argument("--csv", action="store_true", help="also write a CSV per record")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("demod", parents=[common], help="demodulate a carrier file")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--omega-m-hz", type=positive_float, help="demodulation frequency (default: file)")
    _add_filter_spec(p)
    p.add_argument("--out", type=Path, required=True, help="output record file")
    p.add_argument("--psd-csv", type=Path, help="also write the Welch PSD of the result")
    p.add_argument("--psd-segment", type=positive_int, default=512)
    p.set_defaults(func=cmd_demod)

    for name, func, help_text in (
        ("filter", cmd_filter, "predicted trajectory of one record"),
        ("retro", cmd_retro, "retrodicted trajectory of one record"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--in", dest="input", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True, help="output trajectory file")
        p.add_argument("--csv", type=Path, help="also write the trajectory as CSV")
        if name == "filter":
            p.add_argument("--v0", type=positive_float, help="initial variance (default v_bath)")
        else:
            p.add_argument("--ve-final", type=positive_float,
                           help="final effect variance (default: steady V_E)")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", parents=[common], help="sigma^2 = V + V_E from an ensemble")
    _add_ensemble(p, seed_required=False)
    p.add_argument("--records", type=Path, help="directory of record files instead of simulating")
    p.add_argument("--t0-s", type=positive_float, nargs="+",
                   help="verification times (default: pooled steady window)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("collapse", parents=[common], help="sigma^2(t0) after a thermal start")
    _add_ensemble(p)
    p.add_argument("--stride", type=positive_int, default=10, help="samples between t0 points")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("decohere", parents=[common], help="sigma^2(t) after unconditioning")
    _add_ensemble(p)
    p.add_argument("--t-star-s", type=positive_float, default=0.7e-3)
    p.add_argument("--stride", type=positive_int, default=10)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_decohere)

    p = sub.add_parser("riccati", parents=[common], help="conditional variance curve")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--v0", type=positive_float, help="initial (final) variance, default v_bath")
    p.add_argument("--t-max-s", type=positive_float, help="default 50 / Gamma_meas")
    p.add_argument("--points", type=positive_int, default=1001)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_riccati)

    p = sub.add_parser("spectral", parents=[common], help="steady-state spectral statistics")
    p.add_argument("--filter", choices=("default", "none"), default="default")
    _add_filter_spec(p)
    p.add_argument("--out", type=Path, required=True, help="output CSV file")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("figures", parents=[common], help="data bundles behind the figures")
    p.add_argument("which", choices=tuple(FIGURES))
    _add_ensemble(p)
    p.add_argument("--dt-s", type=positive_float, default=simulate.DEFAULT_DT)
    p.add_argument("--index", type=int, default=0, help="realization for fig1")
    p.add_argument("--t0-s", type=positive_float, default=1.6e-3, help="endpoint time for fig3")
    p.add_argument("--t-star-s", type=positive_float, default=0.7e-3)
    p.add_argument("--stride", type=positive_int, default=10)
    _add_filter_spec(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except SelfCheckFailed as exc:
        log.error("self-check failed: %s", exc)
        return EXIT_SELF_CHECK
    except (model.ConfigError, model.ParameterError, recordio.RecordFormatError,
            filters.ParameterMismatchError, verify.InsufficientEnsembleError,
            OSError, ValueError) as exc:
        print(f"qtrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
