"""Command-line front end.

Exit status: 0 success, 2 usage, 3 configuration, 4 input data,
5 numerical failure, 1 anything else.  Errors are reported on stderr as
``error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import shutil
import sys
import tempfile
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .collapse import DecayModelParams, mean_decay_curve, transmission_from_n
from .config import (
    ConfigError,
    drive_config,
    format_config,
    heating_model,
    parse_config,
    power_anchor,
    protocol_config,
    system_params,
)
from .core import mhz
from .dynamics import ProtocolConfig, SimulationError, atoms_for_pulling, run_ensemble
from .fitting import (
    DegenerateDataError,
    FitError,
    PowerCalibration,
    bootstrap_collapse_fit,
    collapse_model_curve,
    fit_collapse_model,
    fit_heating_coefficients,
    nonexponentiality_test,
)
from .io import RunManifest, emit_csv, read_csv
from .trace import average_traces, extract_trapping_time
from .trap import PUBLISHED_HEATING, HeatingModel, trapping_threshold, trapping_time_curve

log = logging.getLogger("selftrap")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> np.ndarray:
    """``start:stop:count`` (inclusive, linear) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:count, got {text!r}")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
        if count < 1:
            raise argparse.ArgumentTypeError("grid count must be >= 1")
        return np.linspace(start, stop, count)
    return np.array(_float_list(text))


def _tag(value: float) -> str:
    return f"{value:g}".replace(".", "p")


def _out_paths(out: str, suffixes: List[str]) -> List[Path]:
    base = Path(out)
    return [base.with_name(f"{base.stem}{s}{base.suffix or '.csv'}") for s in suffixes]


def _manifest_path(out: str) -> Path:
    base = Path(out)
    return base.with_name(base.stem + ".manifest.json")


def _start_manifest(args, argv, cfg) -> RunManifest:
    return RunManifest(
        argv=list(argv),
        command=args.command,
        config={k: v for k, v in cfg.items()},
        seed=args.seed,
        version=__version__,
    )


def _finish_manifest(manifest: RunManifest, out: str, files: List[Path]):
    base = Path(out).parent
    for f in files:
        manifest.add_output(f, base=base)
    manifest.write(_manifest_path(out))


def _config(args):
    cfg = parse_config(args.config)
    for key, value in getattr(args, "overrides", {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args, argv):
    args.overrides = {
        "delta_C_MHz": args.delta_c_mhz,
        "eta_over_kappa": args.eta_over_kappa,
        "n_atoms": args.n_atoms,
        "n_eff_u0_MHz": args.n_eff_u0_mhz,
        "traces": args.traces,
    }
    cfg = _config(args)
    params = system_params(cfg)
    drive = drive_config(cfg, params)
    proto = protocol_config(cfg, seed=args.seed)
    n_traces = int(cfg["traces"])
    if n_traces < 1:
        raise UsageError("--traces must be >= 1")
    manifest = _start_manifest(args, argv, cfg)
    traces = run_ensemble(proto, drive, params, n_traces, master_seed=args.seed,
                          workers=args.threads, anchor=power_anchor(cfg))
    mean = average_traces(traces)
    files = []
    per_trace = _out_paths(args.out, [f"_trace{i:03d}" for i in range(n_traces)])
    for tr, path in zip(traces, per_trace):
        files.append(_write_trace(tr, path))
    files.append(_write_trace(mean, Path(args.out)))
    tau = extract_trapping_time(mean)
    manifest.extra.update(n_atoms=proto.n_atoms, trapping_time_ms=tau)
    _finish_manifest(manifest, args.out, files)
    print(f"trapping time of averaged trace: {'none' if tau is None else f'{tau:.4g} ms'}")


def _write_trace(tr, path: Path) -> Path:
    return emit_csv(
        {
            "t_ms": tr.times,
            "photon_number": tr.photon_number,
            "transmission_norm": tr.transmission_norm,
            "n_eff": tr.n_eff,
            "trapped_fraction": tr.trapped_fraction,
        },
        path,
    )


def cmd_trap_curve(args, argv):
    cfg = _config(args)
    params = system_params(cfg)
    anchor = power_anchor(cfg)
    temperature = heating_model(cfg).temperature
    powers = args.powers
    if np.any(powers < 0):
        raise UsageError("powers must be >= 0")
    manifest = _start_manifest(args, argv, cfg)
    files = []
    deltas = args.delta_c_mhz if args.delta_c_mhz else [cfg["delta_C_MHz"]]
    paths = _out_paths(args.out, [f"_dc{_tag(d)}" for d in deltas]) if len(deltas) > 1 else [Path(args.out)]
    for dc, path in zip(deltas, paths):
        if args.coefficients == "published" and dc in PUBLISHED_HEATING:
            d0, d1 = PUBLISHED_HEATING[dc]
        else:
            d0, d1 = cfg["d0"], cfg["d1"]
        heating = HeatingModel(d0, d1, temperature)
        cal = PowerCalibration(delta_C=mhz(dc), n_eff_u0=mhz(cfg["n_eff_u0_MHz"]), anchor=anchor)
        s = cal.saturation(powers, params)
        tau = trapping_time_curve(s, heating, params)
        files.append(emit_csv({"power_uW": powers, "saturation": s, "tau_ms": tau,
                               "trapped": np.isfinite(tau)}, path))
        s_thr = trapping_threshold(heating, params)
        s_unit = float(cal.saturation(np.array([1.0]), params)[0])
        manifest.extra[f"dc{dc:g}"] = {"d0": d0, "d1": d1, "threshold_power_uW": s_thr / s_unit}
    _finish_manifest(manifest, args.out, files)


def cmd_collapse(args, argv):
    cfg = _config(args)
    model = DecayModelParams.from_mhz(
        args.delta_c_mhz, args.n0_u0_mhz, args.n0, args.a, args.tau_ms, kappa_mhz=cfg["kappa_MHz"]
    )
    manifest = _start_manifest(args, argv, cfg)
    curve = mean_decay_curve(model, args.t_end_ms, args.traces, master_seed=args.seed,
                             n_points=args.points)
    trace = transmission_from_n(curve.times, curve.n_mean, model)
    path = emit_csv({"t_ms": curve.times, "n_mean": curve.n_mean, "n_meanfield": curve.n_meanfield,
                     "transmission_norm": trace.transmission_norm}, args.out)
    _finish_manifest(manifest, args.out, [path])


def _load(path, needed):
    try:
        data = read_csv(path)
    except FileNotFoundError:
        raise DegenerateDataError(f"input file not found: {path}") from None
    missing = [c for c in needed if c not in data]
    if missing:
        raise DegenerateDataError(f"{path}: missing column(s) {', '.join(missing)}")
    return data


def _write_report(path: Path, report: dict) -> Path:
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    return path


def cmd_fit_heating(args, argv):
    cfg = _config(args)
    params = system_params(cfg)
    data = _load(args.input, ["power_uW", "tau_ms"])
    dc = args.delta_c_mhz if args.delta_c_mhz is not None else cfg["delta_C_MHz"]
    cal = PowerCalibration(delta_C=mhz(dc), n_eff_u0=mhz(cfg["n_eff_u0_MHz"]), anchor=power_anchor(cfg))
    temperature = heating_model(cfg).temperature
    fit = fit_heating_coefficients(data["power_uW"], data["tau_ms"], params, temperature, cal)
    manifest = _start_manifest(args, argv, cfg)
    grid = np.linspace(float(np.min(data["power_uW"])), float(np.max(data["power_uW"])), 200)
    model = trapping_time_curve(cal.saturation(grid, params),
                                HeatingModel(fit.parameters["d0"], fit.parameters["d1"], temperature), params)
    csv_path = emit_csv({"power_uW": grid, "tau_ms": model}, args.out)
    report = _write_report(_out_paths(args.out, ["_fit"])[0].with_suffix(".json"), fit.to_dict())
    _finish_manifest(manifest, args.out, [csv_path, report])
    print(json.dumps(fit.parameters))


def cmd_fit_collapse(args, argv):
    cfg = _config(args)
    data = _load(args.input, ["t_ms", "transmission"])
    fit = fit_collapse_model(data["t_ms"], data["transmission"], kappa=mhz(cfg["kappa_MHz"]))
    report = fit.to_dict()
    if args.bootstrap > 0:
        report["bootstrap_std"] = bootstrap_collapse_fit(
            data["t_ms"], data["transmission"], n_boot=args.bootstrap, seed=args.seed,
            kappa=mhz(cfg["kappa_MHz"]))
    ne = nonexponentiality_test(data["t_ms"], data["transmission"])
    report["nonexponentiality"] = {"improvement": ne.improvement, "non_exponential": ne.non_exponential,
                                   "exponential_rms": ne.exponential_rms, "model_rms": ne.model_rms}
    if args.n0 > 0:
        report["monte_carlo_check"] = _mc_check(fit, data["t_ms"], args, cfg)
    manifest = _start_manifest(args, argv, cfg)
    csv_path = emit_csv({"t_ms": data["t_ms"], "transmission": data["transmission"],
                         "transmission_model": collapse_model_curve(data["t_ms"], fit)}, args.out)
    rep = _write_report(_out_paths(args.out, ["_fit"])[0].with_suffix(".json"), report)
    _finish_manifest(manifest, args.out, [csv_path, rep])
    print(json.dumps(fit.parameters))


def _mc_check(fit, times, args, cfg):
    """Residual of the trajectory-averaged curve against the mean-field fit."""
    p = fit.parameters
    kappa = cfg["kappa_MHz"]
    model = DecayModelParams.from_mhz(p["delta_c_tilde"] * kappa, p["n0_u0_tilde"] * kappa, args.n0,
                                      p["a_param"], p["tau_ms"], kappa_mhz=kappa)
    t = np.asarray(times, dtype=float) - float(times[0])
    curve = mean_decay_curve(model, float(t[-1]), args.traces, master_seed=args.seed, n_points=len(t))
    dev = np.max(np.abs(curve.n_mean - curve.n_meanfield)) / args.n0
    return {"n0": args.n0, "trajectories": args.traces, "max_relative_deviation": float(dev)}


def cmd_scan(args, argv):
    args.overrides = {"delta_C_MHz": args.delta_c_mhz, "eta_over_kappa": args.eta_over_kappa}
    cfg = _config(args)
    params = system_params(cfg)
    drive = drive_config(cfg, params)
    proto = protocol_config(cfg, seed=args.seed)
    if args.n_min is not None and args.n_max is not None:
        n_lo, n_hi = args.n_min, args.n_max
    else:
        n_lo = atoms_for_pulling(mhz(args.pulling_min_mhz), proto, params)
        n_hi = atoms_for_pulling(mhz(args.pulling_max_mhz), proto, params)
    if not 0 < n_lo < n_hi:
        raise UsageError("atom-number range must satisfy 0 < min < max")
    atoms = np.geomspace(n_lo, n_hi, args.points)
    manifest = _start_manifest(args, argv, cfg)
    taus = []
    for n in atoms:
        p = ProtocolConfig(**{**proto.__dict__, "n_atoms": float(n)})
        traces = run_ensemble(p, drive, params, args.traces, master_seed=args.seed,
                              workers=args.threads, anchor=power_anchor(cfg))
        tau = extract_trapping_time(average_traces(traces))
        log.info("n_atoms=%.4g tau_ms=%s", n, tau)
        taus.append(math.nan if tau is None else tau)
    path = emit_csv({"n_atoms": atoms, "tau_ms": np.array(taus)}, args.out)
    _finish_manifest(manifest, args.out, [path])


def cmd_replay(args, argv):
    """Re-run a manifest into a scratch directory and compare digests."""
    manifest = RunManifest.read(args.manifest)
    old = build_parser().parse_args(_attach_negative_values(manifest.argv))
    scratch = Path(tempfile.mkdtemp(prefix="selftrap-replay-"))
    try:
        new_argv = list(manifest.argv)
        if "--out" not in new_argv:
            new_argv += ["--out", old.out]
        out_index = new_argv.index("--out") + 1
        new_argv[out_index] = str(scratch / Path(old.out).name)
        if "--config" in new_argv:
            # the resolved config is recorded, so replay does not need the original file
            cfg_path = scratch / "replay.cfg"
            cfg_path.write_text(format_config(manifest.config), encoding="utf-8")
            new_argv[new_argv.index("--config") + 1] = str(cfg_path)
        if args.threads is not None:
            if "--threads" not in new_argv:
                new_argv += ["--threads", "1"]
            new_argv[new_argv.index("--threads") + 1] = str(args.threads)
        status = main(new_argv)
        if status != EXIT_OK:
            return status
        ok = RunManifest.read(_manifest_path(new_argv[out_index])).outputs == manifest.outputs
        if ok:
            print("replay: all output digests match")
            return EXIT_OK
        print("replay: output digests differ", file=sys.stderr)
        return EXIT_DATA
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


# -- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_default: str):
    p.add_argument("--config", default="defaults", help="config file or 'defaults'")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=out_default, help="output CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selftrap", description="Collective self-trapping of atoms in a driven cavity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", help="semiclassical dynamics of the release-and-capture protocol")
    _common(p, "simulate.csv")
    p.add_argument("--traces", type=int)
    p.add_argument("--delta-c-mhz", type=float)
    p.add_argument("--eta-over-kappa", type=float)
    p.add_argument("--n-atoms", type=float)
    p.add_argument("--n-eff-u0-mhz", type=float, help="set the atom number through its frequency pulling")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trap-curve", help="empirical trapping time versus drive power")
    _common(p, "trap_curve.csv")
    p.add_argument("--powers", type=_grid, default=_grid("0.1:3.0:30"), help="start:stop:count or list (uW)")
    p.add_argument("--delta-c-mhz", type=_float_list, default=None, help="comma-separated detunings")
    p.add_argument("--coefficients", choices=["published", "config"], default="published",
                   help="heating coefficients per detuning: fitted table where available, or d0/d1 from config")
    p.set_defaults(func=cmd_trap_curve)

    p = sub.add_parser("collapse", help="stochastic trap-collapse Monte Carlo")
    _common(p, "collapse.csv")
    p.add_argument("--a", type=float, default=2.775)
    p.add_argument("--tau-ms", type=float, default=1.0)
    p.add_argument("--delta-c-mhz", type=float, default=-1.87)
    p.add_argument("--n0-u0-mhz", type=float, default=-1.0)
    p.add_argument("--n0", type=int, default=10000)
    p.add_argument("--traces", type=int, default=10)
    p.add_argument("--t-end-ms", type=float, default=20.0)
    p.add_argument("--points", type=int, default=401)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("fit-heating", help="fit d0, d1 to trapping time versus power (CSV: power_uW, tau_ms)")
    _common(p, "fit_heating.csv")
    p.add_argument("input")
    p.add_argument("--delta-c-mhz", type=float)
    p.set_defaults(func=cmd_fit_heating)

    p = sub.add_parser("fit-collapse", help="fit the collapse model to a decay (CSV: t_ms, transmission)")
    _common(p, "fit_collapse.csv")
    p.add_argument("input")
    p.add_argument("--bootstrap", type=int, default=0, help="residual-bootstrap replicas")
    p.add_argument("--n0", type=int, default=0, help="atom number for the Monte Carlo consistency check")
    p.add_argument("--traces", type=int, default=10)
    p.set_defaults(func=cmd_fit_collapse)

    p = sub.add_parser("scan-atom-number", help="trapping time versus atom number at fixed drive")
    _common(p, "scan.csv")
    p.add_argument("--delta-c-mhz", type=float, default=-2.0)
    p.add_argument("--eta-over-kappa", type=float, default=290.0)
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--traces", type=int, default=10)
    p.add_argument("--n-min", type=float)
    p.add_argument("--n-max", type=float)
    p.add_argument("--pulling-min-mhz", type=float, default=-0.2,
                   help="smallest atom number, given by its frequency pulling")
    p.add_argument("--pulling-max-mhz", type=float, default=-2.0)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_replay, seed=0)
    return parser


_NUMERIC_VALUE = re.compile(r"^-[0-9.][0-9.eE+\-,:]*$")


def _attach_negative_values(argv: List[str]) -> List[str]:
    """Join ``--opt -1,-2`` into ``--opt=-1,-2`` so argparse does not read a flag."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and _NUMERIC_VALUE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error[usage]: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = args.func(args, argv)
        return EXIT_OK if result is None else int(result)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDataError, FileNotFoundError) as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, SimulationError, FloatingPointError, ArithmeticError) as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"error[other]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
