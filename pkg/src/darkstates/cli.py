"""Command-line front end.

::

    darkstates run fig_4a_dark_state            # bundled name or YAML path
    darkstates scan fig_4d_holes
    darkstates eig fig_2c_eigen_holes
    darkstates fit bundle/timeseries.csv --window "1 us" "1.5 us"
    darkstates compare bundle_a bundle_b --tolerance 1e-9

Each scenario run writes ``<root>/<date>_<name>_<hash>/`` containing the
requested CSV files, ``fits.json`` and ``manifest.json``.  The root is
``--output-dir``, else ``$DARKSTATES_OUTPUT_ROOT``, else
``./darkstates-output``.

Exit codes: 0 success, 1 comparison outside tolerance, 2 configuration
error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (extract_oscillation, fit_decay, fit_two_regime,
                       polariton_splitting, spectral_peaks, write_report)
from .dynamics import TimeSeries, default_step, integrate, transmission_scan
from .exceptions import ConfigError, DarkStatesError, NumericalError
from .scenario import Scenario, bundled_names, resolve
from .spectra import eigenspectrum, find_dark_states
from .spectral import FrequencyGrid, write_density_csv, write_packets_csv
from .units import parse_quantity
from .volterra import build_kernel, driving_term, solve_volterra

log = logging.getLogger("darkstates")

ENV_ROOT = "DARKSTATES_OUTPUT_ROOT"
EXIT_MISMATCH, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 1, 2, 3, 4


def output_root(arg=None):
    return Path(arg or os.environ.get(ENV_ROOT) or "darkstates-output")


def bundle_dir(root, scenario: Scenario, date=None):
    date = date or datetime.date.today().isoformat()
    return Path(root) / f"{date}_{scenario.name}_{scenario.hash}"


def _header(scenario, what):
    return [f"darkstates {__version__} {what}",
            f"scenario {scenario.name} hash {scenario.hash}",
            *scenario.param_lines()]


def _complex_pair(z):
    return [float(z.real), float(z.imag)]


def run_scenario(scenario, root=None, outputs=None, date=None):
    """Execute a scenario's pipeline and write its bundle.

    ``outputs`` overrides ``run.outputs``.  Returns a dict with the bundle
    ``directory``, written ``files`` and ``fits``, and the in-memory
    ``results`` (series, spectra).
    """
    if not isinstance(scenario, Scenario):
        scenario = resolve(scenario)
    run = scenario.data["run"]
    outputs = tuple(outputs or run["outputs"])
    if "volterra" in outputs and "timeseries" not in outputs:
        outputs = ("timeseries",) + outputs
    if run["span"] is None and {"timeseries", "volterra"} & set(outputs):
        raise ConfigError("time-domain outputs need run.span", "run.span")
    if "scan" in outputs and run["scan"] is None:
        raise ConfigError("scan output needs a run.scan block", "run.scan")

    out = bundle_dir(output_root(root), scenario, date)
    out.mkdir(parents=True, exist_ok=True)
    files, fits, results = {}, {}, {}
    cavity = scenario.cavity()
    packets = scenario.packets()
    ana = scenario.data["analysis"]

    def record(name, columns, rows):
        files[name] = {"columns": list(columns), "rows": int(rows)}

    if "density" in outputs:
        density = scenario.density()
        omega = FrequencyGrid.for_density(density, 10001).points
        write_density_csv(out / "density.csv", density, omega,
                          _header(scenario, "density"))
        record("density.csv", ("omega_rad_s", "rho"), omega.size)
    if "packets" in outputs:
        write_packets_csv(out / "packets.csv", packets,
                          _header(scenario, "packets"))
        record("packets.csv", ("omega_rad_s", "g_rad_s"), len(packets))

    if "timeseries" in outputs:
        drive = scenario.drive()
        frame = drive.carrier
        dt = run["dt"] or default_step(packets, cavity, frame)
        log.info("%s: integrating %d packets, dt=%.4g s", scenario.name,
                 len(packets), dt)
        ts = integrate(packets, cavity, drive, run["span"], dt,
                       frame=frame, sample_every=run["sample_every"])
        results["timeseries"] = ts
        ts.write_csv(out / "timeseries.csv", _header(scenario, "timeseries"))
        record("timeseries.csv", ("t_s", "re_A", "im_A", "abs2_A"), ts.t.size)
        if ana["decay_window"]:
            fits["decay"] = fit_decay(ts, ana["decay_window"])
        if ana["early_window"] and ana["late_window"]:
            fits["early"], fits["late"] = fit_two_regime(
                ts, ana["early_window"], ana["late_window"])
        if ana["oscillation_window"]:
            fits["oscillation"] = extract_oscillation(
                ts, ana["oscillation_window"], ana["oscillation_signal"],
                min_frequency=ana["oscillation_min_frequency"])

    if "volterra" in outputs:
        ts = results["timeseries"]
        drive = scenario.drive()
        kernel = build_kernel(packets, cavity, drive.carrier, lags=ts.t - ts.t[0])
        F = driving_term(drive, cavity, drive.carrier, ts.t)
        vs = solve_volterra(kernel, F, ts.t)
        results["volterra"] = vs
        kernel.write_csv(out / "kernel.csv", _header(scenario, "kernel"))
        record("kernel.csv", ("lag_s", "re_K", "im_K", "re_U", "im_U"),
               kernel.lags.size)
        vs.write_csv(out / "volterra.csv", _header(scenario, "volterra"))
        record("volterra.csv", ("t_s", "re_A", "im_A", "abs2_A"), vs.t.size)
        peak = float(np.max(np.abs(ts.A)))
        fits["volterra_vs_ode"] = {
            "max_abs_diff_over_peak":
                float(np.max(np.abs(vs.A - ts.A))) / peak if peak else 0.0}

    if "scan" in outputs:
        sp = scenario.scan_packets()
        spec = transmission_scan(sp, cavity, scenario.scan_frequencies())
        results["scan"] = spec
        spec.write_csv(out / "scan.csv", _header(scenario, "scan"))
        record("scan.csv", ("omega_p_rad_s", "re_A", "im_A", "abs2_A"),
               spec.omega_p.size)
        peaks = spectral_peaks(spec, ana["peak_prominence"])
        w_c = cavity.omega_c
        summary = {
            "n_maxima": len(peaks),
            "offset_rad_s": [p["omega"] - w_c for p in peaks],
            "fwhm_rad_s": [p["fwhm"] for p in peaks],
            "height": [p["height"] for p in peaks],
        }
        if len(peaks) >= 2:
            summary["splitting_rad_s"] = polariton_splitting(
                spec, ana["peak_prominence"])
        fits["scan"] = summary

    if "eig" in outputs:
        ref = scenario.data["ensemble"]["center"]
        es = eigenspectrum(packets, cavity, ref, run["eig_method"])
        results["eig"] = es
        es.write_csv(out / "eig.csv", _header(scenario, "eig"))
        record("eig.csv", ("re_lambda_rad_s", "im_lambda_rad_s",
                           "cavity_fraction"), len(es))
        dark = find_dark_states(es, scenario.hole_specs())
        fits["eig"] = {
            "n_states": len(es),
            "method": es.meta["method"],
            "cavity_rich_states": int(np.sum(es.cavity_fractions > 0.25)),
            "max_cavity_fraction": float(es.cavity_fractions.max()),
            "dark_states": [{**d, "eigenvalue": _complex_pair(d["eigenvalue"])}
                            for d in dark],
        }

    report = write_report(out / "fits.json", fits)
    manifest = {
        "tool": "darkstates",
        "version": __version__,
        "scenario": scenario.canonical(),
        "hash": scenario.hash,
        "outputs": list(outputs),
        "files": files,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"directory": out, "files": files, "fits": report,
            "results": results}


# -- compare -----------------------------------------------------------------

def _read_csv(path):
    with open(path) as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    header = rows[0].strip().split(",")
    data = np.loadtxt(rows[1:], delimiter=",", ndmin=2) if len(rows) > 1 \
        else np.empty((0, len(header)))
    return header, data


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        out[prefix] = float(obj)
    return out


def compare_runs(a, b, tolerance=1e-9):
    """Diff two bundles: per-column max differences of every shared CSV
    (relative to the column's largest magnitude in ``a``) and relative
    differences of every numeric fit value."""
    a, b = Path(a), Path(b)
    with open(a / "manifest.json") as fh:
        ma = json.load(fh)
    with open(b / "manifest.json") as fh:
        mb = json.load(fh)
    report = {"tolerance": tolerance, "files": {}, "fits": {}}
    ok = True
    for name in sorted(set(ma["files"]) & set(mb["files"])):
        ha, da = _read_csv(a / name)
        hb, db = _read_csv(b / name)
        if ha != hb or da.shape != db.shape:
            raise ConfigError(f"shapes differ: {da.shape} vs {db.shape}", name)
        cols = {}
        for j, col in enumerate(ha):
            diff = float(np.max(np.abs(da[:, j] - db[:, j]))) if da.size else 0.0
            scale = float(np.max(np.abs(da[:, j]))) if da.size else 0.0
            rel = diff / scale if scale > 0 else diff
            cols[col] = {"max_abs": diff, "max_rel": rel}
            ok &= rel <= tolerance
        report["files"][name] = cols
    fa, fb = {}, {}
    if (a / "fits.json").exists() and (b / "fits.json").exists():
        with open(a / "fits.json") as fh:
            fa = _flatten(json.load(fh))
        with open(b / "fits.json") as fh:
            fb = _flatten(json.load(fh))
    for key in sorted(set(fa) & set(fb)):
        x, y = fa[key], fb[key]
        if math.isnan(x) and math.isnan(y):
            rel = 0.0
        else:
            den = max(abs(x), abs(y))
            rel = abs(x - y) / den if den > 0 else 0.0
        report["fits"][key] = {"a": x, "b": y, "rel_diff": rel}
        ok &= rel <= tolerance
    report["only_in_a"] = sorted(set(ma["files"]) - set(mb["files"]))
    report["only_in_b"] = sorted(set(mb["files"]) - set(ma["files"]))
    report["pass"] = bool(ok)
    return report


# -- argument handling -----------------------------------------------------

def _time(text):
    try:
        return parse_quantity(text, "time")
    except ConfigError:
        try:
            return float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad time {text!r}") from None


def _frequency(text):
    try:
        return parse_quantity(text, "frequency")
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(exc.message) from None


def build_parser():
    p = argparse.ArgumentParser(
        prog="darkstates",
        description="Spin-ensemble / cavity simulations with spectral holes.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    p.add_argument("--output-dir", "-o",
                   help=f"output root (default ${ENV_ROOT} or "
                        "./darkstates-output)")
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--threads", "-j", type=int, default=1,
                   help="scenarios to run concurrently")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenario pipelines")
    r.add_argument("scenarios", nargs="+",
                   help="YAML files or bundled scenario names")
    r.add_argument("--only", nargs="+", metavar="OUTPUT",
                   help="override run.outputs")
    for name, what in (("scan", "steady-state transmission scan"),
                       ("eig", "complex eigenspectrum")):
        s = sub.add_parser(name, help=what)
        s.add_argument("scenarios", nargs="+")

    f = sub.add_parser("fit", help="fit a time-series CSV")
    f.add_argument("csv")
    f.add_argument("--window", nargs=2, type=_time, metavar=("T0", "T1"))
    f.add_argument("--early", nargs=2, type=_time, metavar=("T0", "T1"))
    f.add_argument("--late", nargs=2, type=_time, metavar=("T0", "T1"))
    f.add_argument("--oscillation", nargs=2, type=_time, metavar=("T0", "T1"))
    f.add_argument("--signal", choices=("intensity", "amplitude"),
                   default="intensity")
    f.add_argument("--min-frequency", type=_frequency, default=0.0,
                   help="ignore oscillation peaks below this (e.g. '5 MHz')")
    f.add_argument("--report", help="also write the JSON report here")

    c = sub.add_parser("compare", help="diff two output bundles")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tolerance", type=float, default=1e-9)

    sub.add_parser("list", help="list bundled scenarios")
    return p


def _run_many(specs, root, outputs, threads):
    def one(spec):
        res = run_scenario(resolve(spec), root, outputs)
        return str(res["directory"])

    if threads > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, specs))
    return [one(s) for s in specs]


def _cmd_fit(args):
    ts = TimeSeries.read_csv(args.csv)
    fits = {}
    if args.window:
        fits["decay"] = fit_decay(ts, tuple(args.window))
    if args.early and args.late:
        fits["early"], fits["late"] = fit_two_regime(ts, tuple(args.early),
                                                     tuple(args.late))
    if args.oscillation:
        fits["oscillation"] = extract_oscillation(
            ts, tuple(args.oscillation), args.signal,
            min_frequency=args.min_frequency)
    if not fits:
        raise ConfigError("nothing to fit: give --window, --early/--late or "
                          "--oscillation", "fit")
    fits = {k: v.to_dict() for k, v in fits.items()}
    if args.report:
        write_report(args.report, fits)
    return fits


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list":
            print("\n".join(bundled_names()))
            return 0
        if args.command in ("run", "scan", "eig"):
            outputs = {"scan": ("scan",), "eig": ("eig",)}.get(
                args.command, getattr(args, "only", None))
            for d in _run_many(args.scenarios, args.output_dir, outputs,
                               args.threads):
                print(d)
            return 0
        if args.command == "fit":
            print(json.dumps(_cmd_fit(args), indent=2, sort_keys=True))
            return 0
        if args.command == "compare":
            report = compare_runs(args.a, args.b, args.tolerance)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0 if report["pass"] else EXIT_MISMATCH
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DarkStatesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
