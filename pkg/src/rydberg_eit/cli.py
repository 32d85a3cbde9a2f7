"""
Command-line front end.

Subcommands
-----------
spectrum
    Simulate a transmission grid and write ``delta_c_mhz,<y_label>,transmission``
    CSV plus a JSON metadata sidecar.
analyze
    Extract a peak trace, bell features or an inferred RF2 Rabi frequency
    from a spectrum CSV.
calibrate
    Fit the cell factor F to measured Autler-Townes splittings.

Exit codes: 0 success, 1 bad input or configuration, 2 numerical failure
(more than 1% of grid cells degenerate), 3 no zero crossing in bell mode.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analysis import (AnalysisError, NoCrossingError, bell_features, calibrate_cell_factor,
                       extract_peak_trace, infer_rf2_field)
from .config import DopplerSettings, ScanSpec, SchemeConfig, parse_config, serialize_scheme
from .constants import MHZ
from .fields import HornSource, VaporConditions, dbm_to_watts, rabi_frequency, rf_field_magnitude
from .presets import PRESET_NAMES, builtin_preset
from .scheme import LevelScheme, SchemeError
from .spectra import doppler_spec, run_scan

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NO_CROSSING = 0, 1, 2, 3
DEGENERATE_LIMIT = 0.01


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


# -- small helpers -----------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _keyval_text(record: Dict[str, object]) -> str:
    lines = []
    for key, value in record.items():
        lines.append(f"{key}={_fmt(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"


def _assignments(items: Sequence[str], flag: str) -> List[Tuple[str, float]]:
    out = []
    for item in items or ():
        key, sep, value = item.partition("=")
        try:
            out.append((key.strip(), float(value)))
        except ValueError:
            raise CliError(f"{flag} expects DRIVE=NUMBER, got {item!r}") from None
        if not sep or not key.strip():
            raise CliError(f"{flag} expects DRIVE=NUMBER, got {item!r}")
    return out


# -- spectrum -----------------------------------------------------------------------

def _load_config(args) -> SchemeConfig:
    if args.scheme and args.preset:
        raise CliError("give either --preset or --scheme, not both")
    if args.scheme:
        path = Path(args.scheme)
        if not path.is_file():
            raise CliError(f"scheme file not found: {path}")
        return parse_config(path.read_text())
    name = args.preset or "six_level_rb85"
    try:
        return SchemeConfig(builtin_preset(name))
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from None


def _apply_overrides(scheme: LevelScheme, args) -> LevelScheme:
    for drive_id, mhz in _assignments(args.rabi, "--rabi"):
        scheme = scheme.with_drive(drive_id, rabi=mhz * MHZ)
    for drive_id, mhz in _assignments(args.detuning, "--detuning"):
        scheme = scheme.with_drive(drive_id, detuning=mhz * MHZ)
    powers = [(d, mw * 1e-3) for d, mw in _assignments(args.power_mw, "--power-mw")]
    powers += [(d, dbm_to_watts(v)) for d, v in _assignments(args.power_dbm, "--power-dbm")]
    for flag, drive_id in (("rf1_power_dbm", "RF1"), ("rf2_power_dbm", "RF2")):
        value = getattr(args, flag)
        if value is not None:
            powers.append((drive_id, dbm_to_watts(value)))
    for drive_id, watts in powers:
        drive = scheme.drive(drive_id)
        rabi = scheme.drive_rabi_for_power(drive_id, watts)
        source = dataclasses.replace(drive.source, power=watts)
        scheme = scheme.with_drive(drive_id, rabi=rabi, source=source)
    for flag, drive_id in (("rf1_rabi_mhz", "RF1"), ("rf2_rabi_mhz", "RF2")):
        value = getattr(args, flag)
        if value is not None:
            scheme = scheme.with_drive(drive_id, rabi=value * MHZ)
    return scheme


def _scan_from_args(args, cfg: SchemeConfig) -> ScanSpec:
    if args.x_range is None and args.y_kind is None:
        if cfg.scan is None:
            raise CliError("no scan given: use --x-range/--y-kind or a [scan] section")
        return cfg.scan
    base = cfg.scan
    if args.x_range is not None:
        x0, x1, nx = args.x_range
        x_start, x_stop, x_points = x0 * MHZ, x1 * MHZ, int(nx)
    elif base is not None:
        x_start, x_stop, x_points = base.x_start, base.x_stop, base.x_points
    else:
        raise CliError("--x-range is required")
    y_kind = args.y_kind or (base.y_kind if base else "probe_transmission_only")
    if y_kind == "probe_transmission_only":
        return ScanSpec(x_start, x_stop, x_points)
    if args.y_range is None:
        if base is None or base.y_kind != y_kind:
            raise CliError(f"--y-range is required for {y_kind}")
        return ScanSpec(x_start, x_stop, x_points, y_kind, args.y_drive or base.y_drive,
                        base.y_start, base.y_stop, base.y_points, base.y_scale)
    y0, y1, ny = args.y_range
    if y_kind == "rf_detuning_sweep":
        y_start, y_stop, scale = y0 * MHZ, y1 * MHZ, "linear"
    elif args.y_scale == "log-dBm":
        y_start, y_stop, scale = dbm_to_watts(y0), dbm_to_watts(y1), "log-dBm"
    else:
        y_start, y_stop, scale = y0 * 1e-3, y1 * 1e-3, "linear"
    if args.y_drive is None:
        raise CliError(f"--y-drive is required for {y_kind}")
    return ScanSpec(x_start, x_stop, x_points, y_kind, args.y_drive, y_start, y_stop,
                    int(ny), scale)


def _doppler_from_args(args, cfg: SchemeConfig) -> DopplerSettings:
    d = cfg.doppler
    if args.no_doppler:
        return DopplerSettings(enabled=False)
    points = args.doppler_points if args.doppler_points is not None else d.points
    poles = d.pole_subtraction and not args.plain_trapezoid
    return DopplerSettings(d.enabled, d.span, points, poles)


def grid_csv_text(grid) -> str:
    buf = io.StringIO()
    buf.write(f"delta_c_mhz,{grid.y_label},transmission\n")
    xs = [_fmt(x) for x in grid.x_mhz]
    for i, y in enumerate(grid.y_display):
        ytxt = _fmt(y)
        row = grid.values[i]
        for j, x in enumerate(xs):
            buf.write(f"{x},{ytxt},{_fmt(row[j])}\n")
    return buf.getvalue()


def cmd_spectrum(args) -> int:
    started = time.perf_counter()
    try:
        cfg = _load_config(args)
        scheme = _apply_overrides(cfg.scheme, args)
        scan = _scan_from_args(args, cfg)
        vapor = cfg.vapor
        if args.temperature is not None:
            vapor = VaporConditions(args.temperature, vapor.cell_length, vapor.isotope_fraction)
        settings = _doppler_from_args(args, cfg)
        dop = doppler_spec(vapor, settings)
        if args.workers < 1:
            raise CliError("--workers must be >= 1")
    except (SchemeError, ValueError) as exc:
        raise CliError(f"configuration error: {exc}") from None
    grid = run_scan(scheme, scan, vapor, dop, workers=args.workers)
    cells = grid.values.size
    if grid.degenerate > DEGENERATE_LIMIT * cells:
        raise CliError(f"{grid.degenerate} of {cells} grid cells have a degenerate steady "
                       "state; no output written", EXIT_NUMERIC)
    out = Path(args.out)
    meta_path = Path(args.meta) if args.meta else out.with_suffix(out.suffix + ".meta.json")
    manifest = {k: v for k, v in vars(args).items() if k != "func"}
    meta = {
        "tool": "rydberg-eit",
        "version": __version__,
        "manifest": manifest,
        "scheme_text": serialize_scheme(scheme),
        "grid": grid.metadata,
        "rows": len(grid.y_values),
        "columns": len(grid.x_values),
        "degenerate_cells": grid.degenerate,
        "python": platform.python_version(),
        "runtime_s": time.perf_counter() - started,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    _atomic_write(out, grid_csv_text(grid))
    _atomic_write(meta_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {cells} cells to {out} ({meta['runtime_s']:.1f} s)", file=sys.stderr)
    return EXIT_OK


# -- analyze ------------------------------------------------------------------------

def read_grid_csv(path: Path):
    """Parse a spectrum CSV into ``(x_mhz, y, values, y_label)``."""
    if not path.is_file():
        raise CliError(f"grid file not found: {path}")
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    if not rows or len(rows[0]) != 3 or rows[0][0] != "delta_c_mhz" \
            or rows[0][2] != "transmission":
        raise CliError(f"{path}: header must be delta_c_mhz,<y_label>,transmission")
    label = rows[0][1]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise CliError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != 3:
        raise CliError(f"{path}: expected rows of three numbers")
    if not np.all(np.isfinite(data)):
        raise CliError(f"{path}: non-finite values")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(xs) * len(ys) != len(data):
        raise CliError(f"{path}: {len(data)} rows do not form a {len(ys)}x{len(xs)} grid")
    values = np.full((len(ys), len(xs)), np.nan)
    values[np.searchsorted(ys, data[:, 1]), np.searchsorted(xs, data[:, 0])] = data[:, 2]
    if np.isnan(values).any():
        raise CliError(f"{path}: grid has missing or duplicate cells")
    return xs, ys, values, label


def _omega_rf1(args, grid_path: Path) -> float:
    if args.omega_rf1_mhz is not None:
        return args.omega_rf1_mhz * MHZ
    meta_path = grid_path.with_suffix(grid_path.suffix + ".meta.json")
    try:
        meta = json.loads(meta_path.read_text())
        return float(meta["grid"]["drives"]["RF1"]["rabi_mhz"]) * MHZ
    except (OSError, KeyError, ValueError, TypeError):
        raise CliError("infer mode needs --omega-rf1-mhz (no usable metadata sidecar)") \
            from None


def cmd_analyze(args) -> int:
    path = Path(args.grid)
    xs, ys, values, label = read_grid_csv(path)
    lo, hi = args.window if args.window else (xs.min(), xs.max())
    if args.mode == "trace":
        scale = 1.0
    else:
        if not label.startswith("delta_"):
            raise CliError(f"{args.mode} mode needs a detuning scan, got y axis {label!r}")
        scale = MHZ
    try:
        trace = extract_peak_trace(xs * MHZ, ys * scale, values, (lo * MHZ, hi * MHZ),
                                   args.prominence)
    except AnalysisError as exc:
        raise CliError(f"trace extraction failed: {exc}") from None
    if args.mode == "trace":
        buf = io.StringIO()
        buf.write(f"{label},delta_c_peak_mhz,peak_height\n")
        for s, d, h in zip(trace.scan_param, trace.dc_peak, trace.height):
            buf.write(f"{_fmt(s)},{_fmt(d / MHZ)},{_fmt(h)}\n")
        text = buf.getvalue()
    else:
        try:
            feats = bell_features(trace)
        except NoCrossingError as exc:
            raise CliError(str(exc), EXIT_NO_CROSSING) from None
        record = {
            "apex_mhz": feats.apex / MHZ,
            "crossing_lo_mhz": feats.crossings[0] / MHZ,
            "crossing_hi_mhz": feats.crossings[1] / MHZ,
            "separation_mhz": feats.separation / MHZ,
            "slope": feats.slope,
            "slope_lo": feats.slopes[0],
            "slope_hi": feats.slopes[1],
        }
        if args.mode == "infer":
            omega1 = _omega_rf1(args, path)
            try:
                if args.use == "slope":
                    if args.slope_a is None:
                        raise CliError("--use slope needs --slope-a")
                    omega2 = infer_rf2_field(omega1, slope=feats.slope, a=args.slope_a)
                else:
                    omega2 = infer_rf2_field(omega1, apex=feats.apex)
            except AnalysisError as exc:
                raise CliError(f"inference failed: {exc}") from None
            record["omega_rf1_mhz"] = omega1 / MHZ
            record["inferred_from"] = args.use
            record["inferred_omega_rf2_mhz"] = omega2 / MHZ
        text = _keyval_text(record)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- calibrate ------------------------------------------------------------------------

def read_splittings(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    if not path.is_file():
        raise CliError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows and rows[0][:2] == ["power_mw", "splitting_mhz"]:
        rows = rows[1:]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise CliError(f"{path}: expected power_mw,splitting_mhz rows ({exc})") from None
    if data.size == 0:
        raise CliError(f"{path}: no data points")
    return data[:, 0] * 1e-3, data[:, 1] * MHZ


def cmd_calibrate(args) -> int:
    powers, splits = read_splittings(Path(args.data))
    gain, distance, dipole = args.gain, args.distance, args.dipole
    if args.preset:
        try:
            scheme = builtin_preset(args.preset)
            drive = scheme.drive(args.drive)
        except (KeyError, SchemeError) as exc:
            raise CliError(str(exc)) from None
        src = drive.source
        gain = gain if gain is not None else src.gain
        distance = distance if distance is not None else src.distance
        dipole = dipole if dipole is not None else scheme.coupling(*drive.targets[0].pair).dipole
    if None in (gain, distance, dipole):
        raise CliError("give --gain, --distance and --dipole or a --preset")

    def unit_rabi(p: float) -> float:
        return rabi_frequency(dipole, rf_field_magnitude(HornSource(p, gain, distance, 1.0)))

    try:
        factor, resid = calibrate_cell_factor(powers, splits, unit_rabi)
    except (AnalysisError, ValueError) as exc:
        raise CliError(f"calibration failed: {exc}") from None
    record = {"cell_factor": factor, "rms_residual_mhz": resid / MHZ,
              "points": int(len(powers))}
    text = _keyval_text(record)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydberg-eit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="simulate a transmission grid")
    sp.add_argument("--manifest", help="JSON file whose keys supply defaults for these flags")
    src = sp.add_argument_group("scheme")
    src.add_argument("--preset", choices=PRESET_NAMES)
    src.add_argument("--scheme", help="path to a .scheme file")
    src.add_argument("--rabi", action="append", metavar="DRIVE=MHZ",
                     help="set a drive's Rabi frequency (repeatable)")
    src.add_argument("--detuning", action="append", metavar="DRIVE=MHZ")
    src.add_argument("--power-mw", action="append", metavar="DRIVE=MW",
                     help="set a drive's power; the Rabi frequency follows from its source")
    src.add_argument("--power-dbm", action="append", metavar="DRIVE=DBM")
    src.add_argument("--rf1-power-dbm", type=float)
    src.add_argument("--rf2-power-dbm", type=float)
    src.add_argument("--rf1-rabi-mhz", type=float)
    src.add_argument("--rf2-rabi-mhz", type=float)
    sc = sp.add_argument_group("scan")
    sc.add_argument("--x-range", nargs=3, type=float, metavar=("FROM_MHZ", "TO_MHZ", "POINTS"))
    sc.add_argument("--y-kind", choices=("rf_power_sweep", "rf_detuning_sweep",
                                         "probe_transmission_only"))
    sc.add_argument("--y-drive")
    sc.add_argument("--y-range", nargs=3, type=float, metavar=("FROM", "TO", "POINTS"),
                    help="MHz for detuning sweeps, mW (or dBm with --y-scale log-dBm) "
                         "for power sweeps")
    sc.add_argument("--y-scale", choices=("linear", "log-dBm"), default="linear")
    ph = sp.add_argument_group("vapor and Doppler")
    ph.add_argument("--temperature", type=float, help="cell temperature in K")
    ph.add_argument("--no-doppler", action="store_true")
    ph.add_argument("--doppler-points", type=int)
    ph.add_argument("--plain-trapezoid", action="store_true",
                    help="disable pole subtraction in the velocity quadrature")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--meta", help="metadata sidecar path (default: <out>.meta.json)")
    sp.set_defaults(func=cmd_spectrum)

    an = sub.add_parser("analyze", help="peak trace, bell features or RF2 inference")
    an.add_argument("grid", help="CSV written by 'spectrum'")
    an.add_argument("--mode", choices=("trace", "bell", "infer"), default="trace")
    an.add_argument("--window", nargs=2, type=float, metavar=("LO_MHZ", "HI_MHZ"))
    an.add_argument("--prominence", type=float, default=0.05)
    an.add_argument("--omega-rf1-mhz", type=float)
    an.add_argument("--use", choices=("apex", "slope"), default="apex")
    an.add_argument("--slope-a", type=float)
    an.add_argument("--out")
    an.set_defaults(func=cmd_analyze)

    ca = sub.add_parser("calibrate", help="fit the cell factor F to AT splittings")
    ca.add_argument("data", help="CSV of power_mw,splitting_mhz")
    ca.add_argument("--preset", choices=PRESET_NAMES)
    ca.add_argument("--drive", default="RF1")
    ca.add_argument("--gain", type=float)
    ca.add_argument("--distance", type=float, help="horn distance in m")
    ca.add_argument("--dipole", type=float)
    ca.add_argument("--out")
    ca.set_defaults(func=cmd_calibrate)
    return parser


def _manifest_defaults(argv: Sequence[str], parser: argparse.ArgumentParser) -> None:
    """Load ``--manifest`` for the spectrum subcommand into parser defaults."""
    if "spectrum" not in argv or "--manifest" not in argv:
        return
    path = Path(argv[list(argv).index("--manifest") + 1])
    if not path.is_file():
        raise CliError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except ValueError as exc:
        raise CliError(f"manifest {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"manifest {path} must hold a JSON object")
    spectrum = parser._subparsers._group_actions[0].choices["spectrum"]
    known = {a.dest for a in spectrum._actions}
    unknown = set(data) - known
    if unknown:
        raise CliError(f"manifest has unknown keys: {', '.join(sorted(unknown))}")
    for action in spectrum._actions:
        if action.dest in data:
            action.required = False
    spectrum.set_defaults(**data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _manifest_defaults(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
