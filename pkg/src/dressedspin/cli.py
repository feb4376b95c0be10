"""Command-line entry point: ``dressedspin <subcommand> ...``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (FitError, ReadoutParams, encoding_factors, fit_cosine_period,
                       fit_stretched_exponential, loglog_slope, plot_fit_svg, powerlaw_tail,
                       sensitivity_report)
from .config import ConfigError, RunConfig, load_config
from .dressed import (NVConstants, effective_couplings, field_for_lambda, mixing_angle,
                      moment_difference, qubit_splitting, su2_field)
from .ensemble import (build_geometry, coupling_matrix, default_disorder_width,
                       write_geometry_csv)
from .manybody import (ENCODINGS, GAUSS_PER_NT, ProtocolSpec, TimeSeries, ac_magnetometry,
                       build_hamiltonian, disorder_order_protocol, global_decay, rabi_simulation)
from .sequences import (CouplingVector, SequenceError, average_hamiltonian, builtin_sequence,
                        field_ratio, parse_sequence_file, toggling_frames, write_sequence_file)
from .spin import EvolutionError

log = logging.getLogger("dressedspin")

OUTPUT_ENV = "DRESSEDSPIN_OUTPUT"
DEFAULT_OUTPUT = "dressedspin-out"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _default_output():
    return os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json_atomic(path, obj):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    os.replace(tmp, path)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _parse_range(text, name):
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError:
        raise ConfigError(f"{name}: expected numbers separated by ':'") from None
    return parts


class _Stage:
    """Collects outputs in a hidden staging directory and publishes them on success."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def publish(self, manifest):
        checks = {}
        for name in self.files:
            checks[name] = _sha256(self.dir / name)
            os.replace(self.dir / name, self.out_dir / name)
        manifest["outputs"] = checks
        _write_json_atomic(self.out_dir / "manifest.json", manifest)
        shutil.rmtree(self.dir, ignore_errors=True)

    def discard(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def _manifest(command, cfg, started, extra=None):
    out = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict() if cfg is not None else None,
        "wall_time_s": round(time.time() - started, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    out.update(extra or {})
    return out


def _load(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output", None):
        cfg.output_dir = args.output
    return cfg


def _resolve_sequence(ref):
    if ref is None:
        return None
    try:
        return builtin_sequence(ref)
    except SequenceError:
        if Path(ref).exists():
            return parse_sequence_file(ref)
        raise


# -- couplings ---------------------------------------------------------------------

def _coupling_row(B, c):
    g = effective_couplings(B, c)
    return {"B_G": float(B), "g_xy": g.g_xy, "g_zz": g.g_zz, "lambda": g.lam,
            "J0_MHz_nm3": g.J0, "trace": g.trace, "alpha_rad": float(mixing_angle(B, c)),
            "dmu": float(moment_difference(B, c)), "splitting_MHz": float(qubit_splitting(B, c))}


def cmd_couplings(args):
    cfg = _load(args)
    c = cfg.constants
    if args.sweep:
        lo, hi, n = _parse_range(args.sweep, "--sweep")
        if int(n) < 2 or hi <= lo or lo < 0:
            raise ConfigError("--sweep needs start:stop:n with 0 <= start < stop and n >= 2")
        rows = [_coupling_row(B, c) for B in np.linspace(lo, hi, int(n))]
        cols = list(rows[0])
        lines = [",".join(cols)] + [",".join(repr(float(r[k])) for k in cols) for r in rows]
        text = "\n".join(lines) + "\n"
        if args.output_file:
            Path(args.output_file).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.su2:
        B = su2_field(c)
    elif args.lam is not None:
        B = field_for_lambda(args.lam, c)
    elif args.field is not None:
        B = args.field
    else:
        raise ConfigError("give --field, --su2, --lambda or --sweep")
    if B < 0:
        raise ConfigError("field must be non-negative")
    row = _coupling_row(B, c)
    width = max(len(k) for k in row)
    for k, v in row.items():
        print(f"{k:<{width}}  {v:.6g}" if k != "B_G" else f"{k:<{width}}  {v:.2f}")
    if args.json:
        _write_json_atomic(args.json, row)
    return EXIT_OK


# -- geometry ----------------------------------------------------------------------

def _geometry(cfg, seed):
    gc, fc = cfg.geometry, cfg.field
    return build_geometry(fc.configuration, gc.density(), gc.diameter_nm, gc.thickness_nm,
                          B_mag=fc.B_gauss, n=gc.n_spins, exclusion=gc.exclusion_nm,
                          disorder_width=_disorder_width(cfg),
                          disorder_distribution=cfg.protocol.disorder_distribution,
                          seed=seed, c=cfg.constants, max_spins=gc.max_spins)


def _disorder_width(cfg):
    if cfg.protocol.disorder_width_MHz is not None:
        return cfg.protocol.disorder_width_MHz
    trace = -2.0 if cfg.field.configuration == "onaxis" else 8.0
    return default_disorder_width(cfg.geometry.density(), trace, cfg.constants)


def cmd_geometry(args):
    started = time.time()
    cfg = _load(args)
    geo_ss, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    geom = _geometry(cfg, geo_ss)
    stage = _Stage(cfg.output_dir or _default_output())
    try:
        write_geometry_csv(geom, stage.path("geometry.csv"))
        cm = coupling_matrix(geom, cfg.constants)
        np.savetxt(stage.path("couplings_MHz.csv"), cm.J, delimiter=",", fmt="%.17g",
                   header=",".join(f"J_{j}_MHz" for j in range(geom.n)), comments="")
        stage.publish(_manifest("geometry", cfg, started, {"n_spins": geom.n,
                                                           "g_xy": cm.g_xy, "g_zz": cm.g_zz}))
    except BaseException:
        stage.discard()
        raise
    print(f"{geom.n} spins written to {stage.out_dir}")
    return EXIT_OK


# -- sequence ----------------------------------------------------------------------

def cmd_sequence(args):
    if bool(args.name) == bool(args.file):
        raise ConfigError("give exactly one of --name or --file")
    seq = builtin_sequence(args.name) if args.name else parse_sequence_file(args.file)
    if args.period:
        seq = seq.scaled(args.period)
    c = NVConstants()
    if args.native == "perpendicular":
        g = effective_couplings(su2_field(c) if args.field is None else args.field, c)
        native = CouplingVector([g.g_xy, g.g_xy, g.g_zz])
    else:
        native = CouplingVector([-2.0, -2.0, 2.0])
    frames = toggling_frames(seq)
    avg = average_hamiltonian(native, frames)
    info = {"name": seq.name, "pulses": len(seq.pulses), "frames": len(frames),
            "period_us": seq.period, "cyclic": bool(seq.is_cyclic()),
            "native_g": native.g.tolist(), "average_g": avg.g.tolist(),
            "trace_native": native.trace, "trace_average": avg.trace,
            "offdiag_residual": avg.offdiag_residual, "field_ratio": field_ratio(frames)}
    print(json.dumps(info, indent=2))
    if args.write:
        write_sequence_file(seq, args.write)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------------

def run_simulation(cfg, threads=1):
    """Run the configured protocol; returns (TimeSeries, geometry or None)."""
    pc = cfg.protocol
    geo_ss, proto_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    proto_seed = int(proto_ss.generate_state(1)[0])
    t_grid = pc.time_grid()
    seq = _resolve_sequence(cfg.sequence)
    c = cfg.constants

    if pc.kind == "ac_magnetometry":
        amps = np.linspace(0.0, pc.B_ac_max_nT, pc.n_amplitudes)
        return ac_magnetometry(pc.encoding, amps, pc.t_phase_us, c, sequence=seq), None
    if pc.kind == "rabi":
        groups = {"perp_one_group": [0], "perp_two_group": [0, 1]}.get(cfg.field.configuration)
        if groups is None:
            raise ConfigError("rabi needs a perpendicular field configuration")
        B = su2_field(c) if cfg.field.B_gauss is None else cfg.field.B_gauss
        return rabi_simulation(groups, B, pc.drive_MHz, pc.drive_direction, t_grid, c=c), None

    geom = _geometry(cfg, geo_ss)
    cm = coupling_matrix(geom, c)
    if pc.kind == "global_decay":
        h = geom.h if pc.disorder_in_hamiltonian else None
        H = build_hamiltonian(cm, h, max_spins=cfg.geometry.max_spins)
        ts = global_decay(H, pc.axis, t_grid, sequence=seq)
        if pc.extrinsic_T_us:
            ts = TimeSeries(ts.t, ts.value * np.exp(-ts.t / pc.extrinsic_T_us), None, ts.metadata)
        return ts, geom
    spec = ProtocolSpec(kind=pc.kind, time_grid=t_grid, disorder_width=_disorder_width(cfg),
                        tau_wind=pc.tau_wind_us, tau_prime=pc.tau_prime_us, sequence=seq,
                        n_realizations=pc.n_realizations,
                        n_typicality_samples=pc.n_typicality_samples, seed=proto_seed,
                        disorder_distribution=pc.disorder_distribution,
                        disorder_in_hamiltonian=pc.disorder_in_hamiltonian,
                        extrinsic_T=pc.extrinsic_T_us)
    return disorder_order_protocol(spec, geom, cm, workers=threads,
                                   max_spins=cfg.geometry.max_spins), geom


def _fit(ts, analysis):
    window = tuple(analysis.window_us) if analysis.window_us else None
    if analysis.fit == "stretched":
        return fit_stretched_exponential(ts, floor=analysis.floor)
    if analysis.fit == "powerlaw":
        return powerlaw_tail(ts, window)
    return None


def cmd_simulate(args):
    started = time.time()
    cfg = _load(args)
    stage = _Stage(cfg.output_dir or _default_output())
    try:
        ts, geom = run_simulation(cfg, threads=args.threads)
        ts.to_csv(stage.path("timeseries.csv"))
        if geom is not None:
            write_geometry_csv(geom, stage.path("geometry.csv"))
        fit = _fit(ts, cfg.analysis)
        if fit is not None:
            fit.to_json(stage.path("fit.json"))
        if args.svg:
            plot_fit_svg(ts, fit, stage.path("timeseries.svg"))
        _write_json_atomic(stage.path("config.json"), cfg.to_dict())
        stage.publish(_manifest("simulate", cfg, started, {"threads": args.threads,
                                                           "metadata": ts.metadata}))
    except BaseException:
        stage.discard()
        raise
    print(f"wrote {len(stage.files)} file(s) to {stage.out_dir}")
    return EXIT_OK


# -- fit ---------------------------------------------------------------------------

def cmd_fit(args):
    try:
        ts = TimeSeries.from_csv(args.input)
    except KeyError as exc:
        raise ConfigError(f"{args.input}: missing column {exc.args[0]!r}") from None
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {args.input}") from None
    window = tuple(_parse_range(args.window, "--window")) if args.window else None
    if window is not None and len(window) != 2:
        raise ConfigError("--window expects a:b")
    if args.model == "stretched":
        fit = fit_stretched_exponential(ts, floor=args.floor)
    elif args.model == "loglog":
        fit = loglog_slope(ts, window)
    else:
        fit = powerlaw_tail(ts, window)
    text = fit.to_json(args.json)
    print(text)
    if args.svg:
        view = {"stretched": "linear", "powerlaw": "loglog", "loglog": "logloglog"}[args.model]
        plot_fit_svg(ts, fit, args.svg, view=view)
    return EXIT_OK


# -- sense -------------------------------------------------------------------------

def run_sense(cfg):
    sc, c = cfg.sense, cfg.constants
    amps = np.linspace(0.0, sc.B_ac_max_nT, sc.n_amplitudes)
    readout = ReadoutParams(sc.contrast_amplitude, sc.photons_per_shot, sc.overhead_us)
    curves, periods, reports = {}, {}, {}
    for enc in ENCODINGS:
        ts = ac_magnetometry(enc, amps, sc.t_phase_us, c)
        fr, dmu = encoding_factors(enc, c)
        guess = 1 / (c.gamma * GAUSS_PER_NT * sc.t_phase_us * fr * dmu)
        if guess > 2 * sc.B_ac_max_nT:
            raise ConfigError(f"sense: B_ac_max_nT too small to resolve one {enc} fringe")
        periods[enc] = fit_cosine_period(ts.t, ts.value, guess)[0]
        curves[enc] = ts
        contrast_ratio = sc.contrast_ratio if enc == "perpendicular_two_group" else 1.0
        reports[enc] = sensitivity_report(ts, sc.t_phase_us, readout, enc,
                                          contrast_ratio=contrast_ratio,
                                          diameter_um=sc.spot_diameter_um,
                                          thickness_um=sc.layer_thickness_um, c=c)
    summary = {
        "t_phase_us": sc.t_phase_us,
        "periods_nT": periods,
        "period_ratio_floquet_over_onaxis": periods["onaxis_droid_like"] / periods["onaxis"],
        "period_ratio_perpendicular_over_onaxis":
            periods["perpendicular_two_group"] / periods["onaxis"],
        "reports": {k: r.to_dict() for k, r in reports.items()},
        "core_factor_perpendicular_vs_floquet": reports["perpendicular_two_group"].core_factor,
    }
    return summary, curves


def cmd_sense(args):
    started = time.time()
    cfg = _load(args)
    if args.t_phase is not None:
        cfg.sense.t_phase_us = args.t_phase
        cfg.sense.validate()
    stage = _Stage(cfg.output_dir or _default_output())
    try:
        summary, curves = run_sense(cfg)
        for enc, ts in curves.items():
            ts.to_csv(stage.path(f"contrast_{enc}.csv"))
            if args.svg:
                plot_fit_svg(ts, None, stage.path(f"contrast_{enc}.svg"))
        _write_json_atomic(stage.path("sensitivity.json"), summary)
        stage.publish(_manifest("sense", cfg, started))
    except BaseException:
        stage.discard()
        raise
    print(json.dumps({k: v for k, v in summary.items() if k != "reports"}, indent=2))
    return EXIT_OK


# -- report ------------------------------------------------------------------------

def cmd_report(args):
    run_dir = Path(args.run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise ConfigError(f"no manifest.json in {run_dir}")
    manifest = json.loads(mpath.read_text())
    bad = []
    for name, digest in manifest.get("outputs", {}).items():
        p = run_dir / name
        if not p.exists() or _sha256(p) != digest:
            bad.append(name)
    print(f"command: {manifest.get('command')}  version: {manifest.get('version')}  "
          f"wall time: {manifest.get('wall_time_s')} s")
    cfg = manifest.get("config") or {}
    if cfg:
        print(f"seed: {cfg.get('seed')}  protocol: {cfg.get('protocol', {}).get('kind')}")
    for name in sorted(manifest.get("outputs", {})):
        print(f"  {'MISMATCH' if name in bad else 'ok      '} {name}")
    sens = run_dir / "sensitivity.json"
    if sens.exists():
        s = json.loads(sens.read_text())
        print(f"period ratio floquet/onaxis: {s['period_ratio_floquet_over_onaxis']:.5f}")
        print(f"period ratio perpendicular/onaxis: "
              f"{s['period_ratio_perpendicular_over_onaxis']:.5f}")
        print(f"analytic core factor: {s['core_factor_perpendicular_vs_floquet']:.5f}")
    fitp = run_dir / "fit.json"
    if fitp.exists():
        print("fit:", json.dumps(json.loads(fitp.read_text())["params"]))
    if bad:
        raise ConfigError(f"checksum mismatch for {', '.join(bad)}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--output", default=None,
                        help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--svg", action="store_true", help="also emit SVG plots")
    common.add_argument("--log-level", default="WARNING")

    p = argparse.ArgumentParser(prog="dressedspin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("couplings", parents=[common], help="effective couplings vs field")
    s.add_argument("--field", type=float, help="perpendicular field in Gauss")
    s.add_argument("--su2", action="store_true", help="use the SU(2) field")
    s.add_argument("--lambda", dest="lam", type=float, help="field giving this anisotropy")
    s.add_argument("--sweep", help="start:stop:n field sweep as CSV")
    s.add_argument("--output-file", help="CSV path for --sweep (default stdout)")
    s.add_argument("--json", help="write the single-field result as JSON")
    s.set_defaults(func=cmd_couplings)

    s = sub.add_parser("geometry", parents=[common], help="sample an ensemble geometry")
    s.set_defaults(func=cmd_geometry)

    s = sub.add_parser("sequence", parents=[common], help="inspect a pulse sequence")
    s.add_argument("--name", help="builtin sequence name")
    s.add_argument("--file", help="sequence file")
    s.add_argument("--period", type=float, help="rescale to this period (us)")
    s.add_argument("--native", choices=("onaxis", "perpendicular"), default="onaxis")
    s.add_argument("--field", type=float, help="perpendicular field for --native perpendicular")
    s.add_argument("--write", help="write the sequence in file format")
    s.set_defaults(func=cmd_sequence)

    s = sub.add_parser("simulate", parents=[common], help="run a protocol simulation")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[common], help="fit a TimeSeries CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--model", choices=("stretched", "powerlaw", "loglog"), default="stretched")
    s.add_argument("--floor", type=float, default=0.25)
    s.add_argument("--window", help="a:b time window")
    s.add_argument("--json", help="also write the fit result to this JSON path")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sense", parents=[common], help="magnetometry comparison report")
    s.add_argument("--t-phase", type=float, help="phase accumulation time in us")
    s.set_defaults(func=cmd_sense)

    s = sub.add_parser("report", parents=[common], help="summarize and verify a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit":
        args.svg = None if not args.svg else str(Path(args.input).with_suffix(".svg"))
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (EvolutionError, FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, SequenceError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
