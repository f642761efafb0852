"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 fit did not converge,
3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

import yaml

from . import __version__
from .fid import (FidParams, InitialGuessError, TraceFormatError, fit_trace, parse_freeze,
                  read_trace_csv, synthesize, write_trace_csv)
from .quantities import (ConfigError, config_to_dict, default_config, load_config_file,
                         provenance_echo)
from .sweep import (AXES, DischargeModel, Grid, SweepSpec, discharge_csv, discharge_lines,
                    discharge_settings, discharge_summary, manifest_path_for, rows_to_csv,
                    run_from_manifest, run_sweep, sha256_text, write_sweep)
from .verify import verify

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2
EXIT_VERIFY = 3

DEFAULT_GRIDS = {
    "field": "1e-9:1e-3:61:log",
    "detuning": "-8e9:8e9:161:lin",
    "intensity": "1:500:50:lin",
    "discharge": "0.035:0.2:12:lin",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_trace_path() -> str:
    return str(resources.files("meclight") / "data" / "fid_standard.csv")


def _load(args):
    if getattr(args, "config", None):
        return load_config_file(args.config)
    return default_config()


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    grid = Grid.parse(args.grid or DEFAULT_GRIDS[args.axis])
    spec = SweepSpec(args.axis, grid, cfg, args.pump == "on", args.b0,
                     DischargeModel(args.v0, args.slope), args.seed)
    rows = run_sweep(spec, workers=args.workers)
    if args.out in (None, "-"):
        sys.stdout.write(rows_to_csv(rows))
    else:
        mpath = write_sweep(spec, rows, args.out)
        print(f"wrote {args.out} and {mpath}", file=sys.stderr)
    failed = sum(1 for r in rows if r.error)
    if failed:
        print(f"{failed} grid point(s) failed; see the error column", file=sys.stderr)
    return EXIT_OK


def cmd_rerun(args) -> int:
    _, text = run_from_manifest(args.manifest)
    with open(args.manifest, encoding="utf-8") as fh:
        recorded = yaml.safe_load(fh)["output"]["sha256"]
    _write(args.out, text)
    same = sha256_text(text) == recorded
    print("output matches manifest" if same else "output differs from manifest", file=sys.stderr)
    return EXIT_OK if same else EXIT_VERIFY


def cmd_discharge(args) -> int:
    cfg = _load(args)
    grid = Grid.parse(args.grid)
    powers = [float(x) for x in args.powers.split(",")]
    model = DischargeModel(args.v0, args.slope)
    settings = discharge_settings(cfg, powers)
    analysis = discharge_lines(model, settings, grid.values(), args.b0, cfg)
    summary = discharge_summary(analysis)
    summary["model"] = {"v_extinguish": model.v_extinguish, "slope": model.slope}
    summary["powers_mw_cm2"] = powers
    if args.out in (None, "-"):
        sys.stdout.write(yaml.safe_dump(summary, sort_keys=False))
    else:
        text = discharge_csv(analysis)
        _write(args.out, text)
        summary["output"] = {"file": os.path.basename(args.out), "sha256": sha256_text(text)}
        summary["config"] = config_to_dict(cfg)
        summary["provenance"] = dict(cfg.provenance)
        _write(manifest_path_for(args.out), yaml.safe_dump(summary, sort_keys=False))
    return EXIT_OK


def cmd_fid_fit(args) -> int:
    path = args.input or bundled_trace_path()
    trace = read_trace_csv(path, args.noise_sigma)
    freeze = parse_freeze(args.freeze)
    try:
        report = fit_trace(trace, freeze)
    except InitialGuessError as exc:
        print(f"no starting estimate: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    doc = report.to_dict()
    doc["input"] = os.path.basename(str(path))
    _write(args.out, yaml.safe_dump(doc, sort_keys=False))
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_fid_synth(args) -> int:
    p = FidParams(args.S0, args.f0, args.phi, args.T2, args.S1, args.T1)
    sigma = args.S0 / args.snr if args.snr else 0.0
    trace = synthesize(p, args.rate, args.duration, sigma, args.seed)
    if args.out in (None, "-"):
        sys.stdout.write("time_s,signal\n")
        for t, y in zip(trace.times, trace.samples):
            sys.stdout.write(f"{float(t)!r},{float(y)!r}\n")
    else:
        write_trace_csv(args.out, trace)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify(_load(args), seed=args.seed)
    text = yaml.safe_dump(report.to_dict(), sort_keys=False)
    _write(args.out, text)
    for c in report.checks:
        state = "PASS" if c.passed else ("WARN" if c.level == "warning" else "FAIL")
        print(f"{state} {c.name}: {c.measured:.3e} (tol {c.tolerance:.1e}) {c.detail}".rstrip(),
              file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_config(args) -> int:
    cfg = _load(args)
    _write(args.out, "\n".join(provenance_echo(cfg)) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meclight", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"meclight {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--out", help="output path ('-' or omitted: stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="random seed")

    sp = sub.add_parser("sweep", help="sweep one parameter and tabulate shift and relaxation")
    common(sp)
    sp.add_argument("--axis", choices=AXES, default="field")
    sp.add_argument("--grid", help="min:max:count:lin|log in axis units (T, Hz, mW/cm^2, V)")
    sp.add_argument("--pump", choices=("on", "off"), default="on")
    sp.add_argument("--b0", type=float, help="bias field [T] when not swept")
    sp.add_argument("--v0", type=float, default=0.035, help="discharge extinction voltage [V]")
    sp.add_argument("--slope", type=float, default=41.58, help="1/T per volt above v0 [1/(s V)]")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("rerun", help="regenerate a sweep from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_rerun)

    sp = sub.add_parser("discharge", help="frequency against discharge voltage per pump power")
    common(sp)
    sp.add_argument("--grid", default=DEFAULT_GRIDS["discharge"])
    sp.add_argument("--powers", default="0,50,100",
                    help="comma-separated pump intensities [mW/cm^2]; 0 is pump off")
    sp.add_argument("--b0", type=float)
    sp.add_argument("--v0", type=float, default=0.035)
    sp.add_argument("--slope", type=float, default=41.58)
    sp.set_defaults(func=cmd_discharge)

    sp = sub.add_parser("fid-fit", help="fit a free-induction-decay trace")
    sp.add_argument("input", nargs="?", help="two-column CSV (default: bundled trace)")
    sp.add_argument("--out")
    sp.add_argument("--freeze", action="append", help="NAME=VALUE, e.g. S1=0")
    sp.add_argument("--noise-sigma", type=float, default=None)
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_fid_fit)

    sp = sub.add_parser("fid-synth", help="write a synthetic trace")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--S0", type=float, default=1.0)
    sp.add_argument("--f0", type=float, default=7.821)
    sp.add_argument("--phi", type=float, default=0.0)
    sp.add_argument("--T2", type=float, default=30.0)
    sp.add_argument("--S1", type=float, default=0.1)
    sp.add_argument("--T1", type=float, default=50.0)
    sp.add_argument("--rate", type=float, default=100.0)
    sp.add_argument("--duration", type=float, default=60.0)
    sp.add_argument("--snr", type=float, default=100.0, help="S0 / noise sigma; 0 for none")
    sp.set_defaults(func=cmd_fid_synth)

    sp = sub.add_parser("verify", help="run the cross-module consistency checks")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("config", help="echo the configuration with provenance tags")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, OSError, ValueError) as exc:
        print(f"meclight: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

