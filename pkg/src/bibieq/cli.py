"""Command-line interface: build, compile, convert, sweep, report.

Sweep parameters come from flags or from a plain-text config file with
key = value lines in [sweep], [noise] and [decoder] sections (flags win).
Worker count defaults to the BIBIEQ_WORKERS environment variable, then
the CPU count.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from . import __version__
from .bbcode import (build_check_matrices, export_sparse, get_code,
                     spec_from_config, spec_to_config)
from .circuit import QubitLayout, build_memory_circuit, from_text, to_stim_text, to_text, validate_circuit
from .compiler import (NoiseLaw, compile as compile_erasure, get_schedule,
                       load_erasure_circuit, sample_erasure_pattern)
from .engines import convert
from .metrics import records_from_csv
from .sweep import DESK_PROFILE, PAPER_PROFILE, ExperimentConfig, log_grid, run_sweep
from .report import write_report


def _load_spec(args):
    if args.code_config:
        return spec_from_config(Path(args.code_config).read_text())
    return get_code(args.code)


def _add_code_args(p):
    p.add_argument("--code", default="72",
                   help="registered code id: 72, 108 or 144")
    p.add_argument("--code-config", default=None,
                   help="plain-text code spec file (overrides --code)")
    p.add_argument("--rounds", type=int, default=None,
                   help="syndrome cycles (default: code distance)")
    p.add_argument("--basis", choices=("X", "Z"), default="X")


def cmd_build(args) -> int:
    spec = _load_spec(args)
    rounds = args.rounds if args.rounds is not None else spec.claimed_d
    layout = QubitLayout(spec)
    circuit = build_memory_circuit(spec, layout, rounds, args.basis)
    out = Path(args.out)
    out.write_text(to_text(circuit))
    print(f"wrote {out} ({circuit.n_qubits} qubits, {len(circuit.instructions)} "
          f"instructions, {circuit.n_detectors} detectors)")
    if args.export_checks:
        checks = build_check_matrices(spec)
        target = Path(args.export_checks)
        target.mkdir(parents=True, exist_ok=True)
        (target / "h_x.txt").write_text(export_sparse(checks.h_x, spec.n, "h_x"))
        (target / "h_z.txt").write_text(export_sparse(checks.h_z, spec.n, "h_z"))
        (target / "code.cfg").write_text(spec_to_config(spec))
        print(f"wrote check matrices under {target}")
    if args.export_stim:
        Path(args.export_stim).write_text(to_stim_text(circuit))
        print(f"wrote stim export to {args.export_stim}")
    return 0


def cmd_compile(args) -> int:
    spec = _load_spec(args)
    rounds = args.rounds if args.rounds is not None else spec.claimed_d
    layout = QubitLayout(spec)
    c0 = build_memory_circuit(spec, layout, rounds, args.basis)
    noise = NoiseLaw(args.e, args.beta, args.gamma)
    ce = compile_erasure(c0, noise, get_schedule(args.schedule),
                         ec_targets=args.ec_targets,
                         include_idle_noise=args.idle_noise)
    Path(args.out).write_text(to_text(ce.circuit))
    print(f"wrote {args.out} ({len(ce.segments)} segments, max r = {ce.max_r}, "
          f"{ce.n_sites} fault sites)")
    return 0


def cmd_convert(args) -> int:
    ce = load_erasure_circuit(from_text(Path(args.infile).read_text()))
    pattern = sample_erasure_pattern(ce, args.seed)
    converted, report = convert(ce, pattern, args.engine, rng_seed=args.seed)
    violations = validate_circuit(converted)
    if violations:
        print("converted circuit invalid:", violations[:5], file=sys.stderr)
        return 1
    Path(args.out).write_text(to_text(converted))
    print(f"wrote {args.out} ({report.n_channels} erasure channels over "
          f"{report.n_segments} segments, {int(pattern.flags.sum())} flags)")
    if args.report:
        Path(args.report).write_text(report.to_json())
        print(f"wrote conversion report to {args.report}")
    return 0


def _sweep_config(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        parser = configparser.ConfigParser()
        parser.read_string(Path(args.config).read_text())
        sw = parser["sweep"] if parser.has_section("sweep") else {}
        if "codes" in sw:
            values["codes"] = tuple(x.strip() for x in sw["codes"].split(","))
        if "schedules" in sw:
            values["schedules"] = tuple(x.strip() for x in sw["schedules"].split(","))
        if "engines" in sw:
            values["engines"] = tuple(x.strip() for x in sw["engines"].split(","))
        if "e_grid" in sw:
            values["e_grid"] = tuple(float(x) for x in sw["e_grid"].split(","))
        for key in ("instances", "shots", "rounds", "seed"):
            if key in sw:
                values["master_seed" if key == "seed" else key] = int(sw[key])
        if "basis" in sw:
            values["basis"] = sw["basis"]
        if parser.has_section("noise"):
            nz = parser["noise"]
            if "beta" in nz:
                values["beta"] = float(nz["beta"])
            if "gamma" in nz:
                values["gamma"] = float(nz["gamma"])
        if parser.has_section("decoder"):
            dc = parser["decoder"]
            if "bp_max_iters" in dc:
                values["bp_max_iters"] = int(dc["bp_max_iters"])
            if "osd_order" in dc:
                values["osd_order"] = int(dc["osd_order"])

    profile = DESK_PROFILE if args.profile == "desk" else PAPER_PROFILE
    for key, val in profile.items():
        values.setdefault(key, val)

    if args.codes:
        values["codes"] = tuple(x.strip() for x in args.codes.split(","))
    if args.schedules:
        values["schedules"] = tuple(x.strip() for x in args.schedules.split(","))
    if args.engines:
        values["engines"] = tuple(x.strip() for x in args.engines.split(","))
    if args.e_grid:
        values["e_grid"] = tuple(float(x) for x in args.e_grid.split(","))
    elif args.e_min is not None and args.e_max is not None:
        values["e_grid"] = log_grid(args.e_min, args.e_max, args.e_points)
    for key in ("instances", "shots", "rounds", "osd_order", "bp_max_iters", "workers"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    for key in ("beta", "gamma"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    if args.seed is not None:
        values["master_seed"] = args.seed
    if args.basis:
        values["basis"] = args.basis
    values["out_dir"] = args.out
    if not values.get("e_grid"):
        raise SystemExit("no erasure grid: pass --e-grid or --e-min/--e-max")
    return ExperimentConfig(**values)


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    records = run_sweep(cfg, progress=not args.quiet)
    print(f"{len(records)} records in {cfg.out_dir}/records.csv")
    return 0


def cmd_report(args) -> int:
    override = None
    if args.e_hat:
        override = {}
        for part in args.e_hat.split(","):
            key, _, val = part.partition("=")
            sched, _, eng = key.partition("/")
            override[(sched, eng)] = float(val)
    summary = write_report(args.results, args.out, override)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bibieq",
        description="BB-code quantum memories on erasure qubits: build, "
                    "compile, convert, sweep, report.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build the noise-free memory circuit")
    _add_code_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--export-checks", default=None,
                   help="directory for sparse check-matrix export")
    p.add_argument("--export-stim", default=None,
                   help="also export the common stabilizer text format")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("compile", help="lower to an erasure-annotated circuit")
    _add_code_args(p)
    p.add_argument("--schedule", default="4ec", help="2ec, 4ec or ec:<letters>")
    p.add_argument("--e", type=float, required=True, help="per-site erasure rate")
    p.add_argument("--beta", type=float, default=0.1, help="Pauli scale: p = beta*e")
    p.add_argument("--gamma", type=float, default=1.0, help="flip scale: q = gamma*e")
    p.add_argument("--ec-targets", choices=("all", "data"), default="all")
    p.add_argument("--idle-noise", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("convert", help="sample erasures and emit a stabilizer circuit")
    p.add_argument("--in", dest="infile", required=True,
                   help="erasure-annotated circuit text file")
    p.add_argument("--engine", choices=("exact", "approx"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="conversion report JSON path")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("sweep", help="run a full experiment sweep")
    p.add_argument("--config", default=None, help="plain-text config file")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--codes", default=None, help="comma list, e.g. 72,108")
    p.add_argument("--schedules", default=None, help="comma list, e.g. 2ec,4ec")
    p.add_argument("--engines", default=None, help="comma list, e.g. exact,approx")
    p.add_argument("--e-grid", default=None, help="explicit comma list of e values")
    p.add_argument("--e-min", type=float, default=None)
    p.add_argument("--e-max", type=float, default=None)
    p.add_argument("--e-points", type=int, default=8)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--basis", default=None, choices=("X", "Z"))
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--bp-iters", dest="bp_max_iters", type=int, default=None)
    p.add_argument("--osd-order", dest="osd_order", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tables and plots from sweep results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--e-hat", default=None,
                   help="override thresholds for fits: sched/engine=value,...")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
