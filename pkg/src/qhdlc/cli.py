"""Command-line driver: parse, synth, compile, sim, reduce.

Exit codes: 0 on success, 1 on bad input (syntax errors, missing
parameters, unknown names), 2 on an internal defect.  Diagnostics go to
standard error as `file:line:col: message`.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import traceback
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .circuit import expression_to_json, render_text
from .compiler import CompileOptions, CompiledModel, compile_model
from .design import Design, pretty
from .dynamics import (
    DensityMatrix,
    ExpectationTrace,
    Segment,
    SimulationConfig,
    fock_state,
    integrate_master,
    mcwf_trajectory,
    number_observables,
    run_input_sequence,
    trajectory_rng,
    vacuum_state,
    write_jump_records,
)
from .errors import QhdlcError, SourceError, UserError
from .netlist import validate
from .operators import HilbertSpace, number
from .parser import parse_file
from .reduction import (
    BinningSpec,
    build_reduced_model,
    reduced_model_to_json,
    write_counts_csv,
)
from .slh import SLHTriplet, model_from_json, model_to_json


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SourceError as err:
        print(err.format(), file=sys.stderr)
        return 1
    except (UserError, QhdlcError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - internal defect path
        traceback.print_exc()
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qhdlc",
        description="Compile QHDL photonic circuit descriptions to SLH "
                    "models and simulate their quantum dynamics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate QHDL files")
    p.add_argument("files", nargs="+")
    p.add_argument("--entity", help="also netlist-check this entity")
    p.add_argument("--arch", help="architecture to check (default: last)")
    p.add_argument("--dump-json", metavar="PATH",
                   help="write the design tree as JSON ('-' for stdout)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("synth", help="synthesize a circuit expression")
    p.add_argument("files", nargs="+")
    p.add_argument("--entity", required=True)
    p.add_argument("--arch")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compile", help="compile an entity to a model file")
    p.add_argument("files", nargs="+")
    p.add_argument("--entity", required=True)
    p.add_argument("--arch")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="entity generic value; complex as re,im")
    p.add_argument("--fock", action="append", default=[], metavar="[MODE=]N",
                   help="Fock dimension for one mode, or a default for all")
    p.add_argument("--bind", action="append", default=[], metavar="INSTANCE=FILE",
                   help="bind an instance path to a compiled model file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sim", help="simulate a compiled model")
    p.add_argument("model")
    p.add_argument("--method", choices=("master", "mcwf"), default="master")
    p.add_argument("--schedule", help="JSON schedule of input conditions")
    p.add_argument("--t-final", type=float, help="duration (no schedule)")
    p.add_argument("--dt", type=float, required=True, help="integrator step")
    p.add_argument("--sample", type=float, required=True,
                   help="sampling interval for the output trace")
    p.add_argument("--traj", type=int, default=1, help="trajectory count (mcwf)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--obs", action="append", default=[], metavar="SPEC",
                   help="observable, e.g. n:MODE (default: all mode numbers)")
    p.add_argument("--initial", default="", metavar="MODE=N,...",
                   help="initial Fock occupations (default: vacuum)")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("reduce", help="estimate a reduced model from traces")
    p.add_argument("tracedir", help="directory of trace CSV files")
    p.add_argument("--bin-width", type=float, required=True)
    p.add_argument("--bin-origin", type=float, default=0.0)
    p.add_argument("--dt", type=float, help="sample interval (default: from data)")
    p.add_argument("--alpha", help="drive amplitude re[,im] (default: fitted)")
    p.add_argument("--obs-a", required=True, help="column name of <a'a>")
    p.add_argument("--obs-b", required=True, help="column name of <b'b>")
    p.add_argument("--output-params", metavar="FILE",
                   help="JSON {theta, phi1, phi2, beta_prime} for output emulation")
    p.add_argument("--counts-dir", help="also write transition-count CSVs here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)
    return parser


# -- shared helpers -----------------------------------------------------------

def _load_designs(paths: Sequence[str]) -> list[Design]:
    designs = []
    for path in paths:
        if not os.path.exists(path):
            raise UserError(f"no such file: {path}")
        designs.append(parse_file(path))
    return designs


def _parse_number(text: str):
    text = text.strip()
    if "," in text:
        re_s, im_s = text.split(",", 1)
        return complex(float(re_s), float(im_s))
    return float(text)


def _parse_assignments(pairs: Sequence[str], what: str) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise UserError(f"bad {what} '{pair}': expected NAME=VALUE")
        name, value = pair.split("=", 1)
        out[name.strip().lower()] = value.strip()
    return out


def _design_tree_json(designs: Sequence[Design]) -> list:
    from dataclasses import asdict, is_dataclass

    def scrub(obj):
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items() if k != "loc"}
        if isinstance(obj, (list, tuple)):
            return [scrub(v) for v in obj]
        return obj

    docs = []
    for design in designs:
        doc = {"source": design.source_name,
               "entities": [scrub(asdict(e)) for e in design.entities],
               "architectures": [scrub(asdict(a)) for a in design.architectures]}
        docs.append(doc)
    return docs


# -- subcommands -----------------------------------------------------------------

def cmd_parse(args) -> int:
    designs = _load_designs(args.files)
    if args.entity:
        for design in designs:
            if design.entity(args.entity):
                validate(design, args.entity, args.arch)
                break
        else:
            raise UserError(f"unknown entity '{args.entity}'")
    else:
        for design in designs:
            for entity in design.entities:
                if design.architectures_of(entity.name):
                    validate(design, entity.name)
    if args.dump_json:
        text = json.dumps(_design_tree_json(designs), indent=2)
        if args.dump_json == "-":
            print(text)
        else:
            with open(args.dump_json, "w", encoding="utf-8") as handle:
                handle.write(text + "\n")
    total = sum(len(d.entities) for d in designs)
    print(f"parsed {len(designs)} file(s), {total} entity(ies): ok")
    return 0


def cmd_synth(args) -> int:
    from .circuit import simplify
    from .synthesis import synthesize

    designs = _load_designs(args.files)
    for design in designs:
        if design.entity(args.entity):
            break
    else:
        raise UserError(f"unknown entity '{args.entity}'")
    graph = validate(design, args.entity, args.arch)
    expression = simplify(synthesize(graph))
    if args.format == "json":
        text = json.dumps(expression_to_json(expression), indent=2)
    else:
        text = render_text(expression)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        print(text)
    return 0


def _compile_options(args) -> CompileOptions:
    options = CompileOptions()
    for name, value in _parse_assignments(args.param, "parameter").items():
        options.parameters[name] = _parse_number(value)
    for spec in args.fock:
        if "=" in spec:
            label, value = spec.split("=", 1)
            options.fock_dims[label.strip()] = int(value)
        else:
            options.fock_default = int(spec)
    for name, value in _parse_assignments(args.bind, "binding").items():
        options.bound_models[name] = value
    return options


def cmd_compile(args) -> int:
    designs = _load_designs(args.files)
    compiled = compile_model(designs, args.entity, args.arch,
                             _compile_options(args))
    doc = model_to_json(compiled.model, ports=compiled.ports)
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(doc, handle)
        handle.write("\n")
    print(f"wrote {args.out}: {compiled.model.n} channels, "
          f"space dims {list(compiled.model.space.dims)}")
    print(f"unitarity residual {compiled.model.unitarity_residual():.3e}, "
          f"Hermiticity residual {compiled.model.hermiticity_residual():.3e}")
    return 0


def _load_model(path: str) -> tuple[SLHTriplet, Optional[dict]]:
    if not os.path.exists(path):
        raise UserError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    return model_from_json(doc)


def _observables(specs: Sequence[str], space: HilbertSpace) -> dict:
    if not specs:
        return number_observables(space)
    out = {}
    for spec in specs:
        if spec.startswith("n:"):
            label = spec[2:]
            if label not in space.labels:
                raise UserError(f"observable '{spec}': no mode '{label}' in "
                                f"model space {list(space.labels)}")
            out[spec] = number(label, space.mode_dim(label))
        else:
            raise UserError(f"unknown observable spec '{spec}' (supported: n:MODE)")
    return out


def _initial_state(spec: str, space: HilbertSpace):
    if not spec:
        return vacuum_state(space)
    occupations = {}
    for pair in spec.split(","):
        if "=" not in pair:
            raise UserError(f"bad initial state '{spec}': expected MODE=N,...")
        label, n = pair.split("=", 1)
        occupations[label.strip()] = int(n)
    return fock_state(space, occupations)


def _load_schedule(path: str, model: SLHTriplet,
                   ports: Optional[dict]) -> list[Segment]:
    with open(path, "r", encoding="utf-8") as handle:
        entries = json.load(handle)
    in_ports = (ports or {}).get("in")
    segments = []
    for entry in entries:
        inputs = []
        for key, value in entry.get("inputs", {}).items():
            if isinstance(key, str) and key.isdigit():
                channel = int(key)
            elif in_ports and key in in_ports:
                channel = in_ports.index(key) + 1
            else:
                known = ([str(i + 1) for i in range(model.n)]
                         + (in_ports or []))
                raise UserError(
                    f"schedule input '{key}' is not a known input; "
                    f"known inputs: {', '.join(known)}")
            if not 1 <= channel <= model.n:
                raise UserError(f"schedule input channel {channel} out of "
                                f"range 1..{model.n}")
            amp = complex(value[0], value[1]) if isinstance(value, list) \
                else complex(value)
            inputs.append((channel, amp))
        segments.append(Segment(entry["condition"], float(entry["duration"]),
                                tuple(sorted(inputs))))
    return segments


def cmd_sim(args) -> int:
    model, ports = _load_model(args.model)
    space = model.space
    observables = _observables(args.obs, space)
    initial = _initial_state(args.initial, space)

    if args.schedule:
        schedule = _load_schedule(args.schedule, model, ports)
        t_final = sum(seg.duration for seg in schedule)
    else:
        if args.t_final is None:
            raise UserError("either --schedule or --t-final is required")
        schedule = None
        t_final = args.t_final

    config = SimulationConfig(
        t_final=t_final, dt=args.dt, sample_interval=args.sample,
        method=args.method, trajectories=args.traj, seed=args.seed,
        observables=observables)

    if args.method == "master":
        rho0 = DensityMatrix(
            space, np.outer(initial.data, initial.data.conj()), check=False)
        if schedule is not None:
            trace = run_input_sequence(model, schedule, config, rho0)
        else:
            trace, _ = integrate_master(model, rho0, config)
        path = args.out + ".csv"
        trace.write_csv(path)
        print(f"wrote {path} ({len(trace.times)} samples)")
        return 0

    traces = []
    for k in range(config.trajectories):
        rng = trajectory_rng(config.seed, k)
        if schedule is not None:
            trace = run_input_sequence(model, schedule, config, initial, rng)
        else:
            trace, _ = mcwf_trajectory(model, initial, config, rng)
        path = f"{args.out}_traj{k}.csv"
        trace.write_csv(path)
        traces.append(trace)
    jumps_path = f"{args.out}_jumps.csv"
    write_jump_records(jumps_path, traces)
    total_jumps = sum(len(t.jumps) for t in traces)
    print(f"wrote {config.trajectories} trajectory trace(s) and {jumps_path} "
          f"({total_jumps} jumps)")
    return 0


def cmd_reduce(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.tracedir, "*.csv")))
    paths = [p for p in paths if not p.endswith("_jumps.csv")
             and not os.path.basename(p).startswith("counts_")]
    if not paths:
        raise UserError(f"no trace CSV files in '{args.tracedir}'")
    traces = [ExpectationTrace.read_csv(p) for p in paths]
    for path, trace in zip(paths, traces):
        for name in (args.obs_a, args.obs_b):
            if name not in trace.values:
                raise UserError(f"{path} has no observable column '{name}' "
                                f"(found: {', '.join(trace.column_names())})")
    alpha = _parse_number(args.alpha) if args.alpha else None
    output_params = None
    if args.output_params:
        with open(args.output_params, "r", encoding="utf-8") as handle:
            output_params = json.load(handle)
    reduced = build_reduced_model(
        traces, BinningSpec(args.bin_width, args.bin_origin),
        args.obs_a, args.obs_b, alpha=alpha, delta_t=args.dt,
        output_params=output_params)
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(reduced_model_to_json(reduced), handle)
        handle.write("\n")
    if args.counts_dir:
        os.makedirs(args.counts_dir, exist_ok=True)
        write_counts_csv(reduced.estimate, args.counts_dir)
    print(f"wrote {args.out}: M={reduced.m} states, "
          f"{reduced.jump.n} jump channels, alpha={reduced.alpha:.6g}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
