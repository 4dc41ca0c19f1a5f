"""Command line entry point: ``greyfuzz <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

import numpy as np

from . import coverage, intervals, taint
from .config import CampaignConfig, ConfigError, load_config
from .fuzzer import resolve_program, run_campaign, run_generic_baseline, write_corpus, write_stats, write_timeline
from .vm import ProgramError, builtin_names, builtin_program, load_program_file, program_source

TABLE_M = range(1, 6)
TABLE_EDGES = range(3000, 10001, 1000)


class CliError(Exception):
    pass


def _program(name: str, m: int = 4, map_bits: int = 16, label_seed: int = 0):
    if name in builtin_names():
        return builtin_program(name, m=m, map_bits=map_bits, label_seed=label_seed)
    if not Path(name).exists():
        raise CliError(f"no builtin program or file named {name!r}")
    return load_program_file(name, m=m, map_bits=map_bits, label_seed=label_seed)


def _seed(path: str | None, size: int) -> bytes:
    data = bytes(size) if path is None else Path(path).read_bytes()
    if len(data) < size:
        data += bytes(size - len(data))
    return data[:size]


# campaign commands ---------------------------------------------------------------


def _campaign_config(args) -> CampaignConfig:
    overrides = {
        "program": args.program,
        "seeds": args.seed or None,
        "iterations": args.iterations,
        "max_executions": args.max_executions,
        "rng_seed": args.rng_seed,
        "m": args.m,
        "map_bits": args.map_bits,
        "inner_budget": args.inner_budget,
    }
    if args.no_flush:
        overrides["flush"] = False
    if args.config:
        return load_config(args.config, **overrides)
    cfg = CampaignConfig()
    return cfg.replace(**{k: v for k, v in overrides.items() if v is not None}).validate()


def _summary(state) -> dict:
    final = state.stats[-1]
    return {k: final[k] for k in ("iteration", "executions", "coverage", "pool", "precise_edges", "crashes")}


def cmd_fuzz(args, baseline: bool = False) -> int:
    cfg = _campaign_config(args)
    program = resolve_program(cfg.replace(baseline=baseline))
    state = (run_generic_baseline if baseline else run_campaign)(cfg, program)
    if args.stats_out:
        write_stats(state, args.stats_out)
    if args.timeline_out:
        write_timeline(state, args.timeline_out)
    if args.corpus_out:
        write_corpus(state, args.corpus_out)
    print(json.dumps(_summary(state), sort_keys=True))
    return 0


# analysis commands ---------------------------------------------------------------


def cmd_taint(args) -> int:
    program = _program(args.program, label_seed=args.rng_seed)
    seed = _seed(args.seed, program.input_size)
    rng = np.random.default_rng(args.rng_seed)
    if args.method == "fti":
        report = taint.fti_infer(program, seed, args.fti_values, rng)
    elif args.method == "taintfast":
        report = taint.infer_taint(program, seed, args.repeats, rng)
    else:
        report = taint.infer(program, seed, args.repeats, rng, fti_threshold=args.fti_threshold)
    copies = taint.detect_direct_copies(report)
    out = {
        "program": program.name,
        "method": report.method,
        "executions": report.executions,
        "probes": report.probes,
        "excluded": [list(r) for r in report.excluded],
        "branches": report.to_json(),
        "direct_copies": [
            {"branch": c.branch_id, "occurrence": c.key[1], "offset": c.offset, "width": c.width,
             "side": c.side, "operator": c.operator, "constant": c.constant}
            for c in sorted(copies.values(), key=lambda c: c.key)
        ],
    }
    print(json.dumps(out, indent=1, sort_keys=True))
    return 0


def cmd_solve(args) -> int:
    program = _program(args.program, label_seed=args.rng_seed)
    seed = _seed(args.seed, program.input_size)
    report = taint.infer(program, seed, args.repeats, np.random.default_rng(args.rng_seed))
    key = (args.branch, args.occurrence)
    if key not in report.keys:
        raise CliError(f"branch {args.branch} (occurrence {args.occurrence}) is not on the seed's path")
    target = report.keys.index(key)
    system = intervals.build_system(
        report.trace, target, taint.detect_direct_copies(report), mode=args.mode, deps=report.deps
    )
    print(system.format())
    rng = random.Random(args.rng_seed)
    for _ in range(args.samples):
        print(intervals.sample_solution(system, seed, rng).hex())
    return 0


def cmd_cov_analyze(args) -> int:
    if args.m is not None or args.edges is not None:
        if args.m is None or args.edges is None:
            raise CliError("--m and --edges go together")
        p = coverage.collision_free_probability(args.n_bits, args.m, args.edges)
        line = f"{p:.3f}"
        if args.simulate:
            sim = coverage.simulate_collisions(args.n_bits, args.m, args.edges, args.simulate, args.rng_seed)
            line += f",{sim:.3f}"
        print(line)
        return 0
    print("m," + ",".join(str(e) for e in TABLE_EDGES))
    rng = np.random.default_rng(args.rng_seed)
    for m in TABLE_M:
        row = [coverage.collision_free_probability(args.n_bits, m, e) for e in TABLE_EDGES]
        print(f"{m}," + ",".join(f"{p:.3f}" for p in row))
        if args.simulate:
            sim = [coverage.simulate_collisions(args.n_bits, m, e, args.simulate, rng) for e in TABLE_EDGES]
            print(f"{m}-sim," + ",".join(f"{p:.3f}" for p in sim))
    return 0


def cmd_corpus(args) -> int:
    if args.show:
        print(program_source(args.show), end="")
        return 0
    print("name,input_size,blocks,branches")
    for name in builtin_names():
        p = builtin_program(name, m=1)
        print(f"{name},{p.input_size},{p.n_blocks},{len(p.sites)}")
    return 0


# parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greyfuzz", description="Grey-box fuzzing on an embedded branch VM.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("fuzz", "run a full campaign"), ("baseline", "run the generic baseline fuzzer")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--program", default=None, help="builtin name or program file")
        p.add_argument("--seed", action="append", help="initial seed file (repeatable)")
        p.add_argument("--config", help="INI file with a [campaign] section")
        p.add_argument("--iterations", type=int)
        p.add_argument("--max-executions", type=int)
        p.add_argument("--rng-seed", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--map-bits", type=int)
        p.add_argument("--inner-budget", type=int)
        p.add_argument("--no-flush", action="store_true")
        p.add_argument("--stats-out", help="JSON-lines stats stream")
        p.add_argument("--timeline-out", help="coverage timeline CSV")
        p.add_argument("--corpus-out", help="directory for the final seeds")

    p = sub.add_parser("taint", help="print the taint report of a seed")
    p.add_argument("--program", required=True)
    p.add_argument("--seed", help="seed file; all zeros when omitted")
    p.add_argument("--method", choices=("auto", "taintfast", "fti"), default="taintfast")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--fti-values", type=int, default=1)
    p.add_argument("--fti-threshold", type=int, default=64)
    p.add_argument("--rng-seed", type=int, default=0)

    p = sub.add_parser("solve", help="print the interval system for flipping one branch")
    p.add_argument("--program", required=True)
    p.add_argument("--seed", help="seed file; all zeros when omitted")
    p.add_argument("--branch", type=int, required=True, help="branch id (source line)")
    p.add_argument("--occurrence", type=int, default=0)
    p.add_argument("--mode", choices=("ST-all", "ST-one"), default="ST-all")
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--samples", type=int, default=0, help="also print this many sampled inputs (hex)")
    p.add_argument("--rng-seed", type=int, default=0)

    p = sub.add_parser("cov-analyze", help="collision-free probability of multi-label coverage")
    p.add_argument("--n-bits", type=int, default=16)
    p.add_argument("--m", type=int)
    p.add_argument("--edges", type=int)
    p.add_argument("--simulate", type=int, default=0, metavar="TRIALS", help="add Monte-Carlo estimates")
    p.add_argument("--rng-seed", type=int, default=0)

    p = sub.add_parser("corpus", help="list builtin programs")
    p.add_argument("--show", choices=builtin_names(), help="print one program's source")
    return parser


COMMANDS = {
    "fuzz": cmd_fuzz,
    "baseline": lambda a: cmd_fuzz(a, baseline=True),
    "taint": cmd_taint,
    "solve": cmd_solve,
    "cov-analyze": cmd_cov_analyze,
    "corpus": cmd_corpus,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ProgramError as e:
        print(f"greyfuzz: program error: {e}", file=sys.stderr)
        return 3
    except (CliError, ConfigError, intervals.Unsatisfiable, OSError, ValueError, KeyError) as e:
        print(f"greyfuzz: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
