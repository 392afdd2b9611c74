"""Command-line front end: ``combsynth synth|parallelize|run|combine|verify``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import CombsynthError, ExecError, GenError, ParseError, ProbeError, UnsupportedSyntax
from .inputgen import DEFAULT_SHAPE, dictionary_for, extract_literals, gen_input_pairs, probe_command, random_shape
from .pipeline import PipelinePlan, emit_script, execute_parallel, make_handle, parse_pipeline, plan
from .synthesizer import CombinerCache, CompositeCombiner, SynthConfig, cache_record, synthesize

log = logging.getLogger("combsynth")

EXIT_OK = 0
EXIT_NO_COMBINER = 2
EXIT_SYNTAX = 3
EXIT_EXEC = 4


@dataclass
class RunConfig:
    rng_seed: int = 0
    max_size: int = 7
    width: int = 4
    per_shape_pairs: int = 4
    mutation_rounds: int = 6
    no_progress_rounds: int = 3
    timeout: float = 10.0
    pool_size: int = field(default_factory=lambda: os.cpu_count() or 1)
    cache_path: Optional[str] = None
    force_c_locale: bool = True

    def __post_init__(self) -> None:
        for name in ("max_size", "width", "per_shape_pairs", "mutation_rounds", "no_progress_rounds", "pool_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def synth_config(self) -> SynthConfig:
        return SynthConfig(max_size=self.max_size, per_shape_pairs=self.per_shape_pairs,
                           mutation_rounds=self.mutation_rounds, no_progress_rounds=self.no_progress_rounds,
                           seed=self.rng_seed, pool_size=self.pool_size)


def hex_escape(data: bytes) -> str:
    """Printable ASCII kept, everything else (and backslash) as ``\\xNN``."""
    return "".join(chr(b) if 0x20 <= b < 0x7F and b != 0x5C else f"\\x{b:02x}" for b in data)


def _config(args) -> RunConfig:
    return RunConfig(rng_seed=getattr(args, "seed", 0), max_size=getattr(args, "max_size", 7),
                     width=getattr(args, "width", 4), per_shape_pairs=args.pairs, mutation_rounds=args.mutations,
                     no_progress_rounds=args.no_progress, timeout=args.timeout, pool_size=args.pool_size,
                     cache_path=getattr(args, "cache", None), force_c_locale=not args.no_c_locale)


def _handle(text: str, args):
    f = make_handle(text, args.builtin_only, timeout=args.timeout)
    f.force_c_locale = not args.no_c_locale
    return f


def _write(path: Optional[str], data: bytes) -> None:
    if path:
        with open(os.path.expandvars(path), "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _read_input(path: Optional[str]) -> bytes:
    if path:
        with open(os.path.expandvars(path), "rb") as fh:
            return fh.read()
    return sys.stdin.buffer.read()


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _config(args)
    f = _handle(args.cmd, args)
    cache = CombinerCache(cfg.cache_path)
    result = synthesize(f, config=cfg.synth_config())
    record = cache_record(result, cfg.max_size)
    cache.put(f.key, record)
    cache.save()
    print(json.dumps(record, indent=2, sort_keys=True))
    if not result.ok:
        print(f"no combiner found for {args.cmd!r}", file=sys.stderr)
        return EXIT_NO_COMBINER
    return EXIT_OK


def cmd_parallelize(args) -> int:
    cfg = _config(args)
    with open(args.script) as fh:
        spec = parse_pipeline(fh.read())
    cache = CombinerCache(cfg.cache_path)
    p = plan(spec, cache, cfg.width, cfg.synth_config(), builtin_only=args.builtin_only,
             rerun_parallel=args.rerun_parallel, sort_parallel_one=not args.sort_threads,
             timeout=cfg.timeout)
    cache.save()
    print(p.summary(), file=sys.stderr)
    if args.plan_out:
        with open(args.plan_out, "w") as fh:
            json.dump(p.to_dict(), fh, indent=2)
            fh.write("\n")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(emit_script(p))
        os.chmod(args.output, 0o755)
    if args.run:
        _write(spec.output_path, execute_parallel(p, _read_input(spec.input_path)))
    elif not args.output and not args.plan_out:
        print(json.dumps(p.to_dict(), indent=2))
    return EXIT_OK


def cmd_run(args) -> int:
    with open(args.plan) as fh:
        p = PipelinePlan.from_dict(json.load(fh))
    if args.width:
        p.width = args.width
    _write(p.spec.output_path, execute_parallel(p, _read_input(p.spec.input_path)))
    return EXIT_OK


def cmd_combine(args) -> int:
    from .pipeline import combine_k

    composite = CompositeCombiner.from_texts(args.combiner)
    f = _handle(args.cmd, args) if args.cmd else None
    parts = []
    for path in args.parts:
        with open(path, "rb") as fh:
            parts.append(fh.read())
    if not parts:
        return EXIT_OK
    _write(None, combine_k(composite, parts, f))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verifier import check_dnc, observation_report

    g = CompositeCombiner.from_texts(args.combiner)
    f = _handle(args.cmd, args)
    rng = random.Random(args.seed)
    literals, _ = extract_literals(f.text)
    dictionary = dictionary_for(probe_command(f), literals, rng)
    pairs: list[tuple[bytes, bytes]] = []
    shape = DEFAULT_SHAPE
    while len(pairs) < args.samples:
        try:
            pairs.extend(gen_input_pairs(shape, min(8, args.samples - len(pairs)), dictionary, rng))
        except GenError:
            pass
        shape = random_shape(rng)
    outcome = check_dnc(f, g, pairs)
    Y = []
    for x1, x2 in pairs[:outcome.checked]:
        Y.append((f.run(x1), f.run(x2), f.run(x1 + x2)))
    member = g.members[0] if len(g.members) == 1 else None
    report = {
        "command": f.text,
        "combiner": g.texts(),
        "holds": outcome.holds,
        "checked": outcome.checked,
        "predicates": observation_report(Y, member),
        "counterexample": None,
    }
    if outcome.violation is not None:
        x1, x2 = outcome.violation
        report["counterexample"] = {"x1": hex_escape(x1), "x2": hex_escape(x2),
                                    "f_x1": hex_escape(f.run(x1)), "f_x2": hex_escape(f.run(x2)),
                                    "f_x1x2": hex_escape(f.run(x1 + x2))}
    verdict = "HOLDS" if outcome.holds else "VIOLATED"
    print(f"{verdict}: {g} for {f.text!r} on {outcome.checked} pair(s)")
    print(json.dumps(report, indent=2))
    return EXIT_OK if outcome.holds else EXIT_NO_COMBINER


# --------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    common.add_argument("--builtin-only", action="store_true",
                        help="use the in-process reference commands where one matches")
    common.add_argument("--timeout", type=float, default=10.0, help="per-invocation timeout in seconds")
    common.add_argument("--pool-size", type=int, default=os.cpu_count() or 1, help="oracle worker threads")
    common.add_argument("--pairs", type=int, default=4, help="input pairs per shape")
    common.add_argument("--mutations", type=int, default=6, help="mutation rounds per synthesis round")
    common.add_argument("--no-progress", type=int, default=3, help="stop after this many idle rounds")
    common.add_argument("--no-c-locale", action="store_true", help="keep the caller's locale for children")

    parser = argparse.ArgumentParser(prog="combsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize a combiner for one command")
    p.add_argument("--cmd", required=True)
    p.add_argument("--max-size", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("parallelize", parents=[common], help="plan a data-parallel pipeline")
    p.add_argument("script")
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--cache")
    p.add_argument("--max-size", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="write a bash script here")
    p.add_argument("--plan-out", help="write the plan as JSON here")
    p.add_argument("--run", action="store_true", help="execute the plan now")
    p.add_argument("--rerun-parallel", action="store_true", help="parallelize rerun-only stages too")
    p.add_argument("--sort-threads", action="store_true", help="do not pin sort to --parallel=1")
    p.set_defaults(func=cmd_parallelize)

    p = sub.add_parser("run", parents=[common], help="execute a saved plan")
    p.add_argument("plan")
    p.add_argument("--width", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("combine", parents=[common], help="combine partial outputs in order")
    p.add_argument("--combiner", action="append", required=True, help="repeat for a composite")
    p.add_argument("--cmd", help="command, needed by rerun and merge")
    p.add_argument("parts", nargs="*")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("verify", parents=[common], help="check a combiner on random inputs")
    p.add_argument("--cmd", required=True)
    p.add_argument("--combiner", action="append", required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnsupportedSyntax, ParseError) as exc:
        print(f"combsynth: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    except ProbeError as exc:
        print(f"combsynth: {exc}", file=sys.stderr)
        return EXIT_NO_COMBINER
    except (ExecError, OSError) as exc:
        print(f"combsynth: {exc}", file=sys.stderr)
        return EXIT_EXEC
    except (CombsynthError, ValueError) as exc:
        print(f"combsynth: {exc}", file=sys.stderr)
        return EXIT_EXEC


if __name__ == "__main__":
    sys.exit(main())
