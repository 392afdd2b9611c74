"""Pipeline parsing, planning with combiners, parallel execution and script emission."""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from . import sortmerge
from .dsl import Merge, Rerun
from .errors import CombsynthError, DomainError, ExecError, SpawnError, UnsupportedSyntax
from .oracle import CommandHandle, child_env, external_merge, split_stream
from .synthesizer import CombinerCache, CompositeCombiner, SynthConfig, cache_record, synthesize

log = logging.getLogger(__name__)

_FORBIDDEN = {";": "command list", "&": "background job", "<": "input redirection",
              "(": "subshell", ")": "subshell", "`": "command substitution"}


# --------------------------------------------------------------------------
# parsing


@dataclass
class PipelineSpec:
    stages: list[str]
    input_path: Optional[str] = None
    output_path: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a pipeline needs at least one stage")

    def text(self) -> str:
        body = " | ".join(self.stages)
        if self.input_path:
            body = f"cat {self.input_path} | {body}"
        if self.output_path:
            body = f"{body} > {self.output_path}"
        return body


def _logical_line(script: str) -> tuple[str, int]:
    """Drop comments and blank lines, join continuations; return (text, offset)."""
    kept = []
    offset = None
    pos = 0
    for raw in script.replace("\\\n", "  ").split("\n"):
        stripped = raw.strip()
        if stripped and not stripped.startswith("#"):
            kept.append(raw)
            if offset is None:
                offset = pos
        pos += len(raw) + 1
    if len(kept) != 1:
        raise UnsupportedSyntax("expected exactly one pipeline", offset)
    return kept[0], offset or 0


def _split_unquoted(text: str, base: int) -> list[tuple[str, int]]:
    """Split on unquoted ``|``; reject the operators outside the subset."""
    pieces: list[tuple[str, int]] = []
    quote = None
    start = 0
    i = 0
    while i < len(text):
        c = text[i]
        if quote:
            if c == "\\" and quote == '"':
                i += 2
                continue
            if c == quote:
                quote = None
        elif c == "\\":
            i += 2
            continue
        elif c in "'\"":
            quote = c
        elif c == "|":
            if text.startswith("||", i):
                raise UnsupportedSyntax("conditional '||'", base + i)
            pieces.append((text[start:i], base + start))
            start = i + 1
        elif c in _FORBIDDEN:
            raise UnsupportedSyntax(f"{_FORBIDDEN[c]} is not supported", base + i)
        elif c == "$" and text.startswith("$(", i):
            raise UnsupportedSyntax("command substitution", base + i)
        i += 1
    if quote:
        raise UnsupportedSyntax("unterminated quote", base + len(text))
    pieces.append((text[start:], base + start))
    return pieces


def _unquoted_index(text: str, ch: str) -> int:
    quote = None
    i = 0
    while i < len(text):
        c = text[i]
        if quote:
            if c == quote:
                quote = None
        elif c == "\\":
            i += 1
        elif c in "'\"":
            quote = c
        elif c == ch:
            return i
        i += 1
    return -1


def parse_pipeline(script_text: str) -> PipelineSpec:
    """Parse ``[cat FILE |] cmd | cmd ... [> FILE]``."""
    line, base = _logical_line(script_text)
    pieces = _split_unquoted(line, base)
    stages: list[str] = []
    output_path = None
    for n, (piece, pos) in enumerate(pieces):
        text = piece.strip()
        if not text:
            raise UnsupportedSyntax("empty pipeline stage", pos)
        gt = _unquoted_index(text, ">")
        if gt >= 0:
            if n != len(pieces) - 1:
                raise UnsupportedSyntax("output redirection before the last stage", pos + gt)
            target = text[gt + 1:].strip()
            if target.startswith(">") or not target or len(shlex.split(target)) != 1:
                raise UnsupportedSyntax("only '> FILE' is supported", pos + gt)
            output_path = target
            text = text[:gt].strip()
            if not text:
                raise UnsupportedSyntax("redirection without a command", pos)
        stages.append(text)
    input_path = None
    first = shlex.split(stages[0])
    if first and first[0] == "cat" and len(first) == 2 and not first[1].startswith("-"):
        input_path = stages[0].split(None, 1)[1].strip()
        stages = stages[1:]
        if not stages:
            stages = ["cat"]
    return PipelineSpec(stages, input_path, output_path)


# --------------------------------------------------------------------------
# planning


@dataclass
class StagePlan:
    command: str
    mode: str = "sequential"
    combiners: list[str] = field(default_factory=list)
    eliminated: bool = False
    group: int = 0
    status: str = "ok"
    stream_output: bool = True

    @property
    def composite(self) -> Optional[CompositeCombiner]:
        return CompositeCombiner.from_texts(self.combiners) if self.combiners else None


@dataclass
class PipelinePlan:
    spec: PipelineSpec
    width: int
    stages: list[StagePlan]
    builtin_only: bool = False
    sort_parallel_one: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelinePlan":
        spec = PipelineSpec(**data["spec"])
        stages = [StagePlan(**s) for s in data["stages"]]
        return cls(spec, data["width"], stages, data.get("builtin_only", False),
                   data.get("sort_parallel_one", True))

    def groups(self) -> list[list[int]]:
        out: list[list[int]] = []
        for i, stage in enumerate(self.stages):
            if out and self.stages[out[-1][-1]].group == stage.group:
                out[-1].append(i)
            else:
                out.append([i])
        return out

    def summary(self) -> str:
        rows = []
        for s in self.stages:
            tag = s.mode if s.mode == "sequential" else f"parallel({self.width})"
            comb = "eliminated" if s.eliminated else (" | ".join(s.combiners) or "-")
            rows.append(f"[g{s.group}] {tag:<13} {s.command}  ->  {comb}")
        return "\n".join(rows)


def make_handle(command: str, builtin_only: bool = False, **kw) -> CommandHandle:
    """Built-in when one matches under ``builtin_only``, external otherwise."""
    try:
        return CommandHandle.from_text(command, builtin_only=builtin_only, **kw)
    except SpawnError:
        return CommandHandle.from_text(command, **kw)


def _stage_record(command: str, cache: CombinerCache, config: SynthConfig, builtin_only: bool,
                  timeout: float) -> dict:
    f = make_handle(command, builtin_only, timeout=timeout)
    key = f.key
    record = cache.get(key)
    if record is not None:
        return record
    try:
        result = synthesize(f, config=config)
        record = cache_record(result, config.max_size)
    except (CombsynthError, OSError) as exc:
        log.warning("stage %r falls back to sequential: %s", command, exc)
        record = {"command": command, "status": "unsupported", "combiners": [], "stream_output": True}
    cache.put(key, record)
    return record


def plan(spec: PipelineSpec, combiner_db: Optional[CombinerCache] = None, width: int = 4,
         synth_config: Optional[SynthConfig] = None, builtin_only: bool = False,
         rerun_parallel: bool = False, sort_parallel_one: bool = True,
         timeout: float = 10.0) -> PipelinePlan:
    if width < 2:
        raise ValueError("width must be at least 2")
    cache = combiner_db if combiner_db is not None else CombinerCache()
    config = synth_config or SynthConfig()
    stages: list[StagePlan] = []
    for command in spec.stages:
        rec = _stage_record(command, cache, config, builtin_only, timeout)
        sp = StagePlan(command, combiners=list(rec.get("combiners", [])), status=rec.get("status", "ok"),
                       stream_output=bool(rec.get("stream_output", True)))
        composite = sp.composite
        if sp.status != "ok" or composite is None:
            sp.mode = "sequential"
        elif composite.is_rerun_only and not rerun_parallel:
            sp.mode = "sequential"
        else:
            sp.mode = "parallel"
        stages.append(sp)
    group = 0
    for i, sp in enumerate(stages):
        nxt = stages[i + 1] if i + 1 < len(stages) else None
        composite = sp.composite
        sp.eliminated = bool(sp.mode == "parallel" and composite is not None and composite.is_concat
                             and sp.stream_output and nxt is not None and nxt.mode == "parallel")
        sp.group = group
        if not sp.eliminated:
            group += 1
    return PipelinePlan(spec, width, stages, builtin_only, sort_parallel_one)


# --------------------------------------------------------------------------
# execution


def _exec_argv(f: CommandHandle, sort_parallel_one: bool) -> list[str]:
    argv = f.argv if f.argv is not None else ["/bin/sh", "-c", f.text]
    if sort_parallel_one and f.argv is not None and f.program == "sort":
        argv = [argv[0], "--parallel=1", *argv[1:]]
    return argv


def run_once(f: CommandHandle, data: bytes, sort_parallel_one: bool = True) -> bytes:
    """Run a stage on a full stream (no memoization)."""
    if f.builtin is not None:
        return f._execute(data)
    with tempfile.TemporaryFile() as src:
        src.write(data)
        src.seek(0)
        return _run_file(f, src, sort_parallel_one)


def _run_file(f: CommandHandle, src, sort_parallel_one: bool) -> bytes:
    env = child_env(f.force_c_locale, f.env)
    try:
        proc = subprocess.run(_exec_argv(f, sort_parallel_one), stdin=src, stdout=subprocess.PIPE,
                              stderr=subprocess.PIPE, env=env)
    except OSError as exc:
        raise ExecError(f"cannot run {f.text!r}: {exc}") from exc
    ok = {0, 1} if f.program in ("grep", "egrep", "fgrep") else {0}
    if proc.returncode not in ok or (proc.returncode == 1 and proc.stderr):
        raise ExecError(f"{f.text!r} exited with status {proc.returncode}: {proc.stderr[:200]!r}")
    return proc.stdout


def _run_instances(f: CommandHandle, parts: Sequence[bytes], stage_index: int,
                   sort_parallel_one: bool) -> list[bytes]:
    if f.builtin is not None:
        return [f._execute(p) for p in parts]

    def one(item: tuple[int, bytes]) -> bytes:
        i, data = item
        try:
            return run_once(f, data, sort_parallel_one)
        except ExecError as exc:
            raise ExecError(f"stage {stage_index + 1} instance {i + 1}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=max(1, len(parts))) as pool:
        return list(pool.map(one, enumerate(parts)))


def _as_composite(c) -> CompositeCombiner:
    if isinstance(c, CompositeCombiner):
        return c
    return CompositeCombiner((c,))


def combine_k(c, parts: Sequence[Optional[bytes]], f: Optional[CommandHandle] = None) -> bytes:
    """Combine ``k`` substream outputs in order; ``None`` parts are skipped."""
    present = [p for p in parts if p is not None]
    if not present:
        raise ValueError("nothing to combine")
    comp = _as_composite(c)
    first = comp.members[0]
    if comp.is_concat:
        return b"".join(present)
    if isinstance(first, Merge) and all(isinstance(m, (Merge, Rerun)) for m in comp.members):
        if f is not None and f.builtin is None and not sortmerge.supports(first.flags):
            return external_merge(first.flags, present)
        if f is not None and f.builtin is None and len(b"".join(present)) > 1 << 20:
            return external_merge(first.flags, present)
        return sortmerge.merge(first.flags, present)
    if comp.is_rerun_only:
        if f is None:
            raise ValueError("rerun needs the command")
        return run_once(f, b"".join(present))
    if len(present) == 1:
        return present[0]
    try:
        return _fold(comp, present, f)
    except DomainError:
        nonempty = [p for p in present if p]
        if len(nonempty) == len(present):
            raise
        if not nonempty:
            return b""
        return nonempty[0] if len(nonempty) == 1 else _fold(comp, nonempty, f)


def _fold(comp: CompositeCombiner, parts: Sequence[bytes], f) -> bytes:
    acc = parts[0]
    for p in parts[1:]:
        if not (comp.legal(acc, f) and comp.legal(p, f)):
            raise DomainError("substream outside the combiner's domain")
        acc = comp.apply(acc, p, f)
    return acc


def run_serial(spec: PipelineSpec, data: bytes, builtin_only: bool = False) -> bytes:
    for command in spec.stages:
        data = run_once(make_handle(command, builtin_only), data, sort_parallel_one=False)
    return data


def execute_parallel(plan: PipelinePlan, data: bytes) -> bytes:
    """Run the plan; the result must equal :func:`run_serial` byte for byte."""
    handles = [make_handle(s.command, plan.builtin_only) for s in plan.stages]
    combined: bytes = data
    parts: Optional[list[bytes]] = None
    for i, (stage, f) in enumerate(zip(plan.stages, handles)):
        if stage.mode == "sequential":
            combined = run_once(f, combined, plan.sort_parallel_one)
            continue
        if parts is None:
            parts = [p for p in split_stream(combined, plan.width) if p is not None]
            if not parts:
                parts = None
                combined = run_once(f, combined, plan.sort_parallel_one)
                continue
        outs = _run_instances(f, parts, i, plan.sort_parallel_one)
        if stage.eliminated:
            parts = outs
        else:
            combined = combine_k(stage.composite, outs, f)
            parts = None
    if parts is not None:
        combined = b"".join(parts)
    return combined


# --------------------------------------------------------------------------
# script emission


def _sort_text(command: str, sort_parallel_one: bool) -> str:
    try:
        argv = shlex.split(command)
    except ValueError:
        return command
    if sort_parallel_one and argv and argv[0] == "sort":
        return "sort --parallel=1" + command.strip()[4:]
    return command


def emit_script(plan: PipelinePlan, combsynth: str = "python3 -m combsynth") -> str:
    """Bash script reproducing :func:`execute_parallel` with temp files."""
    q = shlex.quote
    out = [
        "#!/usr/bin/env bash",
        "# data-parallel rendering of: " + plan.spec.text().replace("\n", " "),
        "set -euo pipefail",
        "export LC_ALL=C",
        f"K={plan.width}",
        f'COMBSYNTH="${{COMBSYNTH:-{combsynth}}}"',
        'tmp=$(mktemp -d)',
        "trap 'rm -rf \"$tmp\"' EXIT",
    ]
    out.append(f'cat {plan.spec.input_path} > "$tmp/in"' if plan.spec.input_path else 'cat > "$tmp/in"')
    cur = '"$tmp/in"'
    for gi, members in enumerate(plan.groups()):
        first = plan.stages[members[0]]
        out.append("")
        if first.mode == "sequential":
            stage = first
            cmd = _sort_text(stage.command, plan.sort_parallel_one)
            out.append(f"# group {gi}: sequential")
            out.append(f'{cmd} < {cur} > "$tmp/g{gi}.out"')
            cur = f'"$tmp/g{gi}.out"'
            continue
        out.append(f"# group {gi}: {len(members)} stage(s) across $K substreams")
        out.append(f'mkdir "$tmp/g{gi}"')
        out.append(f'split -e -d -a 3 -n l/$K {cur} "$tmp/g{gi}/p."')
        out.append(f'parts=("$tmp/g{gi}"/p.???)')
        for si in members:
            stage = plan.stages[si]
            cmd = _sort_text(stage.command, plan.sort_parallel_one)
            out.append(f'for p in "${{parts[@]}}"; do {cmd} < "$p" > "$p.s{si}" & done; wait')
            out.append(f'parts=("${{parts[@]/%/.s{si}}}")')
        last = plan.stages[members[-1]]
        comp = last.composite
        target = f'"$tmp/g{gi}.out"'
        if comp is None or comp.is_concat:
            out.append(f'cat "${{parts[@]}}" > {target}')
        elif isinstance(comp.members[0], Merge) and all(isinstance(m, (Merge, Rerun)) for m in comp.members):
            flags = " ".join(q(x) for x in comp.members[0].flags)
            out.append(f'sort -m {flags} "${{parts[@]}}" > {target}'.replace("  ", " "))
        elif comp.is_rerun_only:
            out.append(f'cat "${{parts[@]}}" | {last.command} > {target}')
        else:
            args = " ".join(f"--combiner {q(t)}" for t in last.combiners)
            out.append(f'$COMBSYNTH combine --cmd {q(last.command)} {args} "${{parts[@]}}" > {target}')
        cur = target
    out.append("")
    if plan.spec.output_path:
        out.append(f"cat {cur} > {plan.spec.output_path}")
    else:
        out.append(f"cat {cur}")
    return "\n".join(out) + "\n"
