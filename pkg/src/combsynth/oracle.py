"""Running the black-box command: observations, substream splitting, built-ins."""
from __future__ import annotations

import logging
import os
import re
import shlex
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import sortmerge
from .enumerator import sort_comparator_flags
from .errors import CommandTimeout, ExecError, NondeterministicCommand, NonZeroExit, SpawnError

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0
_LOCALE_VARS = ("LANG", "LANGUAGE")
# commands whose exit status 1 means "nothing selected", not failure
_STATUS_ONE_OK = {"grep", "egrep", "fgrep", "diff", "cmp"}
_MEMO_LIMIT = 20000


# --------------------------------------------------------------------------
# built-in reference commands (byte-compatible with their coreutils namesakes)


def _lines(data: bytes) -> list[bytes]:
    return sortmerge.split_lines(data)


def _identity(data: bytes) -> bytes:
    return data


def _line_count(data: bytes) -> bytes:
    return b"%d\n" % data.count(b"\n")


def _lowercase(data: bytes) -> bytes:
    return data.lower()


def _adjacent_groups(data: bytes) -> list[tuple[bytes, int]]:
    groups: list[tuple[bytes, int]] = []
    for line in _lines(data):
        if groups and groups[-1][0] == line:
            groups[-1] = (line, groups[-1][1] + 1)
        else:
            groups.append((line, 1))
    return groups


def _uniq(data: bytes) -> bytes:
    return b"".join(line + b"\n" for line, _ in _adjacent_groups(data))


def _uniq_count(data: bytes) -> bytes:
    return b"".join(b"%7d %s\n" % (n, line) for line, n in _adjacent_groups(data))


_NON_LETTERS = re.compile(rb"[^A-Za-z]+")


def _squeeze_words(data: bytes) -> bytes:
    return _NON_LETTERS.sub(b"\n", data)


@dataclass(frozen=True)
class Builtin:
    name: str
    fn: Callable[[bytes], bytes]
    sort_flags: Optional[tuple[str, ...]] = None
    equivalent: str = ""


BUILTINS: dict[str, Builtin] = {
    b.name: b
    for b in (
        Builtin("identity", _identity, equivalent="cat"),
        Builtin("line-count", _line_count, equivalent="wc -l"),
        Builtin("lowercase", _lowercase, equivalent="tr A-Z a-z"),
        Builtin("sort-lines", lambda d: sortmerge.sort_lines((), d), (), "sort"),
        Builtin("sort-lines-rn", lambda d: sortmerge.sort_lines(("-rn",), d), ("-rn",), "sort -rn"),
        Builtin("uniq", _uniq, equivalent="uniq"),
        Builtin("uniq-count", _uniq_count, equivalent="uniq -c"),
        Builtin("squeeze-words", _squeeze_words, equivalent="tr -cs A-Za-z '\\n'"),
    )
}


def normalize_command(text: str) -> str:
    """Canonical spelling of a command line (quoting and spacing normalized)."""
    try:
        return shlex.join(shlex.split(text))
    except ValueError:
        return " ".join(text.split())


_BY_EQUIVALENT = {normalize_command(b.equivalent): b.name for b in BUILTINS.values()}


def builtin_for(text: str) -> Optional[str]:
    """Name of the built-in matching ``text``, accepting coreutils spellings."""
    text = text.strip()
    if text in BUILTINS:
        return text
    if text.startswith("builtin:") and text[8:] in BUILTINS:
        return text[8:]
    return _BY_EQUIVALENT.get(normalize_command(text))


# --------------------------------------------------------------------------
# command handle


def child_env(force_c_locale: bool = True, extra: Optional[dict[str, str]] = None) -> dict[str, str]:
    env = dict(os.environ)
    if force_c_locale:
        for key in list(env):
            if key.startswith("LC_") or key in _LOCALE_VARS:
                del env[key]
        env["LC_ALL"] = "C"
    if extra:
        env.update(extra)
    return env


@dataclass
class CommandHandle:
    """A command under test: an external command line or a built-in.

    ``stream_output`` turns false once any output lacks a trailing newline;
    the pipeline planner then refuses to drop that stage's combiner.
    """

    text: str
    builtin: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT
    env: dict[str, str] = field(default_factory=dict)
    force_c_locale: bool = True
    stream_output: bool = True
    _memo: dict[bytes, bytes] = field(default_factory=dict, repr=False, compare=False)
    _errors: dict[bytes, ExecError] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.builtin is None:
            if not self.text.strip():
                raise ValueError("empty command")
            self.argv = self._argv()
        else:
            if self.builtin not in BUILTINS:
                raise ValueError(f"unknown built-in {self.builtin!r}")
            self.argv = None

    @classmethod
    def from_text(cls, text: str, builtin_only: bool = False, **kw) -> "CommandHandle":
        name = builtin_for(text)
        if name is not None and (builtin_only or text.strip() in BUILTINS or text.startswith("builtin:")):
            return cls(text=text, builtin=name, **kw)
        if builtin_only:
            raise SpawnError(f"no built-in equivalent for {text!r}")
        return cls(text=text, **kw)

    def _argv(self) -> Optional[list[str]]:
        """argv when the text is a plain command, ``None`` when it needs a shell."""
        try:
            tokens = shlex.split(self.text)
        except ValueError:
            return None
        lexer = shlex.shlex(self.text, posix=True, punctuation_chars=True)
        lexer.whitespace_split = True
        try:
            if any(tok and set(tok) <= set("|&;<>()") for tok in lexer):
                return None
        except ValueError:
            return None
        if any("$" in tok or "`" in tok for tok in tokens):
            return None
        return tokens

    @property
    def program(self) -> str:
        if self.builtin is not None:
            return self.builtin
        tokens = self.argv or shlex.split(self.text)
        return tokens[0].rsplit("/", 1)[-1] if tokens else ""

    @property
    def sort_flags(self) -> Optional[tuple[str, ...]]:
        if self.builtin is not None:
            return BUILTINS[self.builtin].sort_flags
        return sort_comparator_flags(self.text)

    @property
    def key(self) -> str:
        return f"builtin:{self.builtin}" if self.builtin else normalize_command(self.text)

    def _execute(self, data: bytes) -> bytes:
        if self.builtin is not None:
            return BUILTINS[self.builtin].fn(data)
        env = child_env(self.force_c_locale, self.env)
        cmd = self.argv if self.argv is not None else ["/bin/sh", "-c", self.text]
        try:
            proc = subprocess.run(cmd, input=data, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                  env=env, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            raise CommandTimeout(f"{self.text!r} timed out after {self.timeout}s") from None
        except OSError as exc:
            raise SpawnError(f"cannot run {self.text!r}: {exc}") from exc
        ok = {0, 1} if self.program in _STATUS_ONE_OK else {0}
        if proc.returncode not in ok or (proc.returncode == 1 and proc.stderr):
            raise NonZeroExit(self.text, proc.returncode, proc.stderr)
        return proc.stdout

    def run(self, data: bytes) -> bytes:
        """Run on ``data``; output bytes are returned verbatim and memoized."""
        if data in self._memo:
            return self._memo[data]
        if data in self._errors:
            raise self._errors[data]
        try:
            out = self._execute(data)
        except ExecError as exc:
            if len(self._errors) < _MEMO_LIMIT:
                self._errors[data] = exc
            raise
        if out and not out.endswith(b"\n"):
            if self.stream_output:
                log.info("%s produced output without a trailing newline", self.text)
            self.stream_output = False
        if len(self._memo) >= _MEMO_LIMIT:
            self._memo.clear()
        self._memo[data] = out
        return out

    def rerun_check(self, data: bytes) -> None:
        """Run again bypassing the memo; raise if the output changed."""
        if data not in self._memo:
            return
        fresh = self._execute(data)
        if fresh != self._memo[data]:
            raise NondeterministicCommand(f"{self.text!r} gave different outputs on the same input")

    def accepts(self, data: bytes) -> bool:
        try:
            self.run(data)
        except ExecError:
            return False
        return True

    def _use_emulation(self, flags: Sequence[str]) -> bool:
        return self.builtin is not None or sortmerge.supports(flags) or shutil.which("sort") is None

    def merge(self, flags: Sequence[str], parts: Sequence[bytes]) -> bytes:
        if self._use_emulation(flags):
            return sortmerge.merge(flags, parts)
        return external_merge(flags, parts, self.timeout, self.force_c_locale)

    def is_sorted(self, flags: Sequence[str], data: bytes) -> bool:
        if self._use_emulation(flags):
            return sortmerge.is_sorted(flags, data)
        env = child_env(self.force_c_locale)
        try:
            proc = subprocess.run(["sort", "-c", *flags], input=data, stdout=subprocess.DEVNULL,
                                  stderr=subprocess.DEVNULL, env=env, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired):
            return False
        return proc.returncode == 0


def external_merge(flags: Sequence[str], parts: Sequence[bytes], timeout: float = DEFAULT_TIMEOUT,
                   force_c_locale: bool = True) -> bytes:
    """``sort -m flags part1 part2 ...`` through temporary files."""
    with tempfile.TemporaryDirectory(prefix="combsynth-merge-") as tmp:
        paths = []
        for i, part in enumerate(parts):
            path = os.path.join(tmp, f"part{i}")
            with open(path, "wb") as fh:
                fh.write(part)
            paths.append(path)
        try:
            proc = subprocess.run(["sort", "-m", *flags, *paths], stdout=subprocess.PIPE,
                                  stderr=subprocess.PIPE, env=child_env(force_c_locale), timeout=timeout)
        except subprocess.TimeoutExpired:
            raise CommandTimeout("sort -m timed out") from None
        except OSError as exc:
            raise SpawnError(f"cannot run sort: {exc}") from exc
    if proc.returncode != 0:
        raise NonZeroExit("sort -m", proc.returncode, proc.stderr)
    return proc.stdout


# --------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class Observation:
    y1: bytes
    y2: bytes
    y12: bytes
    source_pair: tuple[bytes, bytes]

    @property
    def outputs(self) -> tuple[bytes, bytes, bytes]:
        return self.y1, self.y2, self.y12


def run_command(f: CommandHandle, data: bytes) -> bytes:
    return f.run(data)


def observe(f: CommandHandle, pair: tuple[bytes, bytes]) -> Observation:
    x1, x2 = pair
    return Observation(f.run(x1), f.run(x2), f.run(x1 + x2), (x1, x2))


def observe_many(f: CommandHandle, pairs: Iterable[tuple[bytes, bytes]],
                 pool_size: int = 1) -> list[Optional[Observation]]:
    """Observe every pair; failed observations come back as ``None``.

    Results keep submission order regardless of ``pool_size``.
    """
    pairs = list(pairs)

    def one(pair: tuple[bytes, bytes]) -> Optional[Observation]:
        try:
            return observe(f, pair)
        except ExecError as exc:
            log.warning("discarding input pair: %s", exc)
            return None

    if pool_size <= 1 or f.builtin is not None or len(pairs) < 2:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=pool_size) as pool:
        return list(pool.map(one, pairs))


# --------------------------------------------------------------------------
# substreams


def split_stream(s: bytes, k: int) -> list[Optional[bytes]]:
    """Cut ``s`` after newlines into ``k`` byte-balanced parts.

    Parts that would be empty are returned as ``None`` at the end of the list.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    cuts = [0]
    n = len(s)
    for i in range(1, k):
        target = n * i // k
        if target <= cuts[-1]:
            continue
        j = s.find(b"\n", target - 1)
        cut = n if j < 0 else j + 1
        if cut > cuts[-1] and cut < n:
            cuts.append(cut)
    cuts.append(n)
    parts: list[Optional[bytes]] = [s[a:b] for a, b in zip(cuts, cuts[1:]) if b > a]
    parts.extend([None] * (k - len(parts)))
    return parts
