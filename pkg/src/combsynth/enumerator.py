"""Enumeration of every combiner up to a size bound."""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

from .dsl import (
    DELIMS,
    NULLARY_REC,
    RERUN,
    Back,
    Combiner,
    Front,
    Fuse,
    Merge,
    Offset,
    Stitch,
    Stitch2,
    format_combiner,
    size,
)

DEFAULT_MAX_SIZE = 7
# sort options that change where output goes or how fast it runs, not ordering
_NON_COMPARATOR = {"-o", "--output", "-S", "--buffer-size", "-T", "--temporary-directory",
                   "--parallel", "-m", "--merge", "-c", "-C", "--check", "-s", "--stable"}
_NEEDS_VALUE = {"-o", "-S", "-T", "-k", "-t"}


@dataclass(frozen=True)
class CandidateSet:
    members: tuple[Combiner, ...]
    max_size: int
    _index: frozenset = field(default=frozenset(), repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self._index:
            object.__setattr__(self, "_index", frozenset(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Combiner]:
        return iter(self.members)

    def __contains__(self, c: object) -> bool:
        return c in self._index

    def __bool__(self) -> bool:
        return bool(self.members)

    def keep(self, survivors: Iterable[Combiner]) -> "CandidateSet":
        """Restrict to ``survivors`` while preserving canonical order."""
        alive = set(survivors)
        return CandidateSet(tuple(c for c in self.members if c in alive), self.max_size)


@lru_cache(maxsize=None)
def recops_with_nodes(n: int) -> tuple[Combiner, ...]:
    """All RecOp trees with exactly ``n`` operator nodes."""
    if n < 1:
        return ()
    if n == 1:
        return NULLARY_REC
    inner = recops_with_nodes(n - 1)
    out = []
    for cls in (Front, Back, Fuse):
        for d in DELIMS:
            out.extend(cls(d, child) for child in inner)
    return tuple(out)


@lru_cache(maxsize=None)
def structops_with_nodes(n: int) -> tuple[Combiner, ...]:
    if n < 2:
        return ()
    out: list[Combiner] = [Stitch(child) for child in recops_with_nodes(n - 1)]
    for d in DELIMS:
        out.extend(Offset(d, child) for child in recops_with_nodes(n - 1))
    for d in DELIMS:
        for a in range(1, n - 1):
            heads = recops_with_nodes(a)
            tails = recops_with_nodes(n - 1 - a)
            out.extend(Stitch2(d, h, t) for h in heads for t in tails)
    return tuple(out)


def sort_comparator_flags(command_text: str) -> tuple[str, ...] | None:
    """Comparator flags of a ``sort`` invocation, or ``None`` for other commands.

    >>> sort_comparator_flags("sort -rn")
    ('-rn',)
    """
    try:
        argv = shlex.split(command_text)
    except ValueError:
        return None
    if not argv or argv[0].rsplit("/", 1)[-1] != "sort":
        return None
    flags: list[str] = []
    i = 1
    while i < len(argv):
        tok = argv[i]
        name = tok.split("=", 1)[0]
        takes_value = name in _NEEDS_VALUE and len(tok) == 2
        if not tok.startswith("-") or tok == "-":
            i += 1
        elif name in _NON_COMPARATOR:
            i += 2 if takes_value else 1
        elif takes_value:
            flags.extend(argv[i:i + 2])
            i += 2
        else:
            flags.append(tok)
            i += 1
    return tuple(flags)


def merge_flag_candidates(command_flags: Sequence[Sequence[str]] | None) -> list[tuple[str, ...]]:
    out: list[tuple[str, ...]] = [()]
    for flags in command_flags or ():
        flags = tuple(flags)
        if flags not in out:
            out.append(flags)
    return out


def all_candidates(max_size: int = DEFAULT_MAX_SIZE,
                   command_flags: Sequence[Sequence[str]] | None = None) -> CandidateSet:
    """Every combiner of size at most ``max_size`` in canonical order.

    ``command_flags`` lists flag tuples for extra ``merge`` candidates; the
    empty flag set is always included.
    """
    if max_size < 3:
        raise ValueError("max_size must be at least 3")
    members: list[Combiner] = []
    for n in range(1, max_size - 1):
        members.extend(recops_with_nodes(n))
        members.extend(structops_with_nodes(n))
    members.append(RERUN)
    members.extend(Merge(flags) for flags in merge_flag_candidates(command_flags))
    keyed = sorted(((size(c), format_combiner(c)), c) for c in dict.fromkeys(members))
    return CandidateSet(tuple(c for _, c in keyed), max_size)


def candidates_for_command(command_text: str, max_size: int = DEFAULT_MAX_SIZE) -> CandidateSet:
    flags = sort_comparator_flags(command_text)
    return all_candidates(max_size, [flags] if flags else None)
