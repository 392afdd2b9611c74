"""In-process emulation of ``sort``/``sort -m``/``sort -c`` under the C locale.

Only the comparator flags ``-r -n -f -b -u`` are understood.  This backs the
``merge`` combiner for the built-in reference commands so hermetic runs never
need coreutils.
"""
from __future__ import annotations

import heapq
import re
from decimal import Decimal
from functools import cmp_to_key
from typing import Callable, Iterable, Sequence

SUPPORTED = frozenset("rnfbu")
_LONG = {
    "--reverse": "r",
    "--numeric-sort": "n",
    "--ignore-case": "f",
    "--ignore-leading-blanks": "b",
    "--unique": "u",
}
_NUMBER = re.compile(rb"[ \t]*(-?)([0-9]*)(?:\.([0-9]*))?")


def parse_flags(flags: Iterable[str]) -> frozenset[str]:
    letters: set[str] = set()
    for token in flags:
        if token in _LONG:
            letters.add(_LONG[token])
        elif token.startswith("-") and not token.startswith("--") and len(token) > 1:
            letters.update(token[1:])
        else:
            raise ValueError(f"unsupported sort flag {token!r}")
    unknown = letters - SUPPORTED
    if unknown:
        raise ValueError(f"unsupported sort flags: {''.join(sorted(unknown))}")
    return frozenset(letters)


def supports(flags: Iterable[str]) -> bool:
    try:
        parse_flags(flags)
    except ValueError:
        return False
    return True


def _numeric(line: bytes) -> Decimal:
    m = _NUMBER.match(line)
    sign, whole, frac = m.group(1), m.group(2), m.group(3)
    if not whole and not frac:
        return Decimal(0)
    value = Decimal((whole or b"0").decode() + "." + (frac or b"0").decode())
    return -value if sign else value


def _primary_key(letters: frozenset[str]) -> Callable[[bytes], object]:
    if "n" in letters:
        return _numeric

    def key(line: bytes) -> bytes:
        if "b" in letters:
            line = line.lstrip(b" \t")
        if "f" in letters:
            line = line.upper()
        return line

    return key


def _comparator(letters: frozenset[str]) -> Callable[[bytes, bytes], int]:
    primary = _primary_key(letters)
    last_resort = "u" not in letters
    sign = -1 if "r" in letters else 1

    def compare(a: bytes, b: bytes) -> int:
        ka, kb = primary(a), primary(b)
        if ka != kb:
            return sign * (-1 if ka < kb else 1)
        if last_resort and a != b:
            return sign * (-1 if a < b else 1)
        return 0

    return compare


def split_lines(data: bytes) -> list[bytes]:
    if not data:
        return []
    lines = data.split(b"\n")
    if data.endswith(b"\n"):
        lines.pop()
    return lines


def _join(lines: Iterable[bytes]) -> bytes:
    return b"".join(line + b"\n" for line in lines)


def _unique(lines: Iterable[bytes], compare: Callable[[bytes, bytes], int]) -> list[bytes]:
    out: list[bytes] = []
    for line in lines:
        if not out or compare(out[-1], line) != 0:
            out.append(line)
    return out


def sort_lines(flags: Sequence[str], data: bytes) -> bytes:
    letters = parse_flags(flags)
    compare = _comparator(letters)
    lines = sorted(split_lines(data), key=cmp_to_key(compare))
    if "u" in letters:
        lines = _unique(lines, compare)
    return _join(lines)


def merge(flags: Sequence[str], parts: Sequence[bytes]) -> bytes:
    """k-way merge of already-sorted streams, like ``sort -m``."""
    letters = parse_flags(flags)
    compare = _comparator(letters)
    key = cmp_to_key(compare)
    merged = heapq.merge(*(split_lines(p) for p in parts), key=key)
    if "u" in letters:
        return _join(_unique(merged, compare))
    return _join(merged)


def is_sorted(flags: Sequence[str], data: bytes) -> bool:
    """Same verdict as ``sort -c`` with the given flags."""
    letters = parse_flags(flags)
    compare = _comparator(letters)
    lines = split_lines(data)
    strict = "u" in letters
    for a, b in zip(lines, lines[1:]):
        c = compare(a, b)
        if c > 0 or (strict and c == 0):
            return False
    return True
