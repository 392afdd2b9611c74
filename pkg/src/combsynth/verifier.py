"""Executable sufficiency predicates, equivalence sampling and the split/combine check."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import sortmerge
from .dsl import (
    ADD,
    CONCAT,
    DELIM_OR_ZERO,
    DELIMS,
    FIRST,
    NL,
    RERUN,
    SECOND,
    Add,
    Back,
    Combiner,
    Concat,
    First,
    Front,
    Fuse,
    Merge,
    Offset,
    Rerun,
    Second,
    Stitch,
    Stitch2,
    del_pad,
    split_first,
    split_first_line,
    split_last_line,
)
from .errors import CombsynthError, EmptyIntersection, NotRepresentative, StructureError

Tuple3 = tuple[bytes, bytes, bytes]
ZERO = ord("0")
INTERSECTION_ATTEMPTS = 10_000


def _informative(c: Optional[int]) -> bool:
    return c is not None and c not in DELIM_OR_ZERO


def _has_informative(y: bytes) -> bool:
    return any(c not in DELIM_OR_ZERO for c in y)


def _all_zeros(y: bytes) -> bool:
    return bool(y) and y.count(b"0") == len(y)


def _first_char(y: bytes) -> Optional[int]:
    return y[0] if y else None


def _last_char(y: bytes) -> Optional[int]:
    return y[-1] if y else None


# --------------------------------------------------------------------------
# generic predicates


def enough_basic(Y: Iterable[Tuple3]) -> bool:
    Y = list(Y)
    return (any(y1 != y2 for y1, y2, _ in Y)
            and any(_has_informative(y1) for y1, _, _ in Y)
            and any(_has_informative(y2) for _, y2, _ in Y))


def _lines(y: bytes) -> list[bytes]:
    return sortmerge.split_lines(y)


def table_witnesses(Y: Iterable[Tuple3]) -> list[tuple[bytes, bytes]]:
    """Every (pad, delimiter) under which all lines read as ``pad + h + d + t``.

    A single space (or tab) is the weakest pad of its kind, so only those two
    pads need checking.
    """
    lines = [line for tup in Y for y in tup for line in _lines(y) if line]
    found = []
    for p in (b" ", b"\t"):
        for d in DELIMS:
            if all(line.startswith(p) and d in line[1:] for line in lines):
                found.append((p, bytes(d)))
    return found


def is_table(Y: Iterable[Tuple3]) -> bool:
    return bool(table_witnesses(list(Y)))


def _boundary(y1: bytes, y2: bytes) -> Optional[tuple[Optional[bytes], bytes, bytes, bytes]]:
    """(y1', l1, l2, y2') or ``None`` if either side lacks line structure."""
    try:
        rest1, l1 = split_last_line(y1)
        l2, rest2 = split_first_line(y2)
    except StructureError:
        return None
    return rest1, l1, l2, rest2


def _boundary_informative(l: bytes) -> bool:
    return _informative(_first_char(del_pad(l)[1])) and _informative(_last_char(l))


def _head_tuples(Y: Iterable[Tuple3], d: bytes) -> list[Tuple3]:
    """Heads of the boundary lines that share a tail; ``y12'`` is left empty."""
    out = []
    for y1, y2, _ in Y:
        b = _boundary(y1, y2)
        if b is None:
            continue
        _, l1, l2, _ = b
        try:
            h1, t1 = split_first(d, del_pad(l1)[1])
            h2, t2 = split_first(d, del_pad(l2)[1])
        except StructureError:
            continue
        if t1 == t2:
            out.append((h1, h2, b""))
    return out


def enough_struct(Y: Iterable[Tuple3]) -> bool:
    Y = list(Y)
    first = False
    for y1, y2, _ in Y:
        b = _boundary(y1, y2)
        if b is None:
            continue
        _, l1, l2, rest2 = b
        if l1 != l2 or not _boundary_informative(l1):
            continue
        try:
            second, _ = split_first_line(rest2)
        except StructureError:
            continue
        if second:
            first = True
            break
    if not first:
        return False
    return all(enough_basic(_head_tuples(Y, d)) for _, d in table_witnesses(Y))


# --------------------------------------------------------------------------
# per-representative conditions


def _strip_back(Y: Iterable[Tuple3], d: bytes) -> list[Tuple3]:
    return [(a[:-1], b[:-1], c[:-1]) for a, b, c in Y
            if a.endswith(d) and b.endswith(d) and c.endswith(d)]


def _strip_front(Y: Iterable[Tuple3], d: bytes) -> list[Tuple3]:
    return [(a[1:], b[1:], c[1:]) for a, b, c in Y
            if a.startswith(d) and b.startswith(d) and c.startswith(d)]


def _segments(Y: Iterable[Tuple3], d: bytes) -> list[Tuple3]:
    out = []
    for tup in Y:
        parts = [y.split(d) for y in tup]
        if len({len(p) for p in parts}) != 1:
            continue
        out.extend(zip(*parts))
    return out


def _enough_add(Y: list[Tuple3]) -> bool:
    return any(not _all_zeros(y1) for y1, _, _ in Y) and any(not _all_zeros(y2) for _, y2, _ in Y)


def _enough_concat(Y: list[Tuple3]) -> bool:
    return any(y1 for y1, _, _ in Y) and any(y2 for _, y2, _ in Y)


def _enough_first(Y: list[Tuple3]) -> bool:
    return any(y1 != y2 for y1, y2, _ in Y) and any(_has_informative(y2) for _, y2, _ in Y)


def _enough_second(Y: list[Tuple3]) -> bool:
    return any(y1 != y2 for y1, y2, _ in Y) and any(_has_informative(y1) for y1, _, _ in Y)


def _stitch2_legal_everywhere(Y: list[Tuple3], d: bytes) -> bool:
    probe = Stitch2(d, CONCAT, CONCAT)
    return all(probe.legal(y) for tup in Y for y in tup)


def _enough_stitch_first(Y: list[Tuple3]) -> bool:
    if not _enough_stitch_boundary(Y):
        return False
    for d in DELIMS:
        if not _stitch2_legal_everywhere(Y, d):
            continue
        if not any(h1 != h2 for h1, h2, _ in _head_tuples(Y, d)):
            return False
    return True


def _enough_stitch_boundary(Y: list[Tuple3]) -> bool:
    for y1, y2, _ in Y:
        b = _boundary(y1, y2)
        if b is not None and b[1] == b[2] and _boundary_informative(b[1]):
            return True
    return False


def _enough_offset_add(Y: list[Tuple3], d: bytes) -> bool:
    witness = False
    for y1, y2, _ in Y:
        b = _boundary(y1, y2)
        if b is None:
            continue
        _, l1, l2, rest2 = b
        try:
            l2b, _ = split_first_line(rest2)
        except StructureError:
            continue
        if _informative(_first_char(del_pad(l1)[1])) and l2 and l2b:
            witness = True
            break
    if not witness:
        return False
    heads = []
    for y1, y2, _ in Y:
        b = _boundary(y1, y2)
        if b is None:
            continue
        try:
            h1, _ = split_first(d, del_pad(b[1])[1])
            h2, _ = split_first(d, del_pad(b[2])[1])
        except StructureError:
            continue
        heads.append((h1, h2, b""))
    return _enough_add(heads)


def enough_for(g: Combiner, Y: Iterable[Tuple3]) -> bool:
    """Sufficiency of ``Y`` when ``g`` (a representative combiner) is correct."""
    Y = list(Y)
    if g == ADD:
        return _enough_add(Y)
    if g == CONCAT:
        return _enough_concat(Y)
    if g == FIRST:
        return _enough_first(Y)
    if g == SECOND:
        return _enough_second(Y)
    if isinstance(g, Back) and g.child == ADD:
        return _enough_add(_strip_back(Y, g.d))
    if isinstance(g, Fuse) and g.child == ADD:
        return _enough_add(_segments(Y, g.d))
    if isinstance(g, Back) and isinstance(g.child, Fuse) and g.child.child == ADD:
        return enough_for(g.child, _strip_back(Y, g.d))
    if (isinstance(g, Front) and isinstance(g.child, Back) and isinstance(g.child.child, Fuse)
            and g.child.child.child == ADD):
        return enough_for(g.child, _strip_front(Y, g.d))
    if isinstance(g, Front) and g.child == CONCAT:
        return _enough_concat(_strip_front(Y, g.d))
    if isinstance(g, Stitch) and g.child == FIRST:
        return _enough_stitch_first(Y)
    if isinstance(g, Stitch2) and g.head == ADD and g.tail == FIRST:
        return _enough_stitch_boundary(Y)
    if isinstance(g, Offset) and g.child == ADD:
        return _enough_offset_add(Y, g.d)
    raise NotRepresentative(f"{g} is not a representative combiner")


def representatives() -> tuple[list[Combiner], list[Combiner]]:
    """All delimiter instantiations of the RecOp and StructOp representatives."""
    rec: list[Combiner] = [ADD, CONCAT, FIRST, SECOND]
    rec += [Back(d, ADD) for d in DELIMS]
    rec += [Fuse(d, ADD) for d in DELIMS]
    rec += [Back(d1, Fuse(d2, ADD)) for d1 in DELIMS for d2 in DELIMS]
    rec += [Front(d1, Back(d2, Fuse(d3, ADD))) for d1 in DELIMS for d2 in DELIMS for d3 in DELIMS]
    rec += [Front(d, CONCAT) for d in DELIMS]
    struct: list[Combiner] = [Stitch(FIRST)]
    struct += [Stitch2(d, ADD, FIRST) for d in DELIMS]
    struct += [Offset(d, ADD) for d in DELIMS]
    return rec, struct


# --------------------------------------------------------------------------
# sampling legal strings

_TEXT = b"ab0 1,\t\nc"
_WORD = b"abcxyz019"


def _rand_text(rng: random.Random, hi: int = 6, alphabet: bytes = _TEXT) -> bytes:
    return bytes(rng.choice(alphabet) for _ in range(rng.randint(0, hi)))


def _rand_digits(rng: random.Random) -> bytes:
    if rng.random() < 0.15:
        return b"0" * rng.randint(1, 2)
    s = str(rng.randint(0, 10 ** rng.randint(1, 4))).encode()
    return b"0" + s if rng.random() < 0.1 else s


def _retry(make: Callable[[], bytes], ok: Callable[[bytes], bool], tries: int = 30) -> bytes:
    for _ in range(tries):
        s = make()
        if ok(s):
            return s
    raise CombsynthError("sampler gave up")


def _always_contains(c, d: bytes) -> bool:
    """True when every legal string of ``c`` contains ``d``."""
    if isinstance(c, (Front, Back, Fuse)):
        return c.d == d or _always_contains(c.child, d)
    return False


def sample_legal(c, rng: random.Random, f=None, avoid: bytes = b"") -> bytes:
    """A random member of ``c``'s legal domain (rejection sampling).

    ``avoid`` lists single-byte delimiters the result should not contain;
    recursive nodes honour it up front, the rest are filtered by callers.
    """
    if isinstance(c, Add):
        return _rand_digits(rng)
    if isinstance(c, (Concat, First, Second)):
        alphabet = bytes(b for b in _TEXT if b not in avoid) if avoid else _TEXT
        return _rand_text(rng, alphabet=alphabet)
    if isinstance(c, (Front, Back, Fuse)) and c.d in avoid:
        raise CombsynthError(f"every legal string of {c} contains {c.d!r}")
    if isinstance(c, Front):
        return c.d + sample_legal(c.child, rng, f, avoid)
    if isinstance(c, Back):
        return sample_legal(c.child, rng, f, avoid) + c.d
    if isinstance(c, Fuse):
        if _always_contains(c.child, c.d):
            raise CombsynthError(f"{c} has an empty legal domain")
        n = rng.randint(2, 4)
        inner = avoid + c.d

        def seg() -> bytes:
            return _retry(lambda: sample_legal(c.child, rng, f, inner), lambda s: c.d not in s)

        return _retry(lambda: c.d.join(seg() for _ in range(n)), lambda s: c.legal(s, f))
    if isinstance(c, (Stitch, Stitch2, Offset)):
        if rng.random() < 0.08:
            return NL if not isinstance(c, Offset) or rng.random() < 0.5 else b""
        return _retry(lambda: b"".join(_sample_line(c, rng, f) + NL for _ in range(rng.randint(1, 4))),
                      lambda s: c.legal(s, f))
    if isinstance(c, Merge):
        lines = [_rand_text(rng, 4, _WORD) for _ in range(rng.randint(0, 5))]
        return sortmerge.sort_lines(c.flags, b"".join(x + NL for x in lines))
    if isinstance(c, Rerun):
        data = b"".join(_rand_text(rng, 5, _WORD + b" ") + NL for _ in range(rng.randint(1, 4)))
        return f.run(data) if f is not None else data
    members = getattr(c, "members", None)
    if members:
        return sample_legal(rng.choice(members), rng, f)
    raise TypeError(f"cannot sample for {c!r}")


def _pad(rng: random.Random) -> bytes:
    return b"\t" if rng.random() < 0.2 else b" " * rng.randint(1, 6)


def _sample_line(c, rng: random.Random, f=None) -> bytes:
    if isinstance(c, Stitch):
        return _retry(lambda: sample_legal(c.child, rng, f, NL), lambda s: NL not in s)
    if isinstance(c, Offset) and rng.random() < 0.15:
        return b""
    head = c.head if isinstance(c, Stitch2) else c.child
    h = _retry(lambda: sample_legal(head, rng, f, NL + c.d), lambda s: NL not in s and c.d not in s)
    if isinstance(c, Stitch2):
        t = _retry(lambda: sample_legal(c.tail, rng, f, NL), lambda s: NL not in s)
    else:
        t = _rand_text(rng, 4, _WORD + b" ,")
    return _pad(rng) + h + c.d + t


def _correlate(y1: bytes, y2: bytes, rng: random.Random) -> tuple[bytes, bytes]:
    """Make boundary collisions, which independent sampling rarely hits."""
    r = rng.random()
    if r < 0.15:
        return y1, y1
    if r < 0.45 and y1.endswith(NL) and y2.endswith(NL):
        _, last = split_last_line(y1)
        first, rest = split_first_line(y2)
        if rng.random() < 0.5:
            return y1, last + NL + rest
        # same tail after the first field, fresh head
        p2, r2 = del_pad(first)
        r1 = del_pad(last)[1]
        for d in rng.sample(DELIMS, len(DELIMS)):
            if d in r1 and d in r2:
                return y1, p2 + r2.split(d, 1)[0] + d + r1.split(d, 1)[1] + NL + rest
    return y1, y2


@dataclass
class EquivResult:
    equivalent: bool
    samples: int
    counterexample: Optional[tuple[bytes, bytes, bytes, bytes]] = None

    def __bool__(self) -> bool:
        return self.equivalent


def sample_intersection_pair(g1, g2, rng: random.Random, f=None, attempts: int = 50):
    for _ in range(attempts):
        source = g1 if rng.random() < 0.5 else g2
        try:
            y1 = sample_legal(source, rng, f)
            y2 = sample_legal(source, rng, f)
            if rng.random() < 0.6:
                # fuse only evaluates when both sides have as many fields
                for _ in range(10):
                    if all(y1.count(d) == y2.count(d) for d in DELIMS):
                        break
                    y2 = sample_legal(source, rng, f)
            y1, y2 = _correlate(y1, y2, rng)
        except CombsynthError:
            continue
        try:
            if g1.legal(y1, f) and g1.legal(y2, f) and g2.legal(y1, f) and g2.legal(y2, f):
                return y1, y2
        except CombsynthError:
            continue
    return None


def _outcome(g, y1: bytes, y2: bytes, f) -> Optional[bytes]:
    try:
        return g.apply(y1, y2, f)
    except CombsynthError:
        return None


def equiv_by_intersection_sample(g1, g2, sample_count: int = 500, rng: Optional[random.Random] = None,
                                 f=None) -> EquivResult:
    """Compare two combiners on sampled pairs from both legal domains.

    Pairs on which either side fails to evaluate are skipped; only a pair
    where both succeed with different bytes counts as a counterexample.
    Raises :class:`EmptyIntersection` if no pair is found.
    """
    rng = rng or random.Random(0)
    found = 0
    attempts = 0
    while found < sample_count and attempts < INTERSECTION_ATTEMPTS:
        attempts += 1
        pair = sample_intersection_pair(g1, g2, rng, f, attempts=1)
        if pair is None:
            continue
        y1, y2 = pair
        v1, v2 = _outcome(g1, y1, y2, f), _outcome(g2, y1, y2, f)
        if v1 is None or v2 is None:
            continue
        found += 1
        if v1 != v2:
            return EquivResult(False, found, (y1, y2, v1, v2))
    if found == 0:
        raise EmptyIntersection(f"no legal pair shared by {g1} and {g2}")
    return EquivResult(True, found)


# --------------------------------------------------------------------------
# divide and conquer


@dataclass
class DncResult:
    holds: bool
    checked: int
    violation: Optional[tuple[bytes, bytes]] = None

    def __bool__(self) -> bool:
        return self.holds


def check_dnc(f, g, pairs: Iterable[tuple[bytes, bytes]]) -> DncResult:
    """Check ``f(x1 + x2) == g(f(x1), f(x2))`` pair by pair."""
    n = 0
    for x1, x2 in pairs:
        n += 1
        y1, y2, y12 = f.run(x1), f.run(x2), f.run(x1 + x2)
        try:
            ok = g.legal(y1, f) and g.legal(y2, f) and g.apply(y1, y2, f) == y12
        except CombsynthError:
            ok = False
        if not ok:
            return DncResult(False, n, (x1, x2))
    return DncResult(True, n)


def observation_report(Y: Sequence[Tuple3], g=None) -> dict:
    report = {
        "tuples": len(Y),
        "enough_basic": enough_basic(Y),
        "enough_struct": enough_struct(Y),
        "is_table": is_table(Y),
    }
    if g is not None:
        try:
            report["enough_for"] = enough_for(g, Y)
        except NotRepresentative:
            report["enough_for"] = None
    return report
