"""Combiner DSL: abstract syntax, legal domains, evaluation, serialization.

A combiner ``g`` merges two partial outputs so that
``f(x1 + x2) == g(f(x1), f(x2))``.  Every node exposes two methods:

``legal(s, f)``
    membership of ``s`` in the node's legal domain.
``apply(y1, y2, f)``
    the big-step evaluation rules; raises :class:`DomainError` when no rule
    applies.

:func:`evaluate` checks both domains before applying.  ``f`` is the command
handle (see :mod:`combsynth.oracle`) and is only consulted by ``rerun`` and
``merge``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar, Optional, Protocol, Sequence

from . import sortmerge
from .errors import CombinerOverflowError, DomainError, ParseError, StructureError

NL = b"\n"
TAB = b"\t"
SP = b" "
COMMA = b","
INT64_MAX = 2**63 - 1

_DIGITS = re.compile(rb"[0-9]+")


class Delim(bytes, Enum):
    NL = b"\n"
    TAB = b"\t"
    SP = b" "
    COMMA = b","

    @property
    def token(self) -> str:
        return _DELIM_TOKENS[self]


_DELIM_TOKENS = {Delim.NL: "nl", Delim.TAB: "tab", Delim.SP: "sp", Delim.COMMA: "comma"}
_TOKEN_DELIMS = {v: k for k, v in _DELIM_TOKENS.items()}
_TOKEN_DELIMS.update({"\\n": Delim.NL, "\\t": Delim.TAB, ",": Delim.COMMA})
DELIMS: tuple[Delim, ...] = (Delim.NL, Delim.TAB, Delim.SP, Delim.COMMA)
# characters that never count as "informative" in the sufficiency predicates
DELIM_OR_ZERO = frozenset(b"\n\t ,0")


class CommandLike(Protocol):
    def run(self, data: bytes) -> bytes: ...
    def accepts(self, data: bytes) -> bool: ...
    def merge(self, flags: Sequence[str], parts: Sequence[bytes]) -> bytes: ...
    def is_sorted(self, flags: Sequence[str], data: bytes) -> bool: ...


# --------------------------------------------------------------------------
# string helpers


def split_first(d: bytes, s: bytes) -> tuple[bytes, bytes]:
    """``split_first(b",", b"a,b,c") == (b"a", b"b,c")``."""
    i = s.find(d)
    if i < 0:
        raise StructureError(f"delimiter {d!r} not found")
    return s[:i], s[i + 1:]


def split_last_line(s: bytes) -> tuple[Optional[bytes], bytes]:
    """Split a stream into the lines before its last line and the last line.

    The first element is ``None`` when the stream has a single line, which
    keeps ``b"x\\n"`` distinguishable from ``b"\\nx\\n"`` (prefix ``b""``).
    Neither element carries the newline that separated them.
    """
    if not s.endswith(NL):
        raise StructureError("not a newline-terminated stream")
    body = s[:-1]
    i = body.rfind(NL)
    if i < 0:
        return None, body
    return body[:i], body[i + 1:]


def split_first_line(s: bytes) -> tuple[bytes, bytes]:
    """``split_first_line(b"b\\nc\\n") == (b"b", b"c\\n")``."""
    i = s.find(NL)
    if i < 0:
        raise StructureError("no line terminator")
    return s[:i], s[i + 1:]


def split_last_nonempty_line(s: bytes) -> tuple[bytes, bytes]:
    """Return ``(prefix, line)`` for the last nonempty line of a stream."""
    if not s.endswith(NL):
        raise StructureError("not a newline-terminated stream")
    end = len(s) - 1
    while end >= 0:
        start = s.rfind(NL, 0, end) + 1
        if start < end:
            return s[:start], s[start:end]
        end = start - 1
    raise StructureError("stream has no nonempty line")


def del_front(d: bytes, s: bytes) -> bytes:
    if not s.startswith(d):
        raise StructureError(f"{d!r} missing at front")
    return s[1:]


def del_back(d: bytes, s: bytes) -> bytes:
    if not s.endswith(d):
        raise StructureError(f"{d!r} missing at back")
    return s[:-1]


def del_pad(s: bytes) -> tuple[bytes, bytes]:
    """Strip a run of leading spaces, or else a single leading tab."""
    if s.startswith(SP):
        rest = s.lstrip(SP)
        return s[: len(s) - len(rest)], rest
    if s.startswith(TAB):
        return TAB, s[1:]
    return b"", s


def add_pad(pad: bytes, s: bytes) -> bytes:
    return pad + s


def calc_pad(pad1: bytes, head1: bytes, pad2: bytes, head2: bytes, head: bytes) -> bytes:
    """Padding for a combined head so it right-aligns like its sources."""
    if pad1 == TAB and pad2 == TAB:
        return TAB
    width = max(len(pad1) + len(head1), len(pad2) + len(head2))
    return SP * max(0, width - len(head))


def count_delim(d: bytes, s: bytes) -> int:
    return s.count(d)


def _table_line(d: bytes, line: bytes) -> Optional[tuple[bytes, bytes, bytes]]:
    """Decompose ``pad + head + d + tail``; ``None`` when the line does not fit."""
    pad, rest = del_pad(line)
    if not pad:
        return None
    i = rest.find(d)
    if i < 0:
        return None
    return pad, rest[:i], rest[i + 1:]


# --------------------------------------------------------------------------
# AST


class Combiner:
    """Base class of DSL nodes."""

    __slots__ = ("_h",)
    kind: ClassVar[str] = ""

    def _key(self) -> tuple:
        return (type(self).__name__,) + tuple(getattr(self, n) for n in self.__dataclass_fields__)

    def __hash__(self) -> int:
        # nodes are hashed millions of times during filtering; cache it
        try:
            return self._h
        except AttributeError:
            h = hash(self._key())
            object.__setattr__(self, "_h", h)
            return h

    def legal(self, s: bytes, f: Optional[CommandLike] = None) -> bool:
        raise NotImplementedError

    def apply(self, y1: bytes, y2: bytes, f: Optional[CommandLike] = None) -> bytes:
        raise NotImplementedError

    def nodes(self) -> int:
        return 1

    def children(self) -> tuple["Combiner", ...]:
        return ()

    def __str__(self) -> str:
        return format_combiner(self)


def _node(cls):
    keep = cls.__dict__.get("__hash__") is None
    cls = dataclass(frozen=True, slots=True)(cls)
    if keep:
        cls.__hash__ = Combiner.__hash__
    return cls


def _coerce_delim(node: Combiner) -> None:
    if not isinstance(node.d, Delim):
        try:
            object.__setattr__(node, "d", Delim(node.d))
        except ValueError:
            raise ValueError(f"not a delimiter: {node.d!r}") from None


def _require_rec(*nodes: Combiner) -> None:
    for node in nodes:
        if not isinstance(node, Combiner) or node.kind != "rec":
            raise TypeError(f"expected a RecOp child, got {node!r}")


@_node
class Add(Combiner):
    kind: ClassVar[str] = "rec"

    def legal(self, s, f=None):
        return _DIGITS.fullmatch(s) is not None

    def apply(self, y1, y2, f=None):
        try:
            total = int(y1) + int(y2)
        except ValueError:
            raise DomainError("add needs decimal digits") from None
        if total > INT64_MAX:
            raise CombinerOverflowError("add overflowed 64 bits")
        return b"%d" % total


@_node
class Concat(Combiner):
    kind: ClassVar[str] = "rec"

    def legal(self, s, f=None):
        return True

    def apply(self, y1, y2, f=None):
        return y1 + y2


@_node
class First(Combiner):
    kind: ClassVar[str] = "rec"

    def legal(self, s, f=None):
        return True

    def apply(self, y1, y2, f=None):
        return y1


@_node
class Second(Combiner):
    kind: ClassVar[str] = "rec"

    def legal(self, s, f=None):
        return True

    def apply(self, y1, y2, f=None):
        return y2


@_node
class Front(Combiner):
    d: Delim
    child: Combiner
    kind: ClassVar[str] = "rec"

    def __post_init__(self):
        _coerce_delim(self)
        _require_rec(self.child)

    def legal(self, s, f=None):
        return s[:1] == self.d and self.child.legal(s[1:], f)

    def apply(self, y1, y2, f=None):
        d = self.d
        return d + self.child.apply(del_front(d, y1), del_front(d, y2), f)

    def nodes(self):
        return 1 + self.child.nodes()

    def children(self):
        return (self.child,)


@_node
class Back(Combiner):
    d: Delim
    child: Combiner
    kind: ClassVar[str] = "rec"

    def __post_init__(self):
        _coerce_delim(self)
        _require_rec(self.child)

    def legal(self, s, f=None):
        return s[-1:] == self.d and self.child.legal(s[:-1], f)

    def apply(self, y1, y2, f=None):
        d = self.d
        return self.child.apply(del_back(d, y1), del_back(d, y2), f) + d

    def nodes(self):
        return 1 + self.child.nodes()

    def children(self):
        return (self.child,)


@_node
class Fuse(Combiner):
    d: Delim
    child: Combiner
    kind: ClassVar[str] = "rec"

    def __post_init__(self):
        _coerce_delim(self)
        _require_rec(self.child)

    def legal(self, s, f=None):
        parts = s.split(self.d)
        if len(parts) < 2 or not parts[0] or not parts[-1]:
            return False
        child = self.child
        return all(child.legal(p, f) for p in parts)

    def apply(self, y1, y2, f=None):
        d = self.d
        parts1 = y1.split(d)
        parts2 = y2.split(d)
        if len(parts1) < 2 or len(parts1) != len(parts2):
            raise DomainError("fuse needs equally many delimited fields")
        if not parts1[-1] or not parts2[-1]:
            raise DomainError("fuse needs a nonempty last field")
        child = self.child
        return d.join([child.apply(a, b, f) for a, b in zip(parts1, parts2)])

    def nodes(self):
        return 1 + self.child.nodes()

    def children(self):
        return (self.child,)


@_node
class Stitch(Combiner):
    child: Combiner
    kind: ClassVar[str] = "struct"

    def __post_init__(self):
        _require_rec(self.child)

    def legal(self, s, f=None):
        if s == NL:
            return True
        if not s.endswith(NL):
            return False
        child = self.child
        return all(child.legal(line, f) for line in s[:-1].split(NL))

    def apply(self, y1, y2, f=None):
        rest1, l1 = split_last_line(y1)
        l2, rest2 = split_first_line(y2)
        if l1 != l2:
            return y1 + y2
        if self.child.legal(l1, f):
            v = self.child.apply(l1, l2, f)
            prefix = b"" if rest1 is None else rest1 + NL
            return prefix + v + NL + rest2
        if y1 == NL or y2 == NL:
            return y1 + y2
        raise DomainError("stitch boundary line outside the child's domain")

    def nodes(self):
        return 1 + self.child.nodes()

    def children(self):
        return (self.child,)


@_node
class Stitch2(Combiner):
    d: Delim
    head: Combiner
    tail: Combiner
    kind: ClassVar[str] = "struct"

    def __post_init__(self):
        _coerce_delim(self)
        _require_rec(self.head, self.tail)

    def legal(self, s, f=None):
        if s == NL:
            return True
        if not s.endswith(NL):
            return False
        d, head, tail = self.d, self.head, self.tail
        for line in s[:-1].split(NL):
            parts = _table_line(d, line)
            if parts is None or not head.legal(parts[1], f) or not tail.legal(parts[2], f):
                return False
        return True

    def apply(self, y1, y2, f=None):
        if y1 == NL or y2 == NL:
            return y1 + y2
        d = self.d
        rest1, l1 = split_last_line(y1)
        l2, rest2 = split_first_line(y2)
        p1, r1 = del_pad(l1)
        h1, t1 = split_first(d, r1)
        p2, r2 = del_pad(l2)
        h2, t2 = split_first(d, r2)
        if t1 != t2:
            return y1 + y2
        h = self.head.apply(h1, h2, f)
        t = self.tail.apply(t1, t2, f)
        line = add_pad(calc_pad(p1, h1, p2, h2, h), h + d + t)
        prefix = b"" if rest1 is None else rest1 + NL
        return prefix + line + NL + rest2

    def nodes(self):
        return 1 + self.head.nodes() + self.tail.nodes()

    def children(self):
        return (self.head, self.tail)


@_node
class Offset(Combiner):
    d: Delim
    child: Combiner
    kind: ClassVar[str] = "struct"

    def __post_init__(self):
        _coerce_delim(self)
        _require_rec(self.child)

    def legal(self, s, f=None):
        if not s.endswith(NL):
            return False
        d, child = self.d, self.child
        for line in s[:-1].split(NL):
            if not line:
                continue
            parts = _table_line(d, line)
            if parts is None or not child.legal(parts[1], f):
                return False
        return True

    def apply(self, y1, y2, f=None):
        if not y2.endswith(NL):
            raise DomainError("offset needs a newline-terminated second stream")
        try:
            _, l1 = split_last_nonempty_line(y1)
        except StructureError:
            # nothing to offset by
            return y1 + y2
        d = self.d
        p1, r1 = del_pad(l1)
        h1, _ = split_first(d, r1)
        out = []
        for line in y2[:-1].split(NL):
            if line:
                p2, r2 = del_pad(line)
                h2, t2 = split_first(d, r2)
                h = self.child.apply(h1, h2, f)
                line = add_pad(calc_pad(p1, h1, p2, h2, h), h + d + t2)
            out.append(line)
        return y1 + NL.join(out) + NL

    def nodes(self):
        return 1 + self.child.nodes()

    def children(self):
        return (self.child,)


@_node
class Rerun(Combiner):
    kind: ClassVar[str] = "run"

    def legal(self, s, f=None):
        if f is None:
            raise ValueError("rerun needs a command handle")
        return f.accepts(s)

    def apply(self, y1, y2, f=None):
        if f is None:
            raise ValueError("rerun needs a command handle")
        return f.run(y1 + y2)


@_node
class Merge(Combiner):
    flags: tuple[str, ...] = ()
    kind: ClassVar[str] = "run"

    def legal(self, s, f=None):
        if f is None:
            return sortmerge.is_sorted(self.flags, s)
        return f.is_sorted(self.flags, s)

    def apply(self, y1, y2, f=None):
        if f is None:
            return sortmerge.merge(self.flags, [y1, y2])
        return f.merge(self.flags, [y1, y2])


ADD, CONCAT, FIRST, SECOND, RERUN = Add(), Concat(), First(), Second(), Rerun()
NULLARY_REC: tuple[Combiner, ...] = (ADD, CONCAT, FIRST, SECOND)


def size(c: Combiner) -> int:
    """Two plus the number of operator nodes."""
    return 2 + c.nodes()


def is_recop(c: Any) -> bool:
    return isinstance(c, Combiner) and c.kind == "rec"


def is_structop(c: Any) -> bool:
    return isinstance(c, Combiner) and c.kind == "struct"


def is_run(c: Any) -> bool:
    return isinstance(c, Combiner) and c.kind == "run"


def in_domain(c: Combiner, s: bytes, f: Optional[CommandLike] = None) -> bool:
    return c.legal(s, f)


def evaluate(c: Combiner, y1: bytes, y2: bytes, f: Optional[CommandLike] = None) -> bytes:
    """Evaluate ``c`` on two legal inputs; raises :class:`DomainError` otherwise."""
    if not c.legal(y1, f):
        raise DomainError(f"first input outside the domain of {c}")
    if not c.legal(y2, f):
        raise DomainError(f"second input outside the domain of {c}")
    return c.apply(y1, y2, f)


# --------------------------------------------------------------------------
# serialization

_NULLARY = {"add": ADD, "concat": CONCAT, "first": FIRST, "second": SECOND, "rerun": RERUN}
_NULLARY_NAMES = {v: k for k, v in _NULLARY.items()}
_UNARY = {"front": Front, "back": Back, "fuse": Fuse, "offset": Offset}
_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def format_combiner(c: Combiner) -> str:
    if c in _NULLARY_NAMES:
        return _NULLARY_NAMES[c]
    if isinstance(c, Merge):
        return "(merge" + "".join(" " + flag for flag in c.flags) + ")"
    if isinstance(c, Stitch):
        return f"(stitch {format_combiner(c.child)})"
    if isinstance(c, Stitch2):
        return f"(stitch2 {c.d.token} {format_combiner(c.head)} {format_combiner(c.tail)})"
    for name, cls in _UNARY.items():
        if isinstance(c, cls):
            return f"({name} {c.d.token} {format_combiner(c.child)})"
    raise TypeError(f"not a combiner: {c!r}")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        if m.lastindex is None:
            break
        tokens.append((m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, int]:
        if self.i >= len(self.tokens):
            return "", len(self.text)
        return self.tokens[self.i]

    def take(self) -> tuple[str, int]:
        tok = self.peek()
        if not tok[0]:
            raise ParseError("unexpected end of input", tok[1])
        self.i += 1
        return tok

    def expect(self, want: str) -> None:
        tok, pos = self.take()
        if tok != want:
            raise ParseError(f"expected {want!r}, got {tok!r}", pos)

    def delim(self) -> Delim:
        tok, pos = self.take()
        if tok not in _TOKEN_DELIMS:
            raise ParseError(f"unknown delimiter {tok!r}", pos)
        return _TOKEN_DELIMS[tok]

    def rec_child(self) -> Combiner:
        pos = self.peek()[1]
        node = self.expr()
        if not is_recop(node):
            raise ParseError(f"{format_combiner(node)} is not a RecOp operand", pos)
        return node

    def expr(self) -> Combiner:
        tok, pos = self.take()
        if tok in _NULLARY:
            return _NULLARY[tok]
        if tok == "merge":
            return Merge(())
        if tok != "(":
            raise ParseError(f"unexpected token {tok!r}", pos)
        op, op_pos = self.take()
        if op in _NULLARY:
            node = _NULLARY[op]
        elif op == "merge":
            flags = []
            while self.peek()[0] not in (")", ""):
                flags.append(self.take()[0])
            node = Merge(tuple(flags))
        elif op in _UNARY:
            d = self.delim()
            node = _UNARY[op](d, self.rec_child())
        elif op == "stitch":
            node = Stitch(self.rec_child())
        elif op == "stitch2":
            d = self.delim()
            head = self.rec_child()
            node = Stitch2(d, head, self.rec_child())
        else:
            raise ParseError(f"unknown operator {op!r}", op_pos)
        self.expect(")")
        return node


def parse_combiner(text: str) -> Combiner:
    parser = _Parser(text)
    node = parser.expr()
    tok, pos = parser.peek()
    if tok:
        raise ParseError(f"trailing input {tok!r}", pos)
    return node
