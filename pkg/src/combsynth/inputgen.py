"""Input shapes, random stream generation, shape mutation and preprocessing."""
from __future__ import annotations

import logging
import math
import random
import re
import shlex
import string
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Optional, Sequence

from .errors import ExecError, GenError, UnsupportedCommand

log = logging.getLogger(__name__)

ALPHABET = (string.ascii_letters + string.digits + ",.-_:").encode()
MAX_COUNTS = {"lines": 512, "words": 32, "chars": 24}
DIMENSIONS = ("lines", "words", "chars")
DIRECTIONS = ("more", "fewer", "more-varied", "less-varied")
_RETRIES = 50


# --------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class DimConfig:
    min_count: int
    max_count: int
    distinct_pct: int

    def __post_init__(self) -> None:
        if not 0 <= self.min_count <= self.max_count:
            raise ValueError(f"bad count bounds {self.min_count}..{self.max_count}")
        if not 0 <= self.distinct_pct <= 100:
            raise ValueError(f"distinct percentage {self.distinct_pct} outside 0..100")


@dataclass(frozen=True)
class InputShape:
    lines: DimConfig
    words: DimConfig
    chars: DimConfig

    def dim(self, name: str) -> DimConfig:
        return getattr(self, name)

    def __str__(self) -> str:
        return " ".join(
            f"{n}({d.min_count},{d.max_count},{d.distinct_pct}%)"
            for n, d in zip(DIMENSIONS, (self.lines, self.words, self.chars))
        )


DEFAULT_SHAPE = InputShape(DimConfig(1, 20, 50), DimConfig(0, 5, 50), DimConfig(1, 8, 50))


def literal_shape(value: int, base: InputShape = DEFAULT_SHAPE) -> InputShape:
    """Seed shape whose line count sits around a numeric literal."""
    value = min(value, MAX_COUNTS["lines"] - 2)
    return replace(base, lines=DimConfig(max(1, value - 2), value + 2, 50))


def random_shape(rng: random.Random) -> InputShape:
    lo = rng.randint(0, 4)
    lines = DimConfig(lo, lo + rng.randint(2, 30), rng.choice((10, 25, 50, 75, 100)))
    lo = rng.randint(0, 2)
    words = DimConfig(lo, lo + rng.randint(1, 6), rng.choice((10, 25, 50, 75, 100)))
    lo = rng.randint(1, 3)
    chars = DimConfig(lo, lo + rng.randint(0, 8), rng.choice((10, 25, 50, 75, 100)))
    return InputShape(lines, words, chars)


def pool_size(pct: int, count: int) -> int:
    """Number of distinct elements for ``count`` slots at ``pct`` percent."""
    if count <= 0:
        return 0
    return max(1, math.ceil(pct * count / 100))


def mutate_shape(s: InputShape, j: int) -> InputShape:
    """Mutation ``j`` in 1..12: dimension ``(j-1)//4``, direction ``(j-1)%4``."""
    if not 1 <= j <= 12:
        raise ValueError("mutation index must be in 1..12")
    name = DIMENSIONS[(j - 1) // 4]
    direction = (j - 1) % 4
    cfg = s.dim(name)
    cap = MAX_COUNTS[name]
    floor = 1 if name == "chars" else 0
    lo, hi, pct = cfg.min_count, cfg.max_count, cfg.distinct_pct
    if direction == 0:
        lo, hi = lo * 2, max(hi * 2, 1)
    elif direction == 1:
        lo, hi = lo // 2, max(hi // 2, 1)
    elif direction == 2:
        pct = pct * 2
    else:
        pct = pct // 2
    hi = min(max(hi, floor, 1), cap)
    lo = min(max(lo, floor), hi)
    pct = min(max(pct, 1), 100)
    return replace(s, **{name: DimConfig(lo, hi, pct)})


# --------------------------------------------------------------------------
# dictionaries


@dataclass(frozen=True)
class Dictionary:
    elements: tuple[bytes, ...] = ()
    kind: str = "generic"

    KINDS = ("generic", "regex-matching", "filenames", "sorted-words")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.kind != "generic" and not self.elements:
            raise ValueError("non-generic dictionaries need elements")

    @classmethod
    def from_file(cls, path: str, kind: str = "generic") -> "Dictionary":
        with open(path, "rb") as fh:
            tokens = tuple(t for t in (line.strip() for line in fh) if t)
        return cls(tokens, kind)


GENERIC = Dictionary()


def _data(name: str):
    return resources.files("combsynth").joinpath("data", name)


def fixture_words() -> list[bytes]:
    return [w for w in _data("words.txt").read_bytes().split(b"\n") if w]


def fixture_filenames() -> list[bytes]:
    folder = _data("files")
    return sorted(str(p).encode() for p in folder.iterdir() if p.name.endswith(".txt"))


def probe_streams() -> dict[str, bytes]:
    words = fixture_words()
    return {
        "unsorted": b"".join(w + b"\n" for w in words),
        "sorted": b"".join(w + b"\n" for w in sorted(words)),
        "filenames": b"".join(p + b"\n" for p in fixture_filenames()),
    }


def probe_command(f) -> str:
    """Classify the inputs ``f`` can process without error.

    Returns ``any``, ``sorted-only`` or ``filenames-only``.
    """
    streams = probe_streams()
    for name, verdict in (("unsorted", "any"), ("sorted", "sorted-only"), ("filenames", "filenames-only")):
        try:
            f.run(streams[name])
        except ExecError as exc:
            log.debug("probe %s failed: %s", name, exc)
            continue
        return verdict
    raise UnsupportedCommand(f"{getattr(f, 'text', f)!r} rejected every probe stream")


# --------------------------------------------------------------------------
# literal extraction and regex sampling

_PATTERN_PROGRAMS = {"grep", "egrep", "fgrep"}
_SLASH_REGEX = re.compile(r"/((?:[^/\\]|\\.)+)/")
_SED_SUBST = re.compile(r"s(.)((?:(?!\1).|\\.)+)\1")
_INT = re.compile(r"\d+")


def extract_literals(command_text: str) -> tuple[list[str], list[int]]:
    """Pattern literals and integer literals appearing in a command line."""
    try:
        argv = shlex.split(command_text)
    except ValueError:
        return [], []
    if not argv:
        return [], []
    prog = argv[0].rsplit("/", 1)[-1]
    literals: list[str] = []
    numerics: list[int] = []
    rest = argv[1:]
    if prog in _PATTERN_PROGRAMS:
        i = 0
        found = False
        while i < len(rest):
            tok = rest[i]
            if tok in ("-e", "--regexp") and i + 1 < len(rest):
                literals.append(rest[i + 1])
                found = True
                i += 2
                continue
            if tok.startswith("-") and tok != "-":
                numerics.extend(int(n) for n in _INT.findall(tok))
            elif not found:
                literals.append(tok)
                found = True
            i += 1
        return literals, numerics
    for tok in rest:
        if prog in ("sed", "awk", "gawk", "mawk") and not tok.startswith("-"):
            subst = _SED_SUBST.search(tok) if prog == "sed" else None
            patterns = [subst.group(2)] if subst else _SLASH_REGEX.findall(tok)
            if patterns:
                literals.extend(patterns)
                if prog == "awk":
                    literals.extend(re.findall(r'"([^"]*)"', tok))
                continue
            if prog != "sed":
                literals.extend(re.findall(r'"([^"]*)"', tok))
        numerics.extend(int(n) for n in _INT.findall(tok))
    return literals, numerics


_LETTERS = string.ascii_lowercase.encode()


def _bracket(pattern: str, i: int) -> tuple[set[int], bool, int]:
    """Parse ``[...]`` starting after ``[``; returns (chars, negated, next index)."""
    negated = False
    if i < len(pattern) and pattern[i] == "^":
        negated = True
        i += 1
    chars: set[int] = set()
    first = True
    while i < len(pattern) and (pattern[i] != "]" or first):
        first = False
        if pattern.startswith("[:", i):
            end = pattern.find(":]", i)
            if end < 0:
                raise ValueError("unterminated class")
            name = pattern[i + 2:end]
            table = {"alpha": string.ascii_letters, "digit": string.digits, "alnum": string.ascii_letters + string.digits,
                     "lower": string.ascii_lowercase, "upper": string.ascii_uppercase, "space": " \t"}
            chars.update(table.get(name, "").encode())
            i = end + 2
            continue
        c = pattern[i]
        if i + 2 < len(pattern) and pattern[i + 1] == "-" and pattern[i + 2] != "]":
            chars.update(range(ord(c), ord(pattern[i + 2]) + 1))
            i += 3
        else:
            chars.add(ord(c))
            i += 1
    if i >= len(pattern):
        raise ValueError("unterminated bracket")
    return chars, negated, i + 1


def _regex_atoms(pattern: str) -> tuple[list[tuple[bytes, int, int]], bool, bool]:
    """Parse into (choices, min repeat, max repeat) atoms plus anchors."""
    atoms: list[list] = []
    anchored_start = pattern.startswith("^")
    anchored_end = pattern.endswith("$") and not pattern.endswith("\\$")
    i = 1 if anchored_start else 0
    end = len(pattern) - 1 if anchored_end else len(pattern)
    while i < end:
        c = pattern[i]
        if c in "*+?" and atoms:
            atoms[-1][1:] = {"*": (0, 2), "+": (1, 3), "?": (0, 1)}[c]
            i += 1
        elif c == "{" and atoms:
            close = pattern.find("}", i)
            if close < 0:
                raise ValueError("bad interval")
            lo_s, _, hi_s = pattern[i + 1:close].partition(",")
            lo = int(lo_s or 0)
            hi = int(hi_s) if hi_s else (lo if "," not in pattern[i:close] else lo + 2)
            atoms[-1][1:] = (lo, min(hi, lo + 2))
            i = close + 1
        elif c == ".":
            atoms.append([_LETTERS, 1, 1])
            i += 1
        elif c == "[":
            chars, negated, i = _bracket(pattern, i + 1)
            if negated:
                chars = set(ALPHABET) - chars
            chars.discard(ord("\n"))
            if not chars:
                raise ValueError("empty class")
            atoms.append([bytes(sorted(chars)), 1, 1])
        elif c == "\\":
            if i + 1 >= end:
                raise ValueError("dangling escape")
            nxt = pattern[i + 1]
            if nxt in "()|{}<>bBwW":
                raise ValueError("unsupported escape")
            atoms.append([nxt.encode(), 1, 1])
            i += 2
        elif c in "()|^$":
            raise ValueError("unsupported syntax")
        else:
            atoms.append([c.encode(), 1, 1])
            i += 1
    return [tuple(a) for a in atoms], anchored_start, anchored_end


def _python_regex(pattern: str) -> Optional[re.Pattern]:
    try:
        return re.compile(pattern.encode())
    except re.error:
        return None


def regex_dictionary(pattern: str, rng: random.Random, count: int = 16) -> Dictionary:
    """Words matching a grep-style pattern, verified against Python ``re``."""
    checker = _python_regex(pattern)
    words: set[bytes] = set()
    try:
        atoms, anchored_start, anchored_end = _regex_atoms(pattern)
    except ValueError:
        atoms = None
    if atoms is not None:
        for _ in range(count * 8):
            if len(words) >= count:
                break
            word = bytearray()
            if not anchored_start and rng.random() < 0.5:
                word += bytes(rng.choice(_LETTERS) for _ in range(rng.randint(1, 2)))
            for choices, lo, hi in atoms:
                for _ in range(rng.randint(lo, hi)):
                    word.append(rng.choice(choices))
            if not anchored_end and rng.random() < 0.5:
                word += bytes(rng.choice(_LETTERS) for _ in range(rng.randint(1, 2)))
            w = bytes(word)
            if not w or b"\n" in w or b" " in w:
                continue
            if checker is None or checker.search(w):
                words.add(w)
    if not words:
        fragments = [p for p in re.split(r"[.*+?^$\[\]()|\\{}]+", pattern) if p]
        words = {frag.encode() for frag in fragments for frag in frag.split() if frag}
    if not words:
        return GENERIC
    return Dictionary(tuple(sorted(words)), "regex-matching")


def dictionary_for(input_class: str, literals: Sequence[str], rng: random.Random) -> Dictionary:
    if input_class == "filenames-only":
        return Dictionary(tuple(fixture_filenames()), "filenames")
    if input_class == "sorted-only":
        return Dictionary(tuple(fixture_words()), "sorted-words")
    for lit in literals:
        d = regex_dictionary(lit, rng)
        if d.kind != "generic":
            return d
    return GENERIC


# --------------------------------------------------------------------------
# generation


def _split_words(line: bytes) -> list[bytes]:
    return line.split(b" ") if line else []


def satisfies_shape(x: bytes, shape: InputShape, dictionary: Dictionary = GENERIC) -> bool:
    """Independent check that ``x`` conforms to ``shape``."""
    if not x.endswith(b"\n"):
        return False
    if x == b"\n" and shape.lines.min_count == 0:
        return True
    lines = x[:-1].split(b"\n")
    L = len(lines)
    if not shape.lines.min_count <= L <= shape.lines.max_count:
        return False
    distinct = list(dict.fromkeys(lines))
    if len(distinct) != pool_size(shape.lines.distinct_pct, L):
        return False
    if dictionary.kind == "sorted-words" and lines != sorted(lines):
        return False
    if dictionary.kind == "filenames":
        return all(line in dictionary.elements for line in lines)
    if dictionary.kind == "regex-matching":
        return True
    slots = [w for line in distinct for w in _split_words(line)]
    for line in lines:
        words = _split_words(line)
        if not shape.words.min_count <= len(words) <= shape.words.max_count:
            return False
    if dictionary.kind == "generic":
        if any(not shape.chars.min_count <= len(w) <= shape.chars.max_count for w in slots):
            return False
        used = set(b"".join(slots))
        if len(used) > pool_size(shape.chars.distinct_pct, len(ALPHABET)):
            return False
    return len(set(slots)) == pool_size(shape.words.distinct_pct, len(slots))


def _fill(pool: list, total: int, rng: random.Random) -> list:
    """Every pool element at least once, padded to ``total`` and shuffled."""
    out = list(pool) + [rng.choice(pool) for _ in range(total - len(pool))]
    rng.shuffle(out)
    return out


def _distinct_words(m: int, shape: InputShape, dictionary: Dictionary, alphabet: bytes,
                    rng: random.Random) -> list[bytes]:
    words: dict[bytes, None] = {}
    for _ in range(m * 20 + 20):
        if len(words) >= m:
            break
        if dictionary.kind != "generic" and (dictionary.kind != "regex-matching" or rng.random() < 0.5):
            w = rng.choice(dictionary.elements)
        else:
            n = rng.randint(shape.chars.min_count, shape.chars.max_count)
            w = bytes(rng.choice(alphabet) for _ in range(n))
        words[w] = None
    if len(words) < m:
        raise GenError(f"cannot draw {m} distinct words for {shape}")
    return list(words)


def _attempt(shape: InputShape, dictionary: Dictionary, rng: random.Random, L: int) -> bytes:
    m_lines = pool_size(shape.lines.distinct_pct, L)
    if dictionary.kind == "filenames":
        if m_lines > len(dictionary.elements):
            raise GenError("not enough file names for the requested distinct lines")
        templates = rng.sample(dictionary.elements, m_lines)
    else:
        m_chars = pool_size(shape.chars.distinct_pct, len(ALPHABET))
        alphabet = bytes(rng.sample(ALPHABET, m_chars))
        counts = [rng.randint(shape.words.min_count, shape.words.max_count) for _ in range(m_lines)]
        total = sum(counts)
        m_words = pool_size(shape.words.distinct_pct, total)
        pool = _distinct_words(m_words, shape, dictionary, alphabet, rng) if total else []
        slots = _fill(pool, total, rng) if total else []
        templates = []
        pos = 0
        for c in counts:
            templates.append(b" ".join(slots[pos:pos + c]))
            pos += c
        if len(set(templates)) != m_lines:
            raise GenError("templates collided")
    lines = _fill(templates, L, rng)
    if dictionary.kind == "sorted-words":
        lines.sort()
    return b"".join(line + b"\n" for line in lines)


def gen_stream(shape: InputShape, dictionary: Dictionary = GENERIC, rng: Optional[random.Random] = None,
               min_lines: int = 0) -> bytes:
    """Random stream satisfying ``shape``; zero lines yields ``b"\\n"``."""
    rng = rng or random.Random(0)
    lo = max(shape.lines.min_count, min_lines)
    if lo > shape.lines.max_count:
        raise GenError(f"shape {shape} cannot have {min_lines} lines")
    last: Optional[GenError] = None
    for _ in range(_RETRIES):
        L = rng.randint(lo, shape.lines.max_count)
        if L == 0:
            return b"\n"
        try:
            x = _attempt(shape, dictionary, rng, L)
        except GenError as exc:
            last = exc
            continue
        return x
    raise GenError(f"could not satisfy {shape}: {last}")


def split_at_line(x: bytes, k: int) -> tuple[bytes, bytes]:
    """Split after the ``k``-th newline."""
    pos = 0
    for _ in range(k):
        pos = x.index(b"\n", pos) + 1
    return x[:pos], x[pos:]


def gen_input_pairs(shape: InputShape, n: int, dictionary: Dictionary = GENERIC,
                    rng: Optional[random.Random] = None) -> list[tuple[bytes, bytes]]:
    """``n`` pairs whose concatenation satisfies ``shape``, split at a random line boundary."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = rng or random.Random(0)
    pairs = []
    for _ in range(n):
        x = gen_stream(shape, dictionary, rng, min_lines=2)
        lines = x.count(b"\n")
        pairs.append(split_at_line(x, rng.randint(1, lines - 1)))
    return pairs


# --------------------------------------------------------------------------
# mutation search


def _eliminated(candidates: Sequence, pairs: Sequence[tuple[bytes, bytes]], f) -> list:
    from .synthesizer import filter_candidates

    return filter_candidates(f, candidates, pairs)


def _survivors_per_set(candidates: Sequence, input_sets, f) -> list[list]:
    return [_eliminated(candidates, pairs, f) if pairs else list(candidates) for pairs in input_sets]


def _best(candidates: Sequence, survivors: Sequence[Sequence]) -> int:
    best, best_count = 1, -1
    for j, alive in enumerate(survivors, start=1):
        removed = len(candidates) - len(alive)
        if removed > best_count:
            best, best_count = j, removed
    return best


def index_best_mutation(candidates: Sequence, input_sets: Sequence[Sequence[tuple[bytes, bytes]]], f) -> int:
    """1-based index of the set eliminating the most candidates (lowest index on ties)."""
    if len(input_sets) != 12:
        raise ValueError("expected 12 input sets")
    return _best(candidates, _survivors_per_set(candidates, input_sets, f))


def effective_inputs(f, candidates: Sequence, seed_shape: InputShape, M: int, n: int,
                     rng: random.Random, dictionary: Dictionary = GENERIC):
    """Run the mutation search; returns (pairs, surviving candidates, final shape).

    Each round scores mutations against the candidates still alive after the
    pairs generated so far, so later rounds chase the remaining ones.
    """
    shape = seed_shape
    alive = list(candidates)
    pairs: list[tuple[bytes, bytes]] = []
    for _ in range(M):
        shapes = [mutate_shape(shape, j) for j in range(1, 13)]
        sets: list[list[tuple[bytes, bytes]]] = []
        for s in shapes:
            try:
                sets.append(gen_input_pairs(s, n, dictionary, rng))
            except GenError as exc:
                log.debug("mutation %s unusable: %s", s, exc)
                sets.append([])
        survivors = _survivors_per_set(alive, sets, f)
        best = _best(alive, survivors)
        keep = set(alive)
        for batch in sets:
            pairs.extend(batch)
        for group in survivors:
            keep.intersection_update(group)
        alive = [c for c in alive if c in keep]
        shape = shapes[best - 1]
    return pairs, alive, shape


def get_effective_inputs(f, candidates: Sequence, seed_shape: InputShape = DEFAULT_SHAPE, M: int = 6,
                         per_shape: int = 4, rng: Optional[random.Random] = None,
                         dictionary: Dictionary = GENERIC) -> list[tuple[bytes, bytes]]:
    if not candidates:
        raise ValueError("candidates must be nonempty")
    pairs, _, _ = effective_inputs(f, candidates, seed_shape, M, per_shape, rng or random.Random(0), dictionary)
    return pairs
