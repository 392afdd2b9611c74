import random

import pytest

from combsynth.dsl import ADD, CONCAT, FIRST, Back, NL
from combsynth.errors import GenError, UnsupportedCommand
from combsynth.inputgen import (
    DEFAULT_SHAPE,
    GENERIC,
    MAX_COUNTS,
    DimConfig,
    Dictionary,
    InputShape,
    dictionary_for,
    effective_inputs,
    extract_literals,
    fixture_filenames,
    fixture_words,
    gen_input_pairs,
    gen_stream,
    index_best_mutation,
    literal_shape,
    mutate_shape,
    pool_size,
    probe_command,
    random_shape,
    regex_dictionary,
    satisfies_shape,
)
from combsynth.oracle import CommandHandle
from conftest import needs_coreutils


def test_dim_config_validation():
    with pytest.raises(ValueError):
        DimConfig(3, 2, 50)
    with pytest.raises(ValueError):
        DimConfig(0, 2, 101)


def test_pool_size():
    assert pool_size(50, 10) == 5
    assert pool_size(1, 10) == 1
    assert pool_size(100, 7) == 7
    assert pool_size(50, 0) == 0


@pytest.mark.parametrize("j, dim, expected", [
    (1, "lines", DimConfig(2, 40, 50)),
    (2, "lines", DimConfig(0, 10, 50)),
    (3, "lines", DimConfig(1, 20, 100)),
    (4, "lines", DimConfig(1, 20, 25)),
    (5, "words", DimConfig(0, 10, 50)),
    (6, "words", DimConfig(0, 2, 50)),
    (10, "chars", DimConfig(1, 4, 50)),
    (12, "chars", DimConfig(1, 8, 25)),
])
def test_mutate_shape(j, dim, expected):
    mutated = mutate_shape(DEFAULT_SHAPE, j)
    assert mutated.dim(dim) == expected
    for other in ("lines", "words", "chars"):
        if other != dim:
            assert mutated.dim(other) == DEFAULT_SHAPE.dim(other)


def test_mutate_shape_clamps():
    s = DEFAULT_SHAPE
    for _ in range(20):
        s = mutate_shape(s, 1)
    assert s.lines.max_count == MAX_COUNTS["lines"]
    for _ in range(20):
        s = mutate_shape(mutate_shape(s, 2), 4)
    assert s.lines.max_count == 1 and s.lines.distinct_pct == 1
    for _ in range(10):
        s = mutate_shape(s, 10)
    assert s.chars.min_count == 1
    with pytest.raises(ValueError):
        mutate_shape(s, 13)


def test_literal_shape():
    s = literal_shape(10)
    assert (s.lines.min_count, s.lines.max_count) == (8, 12)
    assert literal_shape(1).lines.min_count == 1


@pytest.mark.parametrize("seed", range(25))
def test_generated_streams_satisfy_their_shape(seed):
    rng = random.Random(seed)
    shape = random_shape(rng)
    try:
        x = gen_stream(shape, GENERIC, rng)
    except GenError:
        pytest.skip("shape not satisfiable")
    assert x.endswith(b"\n")
    assert satisfies_shape(x, shape)


def test_satisfies_shape_rejects():
    shape = InputShape(DimConfig(2, 3, 100), DimConfig(1, 1, 100), DimConfig(1, 3, 100))
    assert satisfies_shape(b"ab\ncd\n", shape)
    assert not satisfies_shape(b"ab\n", shape)               # too few lines
    assert not satisfies_shape(b"ab\nab\n", shape)           # not distinct enough
    assert not satisfies_shape(b"abcd\nab\n", shape)         # word too long


def test_gen_input_pairs_split_at_line_boundaries():
    rng = random.Random(1)
    for x1, x2 in gen_input_pairs(DEFAULT_SHAPE, 30, GENERIC, rng):
        assert x1.endswith(b"\n") and x2.endswith(b"\n")
        assert satisfies_shape(x1 + x2, DEFAULT_SHAPE)


def test_generation_is_seeded():
    a = gen_input_pairs(DEFAULT_SHAPE, 5, GENERIC, random.Random(9))
    b = gen_input_pairs(DEFAULT_SHAPE, 5, GENERIC, random.Random(9))
    assert a == b


def test_dictionary_kinds():
    with pytest.raises(ValueError):
        Dictionary((), "filenames")
    words = Dictionary(tuple(fixture_words()), "sorted-words")
    x = gen_stream(DEFAULT_SHAPE, words, random.Random(2))
    lines = x.split(b"\n")[:-1]
    assert lines == sorted(lines)
    files = Dictionary(tuple(fixture_filenames()), "filenames")
    for line in gen_stream(DEFAULT_SHAPE, files, random.Random(2)).split(b"\n")[:-1]:
        assert line in files.elements


@pytest.mark.parametrize("text, literals, numerics", [
    ("grep -c x", ["x"], []),
    ("grep -v '^0$'", ["^0$"], []),
    ("grep -e ab -e cd", ["ab", "cd"], []),
    ("sed s/a/b/", ["a"], []),
    ("awk '/foo/ {print}'", ["foo"], []),
    ("head -n 5", [], [5]),
    ("wc -l", [], []),
])
def test_extract_literals(text, literals, numerics):
    assert extract_literals(text) == (literals, numerics)


def test_regex_dictionary_words_match():
    import re
    d = regex_dictionary("^a[0-9]+b$", random.Random(0))
    assert d.kind == "regex-matching"
    assert all(re.fullmatch(rb"a[0-9]+b", w) for w in d.elements)


def test_dictionary_for():
    rng = random.Random(0)
    assert dictionary_for("any", [], rng) == GENERIC
    assert dictionary_for("sorted-only", [], rng).kind == "sorted-words"
    assert dictionary_for("filenames-only", [], rng).kind == "filenames"
    assert dictionary_for("any", ["x"], rng).kind == "regex-matching"


@needs_coreutils
def test_probe_command_classes():
    assert probe_command(CommandHandle.from_text("cat")) == "any"
    assert probe_command(CommandHandle.from_text("sort -c")) == "sorted-only"
    assert probe_command(CommandHandle.from_text("xargs cat")) == "filenames-only"
    with pytest.raises(UnsupportedCommand):
        probe_command(CommandHandle.from_text("false"))


def test_index_best_mutation_prefers_lowest_index_on_ties():
    f = CommandHandle.from_text("builtin:line-count")
    candidates = [ADD, CONCAT, FIRST, Back(NL, ADD)]
    pairs = [(b"a\n", b"b\n")]
    # mutation indices are 1-based
    assert index_best_mutation(candidates, [pairs] * 12, f) == 1
    sets = [[] for _ in range(12)]
    sets[5] = pairs
    assert index_best_mutation(candidates, sets, f) == 6


def test_effective_inputs_shrinks_candidates():
    f = CommandHandle.from_text("builtin:line-count")
    candidates = [ADD, CONCAT, FIRST, Back(NL, ADD)]
    pairs, alive, shape = effective_inputs(f, candidates, DEFAULT_SHAPE, 3, 4, random.Random(0), GENERIC)
    assert pairs
    assert alive == [Back(NL, ADD)]
    assert isinstance(shape, InputShape)
