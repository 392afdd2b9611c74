import pytest

from combsynth.dsl import ADD, CONCAT, FIRST, RERUN, SECOND, Merge, format_combiner, size
from combsynth.enumerator import (
    all_candidates,
    candidates_for_command,
    recops_with_nodes,
    sort_comparator_flags,
    structops_with_nodes,
)
from combsynth.verifier import representatives
from grammar_oracle import walk


def test_size_three_is_the_nullary_set():
    assert set(all_candidates(3)) == {ADD, CONCAT, FIRST, SECOND, RERUN, Merge(())}


def test_size_four_additions_match_walker():
    added = set(map(format_combiner, all_candidates(4))) - set(map(format_combiner, all_candidates(3)))
    assert added == walk(4) - walk(3)
    # 48 unary RecOp wraps, 4 stitch and 16 offset wraps
    assert len(added) == 68


@pytest.mark.parametrize("max_size", [3, 4, 5, 6])
def test_counts_match_walker(max_size):
    texts = [format_combiner(c) for c in all_candidates(max_size)]
    assert len(texts) == len(set(texts))
    assert set(texts) == walk(max_size)


def test_recop_counts():
    assert [len(recops_with_nodes(n)) for n in range(1, 6)] == [4, 48, 576, 6912, 82944]
    assert len(structops_with_nodes(1)) == 0


def test_canonical_order_and_bound():
    cs = all_candidates(5)
    keys = [(size(c), format_combiner(c)) for c in cs]
    assert keys == sorted(keys)
    assert all(size(c) <= 5 for c in cs)


def test_monotone():
    small = set(all_candidates(4))
    assert small <= set(all_candidates(5))


def test_keep_preserves_order():
    cs = all_candidates(4)
    kept = cs.keep([SECOND, ADD])
    assert list(kept) == [ADD, SECOND]
    assert ADD in kept and CONCAT not in kept
    assert not cs.keep([])


def test_max_size_validation():
    with pytest.raises(ValueError):
        all_candidates(2)


@pytest.mark.parametrize("text, flags", [
    ("sort", ()),
    ("sort -rn", ("-rn",)),
    ("sort -r -n", ("-r", "-n")),
    ("sort -k 2 -t ,", ("-k", "2", "-t", ",")),
    ("sort -o out.txt -S 1G --parallel=4 -n", ("-n",)),
    ("uniq -c", None),
])
def test_sort_comparator_flags(text, flags):
    assert sort_comparator_flags(text) == flags


def test_flagged_merge_candidate():
    cs = candidates_for_command("sort -rn", 3)
    assert Merge(("-rn",)) in cs and Merge(()) in cs
    assert len(cs) == 7


def test_representatives_present_at_size_seven():
    rec, struct = representatives()
    cs = all_candidates(7)
    missing = [format_combiner(g) for g in rec + struct if g not in cs]
    assert not missing
