import json
import random
import subprocess

import pytest

from combsynth.dsl import ADD, CONCAT, FIRST, NL, SP, Back, Merge, Stitch2
from combsynth.errors import DomainError, UnsupportedSyntax
from combsynth.oracle import CommandHandle, child_env, split_stream
from combsynth.pipeline import (
    PipelinePlan,
    PipelineSpec,
    StagePlan,
    combine_k,
    emit_script,
    execute_parallel,
    make_handle,
    parse_pipeline,
    plan,
    run_serial,
)
from combsynth.synthesizer import CombinerCache, CompositeCombiner, SynthConfig
from conftest import needs_coreutils

WF = "cat in.txt | tr -cs A-Za-z '\\n' | tr A-Z a-z | sort | uniq -c | sort -rn > out.txt"

RECORDS = {
    "tr -cs A-Za-z '\\n'": ["rerun"],
    "tr A-Z a-z": ["concat"],
    "sort": ["(merge)", "rerun"],
    "uniq -c": ["(stitch2 sp add first)", "(stitch2 sp add second)"],
    "sort -rn": ["(merge -rn)", "rerun"],
    "tr -d '\\n'": ["concat"],
    "wc -l": ["(back nl add)"],
    "sed 1d": [],
}


def seeded_cache(builtin_only=False):
    cache = CombinerCache()
    for text, combiners in RECORDS.items():
        f = make_handle(text, builtin_only)
        cache.put(f.key, {"command": text, "status": "ok" if combiners else "empty", "combiners": combiners,
                          "stream_output": text != "tr -d '\\n'"})
    return cache


def test_parse_word_frequency():
    spec = parse_pipeline(WF)
    assert spec.input_path == "in.txt" and spec.output_path == "out.txt"
    assert spec.stages == ["tr -cs A-Za-z '\\n'", "tr A-Z a-z", "sort", "uniq -c", "sort -rn"]
    assert parse_pipeline(spec.text()) == spec


def test_parse_script_with_comments_and_continuations():
    spec = parse_pipeline("#!/bin/bash\n# word count\n\ncat $IN |\\\n  wc -l\n")
    assert spec.stages == ["wc -l"] and spec.input_path == "$IN"


def test_parse_keeps_quoted_pipes():
    assert parse_pipeline("grep 'a|b' | wc -l").stages == ["grep 'a|b'", "wc -l"]


@pytest.mark.parametrize("text, position", [
    ("sort ; uniq", 5),
    ("sort && uniq", 5),
    ("sort || uniq", 5),
    ("sort < x", 5),
    ("sort > a | uniq", 5),
    ("(sort)", 0),
    ("echo $(date) | sort", 5),
    ("sort | | uniq", 6),
    ("sort 'abc", 9),
])
def test_parse_rejects(text, position):
    with pytest.raises(UnsupportedSyntax) as info:
        parse_pipeline(text)
    assert info.value.position == position


def test_parse_rejects_two_pipelines():
    with pytest.raises(UnsupportedSyntax):
        parse_pipeline("sort\nuniq\n")


def test_plan_word_frequency_shape():
    p = plan(parse_pipeline(WF), seeded_cache(), 16)
    assert [s.mode for s in p.stages] == ["sequential", "parallel", "parallel", "parallel", "parallel"]
    assert [s.eliminated for s in p.stages] == [False, True, False, False, False]
    assert p.groups() == [[0], [1, 2], [3], [4]]
    assert "eliminated" in p.summary()


def test_plan_not_eliminable_without_stream_output():
    p = plan(parse_pipeline("tr -d '\\n' | wc -l"), seeded_cache(), 4)
    assert p.stages[0].mode == "parallel" and not p.stages[0].eliminated


def test_plan_single_sort_stage():
    p = plan(parse_pipeline("sort"), seeded_cache(), 4)
    assert p.stages[0].mode == "parallel" and not p.stages[0].eliminated
    assert p.stages[0].composite.members[0] == Merge(())


def test_plan_empty_status_is_sequential():
    p = plan(parse_pipeline("tr A-Z a-z | sed 1d | wc -l"), seeded_cache(), 4)
    assert [s.mode for s in p.stages] == ["parallel", "sequential", "parallel"]
    # the next stage is sequential, so the concat combiner stays
    assert not p.stages[0].eliminated


def test_plan_rejects_width_one():
    with pytest.raises(ValueError):
        plan(parse_pipeline("sort"), seeded_cache(), 1)


def test_plan_json_round_trip():
    p = plan(parse_pipeline(WF), seeded_cache(), 8)
    again = PipelinePlan.from_dict(json.loads(json.dumps(p.to_dict())))
    assert again == p


def test_plan_synthesizes_missing_records():
    cache = CombinerCache()
    config = SynthConfig(max_size=5, mutation_rounds=3, max_rounds=6)
    p = plan(parse_pipeline("wc -l"), cache, 4, config, builtin_only=True)
    assert p.stages[0].composite.members == (Back(NL, ADD),)
    assert cache.get("builtin:line-count")["status"] == "ok"


def test_combine_k_concat_and_absent_parts():
    assert combine_k(CONCAT, [b"a\n", b"b\n", b"c\n"]) == b"a\nb\nc\n"
    assert combine_k(CONCAT, [b"a\n", None, None]) == b"a\n"
    with pytest.raises(ValueError):
        combine_k(CONCAT, [None, None])


def test_combine_k_fold_uniq_count():
    f = CommandHandle.from_text("builtin:uniq-count")
    x = b"a\na\nb\nb\nb\nc\nc\n"
    parts = [p for p in split_stream(x, 3) if p]
    g = Stitch2(SP, ADD, FIRST)
    assert combine_k(g, [f.run(p) for p in parts], f) == f.run(x)


def test_combine_k_merge_and_rerun():
    sort = CommandHandle.from_text("builtin:sort-lines")
    parts = [b"b\nd\n", b"a\nc\n", b"e\n"]
    assert combine_k(Merge(()), parts, sort) == b"a\nb\nc\nd\ne\n"
    sq = CommandHandle.from_text("builtin:squeeze-words")
    comp = CompositeCombiner.from_texts(["rerun"])
    assert combine_k(comp, [b"a\n", b"\nb\n"], sq) == b"a\nb\n"


def test_combine_k_generic_domain_error():
    with pytest.raises(DomainError):
        combine_k(Back(NL, ADD), [b"1\n", b"x\n"])


def test_concat_fold_order_irrelevant():
    rng = random.Random(0)
    for _ in range(50):
        parts = [bytes(rng.choice(b"ab\n") for _ in range(rng.randint(0, 5))) for _ in range(rng.randint(1, 6))]
        comp = CompositeCombiner((CONCAT,))
        left = combine_k(comp, parts)
        right = parts[-1]
        for p in reversed(parts[:-1]):
            right = CONCAT.apply(p, right)
        assert left == right


def _text(rng, lines=400):
    words = [b"Apple", b"apple", b"pear", b"Fig", b"fig", b"kiwi", b"Zoo", b"12"]
    return b"".join(b" ".join(rng.choice(words) for _ in range(rng.randint(0, 6))) + b".\n"
                    for _ in range(lines))


@pytest.mark.parametrize("width", [2, 4, 8, 16])
def test_execute_parallel_matches_serial_hermetic(width):
    spec = parse_pipeline(WF)
    p = plan(spec, seeded_cache(builtin_only=True), width, builtin_only=True)
    rng = random.Random(width)
    for _ in range(5):
        data = _text(rng, rng.randint(0, 300))
        assert execute_parallel(p, data) == run_serial(spec, data, builtin_only=True)


def test_all_sequential_plan_equals_serial():
    spec = parse_pipeline("tr A-Z a-z | sort | uniq -c")
    stages = [StagePlan(s) for s in spec.stages]
    for i, s in enumerate(stages):
        s.group = i
    p = PipelinePlan(spec, 4, stages, builtin_only=True)
    data = _text(random.Random(1))
    assert execute_parallel(p, data) == run_serial(spec, data, builtin_only=True)


def test_elimination_safety_sampled():
    # combining after f2 on raw substreams == f2 over the concat-combined output of f1
    f1 = CommandHandle.from_text("builtin:lowercase")
    f2 = CommandHandle.from_text("builtin:uniq-count")
    g2 = Stitch2(SP, ADD, FIRST)
    rng = random.Random(3)
    for _ in range(100):
        x = _text(rng, rng.randint(2, 30)).replace(b" ", b"\n")
        x1, x2 = split_stream(x, 2)
        if x2 is None:
            continue
        deferred = g2.apply(f2.run(f1.run(x1)), f2.run(f1.run(x2)))
        eager = f2.run(CONCAT.apply(f1.run(x1), f1.run(x2)))
        assert deferred == eager


def test_emit_script_golden_shape():
    p = plan(parse_pipeline(WF), seeded_cache(), 4)
    script = emit_script(p)
    assert script.startswith("#!/usr/bin/env bash\n")
    assert "K=4" in script
    assert script.count("split -e -d -a 3 -n l/$K") == 3
    assert "sort --parallel=1 <" in script
    assert 'sort -m -rn "${parts[@]}"' in script
    assert "combine --cmd 'uniq -c' --combiner '(stitch2 sp add first)'" in script
    assert script.rstrip().endswith("> out.txt")


def test_emit_script_without_elimination():
    p = plan(parse_pipeline("tr -d '\\n' | wc -l"), seeded_cache(), 2)
    script = emit_script(p)
    assert script.count("split -e") == 2
    assert 'cat "${parts[@]}" >' in script


@needs_coreutils
def test_emitted_script_matches_execute_parallel(tmp_path):
    data = _text(random.Random(9), 2000)
    src = tmp_path / "in.txt"
    src.write_bytes(data)
    out = tmp_path / "out.txt"
    spec = parse_pipeline(f"cat {src} | tr -cs A-Za-z '\\n' | tr A-Z a-z | sort | uniq -c | sort -rn > {out}")
    p = plan(spec, seeded_cache(), 4)
    script = tmp_path / "run.sh"
    script.write_text(emit_script(p))
    subprocess.run(["bash", str(script)], check=True, env=child_env())
    assert out.read_bytes() == execute_parallel(p, data)
    serial = subprocess.run(["bash", "-c", " | ".join(spec.stages)], input=data, capture_output=True,
                            env=child_env()).stdout
    assert out.read_bytes() == serial
