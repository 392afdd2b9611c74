import json

import pytest

from combsynth import cli
from conftest import needs_coreutils


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_hex_escape():
    assert cli.hex_escape(b"a b\n\\\x00") == "a b\\x0a\\x5c\\x00"


def test_run_config_validation():
    with pytest.raises(ValueError):
        cli.RunConfig(width=0)
    with pytest.raises(ValueError):
        cli.RunConfig(timeout=0)


def test_synth_is_deterministic(capsys, tmp_path):
    args = ["synth", "--builtin-only", "--cmd", "wc -l", "--seed", "7", "--max-size", "5", "--mutations", "3"]
    c1, out1, _ = run(capsys, *args, "--cache", str(tmp_path / "a.json"))
    c2, out2, _ = run(capsys, *args, "--cache", str(tmp_path / "b.json"))
    assert c1 == c2 == 0
    assert json.loads(out1) == json.loads(out2)
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
    assert json.loads(out1)["combiners"] == ["(back nl add)"]


@needs_coreutils
def test_synth_no_combiner_exit_code(capsys):
    code, out, err = run(capsys, "synth", "--cmd", "sed 1d", "--max-size", "5")
    assert code == 2 and "no combiner" in err


def test_parallelize_unsupported_syntax(capsys, tmp_path):
    script = tmp_path / "bad.sh"
    script.write_text("sort ; uniq\n")
    code, _, err = run(capsys, "parallelize", str(script), "--width", "4")
    assert code == 3 and "position 5" in err


def test_bad_combiner_text_is_syntax_error(capsys, tmp_path):
    part = tmp_path / "p"
    part.write_bytes(b"1\n")
    code, _, _ = run(capsys, "combine", "--combiner", "(back nl", str(part))
    assert code == 3


def test_combine(capsys, tmp_path):
    paths = []
    for i, text in enumerate([b"      2 a\n", b"      1 a\n      4 b\n"]):
        p = tmp_path / f"p{i}"
        p.write_bytes(text)
        paths.append(str(p))
    code, out, _ = run(capsys, "combine", "--combiner", "(stitch2 sp add first)", *paths)
    assert code == 0 and out == "      3 a\n      4 b\n"


def test_combine_rerun_needs_command(capsys, tmp_path):
    p = tmp_path / "p"
    p.write_bytes(b"a\n")
    code, _, _ = run(capsys, "combine", "--combiner", "rerun", str(p))
    assert code == 4
    code, out, _ = run(capsys, "combine", "--builtin-only", "--cmd", "wc -l",
                       "--combiner", "rerun", str(p), str(p))
    assert code == 0 and out == "2\n"


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--builtin-only", "--cmd", "uniq -c", "--combiner", "(stitch2 sp add first)",
                       "--samples", "50")
    assert code == 0 and out.startswith("HOLDS")
    report = json.loads(out.split("\n", 1)[1])
    assert report["checked"] == 50 and report["counterexample"] is None
    code, out, _ = run(capsys, "verify", "--builtin-only", "--cmd", "uniq -c", "--combiner", "concat")
    assert code == 2 and out.startswith("VIOLATED")
    report = json.loads(out.split("\n", 1)[1])
    assert "\\x0a" in report["counterexample"]["f_x1"]


def test_parallelize_run_and_plan(capsys, tmp_path, monkeypatch):
    corpus = tmp_path / "in.txt"
    corpus.write_bytes(b"The cat. the Dog, the end!\n" * 300)
    out = tmp_path / "out.txt"
    script = tmp_path / "wf.sh"
    script.write_text(f"cat {corpus} | tr -cs A-Za-z '\\n' | tr A-Z a-z | sort | uniq -c | sort -rn > {out}\n")
    cache = tmp_path / "cache.json"
    cache.write_text(json.dumps({"version": 1, "records": {
        "builtin:squeeze-words": {"status": "ok", "combiners": ["rerun"]},
        "builtin:lowercase": {"status": "ok", "combiners": ["concat"]},
        "builtin:sort-lines": {"status": "ok", "combiners": ["(merge)", "rerun"]},
        "builtin:uniq-count": {"status": "ok", "combiners": ["(stitch2 sp add first)"]},
        "builtin:sort-lines-rn": {"status": "ok", "combiners": ["(merge -rn)", "rerun"]},
    }}))
    plan_path = tmp_path / "plan.json"
    code, _, err = run(capsys, "parallelize", str(script), "--width", "4", "--cache", str(cache), "--builtin-only",
                       "--run", "--plan-out", str(plan_path), "-o", str(tmp_path / "par.sh"))
    assert code == 0, err
    assert out.read_bytes() == b"    900 the\n    300 end\n    300 dog\n    300 cat\n"
    out.unlink()
    code, _, _ = run(capsys, "run", str(plan_path), "--width", "8")
    assert code == 0 and out.read_bytes().startswith(b"    900 the\n")
    assert (tmp_path / "par.sh").read_text().startswith("#!/usr/bin/env bash")


@needs_coreutils
def test_parallelize_external_run_matches_serial(capsys, tmp_path):
    import subprocess

    corpus = tmp_path / "in.txt"
    corpus.write_bytes(b"alpha Beta gamma\nbeta, ALPHA.\n" * 500)
    out = tmp_path / "out.txt"
    pipeline = f"cat {corpus} | tr A-Z a-z | sort | uniq -c > {out}"
    (tmp_path / "wf.sh").write_text(pipeline + "\n")
    cache = tmp_path / "cache.json"
    cache.write_text(json.dumps({"version": 1, "records": {
        "tr A-Z a-z": {"status": "ok", "combiners": ["concat"]},
        "sort": {"status": "ok", "combiners": ["(merge)", "rerun"]},
        "uniq -c": {"status": "ok", "combiners": ["(stitch2 sp add first)", "(stitch2 sp add second)"]},
    }}))
    code, _, _ = run(capsys, "parallelize", str(tmp_path / "wf.sh"), "--width", "4", "--cache", str(cache), "--run")
    assert code == 0
    expected = subprocess.run(["bash", "-c", f"cat {corpus} | tr A-Z a-z | sort | uniq -c"],
                              capture_output=True, env={"LC_ALL": "C", "PATH": "/usr/bin:/bin"}).stdout
    assert out.read_bytes() == expected
