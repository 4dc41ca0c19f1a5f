import io
import json
from contextlib import redirect_stderr, redirect_stdout

from greyfuzz.cli import main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def test_cov_analyze_cell():
    code, out, _ = run("cov-analyze", "--n-bits", "16", "--m", "4", "--edges", "8000")
    assert code == 0 and out.strip() == "0.701"


def test_cov_analyze_table():
    code, out, _ = run("cov-analyze")
    lines = out.splitlines()
    assert lines[0] == "m,3000,4000,5000,6000,7000,8000,9000,10000"
    assert lines[4].split(",")[6] == "0.701"
    assert len(lines) == 6


def test_cov_analyze_needs_both():
    code, _, err = run("cov-analyze", "--m", "4")
    assert code != 0 and "--edges" in err


def test_taint_zero_seed(tmp_path):
    seed = tmp_path / "zeros.bin"
    seed.write_bytes(bytes(1024))
    code, out, _ = run("taint", "--program", "fig_branches", "--seed", str(seed))
    report = json.loads(out)
    assert code == 0
    assert report["branches"]["6"] == [100]
    assert report["executions"] == 20


def test_solve_prints_system(tmp_path):
    seed = tmp_path / "s.bin"
    seed.write_bytes(bytes([0, 0, 100] + [0] * 13))
    code, out, _ = run("solve", "--program", "fig_intervals", "--seed", str(seed), "--branch", "9", "--samples", "3")
    lines = out.splitlines()
    assert code == 0
    assert lines[:2] == ["x[2:1] in [11,200]", "unsolved: 9"]
    assert all(11 <= bytes.fromhex(h)[2] <= 200 for h in lines[2:])


def test_fuzz_zero_iterations(tmp_path):
    tl = tmp_path / "t.csv"
    code, out, _ = run("fuzz", "--program", "magic_deep", "--iterations", "0", "--timeline-out", str(tl),
                       "--corpus-out", str(tmp_path / "c"))
    assert code == 0
    assert tl.read_text().splitlines()[1:] == [f"0,{json.loads(out)['coverage']},2"]
    assert (tmp_path / "c" / "index.json").exists()


def test_fuzz_with_config(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[campaign]\nprogram = fig_intervals\niterations = 3\ninner_budget = 4\n")
    code, out, _ = run("fuzz", "--config", str(cfg), "--rng-seed", "2")
    assert code == 0 and json.loads(out)["iteration"] == 3


def test_errors_go_to_stderr(tmp_path):
    bad = tmp_path / "bad.gb"
    bad.write_text("input 4\nif x[9] == 1 {\n}\n")
    code, out, err = run("taint", "--program", str(bad))
    assert code != 0 and out == "" and "line 2" in err
    code, _, err = run("fuzz", "--program", "no-such-program", "--iterations", "1")
    assert code != 0 and err
    code, _, err = run("frobnicate")
    assert code == 2 and "usage" in err
    code, _, _ = run("taint", "--program", "fig_branches", "--bogus")
    assert code == 2


def test_corpus_listing():
    code, out, _ = run("corpus")
    assert code == 0
    assert out.splitlines()[0] == "name,input_size,blocks,branches"
    assert any(line.startswith("fig_loopcount,32,") for line in out.splitlines())
    code, out, _ = run("corpus", "--show", "fig_loopcount")
    assert "loop x[0] % 16" in out
