import pytest
from hypothesis import given, settings, strategies as st

from greyfuzz.vm import (
    FORCED,
    NORMAL,
    RECORD,
    ProgramError,
    builtin_names,
    builtin_program,
    load_program,
)

CMP = {
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b, "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


def test_fig_branches_record_run():
    prog = builtin_program("fig_branches")
    data = bytearray(1024)
    data[100] = 40
    res = prog.execute(bytes(data), RECORD)
    first = res.trace[0]
    assert (first.branch_id, first.lhs_value, first.rhs_value, first.operator, first.taken) == (6, 50, 50, "==", True)
    assert res.outcome == "normal"


def test_normal_mode_has_no_trace_but_same_path():
    prog = builtin_program("fig_intervals")
    data = bytes([0, 0, 100] + [0] * 13)
    a, b = prog.execute(data), prog.execute(data, RECORD)
    assert a.trace == ()
    assert a.path == b.path


def test_source_bytes_for_direct_loads():
    prog = builtin_program("magic_deep")
    rec = prog.execute(bytes(4096), RECORD).trace[1]
    assert rec.branch_id == 6
    assert rec.source_bytes == (0,)
    wide = load_program("input 8\nif x[2:4] == 7 {\n}\n", m=1)
    assert wide.execute(bytes(8), RECORD).trace[0].source_bytes == (2, 3, 4, 5)


def test_little_endian_load():
    prog = load_program("input 4\nif x[0:2] == 0x0201 {\n  crash 9\n}\n", m=1)
    assert prog.execute(bytes([1, 2, 0, 0])).crash_site == "9"
    assert not prog.execute(bytes([2, 1, 0, 0])).crashed


def test_forced_mode_follows_stored_edges():
    prog = builtin_program("magic_deep")
    seed = bytes(4096)
    base = prog.execute(seed, RECORD).trace
    magic = b"FORM" + bytes(4092)
    forced = prog.execute(magic, FORCED, base)
    assert not forced.crashed
    assert [r.taken for r in forced.trace] == [r.taken for r in base]
    assert forced.trace[1].lhs_value == ord("F")
    assert prog.execute(magic).crashed


def test_forced_trace_mismatch_is_divergence():
    prog = builtin_program("fig_loopcount")
    base = prog.execute(bytes([3] + [0] * 31), RECORD).trace
    assert prog.execute(bytes([5] + [0] * 31), FORCED, base).outcome == "normal"
    assert prog.execute(bytes([3] + [0] * 31), FORCED, base[:-1]).outcome == "forced-divergence"
    assert prog.execute(bytes([3] + [0] * 31), FORCED, list(base) + [True]).outcome == "forced-divergence"


def test_labels_drawn_per_block():
    prog = builtin_program("fig_intervals", m=3, map_bits=10, label_seed=5)
    assert prog.m == 3
    assert all(len(row) == prog.n_blocks for row in prog.labels)
    assert all(0 <= v < 1024 for row in prog.labels for v in row)
    again = builtin_program("fig_intervals", m=3, map_bits=10, label_seed=5)
    assert again.labels == prog.labels


def test_mode_argument_checks():
    prog = builtin_program("fig_loopcount")
    with pytest.raises(ValueError):
        prog.execute(bytes(31))
    with pytest.raises(ValueError):
        prog.execute(bytes(32), FORCED)
    with pytest.raises(ValueError):
        prog.execute(bytes(32), "sideways")


@pytest.mark.parametrize("src", [
    "if x[0] == 1 {\n}\n",                 # no input line
    "input 4\nif x[9] == 1 {\n}\n",         # out of range
    "input 4\nif x[0] == 1 {\n",            # unclosed
    "input 4\nlet y = q + 1\n",             # unknown variable
    "input 4\nlet y = = 1\n",
])
def test_parse_errors(src):
    with pytest.raises(ProgramError):
        load_program(src)


def test_division_by_zero_crashes():
    prog = load_program("input 2\nlet a = 10 / x[0]\n", m=1)
    assert prog.execute(bytes(2)).crashed
    assert not prog.execute(bytes([1, 0])).crashed


def test_builtin_corpus_loads():
    for name in builtin_names():
        prog = builtin_program(name, m=1)
        assert prog.execute(bytes(prog.input_size)).outcome == "normal"


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(CMP)), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_taken_matches_operator(op, const, b0, b1):
    prog = load_program(f"input 2\nif x[0] + x[1] {op} {const} {{\n}}\n", m=1)
    data = bytes([b0, b1])
    rec = prog.execute(data, RECORD).trace[0]
    assert rec.taken == CMP[op](b0 + b1, const)
    assert prog.execute(data, RECORD) == prog.execute(data, RECORD)


@settings(max_examples=30, deadline=None)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_forced_taken_equals_stored(seed, other):
    prog = builtin_program("fig_loopcount")
    base = prog.execute(seed, RECORD).trace
    res = prog.execute(other, FORCED, base)
    assert [r.taken for r in res.trace] == [r.taken for r in base][: len(res.trace)]
