import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greyfuzz.taint import (
    CHANGED,
    UNCHANGED,
    UNDEFINED,
    build_test_vectors,
    decode,
    detect_direct_copies,
    eliminate_crash_ranges,
    fti_infer,
    infer,
    infer_taint,
    mask_vectors,
    n_tests,
)
from greyfuzz.vm import builtin_program, load_program


def test_vector_count_and_first_rows():
    assert n_tests(1024) == 20
    assert n_tests(16) == 8
    assert n_tests(5) == 6
    v = build_test_vectors(8)
    rows = ["".join("1" if b else "0" for b in r[:4]) for r in v[:4]]
    assert rows == ["1010", "0101", "1100", "0011"]


def test_vectors_come_in_complementary_halves():
    v = build_test_vectors(1024)
    assert v.shape == (20, 1024)
    assert (v.sum(axis=1) == 512).all()
    assert (v[0::2] ^ v[1::2]).all()


def test_vectors_reject_single_byte():
    with pytest.raises(ValueError):
        build_test_vectors(1)


def test_permuted_vectors_move_patterns():
    perm = np.array([3, 0, 1, 2])
    v = build_test_vectors(4, perm)
    base = build_test_vectors(4)
    assert (v[:, 0] == base[:, 3]).all()
    assert (v[:, 2] == base[:, 1]).all()


def test_decode_single_dependency():
    v = build_test_vectors(8)
    # byte 5 = 0b101: changed exactly in the tests that mutate it
    y = [CHANGED if row[5] else UNCHANGED for row in v]
    assert np.flatnonzero(decode(y, v)).tolist() == [5]


def test_decode_undefined_removes_nothing():
    v = build_test_vectors(8)
    assert decode([UNDEFINED] * len(v), v).all()


def test_mask_vectors_clears_ranges():
    v = mask_vectors(build_test_vectors(16), [(3, 5)])
    assert not v[:, 3:6].any()
    assert v[:, 6].any()


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300), st.data())
def test_decode_always_keeps_true_dependency(n, data):
    deps = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=4))
    v = build_test_vectors(n)
    y = [CHANGED if any(row[d] for d in deps) else UNCHANGED for row in v]
    got = set(np.flatnonzero(decode(y, v)).tolist())
    assert deps <= got
    if len(deps) == 1:
        assert got == deps


def test_fig_branches_single_pass():
    prog = builtin_program("fig_branches")
    seed = bytes(1024)
    rep = infer_taint(prog, seed, repeats=1, rng=0)
    assert rep.executions == 20
    assert rep.for_branch(6) == {100}
    assert rep.for_branch(6) == fti_infer(prog, seed).for_branch(6)
    assert {200, 201, 202, 203, 236, 237, 238, 239} <= rep.for_branch(8)


def test_fti_finds_exact_sets():
    prog = builtin_program("fig_branches")
    rep = fti_infer(prog, bytes(1024), rng=1)
    assert rep.executions == 1024
    assert rep.for_branch(8) == {200, 201, 202, 203, 236, 237, 238, 239}
    assert rep.for_branch(10) == {236, 237, 238, 239}


def test_infer_switches_on_threshold():
    prog = builtin_program("fig_intervals")
    assert infer(prog, bytes(16), fti_threshold=64).method == "fti"
    assert infer(prog, bytes(16), fti_threshold=8).method == "taintfast"


def test_crash_range_bisection():
    src = "input 16\nif x[7] == 0 {\n}\nlet z = 1 / (x[7] == 0)\n"
    prog = load_program(src, m=1)
    ranges, probes = eliminate_crash_ranges(prog, bytes(16))
    assert ranges == [(7, 7)]
    # one probe per halving plus confirmation and the residual check
    assert probes <= 2 * 4 + 3


def test_crash_bytes_are_excluded_from_later_passes():
    src = "input 32\nlet z = 1 / (x[7] == 0)\nif x[20] == 3 {\n}\n"
    prog = load_program(src, m=1)
    rep = infer_taint(prog, bytes(32), repeats=3, rng=2)
    assert rep.excluded == ((7, 7),)
    assert 20 in rep.for_branch(3)
    assert rep.probes > 0


def test_direct_copy_detection():
    prog = builtin_program("fig_intervals")
    rep = fti_infer(prog, bytes([0, 0, 100] + [0] * 13), rng=0)
    copies = detect_direct_copies(rep)
    by_branch = {c.branch_id: c for c in copies.values()}
    assert (by_branch[5].offset, by_branch[5].width, by_branch[5].constant) == (2, 1, 10)
    assert (by_branch[7].operator, by_branch[7].constant) == ("<=", 200)
    assert 9 not in by_branch


def test_wide_constant_is_not_a_copy():
    prog = load_program("input 4\nlet c = 0\nif c * 256 + x[1] == 3395 {\n}\n", m=1)
    rep = fti_infer(prog, bytes(4), rng=0)
    assert rep.for_branch(3) == {1}
    assert detect_direct_copies(rep) == {}
