import random

import pytest
from hypothesis import given, settings, strategies as st

from greyfuzz.intervals import (
    OPS,
    IntervalSet,
    Unsatisfiable,
    build_system,
    condition_to_intervals,
    intersect,
    sample_solution,
)
from greyfuzz.taint import DirectCopy, detect_direct_copies, fti_infer
from greyfuzz.vm import RECORD, builtin_program

PRED = {
    "==": lambda x, c: x == c, "!=": lambda x, c: x != c, "<": lambda x, c: x < c,
    "<=": lambda x, c: x <= c, ">": lambda x, c: x > c, ">=": lambda x, c: x >= c,
}


def test_examples():
    assert condition_to_intervals(">", 10).as_pairs() == [(11, 255)]
    assert condition_to_intervals("<=", 200).as_pairs() == [(0, 200)]
    assert condition_to_intervals("==", 5, invert=True).as_pairs() == [(0, 4), (6, 255)]
    assert condition_to_intervals("<", 0).as_pairs() == []
    assert condition_to_intervals(">=", 0x1234, width=2).as_pairs() == [(0x1234, 0xFFFF)]


def test_constant_must_fit():
    with pytest.raises(ValueError):
        condition_to_intervals("==", 256, width=1)


def test_canonical_merge():
    s = IntervalSet([(5, 9), (0, 3), (4, 4), (20, 30), (25, 40)])
    assert s.as_pairs() == [(0, 9), (20, 40)]
    assert s.size == 31
    assert s.format() == "[0,9] u [20,40]"
    assert 9 in s and 10 not in s and 40 in s


def test_intersect_by_hand():
    a = IntervalSet([(0, 10), (20, 30)])
    b = IntervalSet([(5, 25)])
    assert intersect(a, b).as_pairs() == [(5, 10), (20, 25)]
    assert not intersect(IntervalSet([(0, 3)]), IntervalSet([(4, 9)]))


intervals_st = st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)).map(sorted), max_size=6)


@settings(max_examples=100, deadline=None)
@given(intervals_st, intervals_st)
def test_intersect_matches_set_semantics(a, b):
    A, B = IntervalSet(a), IntervalSet(b)
    got = intersect(A, B)
    assert {v for v in range(256) if v in got} == {v for v in range(256) if v in A and v in B}


@settings(max_examples=50, deadline=None)
@given(intervals_st.filter(bool), st.integers(0, 2**32))
def test_samples_stay_inside(a, seed):
    s = IntervalSet(a)
    rng = random.Random(seed)
    assert all(s.sample(rng) in s for _ in range(50))


def test_sampling_is_uniform_over_union():
    s = IntervalSet([(0, 0), (10, 12)])  # 4 values
    rng = random.Random(3)
    counts = {}
    for _ in range(8000):
        v = s.sample(rng)
        counts[v] = counts.get(v, 0) + 1
    assert set(counts) == {0, 10, 11, 12}
    assert all(1800 < c < 2200 for c in counts.values())


def test_exhaustive_width_one():
    for op in OPS:
        for c in range(256):
            for inv in (False, True):
                s = condition_to_intervals(op, c, invert=inv)
                for x in range(0, 256, 1):
                    assert (x in s) == (PRED[op](x, c) != inv)


def _system(seed_byte2, target_line, mode="ST-all"):
    prog = builtin_program("fig_intervals")
    seed = bytes([0, 0, seed_byte2] + [0] * 13)
    rep = fti_infer(prog, seed, rng=0)
    target = [k[0] for k in rep.keys].index(target_line)
    return prog, seed, build_system(rep.trace, target, detect_direct_copies(rep), mode, rep.deps)


def test_unsolved_target_collects_guarding_intervals():
    _, _, system = _system(100, 9)
    assert system.groups == {(2, 1): IntervalSet([(11, 200)])}
    assert system.format() == "x[2:1] in [11,200]\nunsolved: 9"


def test_direct_copy_target_is_inverted():
    _, _, system = _system(250, 7)
    # x[2] > 10 held, x[2] <= 200 must now hold
    assert system.groups[(2, 1)].as_pairs() == [(11, 200)]
    assert system.unsolved == []


def test_samples_satisfy_system_branches():
    prog, seed, system = _system(100, 9)
    rng = random.Random(0)
    for _ in range(200):
        data = sample_solution(system, seed, rng)
        trace = prog.execute(data, RECORD).trace
        assert [r.taken for r in trace[:4]] == [False, True, True, True]


def test_conflicting_copies():
    def copy(line, op, c, taken):
        return DirectCopy((line, 0), line, "lhs", 0, 1, c, op, taken)

    class Rec:
        def __init__(self, line):
            self.branch_id = line

    trace = [Rec(1), Rec(2), Rec(3)]
    copies = {(1, 0): copy(1, "<", 10, True), (2, 0): copy(2, ">", 100, False), (3, 0): copy(3, "==", 50, False)}
    # flipping line 3 wants x == 50, which contradicts x < 10
    with pytest.raises(Unsatisfiable):
        build_system(trace, 2, copies, "ST-all")
    one = build_system(trace, 2, copies, "ST-one")
    assert one.groups[(0, 1)].as_pairs() == [(50, 50)]


def test_rhs_copy_flips_operator():
    trace = [type("R", (), {"branch_id": 4})()]
    # 30 < x was false; inverting wants x > 30
    c = DirectCopy((4, 0), 4, "rhs", 0, 1, 30, "<", False)
    system = build_system(trace, 0, {(4, 0): c})
    assert system.groups[(0, 1)].as_pairs() == [(31, 255)]


def test_unknown_mode():
    with pytest.raises(ValueError):
        build_system([], 0, {}, "ST-some")
