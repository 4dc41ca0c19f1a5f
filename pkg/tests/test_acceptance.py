"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test also checks its runtime limit.  Campaign trials use rng seeds
0..N-1 with no selection.
"""

import io
import math
import random
import statistics
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from greyfuzz import cli
from greyfuzz.bandit import BanditNode, select, update
from greyfuzz.config import CampaignConfig
from greyfuzz.coverage import collision_free_probability, simulate_collisions
from greyfuzz.fuzzer import run_campaign, run_generic_baseline
from greyfuzz.intervals import OPS, IntervalSet, build_system, condition_to_intervals
from greyfuzz.taint import detect_direct_copies, fti_infer, infer_taint
from greyfuzz.vm import RECORD, builtin_program

REFERENCE_TABLE = {
    1: [0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000],
    2: [0.123, 0.007, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000],
    3: [0.931, 0.797, 0.574, 0.317, 0.119, 0.026, 0.003, 0.000],
    4: [0.997, 0.989, 0.967, 0.919, 0.834, 0.701, 0.527, 0.338],
    5: [1.000, 0.999, 0.998, 0.994, 0.984, 0.965, 0.929, 0.871],
}
EDGES = range(3000, 10001, 1000)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_c1_collision_table():
    with Timer() as t:
        worst = 0.0
        for m, row in REFERENCE_TABLE.items():
            for e, want in zip(EDGES, row):
                worst = max(worst, abs(collision_free_probability(16, m, e) - want))
        p48 = collision_free_probability(16, 4, 8000)
        p510 = collision_free_probability(16, 5, 10000)
    assert worst <= 0.001, f"max deviation {worst:.5f}"
    assert round(p48, 3) == 0.701 and round(p510, 3) == 0.871
    assert t.elapsed < 1.0


@pytest.mark.parametrize("m,edges", [(2, 3000), (3, 5000), (4, 8000)])
def test_c2_monte_carlo_agreement(m, edges):
    trials = 1000
    with Timer() as t:
        sim = simulate_collisions(16, m, edges, trials, rng=0)
    p = collision_free_probability(16, m, edges)
    sigma = math.sqrt(p * (1 - p) / trials)
    assert abs(sim - p) <= 3 * sigma, f"simulated {sim:.3f} vs formula {p:.3f} (3 sigma = {3 * sigma:.3f})"
    assert t.elapsed < 120 / 3


def test_c3_taintfast_budget_and_correctness():
    prog = builtin_program("fig_branches")
    seed = bytes(1024)
    exact = {200, 201, 202, 203, 236, 237, 238, 239}
    with Timer() as t:
        one = infer_taint(prog, seed, repeats=1, rng=0)
        fti = fti_infer(prog, seed, rng=0)
        hits = 0
        for trial in range(100):
            rep = infer_taint(prog, seed, repeats=2, rng=trial)
            hits += rep.for_branch(8) == exact
    assert one.executions == 20
    assert one.for_branch(6) == fti.for_branch(6) == {100}
    assert t.elapsed < 30
    assert hits >= 90, f"exact 8-byte set in {hits}/100 trials"


def test_c4_interval_solver():
    with Timer() as t:
        prog = builtin_program("fig_intervals")
        seed = bytes([0, 0, 100] + [0] * 13)
        rep = fti_infer(prog, seed, rng=0)
        target = [k[0] for k in rep.keys].index(9)
        system = build_system(rep.trace, target, detect_direct_copies(rep), "ST-all", rep.deps)
        assert system.groups == {(2, 1): IntervalSet([(11, 200)])}

        rng = random.Random(0)
        group = system.groups[(2, 1)]
        expressible = [rep.trace[i] for i, k in enumerate(rep.keys) if k in system.added]
        for _ in range(10_000):
            v = group.sample(rng)
            data = seed[:2] + bytes([v]) + seed[3:]
            trace = {r.branch_id: r.taken for r in prog.execute(data, RECORD).trace}
            assert all(trace[r.branch_id] == r.taken for r in expressible)

        pred = {
            "==": lambda x, c: x == c, "!=": lambda x, c: x != c, "<": lambda x, c: x < c,
            "<=": lambda x, c: x <= c, ">": lambda x, c: x > c, ">=": lambda x, c: x >= c,
        }
        for op in OPS:
            for c in range(256):
                for inv in (False, True):
                    s = condition_to_intervals(op, c, 1, inv)
                    assert all((x in s) == (pred[op](x, c) != inv) for x in range(256))
    assert t.elapsed < 60


def _swap_bandit(gamma: float, trial: int) -> float:
    """Fraction of pulls 700..1000 going to the post-swap best arm.

    Arm rewards are Bernoulli with payoff 10 and success rates
    (0.8, 0.5, 0.3, 0.2); arms 0 and 3 trade rates at t=500.
    """
    rng = np.random.default_rng(trial)
    tie = random.Random(trial)
    node = BanditNode("synthetic", (0, 1, 2, 3), gamma=gamma)
    rates = [0.8, 0.5, 0.3, 0.2]
    best_after = 3
    hits = 0
    for t in range(1000):
        if t == 500:
            rates[0], rates[3] = rates[3], rates[0]
        arm = select(node, tie)
        update(node, arm, 10.0 * (rng.random() < rates[arm]))
        if t >= 700:
            hits += arm == best_after
    return hits / 300


def test_c5_bandit_adaptation():
    with Timer() as t:
        discounted = statistics.median(_swap_bandit(0.99, k) for k in range(50))
        plain = statistics.median(_swap_bandit(1.0, k) for k in range(50))
    assert discounted > 0.70, f"gamma=0.99 median {discounted:.3f}"
    assert plain < 0.50, f"gamma=1 median {plain:.3f}"
    assert t.elapsed < 10


def _crashed(state) -> bool:
    return "1" in state.crashes


def test_c6_end_to_end_ab():
    budget = 200_000
    with Timer() as t:
        ours = base = 0
        for trial in range(10):
            cfg = CampaignConfig(program="magic_deep", iterations=10**9, max_executions=budget, rng_seed=trial)
            st = run_campaign(cfg, on_iteration=_crashed)
            ours += _crashed(st) and st.crashes["1"] <= budget
            st = run_generic_baseline(cfg, on_iteration=_crashed)
            base += _crashed(st)
    assert ours >= 9, f"campaign reached the crash in {ours}/10"
    assert base <= 1, f"baseline reached the crash in {base}/10"
    assert t.elapsed < 600


def _reaches(state, block) -> bool:
    return any(block in {b for _, b in s.path_edges} for s in state.all_seeds())


def test_c7_flushing_benefit():
    prog = builtin_program("fig_loopcount")
    f2 = prog.site(10).then_block
    with Timer() as t:
        counts = {}
        for flush in (True, False):
            n = 0
            for trial in range(10):
                cfg = CampaignConfig(
                    program="fig_loopcount", iterations=300, rng_seed=trial, inner_budget=16,
                    switch_every=0, flush=flush, flush_every=6, flush_window=5,
                )
                n += _reaches(run_campaign(cfg, on_iteration=lambda s: _reaches(s, f2)), f2)
            counts[flush] = n
    assert counts[True] >= 8, f"with flushing: {counts[True]}/10"
    assert counts[False] <= 3, f"without flushing: {counts[False]}/10"
    assert t.elapsed < 300


def test_c8_label_switching():
    with Timer() as t:
        med = {}
        for m in (4, 1):
            edges = []
            for trial in range(10):
                cfg = CampaignConfig(
                    program="wide_shallow", iterations=100, rng_seed=trial, m=m, map_bits=10,
                    switch_every=10, inner_budget=64, flush=False,
                )
                edges.append(len(run_campaign(cfg).precise_edges()))
            med[m] = statistics.median(edges)
    assert med[4] >= 1.05 * med[1], f"median precise edges m=4 {med[4]} vs m=1 {med[1]}"
    assert t.elapsed < 300


def _run(argv) -> tuple[int, str]:
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(argv)
    return code, buf.getvalue()


def test_c9_determinism(tmp_path):
    seed = tmp_path / "seed.bin"
    seed.write_bytes(bytes([0, 0, 100] + [0] * 13))
    commands = [
        ["fuzz", "--program", "fig_intervals", "--iterations", "25", "--rng-seed", "3"],
        ["baseline", "--program", "fig_intervals", "--iterations", "25", "--rng-seed", "3"],
        ["taint", "--program", "fig_branches", "--rng-seed", "3"],
        ["solve", "--program", "fig_intervals", "--seed", str(seed), "--branch", "9", "--samples", "5", "--rng-seed", "3"],
        ["cov-analyze", "--m", "3", "--edges", "2000", "--simulate", "50", "--rng-seed", "3"],
        ["corpus"],
    ]
    for argv in commands:
        outs = []
        for run in range(2):
            extra = []
            if argv[0] in ("fuzz", "baseline"):
                stats = tmp_path / f"{argv[0]}-{run}.jsonl"
                extra = ["--stats-out", str(stats)]
            code, text = _run(argv + extra)
            assert code == 0, argv
            if extra:
                text += stats.read_text()
            outs.append(text)
        assert outs[0] == outs[1], argv[0]
