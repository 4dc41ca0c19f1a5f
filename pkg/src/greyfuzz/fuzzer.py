"""Campaign orchestration: one iteration, the main loop with label switching
and coverage flushing, and the plain baseline loop."""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import taint as taint_mod
from .bandit import DECISIONS, MUTATION_PARAMS, BanditNode, Reward, RewardNormalizer, make_bandits, select, update_path
from .config import CampaignConfig
from .coverage import CoverageSet, FlushSnapshot, coverage_increase, produce_coverage, start_flush, stop_flush
from .ga import GAParams
from .mutators import MutationChoice, MutationContext, Mutant, NoMutation, learn, mutate_with_notes
from .pool import SeedEntry, classify, sample
from .vm import NORMAL, RECORD, TargetProgram, builtin_names, builtin_program, load_program_file

BASELINE_DATAFLOW = ("Mutate-bytes", "Invert-branches", "Invert-branches-GA", "Mingler")
BASELINE_PARAMS = {
    "Mutate-rand-bytes": {"type": "MRB-simple", "bias": False},
    "Copy-remove": {"number": 1, "mode": "CR-rand"},
    "Combiner": {"number": 2, "select": "Select-random", "mode": "CM-random"},
    "Mutate-bytes": {"number": 1, "bias": False},
    "Invert-branches": {},
    "Invert-branches-GA": {},
    "Mingler": {"number": 1},
}


class CountingProgram:
    """Wraps a TargetProgram; every execution is counted and timed."""

    def __init__(self, program: TargetProgram):
        self.program = program
        self.input_size = program.input_size
        self.executions = 0
        self.time = 0

    def execute(self, data, mode=NORMAL, forced_trace=None):
        res = self.program.execute(data, mode, forced_trace)
        self.executions += 1
        self.time += res.duration
        return res

    __call__ = execute


@dataclass
class CampaignState:
    config: CampaignConfig
    program: TargetProgram
    runner: CountingProgram
    rng: random.Random
    pool: list
    coverage: CoverageSet
    initial: list  # initial seed bytes
    bandits: dict | None
    normalizer: RewardNormalizer
    ctx: MutationContext
    label_index: int = 0
    iteration: int = 0
    snapshot: FlushSnapshot | None = None
    flush_started: int | None = None
    taint_cache: dict = field(default_factory=dict)
    seen: set = field(default_factory=set)  # (branch_id, taken) observed in record runs
    crashes: dict = field(default_factory=dict)  # site -> executions when first hit
    stats: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    mab_updates: int = 0
    taint_executions: int = 0
    last_taint_executions: int = 0

    @property
    def executions(self) -> int:
        return self.runner.executions

    @property
    def time(self) -> int:
        return self.runner.time

    @property
    def labels(self):
        return self.program.labels[self.label_index]

    def budget_left(self) -> bool:
        cap = self.config.max_executions
        return cap is None or self.runner.executions < cap

    def all_seeds(self) -> list:
        seeds = list(self.pool)
        if self.snapshot is not None:
            have = {s.data for s in seeds}
            seeds.extend(s for s in self.snapshot.seeds if s.data not in have)
        return seeds

    def precise_edges(self) -> set:
        """Ground-truth (block, block) edges exercised by the kept seeds."""
        out: set = set()
        for s in self.all_seeds():
            out |= s.path_edges
        return out


def resolve_program(config: CampaignConfig) -> TargetProgram:
    label_seed = config.rng_seed if config.label_seed is None else config.label_seed
    m = 1 if config.baseline else config.m
    if config.program in builtin_names():
        return builtin_program(config.program, m=m, map_bits=config.map_bits, label_seed=label_seed)
    return load_program_file(config.program, m=m, map_bits=config.map_bits, label_seed=label_seed)


def _fit(data: bytes, size: int) -> bytes:
    if len(data) == size:
        return data
    return data[:size] if len(data) > size else data + bytes(size - len(data))


def _coverage(state: CampaignState, result) -> CoverageSet:
    return produce_coverage(result.path, state.labels, state.program.map_bits, state.label_index)


def _entry(state: CampaignState, data: bytes, result, cov: CoverageSet, origin: str, gain=None) -> SeedEntry:
    return SeedEntry(
        data=data,
        coverage=cov,
        duration=result.duration,
        path_edges=frozenset(zip(result.path, result.path[1:])),
        crashed=result.crashed,
        crash_site=result.crash_site,
        cov_increase_history=[] if gain is None else [gain],
        origin=origin,
    )


def _note_crash(state: CampaignState, result):
    if result.crashed and result.crash_site not in state.crashes:
        state.crashes[result.crash_site] = state.runner.executions


def _observe_directions(state: CampaignState, data: bytes):
    for rec in state.runner.execute(data, RECORD).trace:
        state.seen.add((rec.branch_id, rec.taken))


def _restricted_bandits(config: CampaignConfig) -> dict:
    nodes = make_bandits(config.gamma, config.c, config.xi)
    if not config.strategies:
        return nodes
    groups = []
    for group in ("Vanilla", "Data-flow"):
        arms = [a for a in DECISIONS[group] if a in config.strategies]
        if arms:
            nodes[group] = BanditNode(group, arms, config.gamma, config.c, config.xi)
            groups.append(group)
        else:
            del nodes[group]
    nodes["Fuzzer_strategy"] = BanditNode("Fuzzer_strategy", groups, config.gamma, config.c, config.xi)
    return nodes


def initial_state(config: CampaignConfig, program: TargetProgram | None = None, seeds=None) -> CampaignState:
    config.validate()
    program = program or resolve_program(config)
    if config.baseline and program.m != 1:
        program = program.relabel(1, program.map_bits, config.rng_seed if config.label_seed is None else config.label_seed)
    if seeds is None:
        seeds = [Path(p).read_bytes() for p in config.seeds] or [bytes(program.input_size)]
    seeds = [_fit(bytes(s), program.input_size) for s in seeds]
    runner = CountingProgram(program)
    rng = random.Random(config.rng_seed)
    ga = GAParams(config.ga_population, config.ga_tournament, config.ga_elitism)
    ctx = MutationContext(
        execute=runner.execute,
        ga=ga,
        ga_position_generations=config.ga_position_generations,
        ga_invert_generations=config.ga_invert_generations,
    )
    state = CampaignState(
        config=config,
        program=program,
        runner=runner,
        rng=rng,
        pool=[],
        coverage=CoverageSet(frozenset(), 0),
        initial=seeds,
        bandits=None if config.baseline else _restricted_bandits(config),
        normalizer=RewardNormalizer(),
        ctx=ctx,
    )
    for data in seeds:
        res = runner.execute(data)
        _note_crash(state, res)
        cov = _coverage(state, res)
        state.coverage = state.coverage.union(cov)
        state.pool.append(_entry(state, data, res, cov, "initial"))
        _observe_directions(state, data)
    ctx.pool = state.pool
    state.timeline.append((0, len(state.coverage), state.executions))
    state.stats.append({
        "type": "init",
        "program": program.name,
        "input_size": program.input_size,
        "m": program.m,
        "map_bits": program.map_bits,
        "seeds": len(seeds),
        "coverage": len(state.coverage),
        "executions": state.executions,
        "time": state.time,
    })
    return state


# taint ---------------------------------------------------------------------------


def taint_for(state: CampaignState, data: bytes):
    """Cached dependency report and direct-copy map for a seed."""
    hit = state.taint_cache.get(data)
    before = state.executions
    if hit is None:
        cfg = state.config
        threshold = float("inf") if cfg.baseline else cfg.fti_threshold
        report = taint_mod.infer(
            state.runner, data, cfg.taint_repeats, np.random.default_rng(state.rng.getrandbits(32)),
            fti_threshold=threshold, fti_values=cfg.fti_values,
        )
        hit = (report, taint_mod.detect_direct_copies(report))
        report.observations = []  # only needed for direct-copy detection
        state.taint_cache[data] = hit
    state.last_taint_executions = state.executions - before
    state.taint_executions += state.last_taint_executions
    return hit


def pick_target(state: CampaignState, report) -> int | None:
    """A record whose opposite direction has not been seen yet, if any."""
    live = [i for i, k in enumerate(report.keys) if report.deps.get(k)]
    if not live:
        return None
    fresh = [i for i in live if (report.trace[i].branch_id, not report.trace[i].taken) not in state.seen]
    return state.rng.choice(fresh or live)


# one iteration -------------------------------------------------------------------


def _choose_mutation(state: CampaignState, strategy: str):
    """(MutationChoice, bandit path) for the mutation level."""
    b = state.bandits
    rng = state.rng
    mut = select(b[strategy], rng)
    path = [(b[strategy], mut)]
    params = {}
    if mut == "Mutate-rand-bytes":
        kind = select(b["Mutate-rand-bytes/Type"], rng)
        path.append((b["Mutate-rand-bytes/Type"], kind))
        params["type"] = kind
        sub = "MRB-GA" if kind == "MRB-GA" else "MRB-simple"
        value = select(b[sub], rng)
        path.append((b[sub], value))
        params["k" if kind == "MRB-GA" else "bias"] = value
    else:
        names = {
            "Copy-remove/Number": "number", "Copy-remove/Mode": "mode",
            "Combiner/Number": "number", "Combiner/Select": "select", "Combiner/Mode": "mode",
            "Mutate-bytes/Number": "number", "Mutate-bytes/Type": "bias",
            "System-solver/Type": "type", "Mingler/Number": "number",
        }
        for decision in MUTATION_PARAMS[mut]:
            value = select(b[decision], rng)
            path.append((b[decision], value))
            params[names[decision]] = value
    return MutationChoice.of(mut, **params), path


def _try_mutation(state: CampaignState, seed: SeedEntry, choice: MutationChoice):
    """Mutate, execute and score; returns (gain, mutant or None)."""
    try:
        mutant = mutate_with_notes(seed.data, choice, state.ctx, state.rng)
    except NoMutation:
        return 0, None
    data = _fit(mutant.data, state.program.input_size)
    res = state.runner.execute(data)
    _note_crash(state, res)
    cov = _coverage(state, res)
    gain = coverage_increase(cov, state.coverage)
    if gain > 0:
        state.coverage = state.coverage.union(cov)
        state.pool.append(_entry(state, data, res, cov, choice.strategy, gain))
        _observe_directions(state, data)
        learn(state.ctx, seed.data, Mutant(data, mutant.positions, mutant.cr_ops), gain)
    return gain, mutant


def one_iteration(state: CampaignState) -> CampaignState:
    """Seed class, criterion, seed, strategy, optional taint, then the inner
    mutation loop with per-mutation bandit updates and one final update."""
    if not state.pool:
        raise ValueError("seed pool is empty")
    if state.config.baseline:
        return _baseline_iteration(state)
    b = state.bandits
    rng = state.rng
    t0 = state.time
    use_class = select(b["Seed_class"], rng)
    use_crit = select(b["Seed_criterion"], rng)
    seed = sample(classify(state.pool, use_class), use_crit, rng)
    seed.sample_count += 1
    use_strategy = select(b["Fuzzer_strategy"], rng)

    state.ctx.taint = None
    state.ctx.direct_copies = {}
    state.last_taint_executions = 0
    if use_strategy == "Data-flow":
        report, copies = taint_for(state, seed.data)
        state.ctx.taint = report
        state.ctx.direct_copies = copies

    total = 0
    log = []
    for _ in range(state.config.inner_budget):
        if not state.budget_left():
            break
        m0 = state.time
        choice, path = _choose_mutation(state, use_strategy)
        if use_strategy == "Data-flow":
            state.ctx.target = pick_target(state, state.ctx.taint)
        gain, _ = _try_mutation(state, seed, choice)
        value = state.normalizer(Reward(gain, max(state.time - m0, 1)))
        update_path(path, value)
        state.mab_updates += 1
        total += gain
        log.append([*choice.describe(), gain])
    seed.cov_increase_history.append(total)

    value = state.normalizer(Reward(total, max(state.time - t0, 1)))
    update_path([(b["Seed_class"], use_class), (b["Seed_criterion"], use_crit),
                 (b["Fuzzer_strategy"], use_strategy)], value)
    state.mab_updates += 1
    _finish_iteration(state, [use_class, use_crit, use_strategy], log, total, value)
    return state


def _baseline_iteration(state: CampaignState) -> CampaignState:
    rng = state.rng
    seed = sample(state.pool, "Count", rng)
    seed.sample_count += 1
    arms = list(DECISIONS["Vanilla"])
    state.ctx.taint = None
    state.last_taint_executions = 0
    if state.config.baseline_dataflow:
        report, copies = taint_for(state, seed.data)
        state.ctx.taint, state.ctx.direct_copies = report, copies
        arms += BASELINE_DATAFLOW
    total = 0
    log = []
    for _ in range(state.config.inner_budget):
        if not state.budget_left():
            break
        mut = rng.choice(arms)
        choice = MutationChoice.of(mut, **BASELINE_PARAMS[mut])
        if state.ctx.taint is not None:
            state.ctx.target = pick_target(state, state.ctx.taint)
        gain, _ = _try_mutation(state, seed, choice)
        total += gain
        log.append([*choice.describe(), gain])
    seed.cov_increase_history.append(total)
    _finish_iteration(state, ["SC-all", "Count", "baseline"], log, total, None)
    return state


def _finish_iteration(state: CampaignState, choices, log, total, value):
    state.iteration += 1
    state.timeline.append((state.iteration, len(state.coverage), state.executions))
    state.stats.append({
        "type": "iteration",
        "iteration": state.iteration,
        "time": state.time,
        "executions": state.executions,
        "choices": choices,
        "taint_executions": state.last_taint_executions,
        "mutations": log,
        "gain": total,
        "reward": None if value is None else round(value, 9),
        "coverage": len(state.coverage),
        "pool": len(state.pool),
        "label_index": state.label_index,
        "flushing": state.snapshot is not None,
    })


# label switching and flushing ----------------------------------------------------


def _recompute(state: CampaignState, seeds) -> CoverageSet:
    """Re-execute ``seeds`` under the active labels, refreshing their
    coverage; returns the union.  Seeds past ``recompute_cap`` are left with
    empty coverage under the new labels."""
    cap = state.config.recompute_cap
    acc = CoverageSet(frozenset(), state.label_index)
    for i, s in enumerate(seeds):
        if cap is not None and i >= cap:
            s.coverage = CoverageSet(frozenset(), state.label_index)
            continue
        res = state.runner.execute(s.data)
        s.coverage = _coverage(state, res)
        acc = acc.union(s.coverage)
    return acc


def switch_labels(state: CampaignState):
    state.label_index = (state.label_index + 1) % state.program.m
    state.coverage = _recompute(state, state.pool)
    if state.snapshot is not None:
        have = {s.data: s.coverage for s in state.pool}
        old = [s for s in state.snapshot.seeds if s.data not in have]
        cov = _recompute(state, old)
        for s in state.snapshot.seeds:
            if s.data in have:
                # snapshot entries are distinct objects from the live ones
                s.coverage = have[s.data]
                cov = cov.union(s.coverage)
        state.snapshot = FlushSnapshot(cov, state.snapshot.seeds)
    state.stats.append({"type": "switch", "iteration": state.iteration, "label_index": state.label_index,
                        "coverage": len(state.coverage), "executions": state.executions})


def flush_cycle(state: CampaignState) -> CampaignState:
    """Start a flush when none is running, otherwise stop the running one."""
    if state.snapshot is None:
        fresh = []
        for data in state.initial:
            res = state.runner.execute(data)
            fresh.append(_entry(state, data, res, _coverage(state, res), "initial"))
        init_cov = CoverageSet(frozenset(), state.label_index)
        for s in fresh:
            init_cov = init_cov.union(s.coverage)
        state.snapshot, state.coverage = start_flush(state.coverage, state.pool, init_cov)
        state.pool[:] = fresh
        state.flush_started = state.iteration
        kind = "flush-start"
    else:
        coverage, seeds = stop_flush(state.snapshot, state.coverage, state.pool, lambda s: s.coverage)
        state.coverage = coverage
        state.pool[:] = seeds
        state.snapshot = None
        state.flush_started = None
        kind = "flush-stop"
    state.stats.append({"type": kind, "iteration": state.iteration, "coverage": len(state.coverage),
                        "pool": len(state.pool), "executions": state.executions})
    return state


def _epochs(state: CampaignState):
    cfg = state.config
    i = state.iteration
    if cfg.baseline:
        return
    if cfg.switch_every and i % cfg.switch_every == 0:
        switch_labels(state)
    if cfg.flush:
        if state.snapshot is None and i % cfg.flush_every == 0:
            flush_cycle(state)
        elif state.snapshot is not None and i - state.flush_started >= cfg.flush_window:
            flush_cycle(state)


def run_campaign(config: CampaignConfig, program: TargetProgram | None = None, seeds=None,
                 on_iteration=None) -> CampaignState:
    state = initial_state(config, program, seeds)
    while state.iteration < config.iterations and state.budget_left():
        one_iteration(state)
        _epochs(state)
        if on_iteration is not None and on_iteration(state):
            break
    if state.snapshot is not None:
        flush_cycle(state)
    _final_record(state)
    return state


def run_generic_baseline(config: CampaignConfig, program: TargetProgram | None = None, seeds=None,
                         on_iteration=None) -> CampaignState:
    return run_campaign(config.replace(baseline=True, flush=False), program, seeds, on_iteration)


def _final_record(state: CampaignState):
    state.stats.append({
        "type": "final",
        "iteration": state.iteration,
        "time": state.time,
        "executions": state.executions,
        "coverage": len(state.coverage),
        "pool": len(state.pool),
        "precise_edges": len(state.precise_edges()),
        "crashes": {site: n for site, n in sorted(state.crashes.items())},
        "taint_executions": state.taint_executions,
        "bandits": None if state.bandits is None else [n.stats() for n in state.bandits.values()],
    })


# output ------------------------------------------------------------------------


def write_stats(state: CampaignState, path):
    with open(path, "w") as fh:
        for rec in state.stats:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_timeline(state: CampaignState, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "coverage", "executions"])
        w.writerows(state.timeline)


def write_corpus(state: CampaignState, directory):
    from .pool import SeedPool

    SeedPool(state.all_seeds()).save(directory)
    crashes = Path(directory) / "crashes.json"
    crashes.write_text(json.dumps(state.crashes, sort_keys=True, indent=1))
