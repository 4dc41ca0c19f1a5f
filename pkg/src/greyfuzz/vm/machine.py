from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compiler import BranchRecord, BranchSite, Compiled, Crash, compile_module
from .lang import parse

NORMAL = "normal"
RECORD = "record"
FORCED = "forced"
MODES = (NORMAL, RECORD, FORCED)

OUTCOME_NORMAL = "normal"
OUTCOME_CRASH = "crash"
OUTCOME_DIVERGED = "forced-divergence"


@dataclass(frozen=True)
class ExecutionResult:
    """Everything an instrumented run exposes.

    ``path`` is the sequence of basic blocks entered; ``edges`` pairs them up.
    In normal mode ``trace`` is empty (light instrumentation only).
    """

    trace: tuple
    path: tuple
    outcome: str
    crash_site: str | None
    duration: int

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.path, self.path[1:]))

    @property
    def crashed(self) -> bool:
        return self.outcome == OUTCOME_CRASH

    @property
    def taken(self) -> list[bool]:
        return [rec.taken for rec in self.trace]


@dataclass(frozen=True)
class TargetProgram:
    name: str
    source: str
    input_size: int
    n_blocks: int
    block_costs: tuple
    sites: dict = field(compare=False)
    labels: tuple = field(compare=False)
    map_bits: int = 16
    _compiled: Compiled = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.labels)

    def relabel(self, m: int = 4, map_bits: int = 16, seed: int = 0) -> "TargetProgram":
        return dataclasses.replace(
            self, labels=draw_labels(self.n_blocks, m, map_bits, seed), map_bits=map_bits
        )

    def site(self, branch_id: int) -> BranchSite:
        return self.sites[branch_id]

    def execute(self, data: bytes, mode: str = NORMAL, forced_trace=None) -> ExecutionResult:
        return execute(self, data, mode, forced_trace)


def draw_labels(n_blocks: int, m: int, map_bits: int, seed: int) -> tuple:
    if m < 1:
        raise ValueError("need at least one label per block")
    rng = np.random.default_rng(seed)
    table = rng.integers(0, 1 << map_bits, size=(m, n_blocks))
    return tuple(tuple(int(v) for v in row) for row in table)


def load_program(
    source: str, name: str = "<text>", m: int = 4, map_bits: int = 16, label_seed: int = 0
) -> TargetProgram:
    module = parse(source)
    compiled = compile_module(module)
    return TargetProgram(
        name=name,
        source=source,
        input_size=module.input_size,
        n_blocks=compiled.n_blocks,
        block_costs=compiled.block_costs,
        sites=compiled.sites,
        labels=draw_labels(compiled.n_blocks, m, map_bits, label_seed),
        map_bits=map_bits,
        _compiled=compiled,
    )


def load_program_file(path, **kwargs) -> TargetProgram:
    path = Path(path)
    return load_program(path.read_text(), name=path.stem, **kwargs)


def execute(program: TargetProgram, data: bytes, mode: str = NORMAL, forced_trace=None) -> ExecutionResult:
    """Run ``program`` on ``data``.

    ``forced_trace`` (required iff ``mode == "forced"``) is a sequence of
    BranchRecords or booleans; every branch takes the stored edge in order and
    operands are still computed from ``data``.  Running past the end of the
    stored trace, or finishing with entries left over, ends the run with a
    forced-divergence outcome.
    """
    if len(data) != program.input_size:
        raise ValueError(f"input is {len(data)} bytes, program expects {program.input_size}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if (mode == FORCED) != (forced_trace is not None):
        raise ValueError("forced_trace is required exactly in forced mode")

    path: list[int] = []
    trace: list = []
    forced = None
    if mode == FORCED:
        stored = [t.taken if isinstance(t, BranchRecord) else bool(t) for t in forced_trace]
        forced = iter(stored).__next__
    recorder = trace.append if mode != NORMAL else None

    outcome, site = OUTCOME_NORMAL, None
    try:
        program._compiled.run(data, forced, recorder, path.append)
        if forced is not None:
            # anything left unread is a length mismatch
            try:
                forced()
            except StopIteration:
                pass
            else:
                outcome = OUTCOME_DIVERGED
    except Crash as exc:
        outcome, site = OUTCOME_CRASH, exc.site
    except StopIteration:
        outcome = OUTCOME_DIVERGED

    costs = program.block_costs
    duration = sum(map(costs.__getitem__, path))
    return ExecutionResult(tuple(trace), tuple(path), outcome, site, duration)
