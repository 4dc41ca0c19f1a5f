"""The parameterized mutation catalogue."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from .bandit import DECISIONS
from .ga import GAParams, ga_invert_branch, ga_positions
from .intervals import Unsatisfiable, build_system, condition_to_intervals, sample_solution, FLIP
from .vm import RECORD

VANILLA = DECISIONS["Vanilla"]
DATAFLOW = DECISIONS["Data-flow"]
STRATEGIES = VANILLA + DATAFLOW

# strategy -> {param name: decision whose arms bound it}
PARAM_DOMAINS = {
    "Mutate-rand-bytes": {"type": "Mutate-rand-bytes/Type"},
    "Copy-remove": {"number": "Copy-remove/Number", "mode": "Copy-remove/Mode"},
    "Combiner": {"number": "Combiner/Number", "select": "Combiner/Select", "mode": "Combiner/Mode"},
    "Mutate-bytes": {"number": "Mutate-bytes/Number", "bias": "Mutate-bytes/Type"},
    "Invert-branches": {},
    "Invert-branches-GA": {},
    "System-solver": {"type": "System-solver/Type"},
    "Mingler": {"number": "Mingler/Number"},
}
SIMPLE_COUNTS = (1, 2, 4, 8)
DEFAULT_DELIMITERS = b"\n,;: \t\x00"


class NoMutation(Exception):
    """The strategy had nothing to do (no archive, unsatisfiable system, ...)."""


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class MutationChoice:
    strategy: str
    params: tuple = ()  # sorted (name, value) pairs

    def __post_init__(self):
        validate(self)

    @classmethod
    def of(cls, strategy: str, **params) -> "MutationChoice":
        return cls(strategy, tuple(sorted(params.items())))

    def get(self, name, default=None):
        return dict(self.params).get(name, default)

    def describe(self) -> list:
        return [self.strategy, *[f"{k}={v}" for k, v in self.params]]


def validate(choice: MutationChoice):
    if choice.strategy not in PARAM_DOMAINS:
        raise ContractError(f"unknown strategy {choice.strategy!r}")
    params = dict(choice.params)
    domains = PARAM_DOMAINS[choice.strategy]
    for name, value in params.items():
        if choice.strategy == "Mutate-rand-bytes" and name == "k":
            if params.get("type") != "MRB-GA" or value not in DECISIONS["MRB-GA"]:
                raise ContractError(f"bad MRB-GA byte count {value!r}")
            continue
        if choice.strategy == "Mutate-rand-bytes" and name == "bias":
            if params.get("type") != "MRB-simple" or value not in DECISIONS["MRB-simple"]:
                raise ContractError(f"bad MRB-simple flag {value!r}")
            continue
        if name not in domains:
            raise ContractError(f"{choice.strategy} has no parameter {name!r}")
        if value not in DECISIONS[domains[name]]:
            raise ContractError(f"{name}={value!r} outside {DECISIONS[domains[name]]}")


@dataclass
class MutationContext:
    """What mutations may read besides the seed.

    ``execute(data, mode, forced_trace)`` runs the target (and is where the
    caller counts executions).  ``target`` is the index of the branch record
    the data-flow strategies aim at.
    """

    execute: object = None
    pool: list = field(default_factory=list)
    taint: object = None
    direct_copies: dict = field(default_factory=dict)
    target: int | None = None
    byte_rewards: Counter = field(default_factory=Counter)
    delimiters: Counter = field(default_factory=Counter)
    cr_positions: list = field(default_factory=list)
    archive: list = field(default_factory=list)  # (offset, bytes)
    ga: GAParams = field(default_factory=GAParams)
    ga_position_generations: int = 3
    ga_invert_generations: int = 8
    ga_cache: dict = field(default_factory=dict)


@dataclass
class Mutant:
    data: bytes
    positions: tuple = ()  # offsets written in the output
    cr_ops: tuple = ()  # (position, boundary byte) of copy/remove operations


def _weighted_positions(candidates, k: int, bias: bool, rewards: Counter, rng: random.Random) -> list[int]:
    candidates = list(candidates)
    k = min(k, len(candidates))
    if not bias:
        return rng.sample(candidates, k)
    weights = [1 + rewards[p] for p in candidates]
    chosen: list[int] = []
    while len(chosen) < k:
        i = rng.choices(range(len(candidates)), weights=weights)[0]
        chosen.append(candidates[i])
        weights[i] = 0
        if not any(weights):
            break
    return chosen


def _random_bytes(data: bytes, positions, rng: random.Random) -> bytes:
    buf = bytearray(data)
    for p in positions:
        v = rng.randrange(255)
        buf[p] = v if v < buf[p] else v + 1  # always a different value
    return bytes(buf)


# vanilla ---------------------------------------------------------------------


def mutate_rand_bytes(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    if choice.get("type") == "MRB-GA":
        k = choice.get("k")
        key = (seed, k)
        if key not in ctx.ga_cache:
            if ctx.execute is None:
                raise ContractError("MRB-GA needs an executor")
            positions, _ = ga_positions(
                seed, k, ctx.execute, ctx.ga_position_generations, rng, ctx.ga
            )
            ctx.ga_cache[key] = sorted(positions)
        positions = ctx.ga_cache[key]
    else:
        k = rng.choice(SIMPLE_COUNTS)
        positions = _weighted_positions(range(len(seed)), k, bool(choice.get("bias")), ctx.byte_rewards, rng)
    return Mutant(_random_bytes(seed, positions, rng), tuple(positions))


def _delimited(seed: bytes, ctx: MutationContext) -> list[int]:
    """Positions right after a learned delimiter byte."""
    pool = set(ctx.delimiters) or set(DEFAULT_DELIMITERS)
    return [i + 1 for i, b in enumerate(seed[:-1]) if b in pool]


def copy_remove(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    number = choice.get("number", 0)
    mode = choice.get("mode", "CR-rand")
    buf = bytearray(seed)
    ops = []
    for _ in range(number):
        if len(buf) < 2:
            break
        if mode == "CR-learn":
            cuts = _delimited(bytes(buf), ctx)
        elif mode == "CR-prev":
            cuts = [p for p in ctx.cr_positions if 0 < p < len(buf)]
        else:
            cuts = []
        pos = rng.choice(cuts) if cuts else rng.randrange(len(buf))
        length = min(1 << rng.randrange(5), len(buf) - 1)
        boundary = buf[pos - 1] if pos > 0 else buf[0]
        if rng.random() < 0.5:
            # remove
            del buf[pos : pos + length]
        else:
            if mode == "CR-rand":
                chunk = bytes(rng.randrange(256) for _ in range(length))
            else:
                # copies always come from the original seed
                marks = _delimited(seed, ctx) if mode == "CR-learn" else []
                if marks:
                    start = rng.choice(marks)
                    after = [c for c in marks if c > start]
                    end = after[0] if after else len(seed)
                else:
                    length = min(length, len(seed))
                    start = rng.randrange(len(seed) - length + 1)
                    end = start + length
                chunk = seed[start:end]
            buf[pos:pos] = chunk
        ops.append((pos, boundary))
    return Mutant(bytes(buf), (), tuple(ops))


def _combine_select(seed: bytes, pool, number: int, select: str, rng) -> list[bytes]:
    others = [s for s in pool if s.data != seed]
    picked = [seed]
    if not others:
        return picked
    if select == "Select-random":
        weights = None
    else:
        inverse = rng.random() < 0.5
        metric = (lambda s: s.duration) if select.startswith("Speed") else (lambda s: max(1, s.length))
        # Speed prefers faster seeds (weight 1/duration); Inverse-speed slower ones
        weights = [metric(s) if inverse else 1.0 / metric(s) for s in others]
    for _ in range(number - 1):
        picked.append(rng.choices(others, weights=weights)[0].data)
    return picked


def combiner(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    number = choice.get("number", 2)
    parts = _combine_select(seed, ctx.pool, number, choice.get("select", "Select-random"), rng)
    n = len(seed)
    if len(parts) < 2 or n < 2:
        return Mutant(seed)
    if choice.get("mode") == "CM-learn":
        cuts = sorted(set(_delimited(seed, ctx)))
    else:
        cuts = []
    if len(cuts) < len(parts) - 1:
        cuts = list(range(1, n))
    cuts = sorted(rng.sample(cuts, min(len(parts) - 1, len(cuts))))
    out = bytearray(seed)
    bounds = [0, *cuts, n]
    for src, lo, hi in zip(parts, bounds, bounds[1:]):
        seg = src[lo:hi]  # a shorter part leaves the seed's tail in place
        out[lo : lo + len(seg)] = seg
    return Mutant(bytes(out))


# data-flow ---------------------------------------------------------------------


def _require_taint(ctx: MutationContext):
    if ctx.taint is None:
        raise ContractError("data-flow mutation without taint information")
    if ctx.target is None:
        raise NoMutation("no target branch")


def _target_deps(ctx: MutationContext) -> list[int]:
    key = ctx.taint.keys[ctx.target]
    return sorted(ctx.taint.deps.get(key, ()))


def mutate_bytes(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    _require_taint(ctx)
    deps = _target_deps(ctx)
    if not deps:
        raise NoMutation("target branch has no dependent bytes")
    positions = _weighted_positions(deps, choice.get("number", 1), bool(choice.get("bias")), ctx.byte_rewards, rng)
    return Mutant(_random_bytes(seed, positions, rng), tuple(positions))


def invert_branch(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    """Write a value that flips the target on its own when the operand is a
    direct copy; otherwise re-randomize all of its dependent bytes."""
    _require_taint(ctx)
    key = ctx.taint.keys[ctx.target]
    copy = ctx.direct_copies.get(key)
    if copy is not None:
        op = copy.operator if copy.side == "lhs" else FLIP[copy.operator]
        target = condition_to_intervals(op, copy.constant, copy.width, invert=copy.taken)
        if not target:
            raise NoMutation("branch cannot be inverted")
        buf = bytearray(seed)
        buf[copy.offset : copy.offset + copy.width] = target.sample(rng).to_bytes(copy.width, "little")
        return Mutant(bytes(buf), tuple(range(copy.offset, copy.offset + copy.width)))
    deps = _target_deps(ctx)
    if not deps:
        raise NoMutation("target branch has no dependent bytes")
    return Mutant(_random_bytes(seed, deps, rng), tuple(deps))


def invert_branch_ga(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    _require_taint(ctx)
    if not _target_deps(ctx):
        raise NoMutation("target branch has no dependent bytes")
    res = ga_invert_branch(seed, ctx.target, ctx.taint, ctx.execute, ctx.ga_invert_generations, rng, ctx.ga)
    if not res.ok:
        raise NoMutation("inversion budget exhausted")
    return Mutant(res.data, tuple(_target_deps(ctx)))


def system_solver(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    _require_taint(ctx)
    try:
        system = build_system(ctx.taint.trace, ctx.target, ctx.direct_copies, choice.get("type", "ST-all"), ctx.taint.deps)
    except Unsatisfiable as exc:
        raise NoMutation(str(exc)) from None
    if not system.groups:
        raise NoMutation("no interval constraints on the target's bytes")
    out = sample_solution(system, seed, rng)
    touched = tuple(p for off, w in system.groups for p in range(off, off + w))
    return Mutant(out, touched)


def mingle(seed: bytes, archive, count: int, rng=None) -> bytes:
    """Splice up to ``count`` archived (offset, bytes) solutions into ``seed``."""
    return _mingle(seed, archive, count, rng).data


def _mingle(seed: bytes, archive, count: int, rng=None) -> Mutant:
    if not archive:
        raise NoMutation("empty archive")
    rng = rng or random.Random(0)
    entries = list(archive) if count >= len(archive) else rng.sample(list(archive), count)
    buf = bytearray(seed)
    touched: list[int] = []
    for off, chunk in entries:
        if off < 0 or off + len(chunk) > len(buf):
            continue
        buf[off : off + len(chunk)] = chunk
        touched.extend(range(off, off + len(chunk)))
    return Mutant(bytes(buf), tuple(touched))


def mingler(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    return _mingle(seed, ctx.archive, choice.get("number", 1), rng)


HANDLERS = {
    "Mutate-rand-bytes": mutate_rand_bytes,
    "Copy-remove": copy_remove,
    "Combiner": combiner,
    "Mutate-bytes": mutate_bytes,
    "Invert-branches": invert_branch,
    "Invert-branches-GA": invert_branch_ga,
    "System-solver": system_solver,
    "Mingler": mingler,
}


def mutate_with_notes(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> Mutant:
    return HANDLERS[choice.strategy](seed, choice, ctx, rng)


def mutate(seed: bytes, choice: MutationChoice, ctx: MutationContext, rng) -> bytes:
    """Apply ``choice`` to ``seed``; raises NoMutation when the strategy has
    nothing to offer and ContractError on misuse."""
    return mutate_with_notes(seed, choice, ctx, rng).data


def learn(ctx: MutationContext, seed: bytes, mutant: Mutant, gain: int, max_archive: int = 256):
    """Fold a rewarded mutation back into the shared history."""
    if gain <= 0:
        return
    for p in mutant.positions:
        ctx.byte_rewards[p] += 1
    for pos, boundary in mutant.cr_ops:
        ctx.cr_positions.append(pos)
        ctx.delimiters[boundary] += 1
    out = mutant.data
    # archive each contiguous run of changed bytes
    run_start = None
    n = min(len(seed), len(out))
    for i in range(n + 1):
        diff = i < n and seed[i] != out[i]
        if diff and run_start is None:
            run_start = i
        elif not diff and run_start is not None:
            if i - run_start <= 16:
                ctx.archive.append((run_start, bytes(out[run_start:i])))
            run_start = None
    del ctx.archive[:-max_archive]
    del ctx.cr_positions[:-max_archive]
