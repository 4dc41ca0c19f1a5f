"""Small genetic algorithms used by the mutators."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .taint import branch_keys
from .vm import FORCED, RECORD

NEGATE = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
FAR = float(1 << 66)  # distance for a branch that was never reached


@dataclass
class GAParams:
    population: int = 32
    tournament: int = 4
    elitism: int = 1
    generations: int = 4


@dataclass
class GAState:
    population: list
    fitness: list
    generation: int = 0
    best_history: list = field(default_factory=list)
    evaluations: int = 0

    def best(self):
        i = max(range(len(self.fitness)), key=self.fitness.__getitem__)
        return self.population[i], self.fitness[i]


def _tournament(state: GAState, size: int, rng: random.Random):
    picks = [rng.randrange(len(state.population)) for _ in range(size)]
    return state.population[max(picks, key=state.fitness.__getitem__)]


def evolve(init, fitness, crossover, mutate, params: GAParams, rng: random.Random,
           generations: int | None = None, stop=None) -> GAState:
    """Generic generational GA maximizing ``fitness``.

    Population size stays constant and the best ``params.elitism``
    individuals survive unchanged, so the best fitness never decreases.
    ``stop(best_fitness)`` ends the run early.
    """
    gens = params.generations if generations is None else generations
    pop = [init() for _ in range(params.population)]
    cache: dict = {}

    def score(ind):
        if ind not in cache:
            cache[ind] = fitness(ind)
            state.evaluations += 1
        return cache[ind]

    state = GAState(pop, [])
    state.fitness = [score(ind) for ind in pop]
    state.best_history.append(state.best()[1])
    while state.generation < gens and not (stop and stop(state.best()[1])):
        order = sorted(range(len(pop)), key=state.fitness.__getitem__, reverse=True)
        nxt = [state.population[i] for i in order[: params.elitism]]
        while len(nxt) < params.population:
            a = _tournament(state, params.tournament, rng)
            b = _tournament(state, params.tournament, rng)
            nxt.append(mutate(crossover(a, b)))
        state.population = nxt
        state.fitness = [score(ind) for ind in nxt]
        state.generation += 1
        state.best_history.append(state.best()[1])
    return state


def affected_branches(execute, seed: bytes, base_trace, positions, xor: np.ndarray) -> int:
    """How many records of ``base_trace`` change an operand when the bytes at
    ``positions`` are XORed with ``xor`` (forced replay)."""
    buf = bytearray(seed)
    for p in positions:
        buf[p] ^= int(xor[p])
    trace = execute(bytes(buf), FORCED, base_trace).trace
    return sum(
        1 for a, b in zip(base_trace, trace)
        if a.lhs_value != b.lhs_value or a.rhs_value != b.rhs_value
    )


def ga_positions(seed: bytes, k: int, execute, generations: int = 4, rng=None,
                 params: GAParams | None = None, base_trace=None) -> tuple[frozenset, GAState]:
    """Search for k byte offsets whose mutation affects the most branches."""
    if k < 1:
        raise ValueError("k must be positive")
    rng = rng or random.Random(0)
    params = params or GAParams()
    n = len(seed)
    k = min(k, n)
    if base_trace is None:
        base_trace = execute(seed, RECORD).trace
    xor = np.array([rng.randrange(1, 256) for _ in range(n)], dtype=np.uint8)

    def init():
        return tuple(sorted(rng.sample(range(n), k)))

    def crossover(a, b):
        pool = sorted(set(a) | set(b))
        return tuple(sorted(rng.sample(pool, k)))

    def mutate(ind):
        s = set(ind)
        for p in ind:
            if rng.random() < 1.0 / k:
                q = rng.randrange(n)
                if q not in s:
                    s.discard(p)
                    s.add(q)
        return tuple(sorted(s))

    state = evolve(
        init,
        lambda ind: affected_branches(execute, seed, base_trace, ind, xor),
        crossover, mutate, params, rng, generations,
    )
    return frozenset(state.best()[0]), state


def branch_distance(lhs: int, op: str, rhs: int, want: bool) -> int:
    """Zero iff ``(lhs op rhs) == want``; otherwise how far lhs is from it."""
    if not want:
        op = NEGATE[op]
    if op == "==":
        return abs(lhs - rhs)
    if op == "!=":
        return 0 if lhs != rhs else 1
    if op == "<":
        return max(0, lhs - rhs + 1)
    if op == "<=":
        return max(0, lhs - rhs)
    if op == ">":
        return max(0, rhs - lhs + 1)
    if op == ">=":
        return max(0, rhs - lhs)
    raise ValueError(op)


@dataclass
class InversionResult:
    data: bytes | None
    distances: list
    evaluations: int

    @property
    def ok(self) -> bool:
        return self.data is not None


def ga_invert_branch(seed: bytes, target: int, taint, execute, generations: int = 8, rng=None,
                     params: GAParams | None = None, want: bool | None = None) -> InversionResult:
    """Minimize the branch distance of ``taint.trace[target]`` over its
    dependent bytes only; success when the record takes edge ``want``
    (default: the opposite of the seed's)."""
    rng = rng or random.Random(0)
    params = params or GAParams()
    trace = taint.trace
    key = branch_keys(trace)[target]
    rec = trace[target]
    want = (not rec.taken) if want is None else want
    if rec.taken == want:
        return InversionResult(seed, [0], 0)
    deps = sorted(taint.deps.get(key, ()))
    if not deps:
        raise ValueError("branch has no dependent bytes")
    base = tuple(seed[p] for p in deps)

    def build(genes) -> bytes:
        buf = bytearray(seed)
        for p, v in zip(deps, genes):
            buf[p] = v
        return bytes(buf)

    def distance(genes) -> float:
        res = execute(build(genes), RECORD, None)
        seen = 0
        for r in res.trace:
            if r.branch_id == key[0]:
                if seen == key[1]:
                    if r.taken == want:
                        return 0
                    return max(1, branch_distance(r.lhs_value, r.operator, r.rhs_value, want))
                seen += 1
        return FAR

    def creep(v: int) -> int:
        if rng.random() < 0.1:
            return rng.randrange(256)
        step = max(1, int(rng.expovariate(1 / 16)))
        return (v + rng.choice((-step, step))) % 256

    def init():
        if rng.random() < 0.5:
            return base
        return tuple(creep(v) if rng.random() < 0.5 else v for v in base)

    def crossover(a, b):
        return tuple(x if rng.random() < 0.5 else y for x, y in zip(a, b))

    rate = 1.0 / len(deps)

    def mutate(ind):
        out = tuple(creep(v) if rng.random() < rate else v for v in ind)
        if out == ind:
            j = rng.randrange(len(ind))
            out = ind[:j] + (creep(ind[j]),) + ind[j + 1 :]
        return out

    state = evolve(
        init, lambda g: -distance(g), crossover, mutate, params, rng, generations,
        stop=lambda best: best == 0,
    )
    best, fit = state.best()
    dists = [-f for f in state.best_history]
    return InversionResult(build(best) if fit == 0 else None, dists, state.evaluations)
