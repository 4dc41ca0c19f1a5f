"""Byte-level taint inference: group testing under forced execution, plus
the one-byte-at-a-time oracle and crash-range elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vm import FORCED, RECORD, TargetProgram

CHANGED = 1
UNCHANGED = 0
UNDEFINED = -1


def n_tests(n: int) -> int:
    return 2 * math.ceil(math.log2(n))


def build_test_vectors(n: int, permutation=None) -> np.ndarray:
    """Boolean matrix of shape (2*ceil(log2 n), n).

    Row 2j marks positions whose bit j is 0, row 2j+1 those whose bit j is 1,
    so rows 0..3 start 1010, 0101, 1100, 0011.  With a permutation, position
    p takes the pattern of position ``permutation[p]``.
    """
    if n < 2:
        raise ValueError("need at least two input bytes")
    pos = np.arange(n) if permutation is None else np.asarray(permutation)
    if pos.shape != (n,):
        raise ValueError("permutation must have one entry per byte")
    rows = []
    for j in range(math.ceil(math.log2(n))):
        bit = (pos >> j) & 1
        rows.append(bit == 0)
        rows.append(bit == 1)
    return np.array(rows)


def mask_vectors(vectors: np.ndarray, ranges) -> np.ndarray:
    """Clear every position inside the inclusive ``(lo, hi)`` ranges."""
    out = vectors.copy()
    for lo, hi in ranges:
        out[:, lo : hi + 1] = False
    return out


def branch_keys(trace) -> list[tuple[int, int]]:
    """(branch_id, occurrence ordinal) for each record of a trace."""
    seen: dict[int, int] = {}
    keys = []
    for rec in trace:
        k = seen.get(rec.branch_id, 0)
        seen[rec.branch_id] = k + 1
        keys.append((rec.branch_id, k))
    return keys


def apply_mask(seed: bytes, positions: np.ndarray, xor: np.ndarray) -> bytes:
    arr = np.frombuffer(seed, dtype=np.uint8).copy()
    arr[positions] ^= xor[positions]
    return arr.tobytes()


def _draw_xor(n: int, rng) -> np.ndarray:
    return rng.integers(1, 256, size=n, dtype=np.uint8)


def _observe(program: TargetProgram, data: bytes, base_trace) -> tuple[list, str]:
    """Forced run against ``base_trace``; returns its records and outcome."""
    res = program.execute(data, FORCED, base_trace)
    return list(res.trace), res.outcome


def _compare(base_trace, trace) -> np.ndarray:
    """Per record of the base trace: changed / unchanged / undefined."""
    out = np.full(len(base_trace), UNDEFINED, dtype=np.int8)
    for i, (a, b) in enumerate(zip(base_trace, trace)):
        out[i] = CHANGED if (a.lhs_value != b.lhs_value or a.rhs_value != b.rhs_value) else UNCHANGED
    return out


@dataclass
class Observation:
    data: bytes
    operands: tuple  # (lhs, rhs) per base-trace record reached
    outcome: str


@dataclass
class TaintReport:
    seed: bytes
    trace: tuple
    keys: list
    deps: dict
    executions: int = 0
    probes: int = 0
    excluded: tuple = ()
    observations: list = field(default_factory=list, repr=False)
    method: str = "taintfast"

    def for_branch(self, branch_id: int) -> frozenset:
        out: set[int] = set()
        for (bid, _), d in self.deps.items():
            if bid == branch_id:
                out |= d
        return frozenset(out)

    def to_json(self) -> dict:
        merged: dict[int, set] = {}
        for (bid, _), d in self.deps.items():
            merged.setdefault(bid, set()).update(d)
        return {str(b): sorted(v) for b, v in sorted(merged.items())}


def collect_responses(program: TargetProgram, seed: bytes, vectors: np.ndarray, xor=None, base_trace=None):
    """Run one forced execution per test vector.

    Returns (Y, observations) where Y has shape (tests, records of the seed
    trace) holding CHANGED / UNCHANGED / UNDEFINED.  ``xor`` holds the
    per-position non-zero byte each mutated position is XORed with.
    """
    if base_trace is None:
        base_trace = program.execute(seed, RECORD).trace
    if xor is None:
        xor = np.full(len(seed), 0xFF, dtype=np.uint8)
    Y = np.empty((len(vectors), len(base_trace)), dtype=np.int8)
    obs = []
    for t, vec in enumerate(vectors):
        data = apply_mask(seed, vec, xor)
        trace, outcome = _observe(program, data, base_trace)
        Y[t] = _compare(base_trace, trace)
        obs.append(Observation(data, tuple((r.lhs_value, r.rhs_value) for r in trace), outcome))
    return Y, obs


def decode(Y, vectors: np.ndarray) -> np.ndarray:
    """Start from all positions; each unchanged test removes its positions."""
    Y = np.asarray(Y)
    if len(Y) != len(vectors):
        raise ValueError("response and vector counts differ")
    D = np.ones(vectors.shape[1], dtype=bool)
    for y, vec in zip(Y, vectors):
        if y == UNCHANGED:
            D &= ~vec
    return D


def _ranges(positions) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for p in sorted(positions):
        if out and p == out[-1][1] + 1:
            out[-1][1] = p
        else:
            out.append([p, p])
    return [tuple(r) for r in out]


def eliminate_crash_ranges(program: TargetProgram, seed: bytes, candidates=None, xor=None,
                           base_trace=None, max_rounds: int = 4):
    """Find byte ranges whose mutation crashes the forced replay of ``seed``.

    Bisects ``candidates`` (default: every byte), one probe per level, then
    verifies the culprit and checks whether the remaining bytes still crash.
    Returns (sorted inclusive ranges, probe count).
    """
    if base_trace is None:
        base_trace = program.execute(seed, RECORD).trace
    if xor is None:
        xor = np.full(len(seed), 0xFF, dtype=np.uint8)
    probes = 0

    def crashes(positions) -> bool:
        nonlocal probes
        probes += 1
        mask = np.zeros(len(seed), dtype=bool)
        mask[list(positions)] = True
        return program.execute(apply_mask(seed, mask, xor), FORCED, base_trace).crashed

    remaining = sorted(range(len(seed)) if candidates is None else candidates)
    found: set[int] = set()
    for _ in range(max_rounds):
        if not remaining or not crashes(remaining):
            break
        s = remaining
        while len(s) > 1:
            half = s[: len(s) // 2]
            s = half if crashes(half) else s[len(s) // 2 :]
        if not crashes(s):
            # the crash needs several bytes together; bisection cannot isolate it
            break
        found.update(s)
        remaining = [p for p in remaining if p not in found]
    return _ranges(found), probes


def infer_taint(program: TargetProgram, seed: bytes, repeats: int = 1, rng=None,
                eliminate_crashes: bool = True) -> TaintReport:
    """Group-testing dependency inference for every branch record of ``seed``.

    Each pass runs 2*ceil(log2 n) forced executions; pass 0 uses the plain
    vectors, later passes permute byte positions, and the decoded candidate
    sets are intersected.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(rng)
    n = len(seed)
    base_trace = program.execute(seed, RECORD).trace
    keys = branch_keys(base_trace)
    D = np.ones((len(keys), n), dtype=bool)
    report = TaintReport(seed, base_trace, keys, {})
    excluded: list = []
    for r in range(repeats):
        perm = None if r == 0 else rng.permutation(n)
        vectors = mask_vectors(build_test_vectors(n, perm), excluded)
        xor = _draw_xor(n, rng)
        Y, obs = collect_responses(program, seed, vectors, xor, base_trace)
        report.executions += len(vectors)
        report.observations.extend(obs)
        for i in range(len(keys)):
            D[i] &= decode(Y[:, i], vectors)
        crashed = [t for t, o in enumerate(obs) if o.outcome == "crash"]
        if eliminate_crashes and crashed and r + 1 < repeats:
            cand = np.flatnonzero(vectors[crashed[0]]).tolist()
            ranges, probes = eliminate_crash_ranges(program, seed, cand, xor, base_trace)
            report.probes += probes
            excluded = sorted(set(excluded) | set(ranges))
    report.excluded = tuple(excluded)
    report.deps = {k: frozenset(np.flatnonzero(D[i]).tolist()) for i, k in enumerate(keys)}
    return report


def fti_infer(program: TargetProgram, seed: bytes, values_per_byte: int = 1, rng=None) -> TaintReport:
    """One byte at a time: byte i is a dependency of a record when some tried
    value of byte i changes that record's operands."""
    if values_per_byte < 1:
        raise ValueError("values_per_byte must be >= 1")
    rng = np.random.default_rng(rng)
    n = len(seed)
    base_trace = program.execute(seed, RECORD).trace
    keys = branch_keys(base_trace)
    k = min(values_per_byte, 255)
    deps = [set() for _ in keys]
    report = TaintReport(seed, base_trace, keys, {}, method="fti")
    arr = np.frombuffer(seed, dtype=np.uint8)
    for i in range(n):
        for x in rng.choice(np.arange(1, 256), size=k, replace=False):
            buf = arr.copy()
            buf[i] ^= x
            data = buf.tobytes()
            trace, outcome = _observe(program, data, base_trace)
            report.executions += 1
            report.observations.append(
                Observation(data, tuple((r.lhs_value, r.rhs_value) for r in trace), outcome)
            )
            for j, flag in enumerate(_compare(base_trace, trace)):
                if flag == CHANGED:
                    deps[j].add(i)
    report.deps = {key: frozenset(d) for key, d in zip(keys, deps)}
    return report


@dataclass(frozen=True)
class DirectCopy:
    key: tuple
    branch_id: int
    side: str  # "lhs" or "rhs"
    offset: int
    width: int
    constant: int  # value of the other operand
    operator: str
    taken: bool


def _load(data: bytes, offset: int, width: int) -> int:
    return int.from_bytes(data[offset : offset + width], "little")


def detect_direct_copies(report: TaintReport) -> dict:
    """Records whose operand is a verbatim little-endian copy of input bytes.

    Requires: dependency set is one contiguous run of exactly operand_width
    bytes; the operand equals the load of those bytes in the seed and in some
    test input where those bytes were mutated; the other operand never moved.
    """
    out = {}
    for idx, (key, rec) in enumerate(zip(report.keys, report.trace)):
        d = sorted(report.deps.get(key, ()))
        w = rec.operand_width
        if len(d) != w or d[-1] - d[0] != w - 1:
            continue
        off = d[0]
        seed_val = _load(report.seed, off, w)
        for side, other in (("lhs", 1), ("rhs", 0)):
            ops = (rec.lhs_value, rec.rhs_value)
            mine = 0 if side == "lhs" else 1
            if ops[mine] != seed_val:
                continue
            confirmed = False
            stable = True
            for o in report.observations:
                if idx >= len(o.operands):
                    continue
                if o.operands[idx][other] != ops[other]:
                    stable = False
                    break
                v = _load(o.data, off, w)
                if v != seed_val and o.operands[idx][mine] == v:
                    confirmed = True
            # a constant wider than the copy cannot be expressed as an interval bound
            if confirmed and stable and ops[other] < 1 << (8 * w):
                const = ops[other]
                out[key] = DirectCopy(key, rec.branch_id, side, off, w, const, rec.operator, rec.taken)
                break
    return out


def infer(program: TargetProgram, seed: bytes, repeats: int = 1, rng=None,
          fti_threshold: int = 64, fti_values: int = 1) -> TaintReport:
    """FTI for inputs shorter than ``fti_threshold`` bytes, group testing otherwise."""
    if len(seed) < fti_threshold:
        return fti_infer(program, seed, fti_values, rng)
    return infer_taint(program, seed, repeats, rng)
