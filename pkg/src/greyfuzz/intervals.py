"""Integer interval systems for branches on direct input copies."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field

from .taint import branch_keys

OPS = ("==", "!=", "<", "<=", ">", ">=")
NEGATE = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
# rhs-side copies: (c op x) is (x FLIP[op] c)
FLIP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def max_value(width: int) -> int:
    return (1 << (8 * width)) - 1


@dataclass(frozen=True, order=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"bad interval [{self.lo},{self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


class IntervalSet:
    """Sorted, disjoint, merged intervals over [0, 2^(8*width) - 1]."""

    __slots__ = ("intervals", "width", "_cum")

    def __init__(self, intervals=(), width: int = 1):
        self.width = width
        top = max_value(width)
        items = sorted(
            (Interval(*iv) if not isinstance(iv, Interval) else iv) for iv in intervals
        )
        merged: list[Interval] = []
        for iv in items:
            if iv.hi > top:
                raise ValueError(f"interval {iv} exceeds width {width}")
            if merged and iv.lo <= merged[-1].hi + 1:
                if iv.hi > merged[-1].hi:
                    merged[-1] = Interval(merged[-1].lo, iv.hi)
            else:
                merged.append(iv)
        self.intervals = tuple(merged)
        self._cum = None

    @classmethod
    def full(cls, width: int = 1) -> "IntervalSet":
        return cls([(0, max_value(width))], width)

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __repr__(self) -> str:
        return f"IntervalSet({self.as_pairs()}, width={self.width})"

    def __contains__(self, value: int) -> bool:
        i = bisect.bisect_right([iv.lo for iv in self.intervals], value) - 1
        return i >= 0 and value <= self.intervals[i].hi

    def as_pairs(self) -> list[tuple[int, int]]:
        return [(iv.lo, iv.hi) for iv in self.intervals]

    @property
    def size(self) -> int:
        return sum(iv.size for iv in self.intervals)

    def cumulative(self) -> list[int]:
        if self._cum is None:
            total, cum = 0, []
            for iv in self.intervals:
                total += iv.size
                cum.append(total)
            self._cum = cum
        return self._cum

    def sample(self, rng: random.Random) -> int:
        """Uniform over the union: pick an interval by size, then a value in it."""
        if not self.intervals:
            raise ValueError("cannot sample from an empty set")
        cum = self.cumulative()
        r = rng.randrange(cum[-1])
        i = bisect.bisect_right(cum, r)
        base = cum[i - 1] if i else 0
        return self.intervals[i].lo + (r - base)

    def format(self) -> str:
        return " u ".join(f"[{a},{b}]" for a, b in self.as_pairs()) or "{}"


def condition_to_intervals(operator: str, constant: int, width: int = 1, invert: bool = False) -> IntervalSet:
    """Solution set of ``x operator constant`` (or its negation) for a
    ``width``-byte unsigned x."""
    top = max_value(width)
    if not 0 <= constant <= top:
        raise ValueError("constant does not fit the operand width")
    op = NEGATE[operator] if invert else operator
    c = constant
    if op == "==":
        pairs = [(c, c)]
    elif op == "!=":
        pairs = [(0, c - 1), (c + 1, top)]
    elif op == "<":
        pairs = [(0, c - 1)]
    elif op == "<=":
        pairs = [(0, c)]
    elif op == ">":
        pairs = [(c + 1, top)]
    elif op == ">=":
        pairs = [(c, top)]
    else:
        raise ValueError(f"unknown operator {operator!r}")
    return IntervalSet([(a, b) for a, b in pairs if 0 <= a <= b <= top], width)


def intersect(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    """Linear merge of two sorted interval lists."""
    out = []
    i = j = 0
    A, B = a.intervals, b.intervals
    while i < len(A) and j < len(B):
        lo = max(A[i].lo, B[j].lo)
        hi = min(A[i].hi, B[j].hi)
        if lo <= hi:
            out.append(Interval(lo, hi))
        if A[i].hi < B[j].hi:
            i += 1
        else:
            j += 1
    res = IntervalSet.__new__(IntervalSet)
    res.width = max(a.width, b.width)
    res.intervals = tuple(out)
    res._cum = None
    return res


class Unsatisfiable(Exception):
    def __init__(self, branch_key, group=None):
        super().__init__(f"no solution once branch {branch_key} is added")
        self.branch_key = branch_key
        self.group = group


@dataclass
class ConstraintSystem:
    groups: dict = field(default_factory=dict)  # (offset, width) -> IntervalSet
    unsolved: list = field(default_factory=list)  # branch keys not expressible as intervals
    added: list = field(default_factory=list)  # branch keys that contributed intervals
    target: tuple | None = None

    def format(self) -> str:
        lines = [f"x[{off}:{w}] in {s.format()}" for (off, w), s in sorted(self.groups.items())]
        if self.unsolved:
            lines.append("unsolved: " + " ".join(str(k[0]) for k in self.unsolved))
        return "\n".join(lines)


def _constraint(copy, invert: bool) -> IntervalSet:
    op = copy.operator if copy.side == "lhs" else FLIP[copy.operator]
    # the observed direction is satisfied; the target is flipped
    want_true = copy.taken != invert
    return condition_to_intervals(op, copy.constant, copy.width, invert=not want_true)


def _overlaps(a, b) -> bool:
    return a[0] < b[0] + b[1] and b[0] < a[0] + a[1]


def build_system(trace, target, direct_copies: dict, mode: str = "ST-all", deps=None) -> ConstraintSystem:
    """Constraints for taking the opposite edge of ``trace[target]`` while
    keeping the observed direction of earlier branches on the same bytes.

    ``direct_copies`` maps branch keys to DirectCopy records.  A target that
    is itself a direct copy contributes its inverted condition; otherwise it
    is listed as unsolved and its dependent bytes (from ``deps``) select which
    earlier branches constrain the sample.  ST-all adds every such branch and
    raises Unsatisfiable on the first conflict; ST-one adds them nearest
    first and skips any that would empty a group.
    """
    if mode not in ("ST-all", "ST-one"):
        raise ValueError(f"unknown system type {mode!r}")
    keys = branch_keys(trace)
    tkey = keys[target]
    system = ConstraintSystem(target=tkey)
    tcopy = direct_copies.get(tkey)
    if tcopy is not None:
        group = (tcopy.offset, tcopy.width)
        inverted = _constraint(tcopy, invert=True)
        if not inverted:
            raise Unsatisfiable(tkey, group)
        system.groups[group] = inverted
        system.added.append(tkey)
        wanted = set(range(group[0], group[0] + group[1]))
    else:
        system.unsolved.append(tkey)
        wanted = set((deps or {}).get(tkey, ()))

    order = range(target - 1, -1, -1) if mode == "ST-one" else range(target)
    for i in order:
        key = keys[i]
        copy = direct_copies.get(key)
        g = None if copy is None else (copy.offset, copy.width)
        if g is None or not wanted.issuperset(range(g[0], g[0] + g[1])):
            if (deps or {}).get(key, frozenset()) & wanted:
                system.unsolved.append(key)
            continue
        if g not in system.groups and any(_overlaps(g, h) for h in system.groups):
            system.unsolved.append(key)
            continue
        cur = system.groups.get(g, IntervalSet.full(copy.width))
        nxt = intersect(cur, _constraint(copy, invert=False))
        if not nxt:
            if mode == "ST-all":
                raise Unsatisfiable(key, g)
            continue
        system.groups[g] = nxt
        system.added.append(key)
    return system


def sample_solution(system: ConstraintSystem, seed: bytes, rng: random.Random) -> bytes:
    """Seed with each constrained byte group overwritten by a uniform draw."""
    if any(not s for s in system.groups.values()):
        raise Unsatisfiable(system.target)
    out = bytearray(seed)
    for (off, w), s in system.groups.items():
        out[off : off + w] = s.sample(rng).to_bytes(w, "little")
    return bytes(out)
