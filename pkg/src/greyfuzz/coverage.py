"""Edge coverage: hashed showmap, log buckets, label switching and flushing."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .vm import TargetProgram

SATURATE = 255


class LabelMismatch(ValueError):
    """Raised when coverage produced under different label tables is combined."""


def edge_index(label_j: int, label_k: int, map_bits: int) -> int:
    return ((label_j << 1) ^ label_k) & ((1 << map_bits) - 1)


def bucket_of(count: int) -> int:
    return min(count, SATURATE).bit_length() - 1


@dataclass
class ShowMap:
    map_bits: int = 16
    m: int = 4
    active_label_index: int = 0
    counters: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.counters is None:
            self.counters = np.zeros(1 << self.map_bits, dtype=np.uint8)
        if not 0 <= self.active_label_index < self.m:
            raise ValueError("active_label_index out of range")

    def reset(self):
        self.counters[:] = 0


@dataclass(frozen=True)
class CoverageSet:
    entries: frozenset = frozenset()
    label_index: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item) -> bool:
        return item in self.entries

    def _check(self, other: "CoverageSet"):
        if other.label_index != self.label_index:
            raise LabelMismatch(
                f"coverage from label {self.label_index} mixed with label {other.label_index}"
            )

    def union(self, other: "CoverageSet") -> "CoverageSet":
        self._check(other)
        return CoverageSet(self.entries | other.entries, self.label_index)

    def difference(self, other: "CoverageSet") -> "CoverageSet":
        self._check(other)
        return CoverageSet(self.entries - other.entries, self.label_index)

    def edge_indices(self) -> set[int]:
        return {e for e, _ in self.entries}

    def to_list(self) -> list[list[int]]:
        return [list(p) for p in sorted(self.entries)]

    @classmethod
    def from_list(cls, pairs, label_index: int = 0) -> "CoverageSet":
        return cls(frozenset((int(e), int(b)) for e, b in pairs), label_index)


def record_edges(showmap: ShowMap, edges, labels) -> ShowMap:
    """Add one hit per edge occurrence to ``showmap`` (saturating at 255).

    ``labels`` is the label table for the active index: ``labels[block]``.
    """
    if len(edges) == 0:
        return showmap
    idx = np.fromiter(
        (edge_index(labels[a], labels[b], showmap.map_bits) for a, b in edges),
        dtype=np.int64,
        count=len(edges),
    )
    hits = np.bincount(idx, minlength=showmap.counters.size)
    total = showmap.counters.astype(np.int64) + hits
    np.minimum(total, SATURATE, out=total)
    showmap.counters[:] = total
    return showmap


def bucketize(showmap: ShowMap) -> CoverageSet:
    nz = np.flatnonzero(showmap.counters)
    buckets = np.floor(np.log2(showmap.counters[nz])).astype(int)
    return CoverageSet(
        frozenset(zip(nz.tolist(), buckets.tolist())), showmap.active_label_index
    )


def produce_coverage(path, labels, map_bits: int, label_index: int = 0) -> CoverageSet:
    """Coverage of one run from its block path; same result as
    record_edges on a fresh map followed by bucketize, without the array."""
    mask = (1 << map_bits) - 1
    hashed = [labels[b] for b in path]
    counts = Counter(((a << 1) ^ b) & mask for a, b in zip(hashed, hashed[1:]))
    return CoverageSet(
        frozenset((e, bucket_of(c)) for e, c in counts.items()), label_index
    )


def coverage_increase(current: CoverageSet, accumulated: CoverageSet) -> int:
    current._check(accumulated)
    return len(current.entries - accumulated.entries)


def _seed_bytes(seed) -> bytes:
    return seed if isinstance(seed, (bytes, bytearray)) else seed.data


def switch_label_index(showmap: ShowMap, seeds, program: TargetProgram) -> CoverageSet:
    """Advance to the next label table and rebuild coverage from ``seeds``."""
    showmap.active_label_index = (showmap.active_label_index + 1) % showmap.m
    showmap.reset()
    labels = program.labels[showmap.active_label_index]
    # union of per-seed coverage, not the bucketized sum of all hits
    acc = CoverageSet(frozenset(), showmap.active_label_index)
    for seed in seeds:
        result = program.execute(_seed_bytes(seed))
        record_edges(showmap, result.edges, labels)
        acc = acc.union(
            produce_coverage(result.path, labels, showmap.map_bits, showmap.active_label_index)
        )
    return acc


def collision_free_probability(n_bits: int, m: int, edges: int) -> float:
    """prod_{k=1}^{edges-1} (1 - (k / 2^n_bits)^m)."""
    if edges < 1 or m < 1 or n_bits < 1:
        raise ValueError("edges, m and n_bits must be positive")
    size = 1 << n_bits
    if edges - 1 >= size:
        return 0.0
    k = np.arange(1, edges, dtype=np.float64)
    return float(math.exp(np.log1p(-((k / size) ** m)).sum()))


def simulate_collisions(n_bits: int, m: int, edges: int, trials: int, rng=None) -> float:
    """Monte-Carlo counterpart of collision_free_probability.

    Edges arrive one at a time with ``m`` independent uniform hashes each.  An
    edge is distinguishable when, under some label, its hash differs from the
    hashes of all edges that arrived before it; a trial succeeds when every
    edge is distinguishable.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(rng)
    if edges <= 1:
        return 1.0
    size = 1 << n_bits
    ok = 0
    for _ in range(trials):
        good = np.zeros(edges, dtype=bool)
        for h in rng.integers(0, size, size=(m, edges)):
            _, first = np.unique(h, return_index=True)
            good[first] = True
        ok += bool(good.all())
    return ok / trials


@dataclass(frozen=True)
class FlushSnapshot:
    coverage: CoverageSet
    seeds: tuple


def start_flush(coverage: CoverageSet, seeds, initial_coverage: CoverageSet):
    """Snapshot (coverage, seeds); live coverage restarts from the initial seeds."""
    return FlushSnapshot(coverage, tuple(seeds)), initial_coverage


def stop_flush(snapshot: FlushSnapshot, coverage: CoverageSet, seeds, seed_coverage):
    """Merge a flush window back into the snapshot.

    ``seed_coverage(seed)`` gives a seed's coverage under the current labels.
    Returns (coverage, seeds): the snapshot's seeds plus the window seeds
    that produce some of the coverage found beyond the snapshot.
    """
    new = coverage.difference(snapshot.coverage).entries
    kept = list(snapshot.seeds)
    have = {_seed_bytes(s) for s in kept}
    for seed in seeds:
        if _seed_bytes(seed) not in have and seed_coverage(seed).entries & new:
            kept.append(seed)
            have.add(_seed_bytes(seed))
    return coverage.union(snapshot.coverage), kept

