"""Seed pool with seed classes and sampling criteria."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .coverage import CoverageSet

CLASSES = ("SC-fast-edges", "SC-fast-multiple-edges", "SC-all")
CRITERIA = ("Count", "Speed", "Length", "Crash", "Cov", "Random")


@dataclass(eq=False)
class SeedEntry:
    data: bytes
    coverage: CoverageSet
    duration: int
    path_edges: frozenset = frozenset()  # distinct (block, block) pairs, label independent
    crashed: bool = False
    crash_site: str | None = None
    sample_count: int = 0
    cov_increase_history: list = field(default_factory=list)
    origin: str = "initial"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def length(self) -> int:
        return len(self.data)

    @property
    def last_increase(self) -> int:
        return self.cov_increase_history[-1] if self.cov_increase_history else 0


class EmptyPool(ValueError):
    pass


def classify(pool, seed_class: str) -> list[SeedEntry]:
    """Candidate subset for a seed class, in pool order."""
    pool = list(pool)
    if not pool:
        raise EmptyPool("seed pool is empty")
    if seed_class == "SC-all":
        return pool
    if seed_class not in CLASSES:
        raise ValueError(f"unknown seed class {seed_class!r}")
    best: dict = {}

    def offer(key, i, s):
        cur = best.get(key)
        if cur is None or s.duration < pool[cur].duration:
            best[key] = i

    for i, s in enumerate(pool):
        for edge, bucket in s.coverage.entries:
            offer(("e", edge), i, s)
            if seed_class == "SC-fast-multiple-edges" and bucket > 0:
                offer(("b", edge, bucket), i, s)
    keep = set(best.values())
    return [s for i, s in enumerate(pool) if i in keep] or pool


def sample(candidates, criterion: str, rng: random.Random) -> SeedEntry:
    candidates = list(candidates)
    if not candidates:
        raise EmptyPool("no candidate seeds")
    if criterion == "Count":
        low = min(s.sample_count for s in candidates)
        return rng.choice([s for s in candidates if s.sample_count == low])
    if criterion == "Speed":
        return rng.choices(candidates, weights=[1.0 / s.duration for s in candidates])[0]
    if criterion == "Length":
        return rng.choices(candidates, weights=[1.0 / max(s.length, 1) for s in candidates])[0]
    if criterion == "Crash":
        subset = [s for s in candidates if s.crashed]
        return rng.choice(subset or candidates)
    if criterion == "Cov":
        subset = [s for s in candidates if s.last_increase > 0]
        return rng.choice(subset or candidates)
    if criterion == "Random":
        return rng.choice(candidates)
    raise ValueError(f"unknown criterion {criterion!r}")


class SeedPool:
    """Ordered list of seeds plus save/load."""

    def __init__(self, seeds=()):
        self.seeds: list[SeedEntry] = list(seeds)

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self):
        return iter(self.seeds)

    def add(self, seed: SeedEntry):
        self.seeds.append(seed)

    def classify(self, seed_class: str) -> list[SeedEntry]:
        return classify(self.seeds, seed_class)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = []
        for i, s in enumerate(self.seeds):
            name = f"seed_{i:06d}.bin"
            (d / name).write_bytes(s.data)
            index.append({
                "file": name,
                "duration": s.duration,
                "crashed": s.crashed,
                "crash_site": s.crash_site,
                "sample_count": s.sample_count,
                "cov_increase_history": s.cov_increase_history,
                "origin": s.origin,
                "label_index": s.coverage.label_index,
                "coverage": s.coverage.to_list(),
                "path_edges": sorted(list(e) for e in s.path_edges),
            })
        (d / "index.json").write_text(json.dumps(index, indent=1))

    @classmethod
    def load(cls, directory) -> "SeedPool":
        d = Path(directory)
        out = cls()
        for rec in json.loads((d / "index.json").read_text()):
            out.add(SeedEntry(
                data=(d / rec["file"]).read_bytes(),
                coverage=CoverageSet.from_list(rec["coverage"], rec["label_index"]),
                duration=rec["duration"],
                path_edges=frozenset(tuple(e) for e in rec["path_edges"]),
                crashed=rec["crashed"],
                crash_site=rec["crash_site"],
                sample_count=rec["sample_count"],
                cov_increase_history=list(rec["cov_increase_history"]),
                origin=rec["origin"],
            ))
        return out
