"""Discounted UCB over every fuzzer decision point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# decision point -> arms, in catalogue order
DECISIONS: dict[str, tuple] = {
    "Seed_class": ("SC-fast-edges", "SC-fast-multiple-edges", "SC-all"),
    "Seed_criterion": ("Count", "Speed", "Length", "Crash", "Cov", "Random"),
    "Fuzzer_strategy": ("Vanilla", "Data-flow"),
    "Vanilla": ("Mutate-rand-bytes", "Copy-remove", "Combiner"),
    "Data-flow": ("Mutate-bytes", "Invert-branches", "Invert-branches-GA", "System-solver", "Mingler"),
    "Mutate-rand-bytes/Type": ("MRB-GA", "MRB-simple"),
    "MRB-GA": (1, 2, 4, 8, 16, 32, 64),
    "MRB-simple": (True, False),
    "Copy-remove/Number": (1, 2, 4, 8, 16, 32, 64),
    "Copy-remove/Mode": ("CR-rand", "CR-real", "CR-learn", "CR-prev"),
    "Combiner/Number": (2, 3, 4, 5, 6, 7, 8),
    "Combiner/Select": ("Speed/Inverse-speed", "Length/Inverse-length", "Select-random"),
    "Combiner/Mode": ("CM-random", "CM-learn"),
    "Mutate-bytes/Number": (1, 2, 4, 8, 16),
    "Mutate-bytes/Type": (True, False),
    "System-solver/Type": ("ST-all", "ST-one"),
    "Mingler/Number": (1, 2, 3, 4, 5, 6),
}

# mutation -> the parameter decisions it needs, in selection order
MUTATION_PARAMS: dict[str, tuple] = {
    "Mutate-rand-bytes": ("Mutate-rand-bytes/Type",),  # then MRB-GA or MRB-simple
    "Copy-remove": ("Copy-remove/Number", "Copy-remove/Mode"),
    "Combiner": ("Combiner/Number", "Combiner/Select", "Combiner/Mode"),
    "Mutate-bytes": ("Mutate-bytes/Number", "Mutate-bytes/Type"),
    "Invert-branches": (),
    "Invert-branches-GA": (),
    "System-solver": ("System-solver/Type",),
    "Mingler": ("Mingler/Number",),
}


class ContractError(ValueError):
    pass


@dataclass
class BanditNode:
    decision_id: str
    arms: tuple
    gamma: float = 0.99
    c: float = math.sqrt(2)
    xi: float = 1.0
    sums: np.ndarray = field(default=None, repr=False)
    counts: np.ndarray = field(default=None, repr=False)
    pulled: np.ndarray = field(default=None, repr=False)
    selects: int = 0
    updates: int = 0

    def __post_init__(self):
        self.arms = tuple(self.arms)
        if not self.arms:
            raise ValueError("a node needs at least one arm")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        k = len(self.arms)
        self.sums = np.zeros(k) if self.sums is None else self.sums
        self.counts = np.zeros(k) if self.counts is None else self.counts
        self.pulled = np.zeros(k, dtype=bool) if self.pulled is None else self.pulled

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / self.counts, 0.0)

    def scores(self) -> np.ndarray:
        bonus = self.c * np.sqrt(self.xi * math.log(max(self.total, 1.0)) / self.counts)
        return self.means() + bonus

    def index(self, arm) -> int:
        try:
            return self.arms.index(arm)
        except ValueError:
            raise ContractError(f"{arm!r} is not an arm of {self.decision_id}") from None

    def stats(self) -> dict:
        return {
            "decision": self.decision_id,
            "arms": [str(a) for a in self.arms],
            "mean": [round(float(v), 6) for v in self.means()],
            "count": [round(float(v), 6) for v in self.counts],
        }


def select(node: BanditNode, rng=None):
    """Unpulled arms first (in order), then the best discounted-UCB score;
    ties broken uniformly with ``rng``."""
    node.selects += 1
    fresh = np.flatnonzero(~node.pulled)
    if len(fresh):
        return node.arms[int(fresh[0])]
    scores = node.scores()
    best = np.flatnonzero(scores >= scores.max() - 1e-12)
    if len(best) > 1 and rng is not None:
        return node.arms[int(best[rng.randrange(len(best))])]
    return node.arms[int(best[0])]


def update(node: BanditNode, arm, value: float):
    i = node.index(arm)
    node.sums *= node.gamma
    node.counts *= node.gamma
    node.sums[i] += value
    node.counts[i] += 1.0
    node.pulled[i] = True
    node.updates += 1


def update_path(path, value: float):
    """Apply one reward to every (node, arm) chosen on a decision path."""
    for node, arm in path:
        update(node, arm, value)


@dataclass
class Reward:
    coverage_gain: int
    elapsed: float

    @property
    def rate(self) -> float:
        return self.coverage_gain / self.elapsed if self.elapsed > 0 else 0.0


class RewardNormalizer:
    """Maps coverage per time unit into [0, 1] by the largest rate seen so far."""

    def __init__(self):
        self.max_rate = 0.0

    def __call__(self, reward: Reward) -> float:
        r = reward.rate
        if r <= 0:
            return 0.0
        self.max_rate = max(self.max_rate, r)
        return r / self.max_rate


def make_bandits(gamma: float = 0.99, c: float = math.sqrt(2), xi: float = 1.0) -> dict[str, BanditNode]:
    return {name: BanditNode(name, arms, gamma, c, xi) for name, arms in DECISIONS.items()}
