"""Builtin target programs."""

from __future__ import annotations

import random
from importlib import resources

from .machine import TargetProgram, load_program

_FILES = ("fig_branches", "fig_intervals", "fig_loopcount", "magic_deep")


def wide_shallow_source(leaves: int = 256, per_leaf: int = 20, input_size: int = 64, seed: int = 7) -> str:
    """A dispatch tree on x[0] whose leaves each hold a run of single-byte branches.

    Every execution visits one leaf, so runs stay short while the program as a
    whole has ``leaves - 1 + leaves * per_leaf`` independent branches.
    """
    rng = random.Random(seed)
    lines = [f"input {input_size}"]

    def leaf(depth: int):
        pad = "  " * depth
        for _ in range(per_leaf):
            off = rng.randrange(1, input_size)
            lines.append(f"{pad}if x[{off}] == {rng.randrange(256)} {{")
            lines.append(f"{pad}}}")

    def tree(lo: int, hi: int, depth: int):
        if hi - lo == 1:
            leaf(depth)
            return
        mid = (lo + hi) // 2
        pad = "  " * depth
        lines.append(f"{pad}if x[0] < {mid * 256 // leaves} {{")
        tree(lo, mid, depth + 1)
        lines.append(f"{pad}}} else {{")
        tree(mid, hi, depth + 1)
        lines.append(f"{pad}}}")

    tree(0, leaves, 0)
    return "\n".join(lines) + "\n"


def program_source(name: str) -> str:
    if name == "wide_shallow":
        return wide_shallow_source()
    if name not in _FILES:
        raise KeyError(f"no builtin program named {name!r}")
    return resources.files(__package__).joinpath("programs", f"{name}.gb").read_text()


def builtin_names() -> list[str]:
    return [*_FILES, "wide_shallow"]


def builtin_program(name: str, m: int = 4, map_bits: int = 16, label_seed: int = 0) -> TargetProgram:
    return load_program(program_source(name), name=name, m=m, map_bits=map_bits, label_seed=label_seed)


def builtin_corpus(m: int = 4, map_bits: int = 16, label_seed: int = 0) -> dict[str, TargetProgram]:
    return {name: builtin_program(name, m, map_bits, label_seed) for name in builtin_names()}
