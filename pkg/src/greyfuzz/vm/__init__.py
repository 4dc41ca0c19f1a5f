"""Deterministic instrumented target programs."""

from .compiler import BranchRecord, BranchSite, mix64
from .corpus import builtin_corpus, builtin_names, builtin_program, program_source
from .lang import LOOP_CAP, ProgramError, parse
from .machine import (
    FORCED,
    NORMAL,
    OUTCOME_CRASH,
    OUTCOME_DIVERGED,
    OUTCOME_NORMAL,
    RECORD,
    ExecutionResult,
    TargetProgram,
    execute,
    load_program,
    load_program_file,
)

__all__ = [
    "BranchRecord",
    "BranchSite",
    "ExecutionResult",
    "FORCED",
    "LOOP_CAP",
    "NORMAL",
    "OUTCOME_CRASH",
    "OUTCOME_DIVERGED",
    "OUTCOME_NORMAL",
    "ProgramError",
    "RECORD",
    "TargetProgram",
    "builtin_corpus",
    "builtin_names",
    "builtin_program",
    "execute",
    "load_program",
    "load_program_file",
    "mix64",
    "parse",
    "program_source",
]
