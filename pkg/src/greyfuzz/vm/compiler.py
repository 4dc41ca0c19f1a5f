"""Lower a parsed program to a Python function.

The generated function has the signature ``run(x, F, R, P)``:

* ``x`` - the input bytes,
* ``F`` - ``None`` or a zero-argument callable returning the next forced edge,
* ``R`` - ``None`` or a callable receiving each :class:`BranchRecord`,
* ``P`` - callable receiving the id of every basic block entered.

Crashes propagate as :class:`Crash`; an exhausted forced trace surfaces as
``StopIteration`` from ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .lang import LOOP_CAP, BinOp, Call, Const, Crash as CrashStmt, If, Let, Load, Loop, Module, Unary, Var

MASK = (1 << 64) - 1


class Crash(Exception):
    def __init__(self, site: str):
        super().__init__(site)
        self.site = site


class BranchRecord(NamedTuple):
    branch_id: int
    lhs_value: int
    rhs_value: int
    operator: str
    operand_width: int
    taken: bool
    source_bytes: tuple | None


@dataclass(frozen=True)
class BranchSite:
    branch_id: int
    operator: str
    operand_width: int
    source_bytes: tuple | None
    is_loop: bool
    then_block: int
    else_block: int


def mix64(v: int) -> int:
    """splitmix64 finalizer."""
    v &= MASK
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & MASK
    return v ^ (v >> 31)


def _div(a, b, site):
    if b == 0:
        raise Crash(site)
    return a // b


def _mod(a, b, site):
    if b == 0:
        raise Crash(site)
    return a % b


@dataclass(frozen=True)
class _Info:
    code: str
    width: int
    direct: tuple | None  # (offset, width) when the value is a verbatim input load


class _Compiler:
    def __init__(self, module: Module):
        self.module = module
        self.out: list[str] = []
        self.costs = [0]
        self.sites: dict[int, BranchSite] = {}
        self.vars: dict[str, _Info] = {}
        self.current = 0
        self.loops = 0

    def block(self) -> int:
        self.costs.append(0)
        return len(self.costs) - 1

    def emit(self, depth: int, line: str):
        self.out.append("    " * depth + line)

    def expr(self, node, line: int) -> _Info:
        if isinstance(node, Const):
            return _Info(str(node.value & MASK), 0, None)
        if isinstance(node, Load):
            if node.width == 1:
                code = f"x[{node.offset}]"
            else:
                code = f"_fb(x[{node.offset}:{node.offset + node.width}], 'little')"
            return _Info(code, node.width, (node.offset, node.width))
        if isinstance(node, Var):
            info = self.vars[node.name]
            return _Info(f"v_{node.name}", info.width, info.direct)
        if isinstance(node, Unary):
            a = self.expr(node.operand, line)
            return _Info(f"(({node.op}{a.code}) & M)", a.width, None)
        if isinstance(node, Call):
            args = [self.expr(a, line) for a in node.args]
            if node.name == "mix":
                return _Info(f"_mix({args[0].code})", 8, None)
            joined = ", ".join(a.code for a in args)
            return _Info(f"{node.name}({joined})", max(a.width for a in args), None)
        assert isinstance(node, BinOp)
        a = self.expr(node.left, line)
        b = self.expr(node.right, line)
        width = max(a.width, b.width)
        op = node.op
        if op in ("+", "-", "*"):
            code = f"(({a.code} {op} {b.code}) & M)"
        elif op == "<<":
            code = f"(({a.code} << ({b.code} & 63)) & M)"
        elif op == ">>":
            code = f"({a.code} >> ({b.code} & 63))"
        elif op == "/":
            code = f"_div({a.code}, {b.code}, 'div@{line}')"
        elif op == "%":
            code = f"_mod({a.code}, {b.code}, 'div@{line}')"
        elif op in ("&", "|", "^"):
            code = f"({a.code} {op} {b.code})"
        else:
            code = f"int({a.code} {op} {b.code})"
            width = 1
        return _Info(code, width, None)

    def body(self, stmts: list, depth: int):
        for stmt in stmts:
            if isinstance(stmt, Let):
                info = self.expr(stmt.expr, stmt.line)
                self.emit(depth, f"v_{stmt.name} = {info.code}")
                self.vars[stmt.name] = info
                self.costs[self.current] += 1
            elif isinstance(stmt, If):
                self.branch(stmt, depth)
            elif isinstance(stmt, Loop):
                self.loop(stmt, depth)
            elif isinstance(stmt, CrashStmt):
                blk = self.block()
                self.emit(depth, f"P({blk})")
                self.emit(depth, f"raise _Crash('{stmt.site}')")
                self.current = blk
                self.costs[blk] += 1

    @staticmethod
    def _source(lhs: _Info, rhs: _Info):
        for side in (lhs, rhs):
            if side.direct is not None:
                off, w = side.direct
                return tuple(range(off, off + w))
        return None

    def branch(self, node: If, depth: int):
        lhs = self.expr(node.lhs, node.line)
        rhs = self.expr(node.rhs, node.line)
        width = lhs.width or rhs.width or 8
        then_b, else_b = self.block(), self.block()
        src = self._source(lhs, rhs)
        self.sites[node.line] = BranchSite(node.line, node.op, width, src, False, then_b, else_b)
        self.costs[self.current] += 1
        emit = self.emit
        emit(depth, f"_l = {lhs.code}")
        emit(depth, f"_r = {rhs.code}")
        emit(depth, f"_t = _l {node.op} _r")
        emit(depth, "if F is not None:")
        emit(depth + 1, "_t = F()")
        emit(depth, "if R is not None:")
        emit(depth + 1, f"R(_Br({node.line}, _l, _r, '{node.op}', {width}, _t, {src!r}))")
        emit(depth, "if _t:")
        emit(depth + 1, f"P({then_b})")
        self.current = then_b
        self.body(node.then, depth + 1)
        emit(depth, "else:")
        emit(depth + 1, f"P({else_b})")
        self.current = else_b
        self.body(node.orelse, depth + 1)
        join = self.block()
        emit(depth, f"P({join})")
        self.current = join

    def loop(self, node: Loop, depth: int):
        k = self.loops
        self.loops += 1
        count = self.expr(node.count, node.line)
        width = count.width or 8
        head, body_b = self.block(), self.block()
        src = None if count.direct is None else tuple(range(count.direct[0], sum(count.direct)))
        self.costs[self.current] += 1
        emit = self.emit
        emit(depth, f"_n{k} = min({count.code}, {LOOP_CAP})")
        emit(depth, f"_i{k} = 0")
        emit(depth, f"P({head})")
        emit(depth, "while True:")
        d = depth + 1
        emit(d, f"_t = _i{k} < _n{k}")
        emit(d, "if F is not None:")
        emit(d + 1, "_t = F()")
        emit(d, "if R is not None:")
        emit(d + 1, f"R(_Br({node.line}, _i{k}, _n{k}, '<', {width}, _t, {src!r}))")
        emit(d, "if not _t:")
        emit(d + 1, "break")
        emit(d, f"P({body_b})")
        self.costs[head] += 1
        self.current = body_b
        self.body(node.body, d)
        emit(d, f"_i{k} += 1")
        emit(d, f"P({head})")
        exit_b = self.block()
        emit(depth, f"P({exit_b})")
        self.current = exit_b
        self.sites[node.line] = BranchSite(node.line, "<", width, src, True, body_b, exit_b)


@dataclass(frozen=True)
class Compiled:
    run: object
    block_costs: tuple
    sites: dict
    n_blocks: int
    exit_block: int
    source: str


def compile_module(module: Module) -> Compiled:
    c = _Compiler(module)
    c.emit(0, "def run(x, F, R, P):")
    c.emit(1, "P(0)")
    c.body(module.body, 1)
    exit_b = c.block()
    c.emit(1, f"P({exit_b})")
    source = "\n".join(c.out) + "\n"
    namespace = {
        "M": MASK,
        "_fb": int.from_bytes,
        "_mix": mix64,
        "_div": _div,
        "_mod": _mod,
        "_Crash": Crash,
        "_Br": BranchRecord,
    }
    exec(compile(source, "<branch-program>", "exec"), namespace)
    # +1 per block entry so every execution has positive duration
    costs = tuple(cost + 1 for cost in c.costs)
    return Compiled(namespace["run"], costs, dict(c.sites), len(costs), exit_b, source)
