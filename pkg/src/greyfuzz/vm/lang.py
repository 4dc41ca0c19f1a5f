"""Parser for the branch-program language.

One statement per line::

    input 1024                   # input size in bytes (exactly once, top level)
    let A = x[100] + 10          # byte load; x[off:w] is a little-endian w-byte load
    if A == 50 {                 # conditional; any comparison, or bare expr (!= 0)
    } else {
    }
    loop x[0] {                  # run the body min(value, LOOP_CAP) times
    }
    crash 7                      # crash site

Expressions operate on unsigned 64-bit integers (wrapping).  Precedence, loosest
first: comparisons (== != < <= > >=, yield 0/1), |, ^, &, << >>, + -, * / %,
unary ~.  Division or modulo by zero is a crash.  Builtin functions: ``mix(e)``
(64-bit avalanche mixer), ``min(a, b)``, ``max(a, b)``.  ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
FUNCTIONS = {"mix": 1, "min": 2, "max": 2}
LOOP_CAP = 1024


class ProgramError(ValueError):
    """Syntax or semantic error in program text, with a source position."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


# -- AST -----------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Load:
    offset: int
    width: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass
class Let:
    line: int
    name: str
    expr: object


@dataclass
class If:
    line: int
    op: str
    lhs: object
    rhs: object
    then: list = field(default_factory=list)
    orelse: list = field(default_factory=list)
    has_else: bool = False


@dataclass
class Loop:
    line: int
    count: object
    body: list = field(default_factory=list)


@dataclass
class Crash:
    line: int
    site: int


@dataclass
class Module:
    input_size: int
    body: list


# -- tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<char>'(?:[^'\\]|\\.)')
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<<|>>|[<>+\-*/%&|^~()\[\]{}:,=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


def _tokenize(text: str, lineno: int) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos] == "#":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProgramError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return tokens


# -- parser --------------------------------------------------------------------

_BINARY_LEVELS = [("|",), ("^",), ("&",), ("<<", ">>"), ("+", "-"), ("*", "/", "%")]


class _LineParser:
    def __init__(self, tokens: list[Token], lineno: int, end_column: int):
        self.tokens = tokens
        self.i = 0
        self.lineno = lineno
        self.end_column = end_column

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def error(self, message: str, tok: Token | None = None):
        tok = tok if tok is not None else self.peek()
        col = tok.column if tok is not None else self.end_column
        raise ProgramError(message, self.lineno, col)

    def take(self, text: str | None = None, kind: str | None = None) -> Token:
        tok = self.peek()
        if tok is None:
            self.error(f"expected {text or kind}, found end of line")
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            self.error(f"expected {text or kind}, found {tok.text!r}", tok)
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.i += 1
            return True
        return False

    def at_end(self) -> bool:
        return self.i >= len(self.tokens)

    def expect_end(self):
        if not self.at_end():
            self.error(f"unexpected {self.peek().text!r}")

    def integer(self) -> int:
        tok = self.take(kind="num")
        return int(tok.text, 0)

    # expressions
    def comparison(self):
        left = self.binary(0)
        tok = self.peek()
        if tok is not None and tok.text in CMP_OPS:
            self.i += 1
            right = self.binary(0)
            return BinOp(tok.text, left, right)
        return left

    def binary(self, level: int):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while True:
            tok = self.peek()
            if tok is None or tok.text not in _BINARY_LEVELS[level]:
                return left
            self.i += 1
            left = BinOp(tok.text, left, self.binary(level + 1))

    def unary(self):
        if self.accept("~"):
            return Unary("~", self.unary())
        if self.accept("-"):
            return Unary("-", self.unary())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok is None:
            self.error("expected expression, found end of line")
        if tok.kind == "num":
            self.i += 1
            return Const(int(tok.text, 0))
        if tok.kind == "char":
            self.i += 1
            body = tok.text[1:-1].encode().decode("unicode_escape")
            return Const(ord(body))
        if tok.text == "(":
            self.i += 1
            inner = self.comparison()
            self.take(")")
            return inner
        if tok.kind == "name":
            self.i += 1
            if tok.text == "x" and self.accept("["):
                offset = self.integer()
                width = 1
                if self.accept(":"):
                    wtok = self.peek()
                    width = self.integer()
                    if width not in (1, 2, 4, 8):
                        self.error("load width must be 1, 2, 4 or 8", wtok)
                self.take("]")
                return Load(offset, width)
            if self.accept("("):
                if tok.text not in FUNCTIONS:
                    self.error(f"unknown function {tok.text!r}", tok)
                args = [self.comparison()]
                while self.accept(","):
                    args.append(self.comparison())
                self.take(")")
                if len(args) != FUNCTIONS[tok.text]:
                    self.error(f"{tok.text}() takes {FUNCTIONS[tok.text]} argument(s)", tok)
                return Call(tok.text, tuple(args))
            return Var(tok.text)
        self.error(f"unexpected {tok.text!r}", tok)


_KEYWORDS = {"input", "let", "if", "else", "loop", "crash", "x"} | set(FUNCTIONS)


def parse(source: str) -> Module:
    """Parse program text into a :class:`Module`; raises :class:`ProgramError`."""
    root: list = []
    # stack entries: (statement list, owning node, opening line)
    stack: list[tuple[list, object, int]] = [(root, None, 0)]
    input_size = None
    input_line = 0
    defined: set[str] = set()
    loads: list[tuple[Load, int]] = []

    def collect_loads(expr, lineno):
        if isinstance(expr, Load):
            loads.append((expr, lineno))
        elif isinstance(expr, BinOp):
            collect_loads(expr.left, lineno)
            collect_loads(expr.right, lineno)
        elif isinstance(expr, Unary):
            collect_loads(expr.operand, lineno)
        elif isinstance(expr, Call):
            for a in expr.args:
                collect_loads(a, lineno)

    def check_vars(expr, p: _LineParser):
        if isinstance(expr, Var):
            if expr.name not in defined:
                p.error(f"undefined variable {expr.name!r}", p.tokens[0])
        elif isinstance(expr, BinOp):
            check_vars(expr.left, p)
            check_vars(expr.right, p)
        elif isinstance(expr, Unary):
            check_vars(expr.operand, p)
        elif isinstance(expr, Call):
            for a in expr.args:
                check_vars(a, p)

    for lineno, raw in enumerate(source.splitlines(), start=1):
        tokens = _tokenize(raw, lineno)
        if not tokens:
            continue
        p = _LineParser(tokens, lineno, len(raw.rstrip()) + 1)
        head = p.peek()
        body = stack[-1][0]

        if head.text == "}":
            p.take("}")
            if len(stack) == 1:
                p.error("unmatched '}'", head)
            _, owner, _ = stack.pop()
            if p.accept("else"):
                if not isinstance(owner, If) or owner.has_else:
                    p.error("'else' must follow the body of an if", head)
                p.take("{")
                p.expect_end()
                owner.has_else = True
                stack.append((owner.orelse, owner, lineno))
            else:
                p.expect_end()
            continue

        if head.kind != "name" or head.text not in ("input", "let", "if", "loop", "crash"):
            p.error(f"unknown statement {head.text!r}", head)
        p.i += 1

        if head.text == "input":
            if len(stack) > 1:
                p.error("'input' is only allowed at top level", head)
            if input_size is not None:
                p.error(f"duplicate 'input' (first on line {input_line})", head)
            input_size = p.integer()
            input_line = lineno
            if input_size < 1:
                p.error("input size must be positive", head)
            p.expect_end()
        elif head.text == "let":
            name_tok = p.take(kind="name")
            if name_tok.text in _KEYWORDS:
                p.error(f"{name_tok.text!r} is reserved", name_tok)
            p.take("=")
            expr = p.comparison()
            p.expect_end()
            check_vars(expr, p)
            collect_loads(expr, lineno)
            defined.add(name_tok.text)
            body.append(Let(lineno, name_tok.text, expr))
        elif head.text == "if":
            cond = p.comparison()
            p.take("{")
            p.expect_end()
            check_vars(cond, p)
            collect_loads(cond, lineno)
            if isinstance(cond, BinOp) and cond.op in CMP_OPS:
                node = If(lineno, cond.op, cond.left, cond.right)
            else:
                node = If(lineno, "!=", cond, Const(0))
            body.append(node)
            stack.append((node.then, node, lineno))
        elif head.text == "loop":
            count = p.comparison()
            p.take("{")
            p.expect_end()
            check_vars(count, p)
            collect_loads(count, lineno)
            node = Loop(lineno, count)
            body.append(node)
            stack.append((node.body, node, lineno))
        else:
            site = p.integer()
            p.expect_end()
            body.append(Crash(lineno, site))

    if len(stack) > 1:
        _, owner, opened = stack[-1]
        raise ProgramError("block opened here is never closed", opened)
    if input_size is None:
        raise ProgramError("missing 'input <n>' declaration", 1)
    for load, lineno in loads:
        if load.offset + load.width > input_size:
            raise ProgramError(
                f"load x[{load.offset}:{load.width}] outside input of {input_size} bytes", lineno
            )
    return Module(input_size, root)
