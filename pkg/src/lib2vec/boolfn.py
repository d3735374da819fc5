"""Boolean function expressions as they appear in Liberty ``function`` attributes.

Grammar (lowest to highest precedence)::

    or   := xor (('+' | '|') xor)*
    xor  := and ('^' and)*
    and  := unary (('*' | '&') unary | unary)*      # juxtaposition is AND
    unary:= '!' unary | primary "'"*
    primary := NAME | '0' | '1' | '(' or ')'

Truth tables index assignments over the input pins sorted lexicographically,
first pin as the most significant bit, so ``NAND2`` over ``(A, B)`` is
``[1, 1, 1, 0]`` for the rows ``00, 01, 10, 11``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

DEFAULT_MAX_INPUTS = 10


class BoolFnError(ValueError):
    pass


class BoolParseError(BoolFnError):
    pass


class MissingPin(BoolFnError):
    pass


class MultiOutput(BoolFnError):
    pass


class TooManyInputs(BoolFnError):
    pass


class PinMismatch(BoolFnError):
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Xor:
    args: tuple


Expr = Union[Var, Const, Not, And, Or, Xor]

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_\[\].]*)|([01])\b|(.))")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        pos = m.end()
        tok = m.group(1) or m.group(2) or m.group(3)
        if tok is None or tok.isspace():
            continue
        if m.group(3) and tok not in "!*&+|^()'":
            raise BoolParseError(f"unexpected character {tok!r} in {text!r}")
        tokens.append(tok)
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def fail(self, expected: str):
        got = self.peek()
        got = "end of expression" if got is None else repr(got)
        raise BoolParseError(f"expected {expected}, got {got} in {self.text!r}")

    def parse(self) -> Expr:
        if not self.tokens:
            raise BoolParseError("empty expression")
        expr = self.parse_or()
        if self.peek() is not None:
            self.fail("operator or end of expression")
        return expr

    def parse_or(self):
        args = [self.parse_xor()]
        while self.peek() in ("+", "|"):
            self.take()
            args.append(self.parse_xor())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def parse_xor(self):
        args = [self.parse_and()]
        while self.peek() == "^":
            self.take()
            args.append(self.parse_and())
        return args[0] if len(args) == 1 else Xor(tuple(args))

    def parse_and(self):
        args = [self.parse_unary()]
        while True:
            tok = self.peek()
            if tok in ("*", "&"):
                self.take()
                args.append(self.parse_unary())
            elif tok is not None and (tok in ("!", "(") or tok[0].isalnum() or tok[0] == "_"):
                args.append(self.parse_unary())
            else:
                break
        return args[0] if len(args) == 1 else And(tuple(args))

    def parse_unary(self):
        if self.peek() == "!":
            self.take()
            return Not(self.parse_unary())
        expr = self.parse_primary()
        while self.peek() == "'":
            self.take()
            expr = Not(expr)
        return expr

    def parse_primary(self):
        tok = self.peek()
        if tok == "(":
            self.take()
            expr = self.parse_or()
            if self.take() != ")":
                self.pos -= 1
                self.fail("')'")
            return expr
        if tok in ("0", "1"):
            self.take()
            return Const(int(tok))
        if tok is not None and (tok[0].isalpha() or tok[0] == "_"):
            self.take()
            return Var(tok)
        self.fail("pin name, constant or '('")


def parse(text: str) -> Expr:
    """Parse a Liberty function string into an expression tree."""
    return _Parser(text).parse()


def variables(expr: Expr) -> set[str]:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Const):
        return set()
    if isinstance(expr, Not):
        return variables(expr.arg)
    out: set[str] = set()
    for a in expr.args:
        out |= variables(a)
    return out


def depth(expr: Expr) -> int:
    if isinstance(expr, (Var, Const)):
        return 1
    if isinstance(expr, Not):
        return 1 + depth(expr.arg)
    return 1 + max(depth(a) for a in expr.args)


_PREC = {Or: 1, Xor: 2, And: 3}
_SYM = {Or: " + ", Xor: " ^ ", And: " * "}


def to_string(expr: Expr) -> str:
    """Print with the minimum parentheses needed to re-parse to the same tree."""

    def go(e, parent_prec):
        if isinstance(e, Var):
            return e.name
        if isinstance(e, Const):
            return str(e.value)
        if isinstance(e, Not):
            inner = go(e.arg, 4)
            return "!" + inner
        prec = _PREC[type(e)]
        # same-precedence children need parentheses to keep the tree shape
        s = _SYM[type(e)].join(go(a, prec + 0.5) for a in e.args)
        return f"({s})" if prec < parent_prec else s

    return go(expr, 0)


def evaluate(expr: Expr, assignment: Mapping[str, int]) -> int:
    """Evaluate on a single assignment of 0/1 values."""
    if isinstance(expr, Var):
        try:
            return int(bool(assignment[expr.name]))
        except KeyError:
            raise MissingPin(f"pin {expr.name!r} is not assigned") from None
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Not):
        return 1 - evaluate(expr.arg, assignment)
    vals = [evaluate(a, assignment) for a in expr.args]
    if isinstance(expr, And):
        return int(all(vals))
    if isinstance(expr, Or):
        return int(any(vals))
    return sum(vals) % 2


def evaluate_array(expr: Expr, env: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized evaluation; ``env`` maps pin names to boolean arrays."""
    if isinstance(expr, Var):
        try:
            return np.asarray(env[expr.name], dtype=bool)
        except KeyError:
            raise MissingPin(f"pin {expr.name!r} is not assigned") from None
    if isinstance(expr, Const):
        shape = np.shape(next(iter(env.values()))) if env else ()
        return np.full(shape, bool(expr.value))
    if isinstance(expr, Not):
        return ~evaluate_array(expr.arg, env)
    vals = [evaluate_array(a, env) for a in expr.args]
    out = vals[0].copy()
    for v in vals[1:]:
        if isinstance(expr, And):
            out &= v
        elif isinstance(expr, Or):
            out |= v
        else:
            out ^= v
    return out


def assignments(pins: Sequence[str]) -> np.ndarray:
    """All 2^n assignments as a (2^n, n) uint8 matrix, row i = binary expansion of i."""
    n = len(pins)
    idx = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


@dataclass(frozen=True)
class TruthTable:
    input_pins: tuple
    bits: tuple

    def __post_init__(self):
        if len(self.bits) != 2 ** len(self.input_pins):
            raise BoolFnError(
                f"truth table over {len(self.input_pins)} pins needs {2 ** len(self.input_pins)} bits"
            )

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def truth_table(expr: Expr, input_pins: Iterable[str], limit: int = DEFAULT_MAX_INPUTS) -> TruthTable:
    pins = tuple(sorted(input_pins))
    if len(pins) > limit:
        raise TooManyInputs(f"{len(pins)} inputs exceeds the limit of {limit}")
    missing = variables(expr) - set(pins)
    if missing:
        raise MissingPin(f"expression uses undeclared pins {sorted(missing)}")
    rows = assignments(pins).astype(bool)
    env = {p: rows[:, i] for i, p in enumerate(pins)}
    if pins:
        bits = evaluate_array(expr, env)
    else:
        bits = np.array([evaluate(expr, {})], dtype=bool)
    return TruthTable(pins, tuple(int(b) for b in np.atleast_1d(bits)))


def cell_truth_table(cell, limit: int = DEFAULT_MAX_INPUTS) -> TruthTable:
    """Truth table of a single-output cell (anything with ``input_pins``/``output_pins``)."""
    if len(cell.output_pins) != 1:
        raise MultiOutput(f"{cell.name} has {len(cell.output_pins)} output pins")
    _, expr = cell.output_pins[0]
    if expr is None:
        raise BoolFnError(f"{cell.name} output has no function")
    return truth_table(expr, cell.input_pins, limit)


def fun_sim(a: TruthTable, b: TruthTable) -> float:
    """Fraction of input assignments on which the two functions agree."""
    if a.input_pins != b.input_pins:
        raise PinMismatch(f"pins differ: {a.input_pins} vs {b.input_pins}")
    same = sum(x == y for x, y in zip(a.bits, b.bits))
    return same / len(a.bits)


def is_inverting_pair(a: TruthTable, b: TruthTable) -> bool:
    return fun_sim(a, b) == 0.0
