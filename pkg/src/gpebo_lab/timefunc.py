"""Scalar functions of time built from constants and sin/cos harmonics.

Every time-varying matrix entry in a scenario file is a string in this small
grammar, e.g. ``"5.2 + cos(2*t) + 0.5*sin(t)"``::

    expr  := ['-'] term (('+' | '-') term)*
    term  := number | number ['*'] trig | trig
    trig  := ('sin' | 'cos') '(' [['-'] number ['*']] 't' [('+' | '-') number] ')'

Angular frequencies are in rad/s and phases in rad. Only '.' is accepted as
the decimal separator.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "Const",
    "Harmonic",
    "TimeExpr",
    "ParseError",
    "parse_expr",
    "eval_expr",
    "format_expr",
    "ExprTable",
    "compile_exprs",
]


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Harmonic:
    kind: str  # "sin" or "cos"
    amplitude: float = 1.0
    angular_frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"harmonic kind must be 'sin' or 'cos', got {self.kind!r}")


Term = Union[Const, Harmonic]


@dataclass(frozen=True)
class TimeExpr:
    """Immutable sum of terms. ``e1 + e2`` concatenates the term lists."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other: "TimeExpr") -> "TimeExpr":
        if not isinstance(other, TimeExpr):
            return NotImplemented
        return TimeExpr(self.terms + other.terms)

    def __call__(self, t: float) -> float:
        return eval_expr(self, t)

    def __str__(self) -> str:
        return format_expr(self)

    @classmethod
    def constant(cls, value: float) -> "TimeExpr":
        return cls((Const(float(value)),))


class ParseError(ValueError):
    """Syntax error in a time expression; ``pos`` is the 0-based column."""

    def __init__(self, message: str, source: str, pos: int):
        self.source = source
        self.pos = pos
        super().__init__(f"{message} at position {pos} in {source!r}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_]\w*)
  | (?P<op>[-+*()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            tokens.append((text if kind == "op" else kind, text, pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _fail(self, expected: str):
        kind, text, pos = self.tok
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected {expected}, found {found}", self.source, pos)

    def _accept(self, kind: str, text: str | None = None) -> str | None:
        k, t, _ = self.tok
        if k == kind and (text is None or t == text):
            self.i += 1
            return t
        return None

    def _expect(self, kind: str, expected: str, text: str | None = None) -> str:
        value = self._accept(kind, text)
        if value is None:
            self._fail(expected)
        return value

    def _trig_name(self) -> str | None:
        k, t, _ = self.tok
        if k == "name" and t in ("sin", "cos"):
            self.i += 1
            return t
        return None

    def parse(self) -> TimeExpr:
        if self.tok[0] == "end":
            raise ParseError("empty expression", self.source, 0)
        sign = -1.0 if self._accept("-") else 1.0
        terms = [self._term(sign)]
        while True:
            if self._accept("+"):
                terms.append(self._term(1.0))
            elif self._accept("-"):
                terms.append(self._term(-1.0))
            elif self.tok[0] == "end":
                break
            else:
                self._fail("'+', '-' or end of input")
        return TimeExpr(tuple(terms))

    def _term(self, sign: float) -> Term:
        kind = self._trig_name()
        if kind is not None:
            return self._trig(kind, sign)
        number = self._accept("number")
        if number is None:
            self._fail("number, 'sin' or 'cos'")
        value = sign * float(number)
        if self._accept("*"):
            kind = self._trig_name()
            if kind is None:
                self._fail("'sin' or 'cos'")
            return self._trig(kind, value)
        kind = self._trig_name()
        if kind is not None:
            return self._trig(kind, value)
        if self.tok[0] == "(" or (self.tok[0] == "name"):
            self._fail("'*', '+', '-' or end of input")
        return Const(value)

    def _trig(self, kind: str, amplitude: float) -> Harmonic:
        self._expect("(", "'('")
        freq_sign = -1.0 if self._accept("-") else 1.0
        number = self._accept("number")
        if number is None:
            if freq_sign < 0:
                self._fail("number")
            freq = 1.0
        else:
            freq = freq_sign * float(number)
            self._accept("*")
        self._expect("name", "'t'", "t")
        phase = 0.0
        if self._accept("+"):
            phase = float(self._expect("number", "number"))
        elif self._accept("-"):
            phase = -float(self._expect("number", "number"))
        self._expect(")", "')'")
        return Harmonic(kind, amplitude, freq, phase)


def parse_expr(source: str) -> TimeExpr:
    """Parse ``source`` into a :class:`TimeExpr`.

    Raises:
        ParseError: on empty input or any syntax error; the message carries
            the position and the expected token.
    """
    return _Parser(source).parse()


def eval_expr(e: TimeExpr, t: float) -> float:
    total = 0.0
    for term in e.terms:
        if isinstance(term, Const):
            total += term.value
        elif term.kind == "sin":
            total += term.amplitude * math.sin(term.angular_frequency * t + term.phase)
        else:
            total += term.amplitude * math.cos(term.angular_frequency * t + term.phase)
    return total


def _num(x: float) -> str:
    return repr(float(x))


def format_expr(e: TimeExpr) -> str:
    """Canonical text form; ``parse_expr(format_expr(e)) == e``."""
    parts = []
    for idx, term in enumerate(e.terms):
        if isinstance(term, Const):
            value = term.value
            body = None
        else:
            value = term.amplitude
            phase = (" + " if math.copysign(1.0, term.phase) > 0 else " - ") + _num(abs(term.phase))
            body = f"{term.kind}({_num(term.angular_frequency)}*t{phase})"
        negative = math.copysign(1.0, value) < 0
        magnitude = _num(abs(value))
        text = magnitude if body is None else f"{magnitude}*{body}"
        if idx == 0:
            parts.append(("-" if negative else "") + text)
        else:
            parts.append((" - " if negative else " + ") + text)
    return "".join(parts)


# Compiled form used by the jitted simulation kernel. Terms keep their
# source order so kernel and eval_expr sum identically.
KIND_CONST, KIND_SIN, KIND_COS = 0, 1, 2


@dataclass(frozen=True)
class ExprTable:
    """Expressions flattened to arrays: ``params[i, j] = (amp, freq, phase)``."""

    kinds: np.ndarray  # (m, K) int64
    params: np.ndarray  # (m, K, 3) float64
    counts: np.ndarray  # (m,) int64

    def evaluate(self, t: float) -> np.ndarray:
        out = np.empty(len(self.counts))
        _eval_table_py(self.kinds, self.params, self.counts, t, out)
        return out


def compile_exprs(exprs: Sequence[TimeExpr] | Iterable[TimeExpr]) -> ExprTable:
    exprs = list(exprs)
    width = max([len(e.terms) for e in exprs] + [1])
    kinds = np.zeros((len(exprs), width), dtype=np.int64)
    params = np.zeros((len(exprs), width, 3))
    counts = np.zeros(len(exprs), dtype=np.int64)
    for i, e in enumerate(exprs):
        counts[i] = len(e.terms)
        for j, term in enumerate(e.terms):
            if isinstance(term, Const):
                kinds[i, j] = KIND_CONST
                params[i, j] = (term.value, 0.0, 0.0)
            else:
                kinds[i, j] = KIND_SIN if term.kind == "sin" else KIND_COS
                params[i, j] = (term.amplitude, term.angular_frequency, term.phase)
    return ExprTable(kinds, params, counts)


def _eval_table_py(kinds, params, counts, t, out):
    for i in range(counts.shape[0]):
        total = 0.0
        for j in range(counts[i]):
            a = params[i, j, 0]
            if kinds[i, j] == KIND_CONST:
                total += a
            elif kinds[i, j] == KIND_SIN:
                total += a * math.sin(params[i, j, 1] * t + params[i, j, 2])
            else:
                total += a * math.cos(params[i, j, 1] * t + params[i, j, 2])
        out[i] = total
