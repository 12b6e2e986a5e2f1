"""Arithmetic expression DSL for problem coefficients.

Coefficients of the hyperbolic system (speeds, couplings, right-hand
sides, perturbations) are written as strings over the variables
``x``, ``t``, ``u1`` .. ``un``.  The grammar supports ``+ - * / ^``
(``^`` right-associative, unary minus between ``^`` and ``*``),
parentheses, and the single-argument functions ``sin cos exp sqrt tanh
abs``.  Parsing is recursive descent with Pratt-style precedence
climbing so syntax errors carry exact byte offsets.

Evaluation works on scalars and on numpy arrays alike and refuses to
return NaN/Inf: a silent NaN would corrupt characteristic tracing
downstream, so out-of-domain operations raise :class:`DomainError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, MissingVariableError

__all__ = [
    "ExprAst",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "free_vars",
    "to_source",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "tanh", "abs")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # only "neg"
    operand: "ExprAst"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    lhs: "ExprAst"
    rhs: "ExprAst"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "ExprAst"


ExprAst = Union[Const, Var, Unary, Binary, Call]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

# binding powers; ^ > unary - > * / > + -
_ADD, _MUL, _UNARY, _POW = 10, 20, 30, 40
_LBP = {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}


class _Parser:
    def __init__(self, source: str, allowed_vars: frozenset[str] | None):
        self.source = source
        self.allowed = allowed_vars
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        end = len(source.rstrip())
        while pos < end:
            m = _TOKEN_RE.match(source, pos)
            if m is None or m.end() == pos:
                stripped = source[pos:].lstrip()
                at = len(source) - len(stripped)
                raise ExprSyntaxError(f"unexpected character {stripped[0]!r}", at)
            if m.group("num") is not None:
                self.tokens.append(("num", m.group("num"), m.start("num")))
            elif m.group("name") is not None:
                self.tokens.append(("name", m.group("name"), m.start("name")))
            else:
                self.tokens.append(("op", m.group("op"), m.start("op")))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", off)
        self.advance()

    def parse_expr(self, rbp: int) -> ExprAst:
        left = self.parse_prefix()
        while True:
            kind, val, _ = self.peek()
            if kind != "op" or val not in _LBP:
                break
            lbp = _LBP[val]
            if lbp <= rbp:
                break
            self.advance()
            # ^ is right-associative: recurse with lbp-1 so an equal-power
            # operator on the right still binds
            right = self.parse_expr(lbp - 1 if val == "^" else lbp)
            left = Binary(val, left, right)
        return left

    def parse_prefix(self) -> ExprAst:
        kind, val, off = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                if val not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {val!r}", off)
                self.advance()
                arg = self.parse_expr(0)
                self.expect_op(")")
                return Call(val, arg)
            if self.allowed is not None and val not in self.allowed:
                raise ExprSyntaxError(f"unknown variable {val!r}", off)
            return Var(val)
        if kind == "op" and val == "(":
            inner = self.parse_expr(0)
            self.expect_op(")")
            return inner
        if kind == "op" and val == "-":
            return Unary("neg", self.parse_expr(_UNARY))
        if kind == "end":
            raise ExprSyntaxError("unexpected end of expression", off)
        raise ExprSyntaxError(f"unexpected token {val!r}", off)


def parse(source: str, allowed_vars=None) -> ExprAst:
    """Parse ``source`` into an AST.

    ``allowed_vars`` optionally restricts variable identifiers; any other
    name (not followed by ``(``) raises :class:`ExprSyntaxError` with the
    offending offset.
    """
    allowed = frozenset(allowed_vars) if allowed_vars is not None else None
    p = _Parser(source, allowed)
    ast = p.parse_expr(0)
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input starting with {val!r}", off)
    return ast


def free_vars(ast: ExprAst) -> frozenset[str]:
    """Exactly the identifiers appearing in variable nodes."""
    if isinstance(ast, Var):
        return frozenset((ast.name,))
    if isinstance(ast, Const):
        return frozenset()
    if isinstance(ast, Unary):
        return free_vars(ast.operand)
    if isinstance(ast, Call):
        return free_vars(ast.arg)
    return free_vars(ast.lhs) | free_vars(ast.rhs)


_NP_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
}


def _eval(ast: ExprAst, env: Mapping[str, object]):
    if isinstance(ast, Const):
        return ast.value
    if isinstance(ast, Var):
        try:
            return env[ast.name]
        except KeyError:
            raise MissingVariableError(f"no binding for variable {ast.name!r}") from None
    if isinstance(ast, Unary):
        return -_eval(ast.operand, env)
    if isinstance(ast, Call):
        arg = _eval(ast.arg, env)
        if ast.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise DomainError("sqrt of a negative value")
        with np.errstate(over="ignore", invalid="ignore"):
            return _NP_FUNCS[ast.func](arg)
    lhs = _eval(ast.lhs, env)
    rhs = _eval(ast.rhs, env)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if ast.op == "+":
            return lhs + rhs
        if ast.op == "-":
            return lhs - rhs
        if ast.op == "*":
            return lhs * rhs
        if ast.op == "/":
            if np.any(np.asarray(rhs) == 0):
                raise DomainError("division by zero")
            return lhs / rhs
        return np.power(lhs, rhs)


def evaluate(ast: ExprAst, env: Mapping[str, object]):
    """Evaluate ``ast`` under ``env`` (scalars or numpy arrays).

    Pure function of its inputs.  Raises :class:`MissingVariableError`
    for unbound variables and :class:`DomainError` whenever the result
    (or an intermediate sqrt/division) leaves the finite reals.
    """
    out = _eval(ast, env)
    arr = np.asarray(out)
    if not np.all(np.isfinite(arr)):
        raise DomainError("expression evaluated to a non-finite value")
    if arr.ndim == 0:
        return float(arr)
    return out


def to_source(ast: ExprAst) -> str:
    """Render the AST back to parseable text.

    For every tree produced by :func:`parse` the output re-parses to a
    structurally identical tree.  (Programmatically built trees holding
    negative constants print with an explicit leading minus and re-parse
    as a unary negation instead.)
    """
    return _print(ast, 0)


def _print(ast: ExprAst, parent_bp: int) -> str:
    if isinstance(ast, Const):
        s = repr(ast.value)
        return f"({s})" if ast.value < 0 and parent_bp > 0 else s
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Call):
        return f"{ast.func}({_print(ast.arg, 0)})"
    if isinstance(ast, Unary):
        body = _print(ast.operand, _UNARY)
        s = f"-{body}"
        return f"({s})" if parent_bp >= _UNARY else s
    bp = _LBP[ast.op]
    # right-assoc ^: the left child needs parens at equal power
    lhs = _print(ast.lhs, bp if ast.op == "^" else bp - 1)
    rhs = _print(ast.rhs, bp - 1 if ast.op == "^" else bp)
    pad = " " if bp == _ADD else ""
    s = f"{lhs}{pad}{ast.op}{pad}{rhs}"
    return f"({s})" if bp <= parent_bp else s
