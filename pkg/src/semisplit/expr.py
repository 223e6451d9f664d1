"""Closed-form coordinate expressions: AST, parser, derivatives, evaluation.

The grammar (documented in the README) is infix arithmetic with function
calls ``fn(arg)``, ``^`` for powers with constant exponent, and ``pi`` as a
literal.  Expressions are immutable; evaluation is pure, so compiled
evaluators are safe to share between workers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

UNARY_OPS = ("neg", "sin", "cos", "exp", "log", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

_UNARY_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "neg": lambda v: -v,
}

GRAMMAR_EBNF = """\
expression = term , { ( "+" | "-" ) , term } ;
term       = factor , { ( "*" | "/" ) , factor } ;
factor     = "-" , factor | power ;
power      = atom , [ "^" , factor ] ;          (* exponent must fold to a constant *)
atom       = number | "pi" | identifier
           | identifier , "(" , expression , ")"
           | "(" , expression , ")" ;
number     = digits , [ "." , digits ] , [ ( "e" | "E" ) , [ "+" | "-" ] , digits ] ;
identifier = ( letter | "_" ) , { letter | digit | "_" } ;
"""


class ExprError(ValueError):
    """Base class for expression failures."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        hint = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier '{name}' at offset {offset}")


class DomainEvalError(ExprError):
    """Evaluation hit a point outside the mathematical domain (log of a
    nonpositive number, sqrt of a negative, division by zero)."""

    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message} in subexpression '{to_text(subexpr)}'")


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


ZERO = Const(0.0)
ONE = Const(1.0)

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    """Recursive-descent parser over a flat token list with byte offsets."""

    def __init__(self, text: str, coords: Sequence[str]):
        self.text = text
        self.coords = set(coords)
        self.tokens: list[tuple[str, str, int]] = []  # (kind, value, offset)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                bad = pos + (len(text[pos:]) - len(stripped))
                raise ParseError(f"unexpected character {text[bad]!r}", bad)
            if m.group("num") is not None:
                self.tokens.append(("num", m.group("num"), m.start("num")))
            elif m.group("ident") is not None:
                self.tokens.append(("ident", m.group("ident"), m.start("ident")))
            else:
                self.tokens.append(("op", m.group("op"), m.start("op")))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str):
        kind, value, offset = self.peek()
        if kind != "op" or value != symbol:
            raise ParseError("syntax error", offset, expected=[symbol])
        return self.advance()

    def parse(self) -> Expr:
        e = self.expression()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {value!r}", offset, expected=["end of input"])
        return e

    def expression(self) -> Expr:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("+", "-"):
                self.advance()
                rhs = self.term()
                e = Binary("add" if value == "+" else "sub", e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("*", "/"):
                self.advance()
                rhs = self.factor()
                e = Binary("mul" if value == "*" else "div", e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            inner = self.factor()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, offset = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            exp_offset = self.peek()[2]
            exponent = self.factor()
            folded = simplify(exponent)
            if not isinstance(folded, Const):
                raise ParseError("power exponent must fold to a constant", exp_offset)
            return Binary("pow", base, folded)
        return base

    def atom(self) -> Expr:
        kind, value, offset = self.advance()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            nkind, nvalue, _ = self.peek()
            if nkind == "op" and nvalue == "(":
                if value not in _UNARY_FN or value == "neg":
                    raise UnknownIdentifierError(value, offset)
                self.advance()
                arg = self.expression()
                self.expect_op(")")
                return Unary(value, arg)
            if value == "pi":
                return Const(math.pi)
            if value not in self.coords:
                raise UnknownIdentifierError(value, offset)
            return Var(value)
        if kind == "op" and value == "(":
            e = self.expression()
            self.expect_op(")")
            return e
        raise ParseError(
            "syntax error",
            offset,
            expected=["number", "identifier", "pi", "(", "-"],
        )


def parse(text: str, coords: Sequence[str]) -> Expr:
    """Parse `text` into an AST whose variables are restricted to `coords`."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text, coords).parse()


_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Print an expression; output re-parses to a structurally equal tree."""

    def go(node: Expr, parent_prec: int, rhs_of_noncommutative: bool) -> str:
        if isinstance(node, Const):
            s = _fmt_const(node.value)
            if node.value < 0 and parent_prec > 1:
                return f"({s})"
            return s
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            if node.op == "neg":
                inner = go(node.arg, _PRECEDENCE["neg"], False)
                s = f"-{inner}"
                return f"({s})" if parent_prec > _PRECEDENCE["neg"] or rhs_of_noncommutative else s
            return f"{node.op}({go(node.arg, 0, False)})"
        assert isinstance(node, Binary)
        prec = _PRECEDENCE[node.op]
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[node.op]
        # '^' is right-associative: a nested base at equal precedence needs parens
        left = go(node.left, prec + 1 if node.op == "pow" else prec, False)
        # structural fidelity: any right operand at equal precedence is grouped
        right = go(node.right, prec, True)
        s = f"{left}{sym}{right}"
        if prec < parent_prec or (prec == parent_prec and rhs_of_noncommutative):
            return f"({s})"
        return s

    return go(e, 0, False)


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return free_vars(e.arg)
    if isinstance(e, Binary):
        return free_vars(e.left) | free_vars(e.right)
    return set()


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (capture is not a concern: variables
    are coordinate names, not binders)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    return e


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Tree-walking evaluator with domain diagnostics (slow path)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnknownIdentifierError(e.name, -1) from None
    if isinstance(e, Unary):
        v = evaluate(e.arg, env)
        if e.op == "log" and v <= 0.0:
            raise DomainEvalError(f"log of nonpositive value {v}", e)
        if e.op == "sqrt" and v < 0.0:
            raise DomainEvalError(f"sqrt of negative value {v}", e)
        return _UNARY_FN[e.op](v)
    assert isinstance(e, Binary)
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if e.op == "div":
        if b == 0.0:
            raise DomainEvalError("division by zero", e)
        return a / b
    if a < 0.0 and b != int(b):
        raise DomainEvalError(f"fractional power of negative base {a}", e)
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError) as exc:
        raise DomainEvalError(str(exc), e) from None


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to `var`."""
    d = lambda sub: differentiate(sub, var)
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Unary):
        inner = d(e.arg)
        if e.op == "neg":
            return simplify(Unary("neg", inner))
        if e.op == "sin":
            out = Binary("mul", Unary("cos", e.arg), inner)
        elif e.op == "cos":
            out = Binary("mul", Unary("neg", Unary("sin", e.arg)), inner)
        elif e.op == "exp":
            out = Binary("mul", e, inner)
        elif e.op == "log":
            out = Binary("div", inner, e.arg)
        else:  # sqrt
            out = Binary("div", inner, Binary("mul", Const(2.0), e))
        return simplify(out)
    assert isinstance(e, Binary)
    if e.op == "add":
        return simplify(Binary("add", d(e.left), d(e.right)))
    if e.op == "sub":
        return simplify(Binary("sub", d(e.left), d(e.right)))
    if e.op == "mul":
        return simplify(
            Binary(
                "add",
                Binary("mul", d(e.left), e.right),
                Binary("mul", e.left, d(e.right)),
            )
        )
    if e.op == "div":
        num = Binary(
            "sub",
            Binary("mul", d(e.left), e.right),
            Binary("mul", e.left, d(e.right)),
        )
        return simplify(Binary("div", num, Binary("mul", e.right, e.right)))
    # pow: exponent is constant by construction
    c = e.right
    assert isinstance(c, Const)
    lowered = Binary("pow", e.left, Const(c.value - 1.0))
    return simplify(Binary("mul", Binary("mul", c, lowered), d(e.left)))


def _fold_unary(op: str, arg: Const) -> Expr | None:
    # leave the node alone when folding would raise; evaluate() reports it
    v = arg.value
    if op == "log" and v <= 0.0:
        return None
    if op == "sqrt" and v < 0.0:
        return None
    try:
        return Const(_UNARY_FN[op](v))
    except (ValueError, OverflowError):
        return None


def _simplify_node(e: Expr) -> Expr:
    """Local rewrite rules; children are already simplified."""
    if isinstance(e, Unary):
        a = e.arg
        if e.op == "neg":
            if isinstance(a, Const):
                return Const(-a.value)
            if isinstance(a, Unary) and a.op == "neg":
                return a.arg
            return e
        if isinstance(a, Const):
            folded = _fold_unary(e.op, a)
            return folded if folded is not None else e
        return e
    if not isinstance(e, Binary):
        return e
    l, r = e.left, e.right
    lc = l.value if isinstance(l, Const) else None
    rc = r.value if isinstance(r, Const) else None
    if e.op == "add":
        if lc == 0.0:
            return r
        if rc == 0.0:
            return l
        if lc is not None and rc is not None:
            return Const(lc + rc)
    elif e.op == "sub":
        if rc == 0.0:
            return l
        if lc == 0.0:
            return _simplify_node(Unary("neg", r))
        if lc is not None and rc is not None:
            return Const(lc - rc)
        if l == r:
            return ZERO
    elif e.op == "mul":
        if lc == 0.0 or rc == 0.0:
            return ZERO
        if lc == 1.0:
            return r
        if rc == 1.0:
            return l
        if lc == -1.0:
            return _simplify_node(Unary("neg", r))
        if rc == -1.0:
            return _simplify_node(Unary("neg", l))
        if lc is not None and rc is not None:
            return Const(lc * rc)
    elif e.op == "div":
        if lc == 0.0:
            return ZERO
        if rc == 1.0:
            return l
        if rc == -1.0:
            return _simplify_node(Unary("neg", l))
        if lc is not None and rc is not None and rc != 0.0:
            return Const(lc / rc)
    elif e.op == "pow":
        if rc == 0.0:
            return ONE
        if rc == 1.0:
            return l
        if lc is not None and rc is not None:
            if not (lc < 0.0 and rc != int(rc)):
                try:
                    return Const(math.pow(lc, rc))
                except (ValueError, OverflowError):
                    return e
    return e


def simplify(e: Expr) -> Expr:
    """Constant folding plus 0/1 identities; pointwise-equal on the domain
    and idempotent.  Deliberately not a canonicalizer."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        return _simplify_node(Unary(e.op, simplify(e.arg)))
    assert isinstance(e, Binary)
    return _simplify_node(Binary(e.op, simplify(e.left), simplify(e.right)))


# ---------------------------------------------------------------------------
# compilation to fast evaluators


def _emit(e: Expr, names: Mapping[str, str], cache: dict[Expr, str], lines: list[str]) -> str:
    """Emit `e` into `lines` with hash-consing; returns the local holding it."""
    hit = cache.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        src = repr(e.value)
    elif isinstance(e, Var):
        src = names[e.name]
    elif isinstance(e, Unary):
        a = _emit(e.arg, names, cache, lines)
        src = f"-{a}" if e.op == "neg" else f"_{e.op}({a})"
    else:
        a = _emit(e.left, names, cache, lines)
        b = _emit(e.right, names, cache, lines)
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "**"}[e.op]
        src = f"({a}{sym}{b})"
    local = f"_s{len(cache)}"
    lines.append(f" {local} = {src}")
    cache[e] = local
    return local


def compile_exprs(
    exprs: Iterable[Expr], coords: Sequence[str]
) -> Callable[[Sequence[float]], tuple[float, ...]]:
    """Compile a batch of expressions into one function point -> tuple.

    Shared subtrees are evaluated once.  The caller guarantees the point is
    inside the validated domain; math domain errors propagate as ValueError.
    """
    exprs = list(exprs)
    names = {c: f"_v{i}" for i, c in enumerate(coords)}
    lines: list[str] = []
    cache: dict[Expr, str] = {}
    outs = [_emit(e, names, cache, lines) for e in exprs]
    args = ", ".join(names[c] for c in coords)
    body = "\n".join(lines) if lines else " pass"
    src = f"def _compiled({args}):\n{body}\n return ({', '.join(outs)},)\n"
    namespace = {
        "_sin": math.sin,
        "_cos": math.cos,
        "_exp": math.exp,
        "_log": math.log,
        "_sqrt": math.sqrt,
        "__builtins__": {},
    }
    exec(compile(src, "<semisplit-expr>", "exec"), namespace)
    fn = namespace["_compiled"]

    def evaluator(point: Sequence[float]) -> tuple[float, ...]:
        return fn(*point)

    evaluator.n_outputs = len(exprs)  # type: ignore[attr-defined]
    return evaluator


def compile_expr(e: Expr, coords: Sequence[str]) -> Callable[[Sequence[float]], float]:
    batch = compile_exprs([e], coords)

    def evaluator(point: Sequence[float]) -> float:
        return batch(point)[0]

    return evaluator
