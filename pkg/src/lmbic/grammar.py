"""Model-spec expressions.

A model is a comma-separated list of expressions, each producing a list of
terms::

    1 | const               the constant
    lin(x)                  x itself
    pow(x, a)               1, x, ..., x**(a-1)
    spline(x, s, knots)     truncated-power spline of order s; knots is a list
                            literal or an integer count of quantile knots
    prod(e1, e2[, max_degree=d])   pairwise products of two expressions
    tensor(x, z, a[, max_degree=d]) == prod(pow(x, a), pow(z, a))

Variables are written ``x0, x1, ...`` or by column name. Integer arguments may
be literals, ``a_n``, any extra symbol supplied by the caller, or simple
arithmetic on those (``a_n + 1``).
"""

from __future__ import annotations

import ast
from typing import Mapping, Sequence

import numpy as np

from . import basis
from .basis import TermDescriptor
from .errors import InvalidArgumentError, SpecGrammarError

FUNCTIONS = ("lin", "pow", "spline", "prod", "tensor")


class _Context:
    def __init__(self, a_n, X, variable_names, symbols):
        self.symbols = {"a_n": a_n, **(symbols or {})}
        self.X = None if X is None else np.asarray(X, dtype=float)
        self.names = list(variable_names) if variable_names is not None else []


def _token(node: ast.AST, source: str) -> str:
    return ast.get_source_segment(source, node) or ast.dump(node)


def parse_terms(
    text: str,
    a_n: int | None = None,
    X=None,
    variable_names: Sequence[str] | None = None,
    symbols: Mapping[str, int] | None = None,
) -> list[TermDescriptor]:
    """Parse a model-spec expression list into canonical, deduplicated terms."""
    ctx = _Context(a_n, X, variable_names, symbols)
    source = text.strip()
    if not source:
        raise SpecGrammarError("empty model expression")
    try:
        tree = ast.parse(f"[{source}]", mode="eval")
    except SyntaxError as exc:
        raise SpecGrammarError(f"cannot parse model expression {text!r}: {exc.msg}") from None
    wrapped = f"[{source}]"
    terms: list[TermDescriptor] = []
    for node in tree.body.elts:
        terms.extend(_expr(node, ctx, wrapped))
    return basis.dedupe(terms)


def _expr(node, ctx: _Context, src: str) -> list[TermDescriptor]:
    if isinstance(node, ast.Constant) and node.value == 1 and not isinstance(node.value, bool):
        return [basis.constant()]
    if isinstance(node, ast.Name) and node.id == "const":
        return [basis.constant()]
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise SpecGrammarError(f"unexpected token {_token(node, src)!r}")
    fn = node.func.id
    if fn not in FUNCTIONS:
        raise SpecGrammarError(
            f"unknown function {fn!r} in {_token(node, src)!r}; expected one of {FUNCTIONS}"
        )
    args = node.args
    kwargs = {kw.arg: kw.value for kw in node.keywords}
    allowed_kw = {"max_degree"} if fn in ("prod", "tensor") else set()
    extra = set(kwargs) - allowed_kw
    if extra:
        raise SpecGrammarError(f"unexpected keyword {sorted(extra)} in {_token(node, src)!r}")
    max_degree = _int(kwargs["max_degree"], ctx, src) if "max_degree" in kwargs else None

    def need(count):
        if len(args) != count:
            raise SpecGrammarError(
                f"{fn} takes {count} arguments, got {len(args)} in {_token(node, src)!r}"
            )

    try:
        if fn == "lin":
            need(1)
            return [basis.raw(_var(args[0], ctx, src))]
        if fn == "pow":
            need(2)
            return basis.power_terms(_var(args[0], ctx, src), _int(args[1], ctx, src))
        if fn == "spline":
            need(3)
            var = _var(args[0], ctx, src)
            order = _int(args[1], ctx, src)
            knots = _knots(args[2], var, ctx, src)
            return basis.spline_terms(var, order, knots)
        if fn == "prod":
            need(2)
            return basis.tensor_terms(
                _expr(args[0], ctx, src), _expr(args[1], ctx, src), max_degree=max_degree
            )
        need(3)
        a = _int(args[2], ctx, src)
        return basis.tensor_terms(
            basis.power_terms(_var(args[0], ctx, src), a),
            basis.power_terms(_var(args[1], ctx, src), a),
            max_degree=max_degree,
        )
    except InvalidArgumentError as exc:
        if isinstance(exc, SpecGrammarError):
            raise
        raise SpecGrammarError(f"in {_token(node, src)!r}: {exc}") from None


def _var(node, ctx: _Context, src: str) -> int:
    if isinstance(node, ast.Name):
        if node.id in ctx.names:
            return ctx.names.index(node.id)
        name = node.id
        if name.startswith("x") and name[1:].isdigit():
            j = int(name[1:])
            if ctx.names and j >= len(ctx.names):
                raise SpecGrammarError(f"variable {name!r} is out of range")
            return j
    raise SpecGrammarError(f"unknown variable {_token(node, src)!r}")


def _int(node, ctx: _Context, src: str) -> int:
    value = _arith(node, ctx, src)
    if isinstance(value, float) and not value.is_integer():
        raise SpecGrammarError(f"expected an integer, got {_token(node, src)!r}")
    return int(value)


def _arith(node, ctx: _Context, src: str):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name):
        if node.id in ctx.symbols and ctx.symbols[node.id] is not None:
            return ctx.symbols[node.id]
        raise SpecGrammarError(f"unknown symbol {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_arith(node.operand, ctx, src)
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
        a, b = _arith(node.left, ctx, src), _arith(node.right, ctx, src)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        return a * b
    raise SpecGrammarError(f"expected a number, got {_token(node, src)!r}")


def _knots(node, var: int, ctx: _Context, src: str) -> list[float]:
    if isinstance(node, (ast.List, ast.Tuple)):
        return [float(_arith(e, ctx, src)) for e in node.elts]
    count = _int(node, ctx, src)
    if ctx.X is None:
        raise SpecGrammarError(
            f"quantile knots in {_token(node, src)!r} need data; pass X or list the knots"
        )
    return basis.quantile_knots(ctx.X[:, var], count)
