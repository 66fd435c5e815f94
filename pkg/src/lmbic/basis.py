"""Series terms, univariate bases, tensor products and candidate sets.

A :class:`TermDescriptor` is a symbolic basis function of the regressor
matrix. Descriptors are always stored in canonical form, so two descriptors
compare equal exactly when they denote the same function; this is what makes
term counting (``m``, ``r``, ``k``) reliable when several models share terms
such as the constant.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InvalidArgumentError, SpecNotNestedError

POWER = "power"
SPLINE = "spline-truncated"
RAW = "raw-column"
PRODUCT = "product"
KINDS = (POWER, SPLINE, RAW, PRODUCT)


@dataclass(frozen=True)
class TermDescriptor:
    """One basis function.

    ``power`` is a monomial: ``prod_j x[variable_ids[j]] ** exponents[j]``;
    the empty monomial is the constant. ``spline-truncated`` is
    ``1{x > knot} (x - knot) ** spline_order`` in one variable. ``product``
    multiplies its ``factors``. ``raw-column`` is accepted on input and
    canonicalizes to a degree-one monomial.

    Construct through the helper functions (:func:`constant`, :func:`power`,
    :func:`truncated_power`, :func:`product` ...), which return canonical
    descriptors.
    """

    kind: str
    variable_ids: tuple[int, ...] = ()
    exponents: tuple[int, ...] = ()
    knot: float | None = None
    spline_order: int | None = None
    factors: tuple["TermDescriptor", ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown term kind {self.kind!r}")
        if self.kind == POWER and len(self.exponents) != len(self.variable_ids):
            raise InvalidArgumentError("power term needs one exponent per variable")
        if any(e < 0 for e in self.exponents):
            raise InvalidArgumentError("exponents must be nonnegative")
        if self.kind == SPLINE:
            if len(self.variable_ids) != 1:
                raise InvalidArgumentError("a truncated-power term has exactly one variable")
            if self.spline_order is None or self.spline_order < 1:
                raise InvalidArgumentError("spline order must be a positive integer")
            if self.knot is None or not math.isfinite(self.knot):
                raise InvalidArgumentError("truncated-power term needs a finite knot")
        if self.kind == RAW and len(self.variable_ids) != 1:
            raise InvalidArgumentError("a raw-column term has exactly one variable")
        if self.kind == PRODUCT:
            if len(self.factors) < 2:
                raise InvalidArgumentError("a product needs at least two factors")
            if any(f.kind == PRODUCT for f in self.factors):
                raise InvalidArgumentError("product factors cannot be products")

    @property
    def is_constant(self) -> bool:
        return self.kind == POWER and not self.variable_ids

    @property
    def variables(self) -> frozenset[int]:
        if self.kind == PRODUCT:
            return frozenset().union(*(f.variables for f in self.factors))
        return frozenset(self.variable_ids)

    @property
    def degree(self) -> int:
        """Total polynomial degree (a truncated power counts its order)."""
        if self.kind == PRODUCT:
            return sum(f.degree for f in self.factors)
        if self.kind == SPLINE:
            return self.spline_order
        if self.kind == RAW:
            return 1
        return sum(self.exponents)

    def sort_key(self):
        rank = {POWER: 0, RAW: 0, SPLINE: 1, PRODUCT: 2}[self.kind]
        return (
            rank,
            self.variable_ids,
            self.exponents,
            -math.inf if self.knot is None else self.knot,
            self.spline_order or 0,
            tuple(f.sort_key() for f in self.factors),
        )

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate row-wise on an ``n x d`` matrix."""
        X = np.asarray(X, dtype=float)
        if self.kind == PRODUCT:
            out = np.ones(X.shape[0])
            for f in self.factors:
                out = out * f.evaluate(X)
            return out
        if self.kind == SPLINE:
            v = X[:, self.variable_ids[0]] - self.knot
            return np.where(v > 0, np.maximum(v, 0.0) ** self.spline_order, 0.0)
        if self.kind == RAW:
            return X[:, self.variable_ids[0]].copy()
        out = np.ones(X.shape[0])
        for j, e in zip(self.variable_ids, self.exponents):
            out = out * X[:, j] ** e
        return out

    def label(self, names: Sequence[str] | None = None) -> str:
        def nm(j):
            return names[j] if names is not None and j < len(names) else f"x{j}"

        if self.kind == PRODUCT:
            return "*".join(f.label(names) for f in self.factors)
        if self.kind == SPLINE:
            return f"({nm(self.variable_ids[0])}-{self.knot:g})+^{self.spline_order}"
        if self.kind == RAW:
            return nm(self.variable_ids[0])
        if not self.variable_ids:
            return "1"
        return "*".join(
            nm(j) if e == 1 else f"{nm(j)}^{e}"
            for j, e in zip(self.variable_ids, self.exponents)
        )

    def __str__(self):
        return self.label()


def _monomial(powers: Mapping[int, int]) -> TermDescriptor:
    items = sorted((int(j), int(e)) for j, e in powers.items() if e != 0)
    return TermDescriptor(
        POWER, tuple(j for j, _ in items), tuple(e for _, e in items)
    )


def canonical(term: TermDescriptor) -> TermDescriptor:
    """Return the unique canonical descriptor for ``term``.

    Monomials merge repeated variables and drop zero exponents; products are
    flattened, their monomial factors multiplied together, the truncated-power
    factors sorted, and degenerate products collapsed to a single factor.
    """
    if term.kind == RAW:
        return _monomial({term.variable_ids[0]: 1})
    if term.kind == POWER:
        powers: dict[int, int] = {}
        for j, e in zip(term.variable_ids, term.exponents):
            powers[j] = powers.get(j, 0) + e
        return _monomial(powers)
    if term.kind == SPLINE:
        return TermDescriptor(
            SPLINE, term.variable_ids, (), float(term.knot), int(term.spline_order)
        )
    return _combine(term.factors)


def _combine(factors: Iterable[TermDescriptor]) -> TermDescriptor:
    powers: dict[int, int] = {}
    splines: list[TermDescriptor] = []
    stack = list(factors)
    while stack:
        f = canonical(stack.pop())
        if f.kind == PRODUCT:
            stack.extend(f.factors)
        elif f.kind == SPLINE:
            splines.append(f)
        else:
            for j, e in zip(f.variable_ids, f.exponents):
                powers[j] = powers.get(j, 0) + e
    mono = _monomial(powers)
    splines.sort(key=TermDescriptor.sort_key)
    parts = ([] if mono.is_constant else [mono]) + splines
    if not parts:
        return mono
    if len(parts) == 1:
        return parts[0]
    return TermDescriptor(PRODUCT, factors=tuple(parts))


def constant() -> TermDescriptor:
    return _monomial({})


def raw(var: int) -> TermDescriptor:
    return canonical(TermDescriptor(RAW, (int(var),)))


def power(var: int, exponent: int) -> TermDescriptor:
    return _monomial({int(var): int(exponent)})


def truncated_power(var: int, knot: float, order: int) -> TermDescriptor:
    return TermDescriptor(SPLINE, (int(var),), (), float(knot), int(order))


def product(*terms: TermDescriptor) -> TermDescriptor:
    return _combine(terms)


def dedupe(terms: Iterable[TermDescriptor]) -> list[TermDescriptor]:
    """Canonicalize and drop repeats, keeping first occurrences in order."""
    return list(OrderedDict.fromkeys(canonical(t) for t in terms))


# --------------------------------------------------------------------------
# Univariate bases
# --------------------------------------------------------------------------


def power_basis(z: float, a: int) -> np.ndarray:
    """``(1, z, ..., z**(a-1))``."""
    if a < 1:
        raise InvalidArgumentError(f"power basis needs a >= 1, got {a}")
    return float(z) ** np.arange(a, dtype=float)


def _check_knots(knots) -> tuple[float, ...]:
    knots = tuple(float(t) for t in knots)
    if any(not math.isfinite(t) for t in knots):
        raise InvalidArgumentError("knots must be finite")
    if any(b <= a for a, b in zip(knots, knots[1:])):
        raise InvalidArgumentError(f"knots must be strictly increasing, got {knots}")
    return knots


def spline_basis(z: float, order: int, knots: Sequence[float]) -> np.ndarray:
    """Truncated-power spline basis of the given order at ``z``.

    Returns ``order + 1 + len(knots)`` values: the powers ``1, ..., z**order``
    followed by ``1{z > t} (z - t)**order`` for every knot ``t``.
    """
    if order < 1:
        raise InvalidArgumentError(f"spline order must be >= 1, got {order}")
    knots = _check_knots(knots)
    z = float(z)
    head = z ** np.arange(order + 1, dtype=float)
    tail = [(z - t) ** order if z > t else 0.0 for t in knots]
    return np.concatenate([head, np.asarray(tail, dtype=float)])


def power_terms(var: int, a: int) -> list[TermDescriptor]:
    if a < 1:
        raise InvalidArgumentError(f"power basis needs a >= 1, got {a}")
    return [power(var, e) for e in range(a)]


def spline_terms(var: int, order: int, knots: Sequence[float]) -> list[TermDescriptor]:
    if order < 1:
        raise InvalidArgumentError(f"spline order must be >= 1, got {order}")
    knots = _check_knots(knots)
    return power_terms(var, order + 1) + [truncated_power(var, t, order) for t in knots]


def quantile_knots(z: np.ndarray, count: int) -> list[float]:
    """``count`` interior knots at equally spaced sample quantiles of ``z``."""
    if count < 0:
        raise InvalidArgumentError("knot count must be nonnegative")
    if count == 0:
        return []
    probs = np.arange(1, count + 1) / (count + 1)
    knots = np.unique(np.quantile(np.asarray(z, dtype=float), probs))
    if len(knots) < count:
        raise InvalidArgumentError(
            f"only {len(knots)} distinct quantile knots available, {count} requested"
        )
    return [float(t) for t in knots]


def tensor_terms(
    basis_a: Sequence[TermDescriptor],
    basis_b: Sequence[TermDescriptor],
    max_degree: int | None = None,
) -> list[TermDescriptor]:
    """Pairwise products of two bases, canonicalized and deduplicated.

    ``max_degree`` drops interaction terms (terms in two or more variables)
    whose total degree exceeds the cap; single-variable terms are kept.
    """
    if not basis_a or not basis_b:
        raise InvalidArgumentError("tensor_terms needs two nonempty bases")
    out = []
    for ta in basis_a:
        for tb in basis_b:
            t = product(ta, tb)
            if max_degree is not None and len(t.variables) > 1 and t.degree > max_degree:
                continue
            out.append(t)
    return dedupe(out)


def compute_an(
    n: int, coeff: float = 1.5, expnt: float = 0.15, rounding: str = "floor"
) -> int:
    """Series-term budget ``max(2, round(coeff * n**expnt))``."""
    if n < 2:
        raise InvalidArgumentError(f"compute_an needs n >= 2, got {n}")
    raw_value = coeff * float(n) ** expnt
    if rounding == "floor":
        a = math.floor(raw_value)
    elif rounding == "ceil":
        a = math.ceil(raw_value)
    elif rounding == "nearest":
        a = math.floor(raw_value + 0.5)
    else:
        raise InvalidArgumentError(f"unknown rounding rule {rounding!r}")
    return max(2, int(a))


# --------------------------------------------------------------------------
# Design matrices
# --------------------------------------------------------------------------


def evaluate_design(terms: Sequence[TermDescriptor], X) -> np.ndarray:
    """Evaluate ``terms`` on the rows of ``X``; column ``j`` is ``terms[j]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("design evaluation needs at least one row")
    bad = ~np.isfinite(X)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise DataError(f"non-finite regressor value in row {row}")
    d = X.shape[1]
    for t in terms:
        if any(j >= d or j < 0 for j in t.variables):
            raise InvalidArgumentError(
                f"term {t} references a column outside 0..{d - 1}"
            )
    if not terms:
        return np.empty((X.shape[0], 0))
    return np.column_stack([t.evaluate(X) for t in terms])


# --------------------------------------------------------------------------
# Series forms and candidate sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesForm:
    """A candidate specification: its restricted terms within the full basis.

    ``restricted_index`` / ``excluded_index`` locate the W and T columns
    inside the owning candidate set's full basis.
    """

    name: str
    restricted_terms: tuple[TermDescriptor, ...]
    m: int
    r: int
    label: str = ""
    restricted_index: tuple[int, ...] = field(default=(), repr=False)
    excluded_index: tuple[int, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.m + self.r

    @property
    def is_unrestricted(self) -> bool:
        return self.r == 0


@dataclass(frozen=True)
class CandidateSet:
    full_terms: tuple[TermDescriptor, ...]
    forms: tuple[SeriesForm, ...]
    a_n: int
    k: int
    variable_names: tuple[str, ...] | None = None

    def form(self, name: str) -> SeriesForm:
        for f in self.forms:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.forms]

    @property
    def unrestricted(self) -> SeriesForm | None:
        for f in self.forms:
            if f.r == 0:
                return f
        return None

    def design(self, X) -> np.ndarray:
        """The full ``n x k`` basis matrix P."""
        return evaluate_design(self.full_terms, X)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one candidate model.

    ``terms`` is either a model-spec expression string (see
    :mod:`lmbic.grammar`) or an explicit sequence of descriptors.
    """

    name: str
    terms: str | Sequence[TermDescriptor]
    label: str = ""


def _resolve_terms(terms, a_n, X, variable_names, symbols) -> list[TermDescriptor]:
    if isinstance(terms, str):
        from .grammar import parse_terms

        return parse_terms(
            terms, a_n=a_n, X=X, variable_names=variable_names, symbols=symbols
        )
    return dedupe(terms)


def build_candidate_set(
    model_specs: Sequence[ModelSpec],
    a_n: int,
    full_basis: str | Sequence[TermDescriptor] | None = None,
    X=None,
    variable_names: Sequence[str] | None = None,
    symbols: Mapping[str, int] | None = None,
) -> CandidateSet:
    """Assemble candidate forms that share one full basis.

    When ``full_basis`` is given, every model's terms must lie inside it
    (:class:`SpecNotNestedError` otherwise). Without it, the full basis is the
    union of all model terms in declaration order. Forms are returned sorted
    by ``m`` with ties kept in declaration order.

    Parameters
    ----------
    model_specs : sequence of ModelSpec
    a_n : int
        Complexity budget substituted for the ``a_n`` symbol in expressions.
    full_basis : str or sequence of TermDescriptor, optional
    X : array_like, optional
        Data, needed only for quantile-placed spline knots.
    variable_names : sequence of str, optional
        Column names usable in expressions in place of ``x<j>``.
    symbols : mapping, optional
        Extra integer symbols for expressions (e.g. ``{"j_n": 2}``).
    """
    if not model_specs:
        raise InvalidArgumentError("at least one model spec is required")
    if a_n < 1:
        raise InvalidArgumentError("a_n must be positive")
    names = [s.name for s in model_specs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise InvalidArgumentError(f"duplicate model names: {sorted(dup)}")

    resolved = [
        _resolve_terms(s.terms, a_n, X, variable_names, symbols) for s in model_specs
    ]
    for spec, terms in zip(model_specs, resolved):
        if not terms:
            raise InvalidArgumentError(f"model {spec.name!r} has no terms")

    if full_basis is not None:
        full = _resolve_terms(full_basis, a_n, X, variable_names, symbols)
        position = {t: i for i, t in enumerate(full)}
        for spec, terms in zip(model_specs, resolved):
            for t in terms:
                if t not in position:
                    raise SpecNotNestedError(
                        f"model {spec.name!r}: term {t.label(variable_names)} "
                        "is not in the full basis"
                    )
    else:
        full = dedupe(t for terms in resolved for t in terms)
        position = {t: i for i, t in enumerate(full)}
    if not full:
        raise InvalidArgumentError("the full basis is empty")
    k = len(full)

    forms = []
    for spec, terms in zip(model_specs, resolved):
        idx = [position[t] for t in terms]
        if len(idx) == k:
            idx = list(range(k))
            terms = list(full)
        chosen = set(idx)
        forms.append(
            SeriesForm(
                name=spec.name,
                restricted_terms=tuple(terms),
                m=len(terms),
                r=k - len(terms),
                label=spec.label,
                restricted_index=tuple(idx),
                excluded_index=tuple(i for i in range(k) if i not in chosen),
            )
        )
    unrestricted = [f.name for f in forms if f.r == 0]
    if len(unrestricted) > 1:
        raise InvalidArgumentError(
            f"more than one unrestricted form (r = 0): {unrestricted}"
        )
    forms.sort(key=lambda f: f.m)
    return CandidateSet(
        full_terms=tuple(full),
        forms=tuple(forms),
        a_n=int(a_n),
        k=k,
        variable_names=tuple(variable_names) if variable_names is not None else None,
    )
