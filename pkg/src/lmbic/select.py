"""LM-BIC, upward-testing and downward-testing selection over a candidate set.

Each procedure has two layers: a pure decision function working on
:class:`FormRecord` rows (``decide_*``) and a driver that fits every form on
data and then decides (``select_*``). :func:`evaluate_candidates` does the
fitting once so several procedures can share it.

Tie-breaks everywhere: smaller ``m`` first, then declaration order. The
unrestricted form (``r = 0``) is never rejected by the testing procedures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .basis import CandidateSet
from .errors import DegenerateFitError, InvalidArgumentError, SelectionFailedError
from .linreg import DEFAULT_RTOL, FitResult
from .lmstat import LmStatistics, lm_statistics

HOMOSKEDASTIC = "homoskedastic"
HETEROSKEDASTIC = "heteroskedastic"
VARIANCE_MODES = (HOMOSKEDASTIC, HETEROSKEDASTIC)
PROCEDURES = ("lm-bic", "ut", "dt")

NO_GAPS_NOTE = (
    "downward testing is consistent only if every model size above the smallest "
    "correctly specified one contains a correctly specified form (no gaps); this "
    "cannot be checked from data"
)


def default_kappa(n: int) -> float:
    """BIC-type penalty ``ln n``."""
    if n < 2:
        raise InvalidArgumentError(f"default_kappa needs n >= 2, got {n}")
    return math.log(n)


def default_gamma(n: int) -> float:
    """Testing threshold ``0.05 sqrt(n)``."""
    if n < 1:
        raise InvalidArgumentError(f"default_gamma needs n >= 1, got {n}")
    return 0.05 * math.sqrt(n)


@dataclass(frozen=True)
class TuningParams:
    kappa: float
    gamma: float
    variance_mode: str = HOMOSKEDASTIC

    def __post_init__(self):
        if self.variance_mode not in VARIANCE_MODES:
            raise InvalidArgumentError(f"unknown variance mode {self.variance_mode!r}")
        if not self.kappa > 0:
            raise InvalidArgumentError("kappa must be positive")
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive")
        if self.kappa <= 1:
            warnings.warn(
                f"kappa = {self.kappa} <= 1 gives a non-positive penalty", stacklevel=2
            )

    @classmethod
    def default(cls, n: int, variance_mode: str = HOMOSKEDASTIC) -> "TuningParams":
        return cls(default_kappa(n), default_gamma(n), variance_mode)


def msc(xi: float, r: int, kappa: float) -> float:
    """Selection criterion ``(xi - r kappa) / sqrt(2 r)``; exactly 0 when r = 0."""
    if r < 0:
        raise InvalidArgumentError("r must be nonnegative")
    if r == 0:
        return 0.0
    return (xi - r * kappa) / math.sqrt(2.0 * r)


@dataclass(frozen=True)
class FormRecord:
    """Per-form statistics under one variance mode.

    ``t`` is None for the unrestricted form; unavailable forms (degenerate
    fits) carry ``None`` statistics and are excluded from every decision.
    """

    form_name: str
    m: int
    r: int
    xi: float | None
    t: float | None
    msc: float | None
    available: bool = True
    rank: int | None = None
    note: str = ""


@dataclass
class SelectionResult:
    per_form: list[FormRecord]
    chosen: str
    procedure: str
    trace: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def record(self, name: str) -> FormRecord:
        for rec in self.per_form:
            if rec.form_name == name:
                return rec
        raise KeyError(name)


@dataclass
class CandidateEvaluation:
    """Fits and statistics of every form on one dataset."""

    candidates: CandidateSet
    fits: dict[str, FitResult]
    stats: dict[str, LmStatistics]
    errors: dict[str, str]
    n: int

    def records(self, params: TuningParams) -> list[FormRecord]:
        hc = params.variance_mode == HETEROSKEDASTIC
        out = []
        for f in self.candidates.forms:
            st = self.stats.get(f.name)
            if st is None:
                out.append(
                    FormRecord(f.name, f.m, f.r, None, None, None, False,
                               note=self.errors.get(f.name, ""))
                )
                continue
            xi = st.xi_hc if hc else st.xi
            if hc and xi is None:
                raise InvalidArgumentError("robust statistics were not computed")
            t = st.t_hc if hc else st.t
            out.append(FormRecord(f.name, f.m, f.r, xi, t, msc(xi, f.r, params.kappa),
                                  rank=st.rank))
        return out

    @property
    def warnings(self) -> list[str]:
        notes = [w for st in self.stats.values() for w in st.warnings]
        notes += [f"{name} excluded: {msg}" for name, msg in self.errors.items()]
        return notes


def evaluate_candidates(
    candidates: CandidateSet,
    Y,
    X,
    hc: bool = False,
    rel_tol: float = DEFAULT_RTOL,
) -> CandidateEvaluation:
    """Fit each form and compute its LM statistics.

    A form whose fit is degenerate is recorded in ``errors`` and skipped.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    P = candidates.design(X)
    n = P.shape[0]
    if Y.shape[0] != n:
        raise InvalidArgumentError(f"Y has {Y.shape[0]} rows, X has {n}")
    if n <= candidates.k:
        raise InvalidArgumentError(
            f"need n > k: n = {n}, full basis has k = {candidates.k} terms"
        )
    fits, stats, errors = {}, {}, {}
    for f in candidates.forms:
        W = P[:, list(f.restricted_index)]
        T = P[:, list(f.excluded_index)]
        try:
            st, fit = lm_statistics(Y, W, T, hc=hc, form_name=f.name, rel_tol=rel_tol)
        except DegenerateFitError as exc:
            errors[f.name] = str(exc)
            continue
        fits[f.name] = fit
        stats[f.name] = st
    return CandidateEvaluation(candidates, fits, stats, errors, n)


# --------------------------------------------------------------------------
# Decisions on precomputed records
# --------------------------------------------------------------------------


def _usable(records: Sequence[FormRecord]) -> list[tuple[int, FormRecord]]:
    usable = [(i, r) for i, r in enumerate(records) if r.available]
    if not usable:
        raise SelectionFailedError("no candidate form could be evaluated")
    return usable


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.6g}"


def _trace_rows(records: Sequence[FormRecord]) -> list[str]:
    return [
        f"{r.form_name}: m={r.m} r={r.r} xi={_fmt(r.xi)} t={_fmt(r.t)} msc={_fmt(r.msc)}"
        + ("" if r.available else " (unavailable)")
        for r in records
    ]


def decide_lm_bic(records: Sequence[FormRecord]) -> SelectionResult:
    """Minimize the criterion over available forms."""
    usable = _usable(records)
    i, best = min(usable, key=lambda ir: (ir[1].msc, ir[1].m, ir[0]))
    trace = _trace_rows(records) + [f"argmin msc -> {best.form_name} ({best.msc:.6g})"]
    return SelectionResult(list(records), best.form_name, "lm-bic", trace)


def _levels(usable) -> list[tuple[int, list[tuple[int, FormRecord]]]]:
    levels: dict[int, list] = {}
    for i, rec in usable:
        levels.setdefault(rec.m, []).append((i, rec))
    return sorted(levels.items())


def _level_min(members) -> tuple[int, FormRecord, bool, float]:
    """Within-level argmin of t; the r = 0 form counts as t = -inf."""
    key = lambda ir: (-math.inf if ir[1].r == 0 else ir[1].t, ir[0])
    i, rec = min(members, key=key)
    tmin = -math.inf if rec.r == 0 else rec.t
    return i, rec, rec.r == 0, tmin


def decide_ut(records: Sequence[FormRecord], gamma: float) -> SelectionResult:
    """Upward testing: first m-level (ascending) whose smallest t is <= gamma."""
    usable = _usable(records)
    trace = _trace_rows(records)
    notes = []
    levels = _levels(usable)
    for m, members in levels:
        _, rec, free, tmin = _level_min(members)
        if free or tmin <= gamma:
            trace.append(
                f"level m={m}: min t={'n/a (r=0)' if free else f'{tmin:.6g}'} <= "
                f"gamma={gamma:.6g}, stop -> {rec.form_name}"
            )
            if free and m != levels[0][0]:
                notes.append("all restricted forms rejected; unrestricted form selected")
            return SelectionResult(list(records), rec.form_name, "ut", trace, notes)
        trace.append(f"level m={m}: min t={tmin:.6g} > gamma={gamma:.6g}, reject")
    # no unrestricted form available and everything rejected
    _, rec, _, _ = _level_min(levels[-1][1])
    notes.append(
        "every level rejected and no unrestricted form available; "
        f"largest level's best form {rec.form_name} selected"
    )
    trace.append(f"exhausted -> {rec.form_name}")
    return SelectionResult(list(records), rec.form_name, "ut", trace, notes)


def decide_dt(records: Sequence[FormRecord], gamma: float) -> SelectionResult:
    """Downward testing: smallest m-level of the maximal passing top suffix."""
    usable = _usable(records)
    trace = _trace_rows(records)
    notes = [NO_GAPS_NOTE]
    levels = _levels(usable)
    accepted = None
    for m, members in reversed(levels):
        _, rec, free, tmin = _level_min(members)
        if free or tmin <= gamma:
            trace.append(
                f"level m={m}: min t={'n/a (r=0)' if free else f'{tmin:.6g}'} <= "
                f"gamma={gamma:.6g}, pass"
            )
            accepted = (m, rec)
        else:
            trace.append(f"level m={m}: min t={tmin:.6g} > gamma={gamma:.6g}, fail; stop")
            break
    if accepted is None:
        _, rec, _, _ = _level_min(levels[-1][1])
        notes.append(
            "top level rejected and no unrestricted form available; "
            f"largest level's best form {rec.form_name} selected"
        )
        trace.append(f"no passing suffix -> {rec.form_name}")
        return SelectionResult(list(records), rec.form_name, "dt", trace, notes)
    m, rec = accepted
    trace.append(f"smallest passing level m={m} -> {rec.form_name}")
    return SelectionResult(list(records), rec.form_name, "dt", trace, notes)


def decide(procedure: str, records: Sequence[FormRecord], params: TuningParams) -> SelectionResult:
    if procedure == "lm-bic":
        return decide_lm_bic(records)
    if procedure == "ut":
        return decide_ut(records, params.gamma)
    if procedure == "dt":
        return decide_dt(records, params.gamma)
    raise InvalidArgumentError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")


# --------------------------------------------------------------------------
# Drivers
# --------------------------------------------------------------------------


def select_all(
    candidates: CandidateSet,
    data,
    params: TuningParams,
    procedures: Iterable[str] = PROCEDURES,
    rel_tol: float = DEFAULT_RTOL,
    evaluation: CandidateEvaluation | None = None,
) -> dict[str, SelectionResult]:
    """Run several procedures on one evaluation of the candidates."""
    Y, X = data
    if evaluation is None:
        evaluation = evaluate_candidates(
            candidates, Y, X, hc=params.variance_mode == HETEROSKEDASTIC, rel_tol=rel_tol
        )
    records = evaluation.records(params)
    out = {}
    for proc in procedures:
        res = decide(proc, records, params)
        res.warnings = evaluation.warnings + res.warnings
        out[proc] = res
    return out


def select_lm_bic(candidates: CandidateSet, data, params: TuningParams) -> SelectionResult:
    return select_all(candidates, data, params, ["lm-bic"])["lm-bic"]


def select_ut(candidates: CandidateSet, data, params: TuningParams) -> SelectionResult:
    return select_all(candidates, data, params, ["ut"])["ut"]


def select_dt(candidates: CandidateSet, data, params: TuningParams) -> SelectionResult:
    return select_all(candidates, data, params, ["dt"])["dt"]
