"""Simulation study: five treatment-effect DGPs, five candidate models.

Every DGP has the form ``Y = 2 D + g(X, Z) + e`` and the candidates differ
only in how ``g`` is approximated (D always enters linearly). Covariate and
error laws are configurable; the defaults are D ~ Bernoulli(0.5),
X ~ U[0, 4], Z ~ U[1, 5], e ~ N(0, 1).

Replication ``i`` of a study with base seed ``s`` draws from
``SeedSequence(s, spawn_key=(i,))``, so results do not depend on how
replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .basis import CandidateSet, ModelSpec, build_candidate_set, compute_an, raw
from .errors import InvalidArgumentError, SelectionFailedError
from .linreg import DEFAULT_RTOL, FitResult
from .select import PROCEDURES, SelectionResult, TuningParams, decide, evaluate_candidates

TRUE_BETA = 2.0
MODELS = ("P", "SP-X", "SP-Z", "SP-ADD", "NP")
TARGET_MODEL = {1: "P", 2: "SP-X", 3: "SP-Z", 4: "SP-ADD", 5: "NP"}
VARIABLES = ("D", "X", "Z")
D_RULES = ("bernoulli", "logistic")

MODEL_TERMS = {
    "P": "lin(D), 1, lin(X), lin(Z)",
    "SP-X": "lin(D), pow(X, a_n), lin(Z)",
    "SP-Z": "lin(D), lin(X), pow(Z, a_n)",
    "SP-ADD": "lin(D), pow(X, a_n), pow(Z, a_n)",
    "NP": "lin(D), tensor(X, Z, a_n)",
}
MODEL_LABELS = {
    "P": "parametric",
    "SP-X": "partially-linear",
    "SP-Z": "partially-linear",
    "SP-ADD": "additive",
    "NP": "nonparametric",
}


@dataclass(frozen=True)
class DgpConfig:
    dgp_id: int
    n: int
    noise_sd: float = 1.0
    x_range: tuple[float, float] = (0.0, 4.0)
    z_range: tuple[float, float] = (1.0, 5.0)
    d_prob: float = 0.5
    seed: int = 0
    d_rule: str = "bernoulli"
    d_coef: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.dgp_id not in TARGET_MODEL:
            raise InvalidArgumentError(f"dgp_id must be in 1..5, got {self.dgp_id}")
        if self.n < 50:
            raise InvalidArgumentError(f"n must be at least 50, got {self.n}")
        if self.noise_sd < 0:
            raise InvalidArgumentError("noise_sd must be nonnegative")
        if not 0 <= self.d_prob <= 1:
            raise InvalidArgumentError("d_prob must lie in [0, 1]")
        if self.d_rule == "logistic" and not 0 < self.d_prob < 1:
            raise InvalidArgumentError("the logistic rule needs 0 < d_prob < 1")
        if self.d_rule not in D_RULES:
            raise InvalidArgumentError(f"d_rule must be one of {D_RULES}")
        for lo, hi in (self.x_range, self.z_range):
            if not hi > lo:
                raise InvalidArgumentError("covariate ranges need lo < hi")


@dataclass(frozen=True)
class Dataset:
    Y: np.ndarray
    D: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    true_beta: float = TRUE_BETA

    @property
    def regressors(self) -> np.ndarray:
        """Columns (D, X, Z), matching :data:`VARIABLES`."""
        return np.column_stack([self.D, self.X, self.Z])


def dgp_mean(dgp_id: int, D, X, Z):
    """Conditional mean of Y for the given DGP."""
    D, X, Z = (np.asarray(v, dtype=float) for v in (D, X, Z))
    mu = 2.0 * D + 1.0 - X + 1.5 * Z
    if dgp_id in (2, 4, 5):
        mu = mu + 0.25 * np.exp(X - 2.0)
    if dgp_id in (3, 4, 5):
        mu = mu + 0.5 * np.sin(2.0 * (Z - 3.0))
    if dgp_id == 5:
        mu = mu + 0.2 * X * Z + np.sin(X * Z)
    if dgp_id not in TARGET_MODEL:
        raise InvalidArgumentError(f"unknown dgp_id {dgp_id}")
    return mu


def replication_rng(seed: int, replication: int | None = None) -> np.random.Generator:
    if replication is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replication,)))


def treatment_probability(config: DgpConfig, X, Z):
    """P(D = 1 | X, Z).

    ``bernoulli`` is the constant ``d_prob``. ``logistic`` shifts the log-odds
    of ``d_prob`` by ``d_coef`` times the covariates centred at their range
    midpoints, which makes D depend on the controls.
    """
    if config.d_rule == "bernoulli":
        return np.full(np.shape(X), config.d_prob)
    logit0 = math.log(config.d_prob / (1.0 - config.d_prob))
    index = (
        logit0
        + config.d_coef[0] * (X - sum(config.x_range) / 2.0)
        + config.d_coef[1] * (Z - sum(config.z_range) / 2.0)
    )
    return 1.0 / (1.0 + np.exp(-index))


def gen_dgp(config: DgpConfig, replication: int | None = None) -> Dataset:
    """Draw one dataset; deterministic in ``(config.seed, replication)``."""
    rng = replication_rng(config.seed, replication)
    n = config.n
    u = rng.random(n)
    X = rng.uniform(*config.x_range, size=n)
    Z = rng.uniform(*config.z_range, size=n)
    D = (u < treatment_probability(config, X, Z)).astype(float)
    eps = config.noise_sd * rng.standard_normal(n)
    return Dataset(dgp_mean(config.dgp_id, D, X, Z) + eps, D, X, Z)


def candidate_set_for_study(n: int, a_n: int | None = None) -> CandidateSet:
    """The five study models over a tensor-power full basis in (X, Z)."""
    if n < 50:
        raise InvalidArgumentError(f"n must be at least 50, got {n}")
    if a_n is None:
        a_n = compute_an(n)
    specs = [ModelSpec(name, MODEL_TERMS[name], MODEL_LABELS[name]) for name in MODELS]
    return build_candidate_set(
        specs, a_n, full_basis=MODEL_TERMS["NP"], variable_names=VARIABLES
    )


def treatment_coefficient(
    candidates: CandidateSet, form_name: str, fit: FitResult, d_var: int = 0
) -> float:
    """Coefficient on the treatment column in a form's fit."""
    terms = candidates.form(form_name).restricted_terms
    try:
        j = terms.index(raw(d_var))
    except ValueError:
        raise InvalidArgumentError(
            f"form {form_name!r} has no linear term in column {d_var}"
        ) from None
    return float(fit.beta[j])


def post_selection_beta(
    selection: SelectionResult,
    fits: dict[str, FitResult],
    candidates: CandidateSet,
    d_var: int = 0,
) -> float:
    """Treatment coefficient of the form chosen by ``selection``."""
    return treatment_coefficient(candidates, selection.chosen, fits[selection.chosen], d_var)


@dataclass
class StudyReport:
    """Aggregated results of one (DGP, n) study.

    ``beta_mean`` / ``beta_mse`` are keyed by model name, by ``post-<procedure>``
    for the post-selection estimator, and by ``oracle``.
    """

    config: DgpConfig
    B: int
    params: TuningParams
    procedures: tuple[str, ...]
    a_n: int
    selection_probs: dict[str, dict[str, float]]
    beta_mean: dict[str, float]
    beta_mse: dict[str, float]
    failures: dict[str, int] = field(default_factory=dict)
    models: tuple[str, ...] = MODELS
    true_beta: float = TRUE_BETA

    @property
    def target(self) -> str:
        return TARGET_MODEL[self.config.dgp_id]

    @property
    def beta_columns(self) -> list[str]:
        return list(self.models) + [f"post-{p}" for p in self.procedures] + ["oracle"]

    def rows(self) -> list[tuple[str, str, str, float]]:
        """(procedure, model, metric, value) records in a fixed order."""
        out = []
        for proc in self.procedures:
            for model in self.models:
                out.append((proc, model, "selection_prob", self.selection_probs[proc][model]))
        for col in self.beta_columns:
            if col.startswith("post-"):
                proc, model = col[len("post-"):], "selected"
            elif col == "oracle":
                proc, model = "oracle", self.target
            else:
                proc, model = "fixed", col
            out.append((proc, model, "beta_mean", self.beta_mean[col]))
            out.append((proc, model, "beta_mse", self.beta_mse[col]))
        for proc in self.procedures:
            out.append((proc, "", "failures", float(self.failures.get(proc, 0))))
        return out

    def to_csv(self, header: bool = True, prefix: Sequence = ()) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow([*("dgp", "n")[: len(prefix)], "procedure", "model", "metric", "value"])
        for proc, model, metric, value in self.rows():
            w.writerow([*prefix, proc, model, metric, format_real(value)])
        return buf.getvalue()

    def to_text(self) -> str:
        c = self.config
        lines = [
            f"DGP {c.dgp_id}, n = {c.n}, B = {self.B}, a_n = {self.a_n}, "
            f"kappa = {self.params.kappa:.4g}, gamma = {self.params.gamma:.4g}, seed = {c.seed}",
            "",
            _table(
                ["Selection probability"] + list(self.models),
                [
                    [proc.upper()] + [f"{self.selection_probs[proc][m]:.4f}" for m in self.models]
                    for proc in self.procedures
                ],
            ),
            "",
            _table(
                [f"beta (true {self.true_beta:g})"] + self.beta_columns,
                [
                    ["Mean"] + [f"{self.beta_mean[k]:.4g}" for k in self.beta_columns],
                    ["MSE"] + [f"{self.beta_mse[k]:.4g}" for k in self.beta_columns],
                ],
            ),
        ]
        failed = {p: k for p, k in self.failures.items() if k}
        if failed:
            lines.append(f"failed replications: {failed}")
        if "dt" in self.procedures:
            lines.append("note: DT assumes the no-gaps condition, which is not checked")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "dgp": self.config.dgp_id,
            "n": self.config.n,
            "B": self.B,
            "a_n": self.a_n,
            "seed": self.config.seed,
            "kappa": self.params.kappa,
            "gamma": self.params.gamma,
            "variance_mode": self.params.variance_mode,
            "selection_probs": self.selection_probs,
            "beta_mean": self.beta_mean,
            "beta_mse": self.beta_mse,
            "failures": self.failures,
            "config": asdict(self.config),
        }


def format_real(x: float) -> str:
    """Stable 12-significant-digit rendering used by every CSV output."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.12g}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[j])) for r in [header] + rows) for j in range(len(header))]
    fmt = lambda r: "  ".join(
        str(v).ljust(w) if j == 0 else str(v).rjust(w) for j, (v, w) in enumerate(zip(r, widths))
    )
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows])


def _one_replication(rep, dgp, candidates, procedures, params, rel_tol):
    data = gen_dgp(dgp, rep)
    ev = evaluate_candidates(candidates, data.Y, data.regressors, rel_tol=rel_tol)
    records = ev.records(params)
    betas = {
        name: treatment_coefficient(candidates, name, fit) for name, fit in ev.fits.items()
    }
    chosen = {}
    for proc in procedures:
        try:
            chosen[proc] = decide(proc, records, params).chosen
        except SelectionFailedError:
            chosen[proc] = None
    return betas, chosen


def run_study(
    dgp: DgpConfig,
    B: int,
    procedures: Sequence[str] = ("lm-bic", "ut"),
    params: TuningParams | None = None,
    workers: int = 1,
    rel_tol: float = DEFAULT_RTOL,
    a_n: int | None = None,
) -> StudyReport:
    """Replicate selection ``B`` times and aggregate.

    Parameters
    ----------
    dgp : DgpConfig
        Its ``seed`` is the base seed of the study.
    B : int
        Number of replications.
    procedures : sequence of str
        Any of ``"lm-bic"``, ``"ut"``, ``"dt"``.
    params : TuningParams, optional
        Defaults to ``kappa = ln n``, ``gamma = 0.05 sqrt(n)``.
    workers : int
        Threads used for replications; results do not depend on it.
    """
    if B < 1:
        raise InvalidArgumentError(f"B must be at least 1, got {B}")
    procedures = tuple(procedures)
    for p in procedures:
        if p not in PROCEDURES:
            raise InvalidArgumentError(f"unknown procedure {p!r}")
    if params is None:
        params = TuningParams.default(dgp.n)
    candidates = candidate_set_for_study(dgp.n, a_n)

    def job(rep):
        return _one_replication(rep, dgp, candidates, procedures, params, rel_tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(B)))
    else:
        results = [job(rep) for rep in range(B)]

    target = TARGET_MODEL[dgp.dgp_id]
    columns = list(MODELS) + [f"post-{p}" for p in procedures] + ["oracle"]
    est = np.full((B, len(columns)), np.nan)
    counts = {p: dict.fromkeys(MODELS, 0) for p in procedures}
    failures = dict.fromkeys(procedures, 0)
    for i, (betas, chosen) in enumerate(results):
        for j, model in enumerate(MODELS):
            est[i, j] = betas.get(model, np.nan)
        for j, proc in enumerate(procedures):
            pick = chosen[proc]
            if pick is None:
                failures[proc] += 1
                continue
            counts[proc][pick] += 1
            est[i, len(MODELS) + j] = betas[pick]
        est[i, -1] = betas.get(target, np.nan)

    probs = {}
    for proc in procedures:
        total = B - failures[proc]
        probs[proc] = {m: (counts[proc][m] / total if total else math.nan) for m in MODELS}
    beta_mean, beta_mse = {}, {}
    for j, col in enumerate(columns):
        v = est[:, j]
        v = v[~np.isnan(v)]
        beta_mean[col] = float(np.mean(v)) if v.size else math.nan
        beta_mse[col] = float(np.mean((v - TRUE_BETA) ** 2)) if v.size else math.nan
    return StudyReport(
        config=dgp,
        B=B,
        params=params,
        procedures=procedures,
        a_n=candidates.a_n,
        selection_probs=probs,
        beta_mean=beta_mean,
        beta_mse=beta_mse,
        failures=failures,
    )
