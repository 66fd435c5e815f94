"""Command-line front end.

::

    lmbic select --config run.yaml [--variance-mode hc] [--kappa X] [--gamma X] [--format csv]
    lmbic study  --config study.yaml [--procedures lm-bic,ut,dt] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
degeneracy. Reports go to standard output; warnings and traces to standard
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .basis import ModelSpec, build_candidate_set, compute_an
from .errors import ConfigError, DataError, LmBicError
from .montecarlo import DgpConfig, format_real, run_study
from .select import (
    HETEROSKEDASTIC,
    HOMOSKEDASTIC,
    PROCEDURES,
    SelectionResult,
    TuningParams,
    default_gamma,
    default_kappa,
    evaluate_candidates,
    select_all,
)

log = logging.getLogger("lmbic")

FORMATS = ("text", "csv", "json-lines")
MODE_ALIASES = {
    "homoskedastic": (HOMOSKEDASTIC,),
    "homo": (HOMOSKEDASTIC,),
    "heteroskedastic": (HETEROSKEDASTIC,),
    "hc": (HETEROSKEDASTIC,),
    "both": (HOMOSKEDASTIC, HETEROSKEDASTIC),
}
DASH = "—"


@dataclass
class RunConfig:
    data_path: Path
    outcome_column: str
    regressor_columns: list[str]
    models: list[ModelSpec]
    full_basis: str | None = None
    a_n: int | None = None
    symbols: dict[str, int] = field(default_factory=dict)
    kappa: float | None = None
    gamma: float | None = None
    variance_modes: tuple[str, ...] = (HOMOSKEDASTIC,)
    procedures: list[str] = field(default_factory=lambda: list(PROCEDURES))
    output_format: str = "text"
    seed: int | None = None
    run_id: str = "run"


@dataclass
class LoadedData:
    Y: np.ndarray
    X: np.ndarray
    columns: list[str]
    dropped: int


def load_csv(path, outcome_column: str, regressor_columns: Sequence[str]) -> LoadedData:
    """Read the requested numeric columns, dropping incomplete rows.

    A row is dropped when any requested cell is empty or not a number.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        wanted = [outcome_column, *regressor_columns]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ConfigError(f"column(s) not in {path.name} header: {', '.join(missing)}")
        idx = [header.index(c) for c in wanted]
        rows, dropped = [], 0
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(row[i]) for i in idx]
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            rows.append(vals)
    if not rows:
        raise DataError(f"no usable rows in {path} ({dropped} dropped)")
    arr = np.asarray(rows, dtype=float)
    return LoadedData(arr[:, 0], arr[:, 1:], list(regressor_columns), dropped)


# --------------------------------------------------------------------------
# Config parsing
# --------------------------------------------------------------------------


def _read_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of keys to values")
    return data


def _modes(value) -> tuple[str, ...]:
    key = str(value).strip().lower()
    if key not in MODE_ALIASES:
        raise ConfigError(f"unknown variance mode {value!r}; use {sorted(MODE_ALIASES)}")
    return MODE_ALIASES[key]


def _procedures(value) -> list[str]:
    items = value.split(",") if isinstance(value, str) else list(value)
    items = [str(p).strip().lower() for p in items if str(p).strip()]
    if not items:
        raise ConfigError("at least one procedure is required")
    bad = [p for p in items if p not in PROCEDURES]
    if bad:
        raise ConfigError(f"unknown procedure(s) {bad}; use {list(PROCEDURES)}")
    return items


def _format(value) -> str:
    if value not in FORMATS:
        raise ConfigError(f"unknown output format {value!r}; use {list(FORMATS)}")
    return value


def parse_run_config(path, overrides: dict | None = None) -> RunConfig:
    raw = _read_yaml(path)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    base = Path(path).parent
    try:
        data_path = Path(raw["data"])
        outcome = str(raw["outcome"])
        regressors = [str(c) for c in raw["regressors"]]
        models_raw = raw["models"]
    except KeyError as exc:
        raise ConfigError(f"config is missing required key {exc.args[0]!r}") from None
    if not data_path.is_absolute():
        data_path = base / data_path
    if not isinstance(models_raw, list) or not models_raw:
        raise ConfigError("'models' must be a nonempty list")
    models = []
    for i, m in enumerate(models_raw):
        if not isinstance(m, dict) or "name" not in m or "terms" not in m:
            raise ConfigError(f"model #{i + 1} needs 'name' and 'terms'")
        models.append(ModelSpec(str(m["name"]), str(m["terms"]), str(m.get("label", ""))))
    if "full_basis" not in raw:
        raise ConfigError("config is missing required key 'full_basis'")
    cfg = RunConfig(
        data_path=data_path,
        outcome_column=outcome,
        regressor_columns=regressors,
        models=models,
        full_basis=str(raw["full_basis"]),
        a_n=raw.get("a_n"),
        symbols={str(k): int(v) for k, v in (raw.get("symbols") or {}).items()},
        kappa=raw.get("kappa"),
        gamma=raw.get("gamma"),
        variance_modes=_modes(overrides.get("variance_mode", raw.get("variance_mode", HOMOSKEDASTIC))),
        procedures=_procedures(raw.get("procedures", list(PROCEDURES))),
        output_format=_format(overrides.get("format", raw.get("format", "text"))),
        seed=raw.get("seed"),
        run_id=str(raw.get("run_id", Path(path).stem)),
    )
    if "kappa" in overrides:
        cfg.kappa = overrides["kappa"]
    if "gamma" in overrides:
        cfg.gamma = overrides["gamma"]
    return cfg


# --------------------------------------------------------------------------
# select
# --------------------------------------------------------------------------


def _sig(x, digits=4) -> str:
    return DASH if x is None else f"{x:.{digits}g}"


def render_selection_text(
    results: dict[str, dict[str, SelectionResult]], n: int, dropped: int, params: dict
) -> str:
    modes = list(results)
    first = next(iter(results[modes[0]].values()))
    header = ["Model", "m", "r"]
    for mode in modes:
        suffix = "" if mode == HOMOSKEDASTIC else " HC"
        header += [f"t-stat{suffix}", f"MSC{suffix}"]
    header.append("selected by")
    rows = []
    for i, rec in enumerate(first.per_form):
        row = [rec.form_name, str(rec.m), str(rec.r)]
        picks = []
        for mode in modes:
            r = next(iter(results[mode].values())).per_form[i]
            if not r.available:
                row += ["n/a", "n/a"]
            else:
                row += [_sig(r.t), _sig(r.msc)]
            tag = "" if mode == HOMOSKEDASTIC else "[hc]"
            picks += [f"{proc}{tag}" for proc, res in results[mode].items() if res.chosen == rec.form_name]
        row.append(", ".join(picks))
        rows.append(row)
    widths = [max(len(r[j]) for r in [header] + rows) for j in range(len(header))]
    fmt = lambda r: "  ".join(
        v.ljust(w) if j in (0, len(r) - 1) else v.rjust(w)
        for j, (v, w) in enumerate(zip(r, widths))
    ).rstrip()
    lines = [
        f"n = {n} ({dropped} rows dropped), a_n = {params['a_n']}, k = {params['k']}",
        "",
        fmt(header),
        "-" * len(fmt(header)),
        *(fmt(r) for r in rows),
        "",
    ]
    for mode in modes:
        for proc, res in results[mode].items():
            p = params[mode]
            tuning = f"kappa = {p.kappa:.4g}" if proc == "lm-bic" else f"gamma = {p.gamma:.4g}"
            lines.append(f"{proc} ({mode}, {tuning}): {res.chosen}")
    return "\n".join(lines) + "\n"


CSV_COLUMNS = ("run_id", "variance_mode", "form", "m", "r", "xi", "t", "msc", "chosen")


def selection_records(run_id: str, results: dict[str, dict[str, SelectionResult]]) -> list[dict]:
    out = []
    for mode, by_proc in results.items():
        first = next(iter(by_proc.values()))
        for rec in first.per_form:
            out.append(
                {
                    "run_id": run_id,
                    "variance_mode": mode,
                    "form": rec.form_name,
                    "m": rec.m,
                    "r": rec.r,
                    "xi": rec.xi,
                    "t": rec.t,
                    "msc": rec.msc,
                    "chosen": [p for p, res in by_proc.items() if res.chosen == rec.form_name],
                }
            )
    return out


def render_selection_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(
            [
                rec["run_id"], rec["variance_mode"], rec["form"], rec["m"], rec["r"],
                format_real(rec["xi"]), format_real(rec["t"]), format_real(rec["msc"]),
                ";".join(rec["chosen"]),
            ]
        )
    return buf.getvalue()


def render_selection_jsonl(records: list[dict]) -> str:
    return "".join(json.dumps(rec) + "\n" for rec in records)


def run_selection(cfg: RunConfig):
    """Load data, build candidates and run every requested procedure.

    Returns ``(results, loaded, params)`` where ``results`` maps variance
    mode to ``{procedure: SelectionResult}``.
    """
    loaded = load_csv(cfg.data_path, cfg.outcome_column, cfg.regressor_columns)
    n = loaded.Y.shape[0]
    if loaded.dropped:
        log.warning("dropped %d incomplete row(s)", loaded.dropped)
    if n < 2:
        raise DataError(f"only {n} usable row(s)")
    a_n = int(cfg.a_n) if cfg.a_n is not None else compute_an(n)
    candidates = build_candidate_set(
        cfg.models,
        a_n,
        full_basis=cfg.full_basis,
        X=loaded.X,
        variable_names=cfg.regressor_columns,
        symbols=cfg.symbols,
    )
    kappa = float(cfg.kappa) if cfg.kappa is not None else default_kappa(n)
    gamma = float(cfg.gamma) if cfg.gamma is not None else default_gamma(n)
    hc = HETEROSKEDASTIC in cfg.variance_modes
    evaluation = evaluate_candidates(candidates, loaded.Y, loaded.X, hc=hc)
    results = {}
    params: dict = {"a_n": a_n, "k": candidates.k}
    for mode in cfg.variance_modes:
        tp = TuningParams(kappa, gamma, mode)
        params[mode] = tp
        results[mode] = select_all(
            candidates, (loaded.Y, loaded.X), tp, cfg.procedures, evaluation=evaluation
        )
    return results, loaded, params


def run_selection_command(cfg: RunConfig, out=None, err=None, trace: bool = False) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    results, loaded, params = run_selection(cfg)
    seen = set()
    for mode, by_proc in results.items():
        for proc, res in by_proc.items():
            for w in res.warnings:
                if w not in seen:
                    seen.add(w)
                    print(f"warning: {w}", file=err)
            if trace:
                print(f"# {proc} ({mode})", file=err)
                for step in res.trace:
                    print(f"  {step}", file=err)
    if cfg.output_format == "text":
        out.write(render_selection_text(results, loaded.Y.shape[0], loaded.dropped, params))
    else:
        records = selection_records(cfg.run_id, results)
        if cfg.output_format == "csv":
            out.write(render_selection_csv(records))
        else:
            out.write(render_selection_jsonl(records))
    return 0


# --------------------------------------------------------------------------
# study
# --------------------------------------------------------------------------


@dataclass
class StudyConfig:
    dgps: list[int]
    sizes: list[int]
    B: int
    procedures: list[str]
    seed: int = 0
    workers: int = 1
    output_format: str = "text"
    dgp_options: dict = field(default_factory=dict)
    kappa: float | None = None
    gamma: float | None = None
    a_n: int | None = None


def _int_list(value, key) -> list[int]:
    items = value if isinstance(value, list) else [value]
    try:
        return [int(v) for v in items]
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be an integer or list of integers") from None


def parse_study_config(path, overrides: dict | None = None) -> StudyConfig:
    raw = _read_yaml(path)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in ("dgp", "n", "B"):
        if key not in raw:
            raise ConfigError(f"study config is missing required key {key!r}")
    dgps = _int_list(raw["dgp"], "dgp")
    bad = [d for d in dgps if d not in range(1, 6)]
    if bad:
        raise ConfigError(f"dgp must be in 1..5, got {bad}")
    sizes = _int_list(raw["n"], "n")
    if any(n < 50 for n in sizes):
        raise ConfigError("every n must be at least 50")
    B = raw["B"]
    if not isinstance(B, int) or B < 1:
        raise ConfigError(f"B must be a positive integer, got {B!r}")
    options = {}
    for key in ("noise_sd", "d_prob", "d_rule"):
        if key in raw:
            options[key] = raw[key]
    for key in ("x_range", "z_range", "d_coef"):
        if key in raw:
            options[key] = tuple(float(v) for v in raw[key])
    seed = overrides.get("seed", raw.get("seed", 0))
    return StudyConfig(
        dgps=dgps,
        sizes=sizes,
        B=B,
        procedures=_procedures(overrides.get("procedures", raw.get("procedures", ["lm-bic", "ut"]))),
        seed=int(seed),
        workers=int(overrides.get("workers", raw.get("workers", 1))),
        output_format=_format(overrides.get("format", raw.get("format", "text"))),
        dgp_options=options,
        kappa=raw.get("kappa"),
        gamma=raw.get("gamma"),
        a_n=raw.get("a_n"),
    )


def run_study_command(cfg: StudyConfig, out=None) -> int:
    out = out or sys.stdout
    first = True
    for dgp_id in cfg.dgps:
        for n in cfg.sizes:
            dgp = DgpConfig(dgp_id, n, seed=cfg.seed, **cfg.dgp_options)
            params = TuningParams(
                float(cfg.kappa) if cfg.kappa is not None else default_kappa(n),
                float(cfg.gamma) if cfg.gamma is not None else default_gamma(n),
            )
            report = run_study(
                dgp, cfg.B, cfg.procedures, params, workers=cfg.workers, a_n=cfg.a_n
            )
            if cfg.output_format == "text":
                out.write(("" if first else "\n") + report.to_text())
            elif cfg.output_format == "csv":
                out.write(report.to_csv(header=first, prefix=(dgp_id, n)))
            else:
                out.write(json.dumps(report.to_dict()) + "\n")
            out.flush()
            first = False
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmbic",
        description="Series-based model selection (LM-BIC, upward and downward testing).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="select among models declared in a config file")
    sel.add_argument("--config", required=True, help="YAML run config")
    sel.add_argument("--variance-mode", choices=sorted(MODE_ALIASES), help="override variance mode")
    sel.add_argument("--kappa", type=float, help="override the LM-BIC penalty (default ln n)")
    sel.add_argument("--gamma", type=float, help="override the testing threshold (default 0.05 sqrt(n))")
    sel.add_argument("--format", choices=FORMATS, help="output format")
    sel.add_argument("--trace", action="store_true", help="print decision traces to stderr")

    st = sub.add_parser("study", help="run the Monte Carlo study")
    st.add_argument("--config", required=True, help="YAML study config")
    st.add_argument("--procedures", help="comma-separated subset of lm-bic,ut,dt")
    st.add_argument("--seed", type=int, help="base seed")
    st.add_argument("--workers", type=int, help="replication threads")
    st.add_argument("--format", choices=FORMATS, help="output format")
    return parser


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(
        format="%(levelname)s %(message)s",
        level=logging.DEBUG if args.verbose else logging.WARNING,
    )
    try:
        if args.command == "select":
            cfg = parse_run_config(
                args.config,
                {"variance_mode": args.variance_mode, "kappa": args.kappa,
                 "gamma": args.gamma, "format": args.format},
            )
            return run_selection_command(cfg, out=out, err=err, trace=args.trace)
        cfg = parse_study_config(
            args.config,
            {"procedures": args.procedures, "seed": args.seed,
             "workers": args.workers, "format": args.format},
        )
        return run_study_command(cfg, out=out)
    except LmBicError as exc:
        print(f"error: {exc}", file=err)
        return exc.exit_code
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1


if __name__ == "__main__":
    sys.exit(main())
