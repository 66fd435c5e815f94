import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmbic.basis import ModelSpec, build_candidate_set
from lmbic.errors import InvalidArgumentError, SelectionFailedError
from lmbic.lmstat import t_statistic
from lmbic.montecarlo import DgpConfig, candidate_set_for_study, gen_dgp
from lmbic.select import (
    NO_GAPS_NOTE,
    FormRecord,
    TuningParams,
    decide,
    decide_dt,
    decide_lm_bic,
    decide_ut,
    default_gamma,
    default_kappa,
    evaluate_candidates,
    msc,
    select_all,
    select_dt,
    select_lm_bic,
    select_ut,
)

LN_6230 = math.log(6230)


def rec(name, m, r, t=None, kappa=2.0, available=True):
    """Synthetic record with xi back-solved from t."""
    if r == 0:
        return FormRecord(name, m, 0, 0.0, None, 0.0)
    if not available:
        return FormRecord(name, m, r, None, None, None, False)
    xi = r + t * math.sqrt(2 * r)
    return FormRecord(name, m, r, xi, t, msc(xi, r, kappa))


# --- msc and defaults ------------------------------------------------------


def test_msc_examples():
    assert msc(143.49, 91, LN_6230) == pytest.approx(-48.3, abs=0.05)
    assert msc(92.03, 89, LN_6230) == pytest.approx(-51.4, abs=0.05)
    assert msc(123.4, 0, 7.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        msc(1.0, -1, 2.0)


def test_default_kappa():
    assert default_kappa(6230) == pytest.approx(8.7372, abs=1e-4)
    assert default_kappa(7) == pytest.approx(1.9459, abs=1e-4)
    with pytest.raises(InvalidArgumentError):
        default_kappa(1)


def test_default_gamma():
    assert default_gamma(6230) == pytest.approx(3.95, abs=0.01)
    assert default_gamma(400) == pytest.approx(1.0)
    assert default_gamma(10000) == pytest.approx(5.0)


def test_tuning_params_validation():
    with pytest.warns(UserWarning, match="kappa"):
        TuningParams(0.5, 1.0)
    with pytest.raises(InvalidArgumentError):
        TuningParams(2.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        TuningParams(2.0, 1.0, "robust")
    p = TuningParams.default(400, "heteroskedastic")
    assert p.kappa == pytest.approx(math.log(400)) and p.gamma == pytest.approx(1.0)


@settings(max_examples=200)
@given(st.floats(0, 1e4), st.integers(1, 500), st.floats(1.01, 50))
def test_msc_decomposition_identity(xi, r, kappa):
    split = t_statistic(xi, r) - math.sqrt(r / 2) * (kappa - 1)
    assert msc(xi, r, kappa) == pytest.approx(split, rel=1e-12, abs=1e-12)


# --- LM-BIC ----------------------------------------------------------------


def test_lm_bic_unrestricted_wins_when_all_positive():
    kappa = 3.0
    records = [
        FormRecord("P", 2, 6, 6 * kappa + 5, None, msc(6 * kappa + 5, 6, kappa)),
        FormRecord("SP", 4, 4, 4 * kappa + 1, None, msc(4 * kappa + 1, 4, kappa)),
        FormRecord("NP", 8, 0, 0.0, None, 0.0),
    ]
    assert decide_lm_bic(records).chosen == "NP"


def test_lm_bic_tie_goes_to_smaller_m_then_order():
    records = [
        FormRecord("big", 5, 3, None, None, -1.0),
        FormRecord("small", 3, 5, None, None, -1.0),
        FormRecord("small2", 3, 5, None, None, -1.0),
        FormRecord("NP", 8, 0, 0.0, None, 0.0),
    ]
    assert decide_lm_bic(records).chosen == "small"


def test_lm_bic_skips_unavailable_and_fails_when_none_left():
    records = [rec("A", 2, 4, available=False), rec("B", 3, 3, t=10.0)]
    assert decide_lm_bic(records).chosen == "B"
    with pytest.raises(SelectionFailedError):
        decide_lm_bic([rec("A", 2, 4, available=False)])


@settings(max_examples=100)
@given(
    st.lists(st.tuples(st.integers(1, 10), st.floats(0, 400)), min_size=1, max_size=8),
)
def test_penalty_monotonicity(forms):
    k = 11
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        previous_m = math.inf
        for kappa in np.linspace(0.5, 40, 80):
            records = [
                FormRecord(f"f{i}", m, k - m, xi, None, msc(xi, k - m, kappa))
                for i, (m, xi) in enumerate(forms)
            ] + [FormRecord("NP", k, 0, 0.0, None, 0.0)]
            m_chosen = decide_lm_bic(records).record(decide_lm_bic(records).chosen).m
            assert m_chosen <= previous_m
            previous_m = m_chosen


# --- UT --------------------------------------------------------------------


def test_ut_all_rejected_falls_back_to_unrestricted():
    records = [rec("P", 2, 6, t=5.0), rec("SP", 4, 4, t=3.0), rec("NP", 8, 0)]
    res = decide_ut(records, gamma=1.0)
    assert res.chosen == "NP"
    assert any("rejected" in w for w in res.warnings)


def test_ut_within_level_argmin():
    records = [
        rec("P", 2, 6, t=4.0),
        rec("SP-a", 4, 4, t=2.1),
        rec("SP-b", 4, 4, t=0.5),
        rec("SP-c", 5, 3, t=0.1),
        rec("NP", 8, 0),
    ]
    assert decide_ut(records, gamma=1.0).chosen == "SP-b"


def test_ut_stops_at_first_passing_level():
    records = [rec("P", 2, 6, t=0.9), rec("SP", 4, 4, t=-1.0), rec("NP", 8, 0)]
    res = decide_ut(records, gamma=1.0)
    assert res.chosen == "P" and res.warnings == []


def test_ut_without_unrestricted_form():
    records = [rec("P", 2, 6, t=5.0), rec("SP1", 4, 4, t=3.0), rec("SP2", 4, 4, t=2.0)]
    res = decide_ut(records, gamma=1.0)
    assert res.chosen == "SP2"
    assert res.warnings


# --- DT --------------------------------------------------------------------


def test_dt_pass_pass_fail_pass():
    # scanning downward from the top: NP passes, L3 passes, L2 fails, L1 passes
    records = [
        rec("L1", 1, 7, t=0.0),
        rec("L2", 2, 6, t=9.0),
        rec("L3", 3, 5, t=0.2),
        rec("NP", 8, 0),
    ]
    res = decide_dt(records, gamma=1.0)
    assert res.chosen == "L3"
    assert NO_GAPS_NOTE in res.warnings


def test_dt_all_pass_picks_smallest_level():
    records = [rec("L1", 1, 7, t=0.0), rec("L2", 2, 6, t=-0.5), rec("NP", 8, 0)]
    assert decide_dt(records, gamma=1.0).chosen == "L1"


def test_dt_only_top_passes():
    records = [rec("L1", 1, 7, t=3.0), rec("L2", 2, 6, t=4.0), rec("NP", 8, 0)]
    res = decide_dt(records, gamma=1.0)
    assert res.chosen == "NP"
    assert NO_GAPS_NOTE in res.warnings


def test_decide_dispatch():
    records = [rec("L1", 1, 7, t=0.0), rec("NP", 8, 0)]
    params = TuningParams(2.0, 1.0)
    assert {p: decide(p, records, params).procedure for p in ("lm-bic", "ut", "dt")} == {
        "lm-bic": "lm-bic",
        "ut": "ut",
        "dt": "dt",
    }
    with pytest.raises(InvalidArgumentError):
        decide("aic", records, params)


# --- drivers on data -------------------------------------------------------


def small_problem(seed=0, n=400, curve=0.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    Y = 1 + x + curve * x**3 + 0.5 * rng.standard_normal(n)
    specs = [
        ModelSpec("lin", "1, lin(x0)"),
        ModelSpec("quad", "pow(x0, 3)"),
        ModelSpec("full", "pow(x0, 5)"),
    ]
    cands = build_candidate_set(specs, 5, full_basis="pow(x0, 5)")
    return cands, (Y, x[:, None])


@pytest.mark.parametrize("mode", ["homoskedastic", "heteroskedastic"])
def test_drivers_trace_completeness(mode):
    cands, data = small_problem()
    params = TuningParams.default(400, mode)
    results = select_all(cands, data, params)
    for proc, res in results.items():
        names = [r.form_name for r in res.per_form]
        assert sorted(names) == sorted(f.name for f in cands.forms)
        assert len(set(names)) == len(names)
        assert res.chosen in names
        # chosen reproducible from per_form alone
        assert decide(proc, res.per_form, params).chosen == res.chosen
        for f in cands.forms:
            assert any(line.startswith(f"{f.name}:") for line in res.trace)
    lm = results["lm-bic"]
    assert all(lm.record(lm.chosen).msc <= r.msc for r in lm.per_form)
    assert lm.chosen == "lin"
    assert select_lm_bic(cands, data, params).chosen == "lin"
    assert select_ut(cands, data, params).chosen == "lin"
    assert select_dt(cands, data, params).chosen == "lin"


def test_drivers_pick_unrestricted_under_strong_curvature():
    cands, data = small_problem(curve=8.0, n=2000)
    params = TuningParams.default(2000)
    out = select_all(cands, data, params)
    assert out["lm-bic"].chosen == "full"
    assert out["ut"].chosen == "full"


def test_degenerate_form_is_excluded_with_warning():
    x = np.linspace(-1, 1, 50)
    Y = 1 + x
    specs = [ModelSpec("exact", "1, lin(x0)"), ModelSpec("const", "1"), ModelSpec("full", "pow(x0, 3)")]
    cands = build_candidate_set(specs, 3, full_basis="pow(x0, 3)")
    res = select_lm_bic(cands, (Y, x[:, None]), TuningParams(3.0, 1.0))
    exact = res.record("exact")
    assert not exact.available
    assert res.chosen != "exact"
    assert any("exact excluded" in w for w in res.warnings)


def test_evaluate_needs_more_rows_than_terms():
    cands, (Y, X) = small_problem(n=5)
    with pytest.raises(InvalidArgumentError, match="n > k"):
        evaluate_candidates(cands, Y, X)


def test_agreement_in_clear_cut_regime():
    n, B = 5000, 200
    cands = candidate_set_for_study(n)
    params = TuningParams.default(n)
    config = DgpConfig(1, n, seed=424242)
    agree = 0
    for rep in range(B):
        data = gen_dgp(config, rep)
        out = select_all(cands, (data.Y, data.regressors), params)
        agree += all(res.chosen == "P" for res in out.values())
    assert agree / B >= 0.90
