from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reservoir_markov.exceptions import (
    DataError,
    MissingColumnsError,
    NegativeFlowError,
    PartialYearError,
    TooFewYearsError,
    TooShortError,
)
from reservoir_markov.ingest import (
    MONTH_FACTOR,
    DiscretizationScheme,
    FlowRecord,
    balance_residual_series,
    build_discretization,
    fit_inflow_markov,
    fit_inflow_pmf,
    independence_diagnostic,
    inflow_counts,
    merge_sparse_categories,
    monthly_to_annual,
    read_flow_csv,
)
from reservoir_markov.moran_finite import DamSpec

from conftest import COUNTS, PUBLISHED_PMF

DATA = Path(__file__).parent / "data"


def months(n, start="1990-10-01"):
    return pd.date_range(start, periods=n, freq="MS")


def frame(flows, start="1990-10-01", **cols):
    df = pd.DataFrame({"date": months(len(flows), start), "inflow_m3s": flows})
    for k, v in cols.items():
        df[k] = v
    return df


def test_month_factor():
    assert MONTH_FACTOR == pytest.approx(2.592, abs=1e-12)


def test_constant_unit_flow_gives_31_104():
    annual = monthly_to_annual(frame(np.ones(12)))
    assert annual.tolist() == pytest.approx([31.104], abs=1e-12)
    assert annual.index.tolist() == [1990]


def test_all_zero_year():
    assert monthly_to_annual(frame(np.zeros(12))).tolist() == [0.0]


def test_eleven_months_rejected():
    with pytest.raises(PartialYearError):
        monthly_to_annual(frame(np.ones(11)))


def test_year_must_start_in_october():
    with pytest.raises(PartialYearError):
        monthly_to_annual(frame(np.ones(12), start="1990-11-01"))


def test_negative_flow_rejected():
    f = np.ones(12)
    f[3] = -0.1
    with pytest.raises(NegativeFlowError):
        monthly_to_annual(frame(f))


def test_flow_records_accepted():
    recs = [FlowRecord(d, 2.0) for d in months(24)]
    assert monthly_to_annual(recs).tolist() == pytest.approx([62.208, 62.208])


def test_calendar_exact_mode_uses_month_lengths():
    annual = monthly_to_annual(frame(np.ones(12)), calendar_exact=True)
    assert annual.iloc[0] == pytest.approx(365 * 86400e-6)


@given(st.floats(0.01, 100), st.lists(st.floats(0, 50), min_size=24, max_size=24))
def test_conversion_is_linear(alpha, flows):
    a = monthly_to_annual(frame(np.array(flows)))
    b = monthly_to_annual(frame(alpha * np.array(flows)))
    assert np.allclose(b, alpha * a, rtol=1e-12, atol=1e-12)


def test_case_study_discretization():
    s = build_discretization(DamSpec(10, 32))
    assert s.k == 3 and s.C == 4 and s.n_inflow == 5
    assert s.storage_intervals() == [(0, 5), (5, 15), (15, 25), (25, 32)]
    assert s.inflow_intervals()[-1] == (35, np.inf)
    assert s.storage_labels()[-1] == "I_3'"


def test_capacity_after_release_option():
    s = build_discretization(DamSpec(10, 32), use_capacity_after_release=True)
    assert s.upper == 22 and s.k == 2


def test_scaled_case_study():
    assert DiscretizationScheme(1.0, 3.2).k == 3


def test_capacity_twice_release():
    # (k - 1/2) c0 < 2 c0 <= (k + 1/2) c0 holds for k = 2, not k = 1
    s = DiscretizationScheme(10.0, 20.0)
    assert s.k == 2
    assert s.storage_intervals() == [(0, 5), (5, 15), (15, 20)]


def test_too_small_upper_rejected():
    with pytest.raises(ValueError):
        DiscretizationScheme(10.0, 4.0)


def test_interval_edges_are_right_closed():
    s = build_discretization(DamSpec(10, 32))
    assert s.inflow_index([0, 5, 5.0001, 15, 15.0001, 35, 35.0001, 1e6]).tolist() == [0, 0, 1, 1, 2, 3, 4, 4]
    assert s.storage_index([32, 40]).tolist() == [3, 3]


@given(st.floats(0, 1e4), st.floats(0.1, 50), st.floats(1, 10))
def test_discretization_is_partition(v, c0, ratio):
    s = DiscretizationScheme(c0, c0 * ratio)
    j = int(s.inflow_index(v))
    inside = [lo < v <= hi or (i == 0 and v == 0) for i, (lo, hi) in enumerate(s.inflow_intervals())]
    # float edges may flip membership within a relative 1e-9 band
    edge = any(abs(v - e) <= 1e-9 * max(1.0, c0) for lo, hi in s.inflow_intervals() for e in (lo, hi) if np.isfinite(e))
    assert sum(inside) == 1 or edge
    if not edge:
        assert inside[j]


def test_published_pmf_from_counts():
    s = build_discretization(DamSpec(10, 32))
    mids = [2.5, 10, 20, 30, 40]
    annual = np.repeat(mids, COUNTS)
    pmf = fit_inflow_pmf(annual, s)
    assert np.allclose(pmf.p, PUBLISHED_PMF, atol=5e-5)
    assert np.array_equal(inflow_counts(annual, s), COUNTS)
    assert pmf.p.sum() == 1.0
    assert np.allclose(pmf.p * 26, np.round(pmf.p * 26), atol=1e-12)


def test_single_value_degenerate_pmf():
    s = build_discretization(DamSpec(10, 32))
    assert fit_inflow_pmf([12.0] * 5, s).p.tolist() == [0, 1, 0, 0, 0]


def test_too_few_years():
    with pytest.raises(TooFewYearsError):
        fit_inflow_pmf([3.0], build_discretization(DamSpec(10, 32)))


@given(st.lists(st.floats(0, 100), min_size=2, max_size=60))
def test_pmf_sums_to_one(vals):
    p = fit_inflow_pmf(vals, build_discretization(DamSpec(10, 32))).p
    assert abs(p.sum() - 1.0) <= 1e-15
    assert np.allclose(p * len(vals), np.round(p * len(vals)), atol=1e-9)


def test_synthetic_csv_reproduces_counts():
    df = read_flow_csv(DATA / "synthetic_monthly.csv")
    annual = monthly_to_annual(df)
    assert annual.size == 26
    assert np.array_equal(inflow_counts(annual, build_discretization(DamSpec(10, 32))), COUNTS)


def test_periodic_alternation_rejects():
    r = independence_diagnostic([0, 1] * 20)
    assert r.method == "fisher_exact" and r.p_value < 0.01


def test_constant_sequence_not_testable():
    r = independence_diagnostic([2] * 30)
    assert not r.testable and r.method == "not testable" and np.isnan(r.p_value)


def test_too_short():
    with pytest.raises(TooShortError):
        independence_diagnostic([0, 1, 0])


def test_merge_sparse_categories():
    codes, groups = merge_sparse_categories([0] * 10 + [1] * 2 + [2] * 8 + [3] * 6)
    assert groups == ((0,), (1, 2), (3,))
    assert codes.max() == 2


def test_independence_calibration():
    # i.i.d. draws from the case-study pmf: rejection rate at 5% should be near 5%
    rng = np.random.default_rng(11)
    p = PUBLISHED_PMF / PUBLISHED_PMF.sum()
    rejects = 0
    for i in range(1000):
        seq = rng.choice(5, size=200, p=p)
        rejects += independence_diagnostic(seq, n_mc=199, seed=i).p_value <= 0.05
    # binomial(1000, 0.05) has sd 6.9
    assert 30 <= rejects <= 72


def test_markov_fit_cycle_is_permutation():
    P, flagged = fit_inflow_markov([0, 1, 2] * 10, 3)
    assert np.array_equal(np.asarray(P.entries), np.roll(np.eye(3), 1, axis=1))
    assert flagged == []


def test_markov_fit_unobserved_rows_uniform():
    P, flagged = fit_inflow_markov([0, 1, 0, 1, 0], 4)
    E = np.asarray(P.entries)
    assert flagged == [2, 3]
    assert np.array_equal(E[2], np.full(4, 0.25))
    assert np.all(E.sum(axis=1) == 1.0)


def test_markov_fit_iid_rows_near_marginal():
    rng = np.random.default_rng(3)
    p = np.array([0.3, 0.4, 0.2, 0.1])
    P, _ = fit_inflow_markov(rng.choice(4, size=200_000, p=p), 4)
    assert np.allclose(np.asarray(P.entries), p, atol=0.01)


def test_balance_residual_zero_under_conservation():
    f = np.full(12, 1.0)
    out = np.full(12, 2.0)
    storage = 20 + np.concatenate([[0], np.cumsum(f * MONTH_FACTOR - out)[:-1]])
    r = balance_residual_series(frame(f, storage_hm3=storage, outflow_hm3=out))
    assert np.allclose(r.values, 0, atol=1e-12)


def test_balance_residual_leak_ramp():
    L = 0.3
    f = np.full(24, 1.0)
    out = np.full(24, 2.0)
    storage = 20 + np.concatenate([[0], np.cumsum(f * MONTH_FACTOR - out - L)[:-1]])
    r = balance_residual_series(frame(f, storage_hm3=storage, outflow_hm3=out))
    assert np.allclose(np.diff(r.values), L, atol=1e-12)


def test_balance_residual_three_periods_by_hand():
    # inflow 2.592, 0, 5.184 hm³; outflow 1, 1, 1; observed storage 10, 11, 9.5
    # modelled: 10, 10 + 1.592 = 11.592, 11.592 - 1 = 10.592
    df = frame([1.0, 0.0, 2.0], storage_hm3=[10, 11, 9.5], outflow_hm3=[1, 1, 1])
    r = balance_residual_series(df)
    assert np.allclose(r.values, [0, 0.592, 1.092], atol=1e-12)


def test_balance_residual_on_synthetic_record_is_a_leak():
    r = balance_residual_series(read_flow_csv(DATA / "synthetic_monthly.csv"))
    # 0.05 hm³ lost each month, less when the reservoir runs dry; the file rounds to 4 decimals
    d = np.diff(r.values)
    assert np.all((d > -1e-3) & (d < 0.05 + 1e-3))
    assert np.median(d) == pytest.approx(0.05, abs=1e-3)
    assert r.z0 == "15.0"


def test_balance_residual_needs_columns():
    with pytest.raises(MissingColumnsError):
        balance_residual_series(frame(np.ones(12)))


def test_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("date,flow\n1990-10-01,1\n")
    with pytest.raises(MissingColumnsError):
        read_flow_csv(p)
    p.write_text("date,inflow_m3s\nnot-a-date,1\n")
    with pytest.raises(DataError):
        read_flow_csv(p)
    p.write_text("date,inflow_m3s\n1990-11-01,1\n1990-10-01,1\n")
    with pytest.raises(DataError):
        read_flow_csv(p)
    p.write_text("date,inflow_m3s\n1990-10-01,-1\n")
    with pytest.raises(NegativeFlowError):
        read_flow_csv(p)
