import numpy as np
import pytest
from hypothesis import given, strategies as st

from reservoir_markov.chain_core import stationary_distribution
from reservoir_markov.exceptions import DegenerateInflowError, StateIndexError
from reservoir_markov.moran_finite import (
    DamSpec,
    InflowPmf,
    StorageStates,
    build_transition_matrix,
    clt_variance,
    mean_storage,
    moran_step,
    overflow_loss,
    recursive_coefficients,
    stationary_recursive,
    storage_labels,
    water_balance_residual,
)

from conftest import PUBLISHED_PI, PUBLISHED_PMF, PUBLISHED_PZ
from oracles import asymptotic_variance_batch, eig_stationary, moran_matrix


@pytest.mark.parametrize("z, y, C, out", [(2, 0, 4, 1), (0, 0, 4, 0), (3, 5, 4, 3), (1, 1, 4, 1)])
def test_moran_step(z, y, C, out):
    assert moran_step(z, y, C) == out


def test_moran_step_rejects_bad_state():
    with pytest.raises(StateIndexError):
        moran_step(4, 0, 4)


def test_labels_and_dam_spec():
    assert storage_labels(4) == ("I_0", "I_1", "I_2", "I_3'")
    spec = DamSpec(10.0, 32.0)
    assert DamSpec.from_config(spec.to_config()) == spec
    with pytest.raises(ValueError):
        DamSpec(10.0, 5.0)


def test_pmf_validation():
    with pytest.raises(ValueError):
        InflowPmf([0.5, 0.6])
    with pytest.raises(ValueError):
        InflowPmf([1.2, -0.2])
    p = InflowPmf([0.2, 0.5, 0.3])
    assert p.K == 2 and p.tail(1) == pytest.approx(0.8) and p[7] == 0.0
    assert p.mean == pytest.approx(1.1)


def test_storage_states_validation():
    with pytest.raises(ValueError):
        StorageStates(("a", "b"), [1.0, 1.0])
    assert np.array_equal(StorageStates.index_units(3).values, [0, 1, 2])


def test_transition_matrix_published():
    P = build_transition_matrix(PUBLISHED_PMF, 4)
    assert P.states == storage_labels(4)
    assert np.abs(P.entries - PUBLISHED_PZ).max() < 1e-4


def test_transition_matrix_zero_inflow_absorbs():
    P = build_transition_matrix([1.0], 4).entries
    assert np.array_equal(P, np.eye(4)[[0, 0, 1, 2]])
    assert np.array_equal(stationary_distribution(P).mass, [1, 0, 0, 0])


def test_recursion_published():
    assert np.allclose(stationary_recursive(PUBLISHED_PMF, 4).mass, PUBLISHED_PI, atol=5e-4)
    a = recursive_coefficients(PUBLISHED_PMF, 4)
    assert a[1] == pytest.approx((1 - 0.3462 - 0.3846) / 0.3462, abs=1e-12)
    assert a[1] == pytest.approx(0.7776, abs=1e-4)


def test_recursion_two_states():
    pi = stationary_recursive([0.6, 0.2, 0.2], 2).mass
    assert np.allclose(pi, [0.75, 0.25])
    P = build_transition_matrix([0.6, 0.2, 0.2], 2).entries
    assert np.allclose(pi @ P, pi)


def test_recursion_degenerate():
    with pytest.raises(DegenerateInflowError):
        recursive_coefficients([0.0, 1.0], 3)
    # no inflow above one unit: storage can only fall, all mass ends at 0
    assert np.array_equal(stationary_recursive([0.4, 0.6], 3).mass, [1, 0, 0])


def test_recursion_falls_back_with_warning():
    # 1 - p0 - p1 is pure rounding noise, then divided by a tiny p0
    p = np.array([float.fromhex("0x1.a8a2b729488dbp-25"), float.fromhex("0x1.fffffe575d48ep-1")])
    assert recursive_coefficients(p, 48).min() < -1e-9
    with pytest.warns(RuntimeWarning):
        pi = stationary_recursive(p, 48).mass
    assert np.allclose(pi, stationary_distribution(build_transition_matrix(p, 48)).mass, atol=1e-12)


def test_water_balance_published():
    wb = water_balance_residual(PUBLISHED_PMF, 4, PUBLISHED_PI)
    assert wb.mu_y == pytest.approx(1.1153, abs=1e-4)
    assert wb.loss_rate == pytest.approx(0.2035, abs=1e-4)
    assert wb.release_rate == pytest.approx(1 - 0.2547 * 0.3462, abs=1e-12)
    assert abs(wb.residual) < 2e-3


def test_water_balance_unit_inflow():
    pi = np.array([0.0, 1.0, 0.0])
    wb = water_balance_residual([0.0, 1.0], 3, pi)
    assert (wb.mu_y, wb.loss_rate, wb.release_rate, wb.residual) == (1.0, 0.0, 1.0, 0.0)


def test_overflow_and_mean_storage_published():
    assert overflow_loss(PUBLISHED_PI, PUBLISHED_PMF, 4) == pytest.approx(0.2035, abs=1e-4)
    assert mean_storage(PUBLISHED_PI) == pytest.approx(1.6010, abs=1e-4)
    assert mean_storage([1.0, 0, 0, 0]) == 0.0


def test_clt_variance_trivial_cases():
    assert clt_variance([[1.0]]) == 0.0
    pi = np.array([0.2, 0.3, 0.5])
    z = np.arange(3.0)
    var = pi @ (z - pi @ z) ** 2
    assert clt_variance(np.tile(pi, (3, 1))) == pytest.approx(var)


def test_clt_variance_matches_autocovariance_sum():
    P = build_transition_matrix(PUBLISHED_PMF, 4)
    assert clt_variance(P) == pytest.approx(asymptotic_variance_batch(P.entries, np.arange(4.0)), rel=1e-10)
    vals = StorageStates(storage_labels(4), [2.5, 10, 20, 28.5])
    assert clt_variance(P, states=vals) == pytest.approx(
        asymptotic_variance_batch(P.entries, vals.values), rel=1e-10)


pmfs = st.integers(1, 6).flatmap(
    lambda K: st.lists(st.floats(0.02, 1.0), min_size=K + 1, max_size=K + 1)
).map(lambda w: np.asarray(w) / np.sum(w))


@given(pmfs, st.integers(2, 9))
def test_matrix_matches_loop_oracle(p, C):
    P = build_transition_matrix(p, C).entries
    assert np.allclose(P, moran_matrix(p, C), atol=1e-15)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-15)


@given(pmfs, st.integers(2, 9))
def test_recursion_equals_eigenvector(p, C):
    pi = stationary_recursive(p, C).mass
    assert np.allclose(pi, eig_stationary(moran_matrix(p, C)), atol=1e-9)


@given(pmfs, st.integers(2, 9))
def test_water_balance_closes(p, C):
    assert abs(water_balance_residual(p, C).residual) <= 1e-9
