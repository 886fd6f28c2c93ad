import numpy as np
import pytest
from hypothesis import given, strategies as st

from reservoir_markov.chain_core import (
    closed_classes,
    expected_reward_before_hit,
    expected_visits_before_hit,
    expected_visits_vector,
    fundamental_matrix,
    hitting_distribution,
    is_irreducible_aperiodic,
    mean_first_passage_time,
    n_step_distribution,
    random_stochastic_matrix,
    stationary_distribution,
    validate_stochastic,
)
from reservoir_markov.exceptions import (
    NegativeEntryError,
    NonSquareError,
    NotIrreducibleError,
    RowSumOutOfToleranceError,
    StateIndexError,
    TargetUnreachableError,
)

from conftest import PUBLISHED_PI, PUBLISHED_PZ
from oracles import eig_stationary, hitting_time_series, visits_series


def test_validate_identity_unchanged():
    P = validate_stochastic(np.eye(2))
    assert np.array_equal(P.entries, np.eye(2))


def test_validate_renormalizes_tiny_excess():
    P = validate_stochastic([[0.5, 0.5000000001], [0.5, 0.5]])
    assert abs(P.entries[0].sum() - 1.0) < 1e-15


@pytest.mark.parametrize("M, err", [
    ([[0.5, 0.6], [0.5, 0.5]], RowSumOutOfToleranceError),
    ([[1.2, -0.2], [0.5, 0.5]], NegativeEntryError),
    ([[1.0, 0.0]], NonSquareError),
])
def test_validate_rejects(M, err):
    with pytest.raises(err):
        validate_stochastic(M)


def test_entries_are_read_only():
    P = validate_stochastic(np.eye(2))
    with pytest.raises(ValueError):
        P.entries[0, 0] = 0.0


def test_state_labels_and_bad_index():
    P = validate_stochastic(np.eye(3), ("a", "b", "c"))
    assert P.index("b") == 1 and P.index(2) == 2
    with pytest.raises(StateIndexError):
        P.index("d")
    with pytest.raises(StateIndexError):
        P.index(3)


def test_irreducibility_checks():
    assert is_irreducible_aperiodic([[0, 1], [1, 0]]) == (True, False)
    assert is_irreducible_aperiodic(PUBLISHED_PZ) == (True, True)
    block = np.kron(np.eye(2), np.full((2, 2), 0.5))
    assert is_irreducible_aperiodic(block) == (False, None)


def test_stationary_published_table():
    pi = stationary_distribution(PUBLISHED_PZ)
    assert np.allclose(pi.mass, PUBLISHED_PI, atol=5e-4)


def test_stationary_doubly_stochastic_and_two_state():
    perm = np.eye(4)[[1, 2, 3, 0]]
    assert np.allclose(stationary_distribution(0.5 * perm + 0.5 * np.eye(4)).mass, 0.25)
    assert np.allclose(stationary_distribution([[0.9, 0.1], [0.5, 0.5]]).mass, [5 / 6, 1 / 6], atol=1e-14)


def test_stationary_with_transient_state():
    P = [[0.5, 0.5, 0.0], [0.0, 0.3, 0.7], [0.0, 0.6, 0.4]]
    pi = stationary_distribution(P).mass
    assert pi[0] == 0.0
    assert np.allclose(pi[1:], [6 / 13, 7 / 13])


def test_stationary_rejects_two_closed_classes():
    with pytest.raises(NotIrreducibleError):
        stationary_distribution(np.eye(2))
    assert len(closed_classes(np.eye(3))) == 3


def test_fundamental_matrix_cases():
    pi = np.array([0.2, 0.3, 0.5])
    Z = fundamental_matrix(np.tile(pi, (3, 1))).Z
    assert np.allclose(Z, np.eye(3))
    P = np.array([[0.9, 0.1], [0.5, 0.5]])
    Z = fundamental_matrix(P).Z
    Pi = np.tile([5 / 6, 1 / 6], (2, 1))
    assert np.allclose((np.eye(2) - P + Pi) @ Z, np.eye(2), atol=1e-13)
    # direct 2x2 inverse
    A = np.eye(2) - P + Pi
    assert np.allclose(Z, np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / np.linalg.det(A))
    Zq = fundamental_matrix(PUBLISHED_PZ).Z
    assert np.allclose(Zq.sum(axis=1), 1.0, atol=1e-9)


def test_n_step_distribution():
    rho0 = np.array([1.0, 0.0])
    assert np.array_equal(n_step_distribution([[0, 1], [1, 0]], rho0, 0).mass, rho0)
    assert np.allclose(n_step_distribution([[0, 1], [1, 0]], rho0, 3).mass, [0, 1])
    far = n_step_distribution(PUBLISHED_PZ, [0, 1, 0, 0], 200).mass
    assert np.allclose(far, stationary_distribution(PUBLISHED_PZ).mass, atol=1e-6)


def test_visits_published_partition():
    A = ["0", "3"]
    assert expected_visits_before_hit(PUBLISHED_PZ, A, 1, 1) == pytest.approx(0.8907, abs=1e-4)
    assert expected_visits_before_hit(PUBLISHED_PZ, A, 1, 2) == pytest.approx(0.4725, abs=1e-4)
    for j in (1, 2):
        assert expected_visits_before_hit(PUBLISHED_PZ, A, 1, j) == pytest.approx(
            visits_series(PUBLISHED_PZ, [0, 3], 1, j), abs=1e-12)


def test_visits_immediate_absorption():
    P = [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5]]
    for j in (0, 1):
        assert expected_visits_before_hit(P, [2], 0, j) == 0.0


def test_visits_into_target_are_hitting_probabilities():
    hd = hitting_distribution(PUBLISHED_PZ, [0, 3], 1)
    assert sum(hd.values()) == pytest.approx(1.0)
    v = expected_visits_vector(PUBLISHED_PZ, [0, 3], [0, 1, 0, 0])
    assert v[0] == pytest.approx(hd["0"]) and v[3] == pytest.approx(hd["3"])


def test_unreachable_target_raises():
    P = [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]
    with pytest.raises(TargetUnreachableError):
        expected_visits_before_hit(P, [2], 0, 1)
    with pytest.raises(TargetUnreachableError):
        mean_first_passage_time(P, [2], [1, 0, 0])


def test_mean_return_time_is_inverse_stationary_mass():
    pi = stationary_distribution(PUBLISHED_PZ).mass
    for i in range(4):
        rho = np.eye(4)[i]
        assert mean_first_passage_time(PUBLISHED_PZ, [i], rho) == pytest.approx(1 / pi[i], rel=1e-10)


def test_expected_reward_dense_matches_sparse():
    import scipy.sparse as sp
    P = random_stochastic_matrix(8, np.random.default_rng(3), density=0.5)
    r = np.arange(8.0)
    dense = expected_reward_before_hit(P, [0], r)
    sparse = expected_reward_before_hit(sp.csr_matrix(P.entries), [0], r)
    assert np.allclose(dense, sparse)
    for x in range(8):
        ref = sum(r[j] * expected_visits_before_hit(P, [0], x, j) for j in range(1, 8))
        assert dense[x] == pytest.approx(ref)


@pytest.mark.slow
def test_visits_monte_carlo():
    rng = np.random.default_rng(11)
    P = np.asarray(PUBLISHED_PZ / PUBLISHED_PZ.sum(axis=1, keepdims=True))
    n_paths = 10**6
    cum = np.cumsum(P, axis=1)
    state = np.ones(n_paths, dtype=int)
    alive = np.ones(n_paths, bool)
    visits = np.zeros(n_paths)
    while alive.any():
        u = rng.random(alive.sum())
        nxt = (u[:, None] > cum[state[alive]]).sum(axis=1)
        state[alive] = nxt
        visits[alive] += nxt == 1
        alive[alive] = (nxt != 0) & (nxt != 3)
    exact = expected_visits_before_hit(P, [0, 3], 1, 1)
    se = visits.std(ddof=1) / np.sqrt(n_paths)
    assert abs(visits.mean() - exact) < 3 * se


stoch = st.integers(2, 7).flatmap(
    lambda n: st.integers(0, 2**32 - 1).map(lambda s: random_stochastic_matrix(n, np.random.default_rng(s), 0.6))
)


@given(stoch)
def test_stationary_is_invariant_and_matches_eigenvector(P):
    pi = stationary_distribution(P).mass
    assert np.allclose(pi @ P.entries, pi, atol=1e-12)
    assert pi.sum() == pytest.approx(1.0)
    assert np.allclose(pi, eig_stationary(P.entries), atol=1e-9)


@given(stoch)
def test_fundamental_matrix_identities(P):
    pi = stationary_distribution(P).mass
    Z = fundamental_matrix(P, pi).Z
    assert np.allclose(Z.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(pi @ Z, pi, atol=1e-9)


@given(stoch, st.data())
def test_mean_first_passage_matches_series(P, data):
    n = P.n
    a = data.draw(st.integers(0, n - 1))
    i = data.draw(st.integers(0, n - 1))
    exact = mean_first_passage_time(P, [a], np.eye(n)[i])
    assert exact == pytest.approx(hitting_time_series(P.entries, [a], i), rel=1e-8)
