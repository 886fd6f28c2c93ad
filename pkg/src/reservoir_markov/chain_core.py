r"""Finite discrete-time Markov chain algebra.

Everything here works on dense row-stochastic matrices of modest size
(a few hundred states at most); the sparse path in
:func:`expected_reward_before_hit` exists for the truncated semi-infinite
chains, which can reach several thousand states.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .exceptions import (
    NegativeEntryError,
    NonSquareError,
    NotIrreducibleError,
    RowSumOutOfToleranceError,
    SingularSystemError,
    StateIndexError,
    TargetUnreachableError,
)

RENORMALIZE_TOL = 1e-6


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix over labelled states.

    Build instances through :func:`validate_stochastic`; the constructor
    itself does not check stochasticity.
    """

    states: tuple[str, ...]
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "entries", _freeze(self.entries))
        if self.entries.shape != (len(self.states), len(self.states)):
            raise NonSquareError(
                f"{len(self.states)} labels for a matrix of shape {self.entries.shape}"
            )

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return _state_index(self.states, state)

    def to_dict(self) -> dict:
        return {"states": list(self.states), "rows": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionMatrix":
        return validate_stochastic(d["rows"], states=d.get("states"))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class Distribution:
    """Probability vector over labelled states."""

    states: tuple[str, ...]
    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "mass", _freeze(self.mass))
        if self.mass.shape != (len(self.states),):
            raise ValueError(f"{len(self.states)} labels for {self.mass.shape[0]} masses")

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return _state_index(self.states, state)

    def __getitem__(self, state) -> float:
        return float(self.mass[self.index(state)])

    def to_dict(self) -> dict:
        return {"states": list(self.states), "rows": [self.mass.tolist()]}

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        mass = np.asarray(d["rows"], dtype=float).reshape(-1)
        return cls(tuple(d["states"]), mass)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mass, dtype=dtype)


@dataclass(frozen=True)
class FundamentalMatrix:
    base: TransitionMatrix
    Z: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "Z", _freeze(self.Z))


def _state_index(states: Sequence[str], state) -> int:
    if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
        i = int(state)
        if not 0 <= i < len(states):
            raise StateIndexError(f"state index {i} outside 0..{len(states) - 1}")
        return i
    try:
        return states.index(str(state))
    except ValueError:
        raise StateIndexError(f"unknown state {state!r}; known: {list(states)}") from None


def default_labels(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


def as_transition_matrix(P) -> TransitionMatrix:
    if isinstance(P, TransitionMatrix):
        return P
    return validate_stochastic(P)


def as_mass(pi) -> np.ndarray:
    if isinstance(pi, Distribution):
        return np.asarray(pi.mass)
    return np.asarray(pi, dtype=float)


def indices(P: TransitionMatrix, subset: Iterable) -> np.ndarray:
    """Resolve labels or integer indices to a sorted unique index array."""
    idx = sorted({P.index(s) for s in subset})
    return np.asarray(idx, dtype=int)


def validate_stochastic(M, states: Sequence | None = None) -> TransitionMatrix:
    """Check a raw matrix and return it as a :class:`TransitionMatrix`.

    Rows whose sum deviates from one by at most ``1e-6`` are rescaled, which
    absorbs the rounding of matrices published to four decimals.

    Raises
    ------
    NonSquareError, NegativeEntryError, RowSumOutOfToleranceError
    """
    M = np.array(M, dtype=float, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise NonSquareError(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NegativeEntryError("matrix has non-finite entries")
    if np.any(M < 0):
        i, j = np.argwhere(M < 0)[0]
        raise NegativeEntryError(f"negative entry {M[i, j]} at ({i}, {j})")
    sums = M.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORMALIZE_TOL):
        i = int(np.argmax(dev))
        raise RowSumOutOfToleranceError(f"row {i} sums to {sums[i]!r}")
    M /= sums[:, None]
    if states is None:
        states = default_labels(M.shape[0])
    return TransitionMatrix(tuple(states), M)


def _graph(P) -> sp.csr_matrix:
    A = P.entries if isinstance(P, TransitionMatrix) else P
    return sp.csr_matrix(np.asarray(A) > 0) if not sp.issparse(A) else (A > 0).tocsr()


def closed_classes(P) -> list[np.ndarray]:
    """Communicating classes that no transition leaves (recurrent classes)."""
    G = _graph(P)
    ncomp, labels = csgraph.connected_components(G, directed=True, connection="strong")
    coo = G.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_ = np.zeros(ncomp, dtype=bool)
    open_[labels[coo.row[leaving]]] = True
    return [np.flatnonzero(labels == c) for c in range(ncomp) if not open_[c]]


def is_irreducible_aperiodic(P) -> tuple[bool, bool | None]:
    """Return ``(irreducible, aperiodic)``.

    Aperiodicity is only meaningful for an irreducible chain; for a reducible
    one the second element is ``None``. The period is the gcd of
    ``level(u) + 1 - level(v)`` over all edges ``u -> v`` of a breadth-first
    search from state 0.
    """
    P = as_transition_matrix(P)
    G = _graph(P)
    ncomp, _ = csgraph.connected_components(G, directed=True, connection="strong")
    if ncomp != 1:
        return False, None
    order, pred = csgraph.breadth_first_order(G, 0, directed=True, return_predecessors=True)
    level = np.zeros(P.n, dtype=int)
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    coo = G.tocoo()
    period = 0
    for d in np.unique(np.abs(level[coo.row] + 1 - level[coo.col])):
        period = gcd(period, int(d))
    return True, period == 1


def stationary_distribution(P) -> Distribution:
    """Stationary law from the overdetermined system ``[P^T - I; 1^T] pi = [0; 1]``.

    Chains with transient states are accepted as long as there is exactly
    one closed class; the transient states then get zero mass.

    Raises
    ------
    NotIrreducibleError
        If the chain has more than one closed class.
    """
    P = as_transition_matrix(P)
    n = P.n
    if n == 1:
        return Distribution(P.states, np.ones(1))
    classes = closed_classes(P)
    if len(classes) != 1:
        raise NotIrreducibleError(f"chain has {len(classes)} closed classes")
    A = np.vstack([P.entries.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    transient = np.ones(n, dtype=bool)
    transient[classes[0]] = False
    pi[transient] = 0.0
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return Distribution(P.states, pi)


def fundamental_matrix(P, pi=None) -> FundamentalMatrix:
    """``(I - P + 1 pi)^{-1}`` for an ergodic chain."""
    P = as_transition_matrix(P)
    if pi is None:
        pi = stationary_distribution(P)
    m = as_mass(pi)
    n = P.n
    A = np.eye(n) - P.entries + np.outer(np.ones(n), m)
    try:
        Z = scipy.linalg.solve(A, np.eye(n))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystemError("I - P + Pi is singular; pi is not stationary for P") from exc
    return FundamentalMatrix(P, Z)


def n_step_distribution(P, rho0, n: int) -> Distribution:
    """``rho0 P^n`` by repeated vector-matrix products."""
    P = as_transition_matrix(P)
    if n < 0:
        raise ValueError("n must be non-negative")
    v = as_mass(rho0).astype(float, copy=True)
    for _ in range(n):
        v = v @ P.entries
    return Distribution(P.states, v)


# -- first passage ------------------------------------------------------------

def _mask(n: int, idx) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(idx, dtype=int)] = True
    return m


def _can_reach(G: sp.csr_matrix, targets: np.ndarray) -> np.ndarray:
    """Boolean mask of states with a path (length >= 0) into ``targets``."""
    GT = G.T.tocsr()
    seen = targets.copy()
    frontier = np.flatnonzero(targets)
    while frontier.size:
        nxt = np.unique(GT[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def _reachable_within(G: sp.csr_matrix, start: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """States in ``allowed`` reachable in >= 1 step from ``start`` through ``allowed``."""
    seen = np.zeros(G.shape[0], dtype=bool)
    frontier = np.flatnonzero(start)
    while frontier.size:
        nxt = np.unique(G[frontier].indices)
        nxt = nxt[allowed[nxt] & ~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


class _Passage:
    """Linear-algebra pieces for first passage into ``A`` from ``rho``.

    ``S`` holds the non-target states the chain can visit before hitting
    ``A``; ``visits`` is ``rho P[:, S] (I - P[S, S])^{-1}``, the expected
    number of visits to each state of ``S`` at times ``1..T_A``.
    """

    def __init__(self, M: np.ndarray, A_mask: np.ndarray, rho: np.ndarray):
        n = M.shape[0]
        G = sp.csr_matrix(M > 0)
        support = rho > 0
        S_mask = _reachable_within(G, support, ~A_mask)
        reaches = _can_reach(G, A_mask)
        if np.any(S_mask & ~reaches) or np.any(support & ~reaches & ~A_mask):
            raise TargetUnreachableError("target class is not reached with probability one")
        if not np.any(A_mask):
            raise TargetUnreachableError("empty target class")
        S = np.flatnonzero(S_mask)
        self.n = n
        self.A = np.flatnonzero(A_mask)
        self.S = S
        Q = M[np.ix_(S, S)]
        self._lu = scipy.linalg.lu_factor(np.eye(S.size) - Q) if S.size else None
        if S.size and np.any(np.abs(np.diag(self._lu[0])) < 1e-14):
            raise TargetUnreachableError("I - Q is singular")
        first = rho @ M[:, S] if S.size else np.zeros(0)
        self.visits = scipy.linalg.lu_solve(self._lu, first, trans=1) if S.size else first
        self.M = M
        self.rho = rho

    def solve_right(self, b: np.ndarray) -> np.ndarray:
        if not self.S.size:
            return b
        return scipy.linalg.lu_solve(self._lu, b)


def _passage(P, A, rho) -> _Passage:
    P = as_transition_matrix(P)
    A_idx = indices(P, A)
    if A_idx.size == 0 or A_idx.size == P.n:
        raise ValueError("target class must be a nonempty proper subset")
    return _Passage(P.entries, _mask(P.n, A_idx), as_mass(rho))


def point_mass(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


def expected_visits_before_hit(P, A, i, j) -> float:
    r"""Expected visits to ``j`` at times ``1..T_A`` starting from ``i``.

    With ``T_A = inf{n >= 1: Z_n in A}`` and ``j`` outside ``A`` this is
    ``P[i, E\A] (I - P[E\A, E\A])^{-1} e_j``. For ``j`` in ``A`` the count is
    at most one and its expectation is the hitting probability
    ``P_i(Z_{T_A} = j)``.

    Raises
    ------
    TargetUnreachableError
        If ``A`` is not hit with probability one from ``i``.
    """
    P = as_transition_matrix(P)
    i, j = P.index(i), P.index(j)
    ps = _passage(P, A, point_mass(P.n, i))
    if j in ps.A:
        return float(hitting_distribution(P, A, i)[P.states[j]])
    hit = np.flatnonzero(ps.S == j)
    return float(ps.visits[hit[0]]) if hit.size else 0.0


def expected_visits_vector(P, A, rho) -> np.ndarray:
    """Expected visits to every state at times ``1..T_A`` from initial law ``rho``.

    Entries for states in ``A`` hold hitting probabilities, as in
    :func:`expected_visits_before_hit`.
    """
    P = as_transition_matrix(P)
    ps = _passage(P, A, as_mass(rho))
    out = np.zeros(P.n)
    out[ps.S] = ps.visits
    out[ps.A] = ps.rho @ P.entries[:, ps.A] + (ps.visits @ P.entries[np.ix_(ps.S, ps.A)] if ps.S.size else 0.0)
    return out


def hitting_distribution(P, A, i) -> dict[str, float]:
    """``P_i(Z_{T_A} = a)`` for every ``a`` in ``A``."""
    P = as_transition_matrix(P)
    v = expected_visits_vector(P, A, point_mass(P.n, P.index(i)))
    return {P.states[a]: float(v[a]) for a in indices(P, A)}


def mean_first_passage_time(P, A, rho) -> float:
    """``E[T_A]`` with ``T_A = inf{n >= 1: Z_n in A}`` and ``Z_0 ~ rho``.

    Starting inside ``A`` is allowed; the result is then a mean return time.
    """
    ps = _passage(P, A, as_mass(rho))
    return float(1.0 + ps.visits.sum())


def expected_reward_before_hit(P, A, reward) -> np.ndarray:
    """``w(x) = sum_j g_A(x, j) reward(j)`` for every start ``x``.

    Equivalent to contracting :func:`expected_visits_before_hit` with
    ``reward`` but computed with one solve. ``P`` may be a scipy sparse
    matrix; the target must be reachable from every state.
    """
    if isinstance(P, TransitionMatrix):
        M = P.entries
    else:
        M = P
    n = M.shape[0]
    A_mask = _mask(n, np.asarray(list(A), dtype=int))
    reward = np.asarray(reward, dtype=float)
    G = _graph(M)
    if not np.all(_can_reach(G, A_mask)):
        raise TargetUnreachableError("target class is not reachable from every state")
    Ac = np.flatnonzero(~A_mask)
    rhs_full = M @ reward
    if sp.issparse(M):
        Mc = M.tocsr()
        Q = Mc[Ac][:, Ac]
        I = sp.identity(Ac.size, format="csc")
        w_ac = spla.spsolve((I - Q).tocsc(), np.asarray(rhs_full)[Ac])
        w = np.asarray(rhs_full, dtype=float).copy()
        w += Mc[:, Ac] @ w_ac
    else:
        Q = M[np.ix_(Ac, Ac)]
        try:
            w_ac = scipy.linalg.solve(np.eye(Ac.size) - Q, rhs_full[Ac])
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise TargetUnreachableError("I - Q is singular") from exc
        w = rhs_full + M[:, Ac] @ w_ac
    return np.asarray(w).reshape(-1)


def random_stochastic_matrix(n: int, rng: np.random.Generator, density: float = 1.0) -> TransitionMatrix:
    """Random irreducible, aperiodic transition matrix (used by tests and the oracle gate)."""
    M = rng.random((n, n)) * (rng.random((n, n)) < density)
    # a cycle plus a self-loop keeps the chain irreducible and aperiodic
    M[np.arange(n), (np.arange(n) + 1) % n] += 0.1 + rng.random(n)
    M[0, 0] += 0.1
    return validate_stochastic(M / M.sum(axis=1, keepdims=True))
