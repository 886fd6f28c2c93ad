r"""Dam with unbounded capacity: ``Z_{n+1} = max(Z_n + Y_n - 1, 0)``.

The stationary law has generating function
``G(s) = pi_0 / (1 - B(s))`` with ``B(s) = sum_{k=1}^{K-1} q_k s^k`` and
``q_k = P(Y > k) / p_0``. Its coefficients ``a_n = pi_n / pi_0`` satisfy the
convolution recurrence ``a_n = sum_k q_k a_{n-k}``, and since ``G(1) = 1``
the empty-reservoir probability is exactly ``pi_0 = 1 - B(1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .chain_core import (
    TransitionMatrix,
    expected_reward_before_hit,
    stationary_distribution,
    validate_stochastic,
)
from .exceptions import TruncationNotConvergedError, UnstableError, ZeroP0Error
from .moran_finite import InflowPmf, as_pmf, storage_labels

TAIL_TOL = 1e-12


@dataclass(frozen=True)
class SemiInfiniteDam:
    """Unbounded reservoir fed by i.i.d. inflows (used by :mod:`.simulate`)."""

    inflow: InflowPmf

    def __post_init__(self):
        object.__setattr__(self, "inflow", as_pmf(self.inflow))


@dataclass(frozen=True)
class PgfCoefficients:
    q: np.ndarray  # q[k-1] = q_k, k = 1..K-1
    a: np.ndarray  # a[n], a[0] = 1

    @property
    def B1(self) -> float:
        return float(self.q.sum())


@dataclass(frozen=True)
class SemiInfiniteSolution:
    pi0: float
    pi: np.ndarray
    truncation_n: int
    tail_mass_bound: float


@dataclass(frozen=True)
class SemiInfiniteClt:
    """Centring and variance of ``S_n = sum_{k<n} (Y_k - 1{Z_k > 0})``.

    ``mu_g`` is ``mu_y - (1 - pi_0)``, the mean of that functional;
    ``mu_g_corrected`` is ``mu_y - (1 - pi_0 p_0)``, the drift of the storage
    itself, which is zero under stability.
    """

    mu_g: float
    mu_g_corrected: float
    sigma2: float
    truncation: int


def _q(p: InflowPmf) -> np.ndarray:
    if p[0] <= 0:
        raise ZeroP0Error("p0 must be positive")
    K = p.K
    tails = np.array([p.tail(k + 1) for k in range(1, K)])  # P(Y >= k+1), k = 1..K-1
    return tails / p[0]


def stability_condition(p) -> tuple[bool, float]:
    """``(holds, B(1))`` with ``B(1) = sum_{k=1}^{K-1} sum_{j>k} p_j / p_0``; holds iff below one."""
    p = as_pmf(p)
    value = float(_q(p).sum())
    return value < 1.0, value


def coefficient_tail_bound(a: np.ndarray, q: np.ndarray) -> float:
    """Bound on ``sum_{n >= len(a)} a_n``.

    Each ``a_n`` is at most ``B(1)`` times the largest of the previous
    ``K-1`` coefficients, so blocks of ``K-1`` terms shrink geometrically.
    """
    r = q.size
    rho = float(q.sum())
    if r == 0:
        return 0.0
    m = float(np.max(a[-r:]))
    return r * rho * m / (1.0 - rho)


def stationary_coefficients(p, n_max: int | None = None) -> PgfCoefficients:
    """Coefficients ``a_0..a_{n_max}``.

    With ``n_max=None`` the sequence is extended until the bound on the
    remaining mass ``pi_0 * sum_{n > n_max} a_n`` drops below ``1e-12``.

    Raises
    ------
    UnstableError
        If ``B(1) >= 1``.
    """
    p = as_pmf(p)
    q = _q(p)
    if q.sum() >= 1.0:
        raise UnstableError(f"B(1) = {q.sum():.6g} >= 1: no stationary law")
    a = [1.0]
    r = q.size
    n = 1
    pi0 = 1.0 - q.sum()
    while True:
        if n_max is not None and n > n_max:
            break
        kmax = min(n, r)
        a.append(math.fsum(q[k - 1] * a[n - k] for k in range(1, kmax + 1)))
        if n_max is None and n >= r and pi0 * coefficient_tail_bound(np.asarray(a), q) < TAIL_TOL:
            break
        if n_max is None and r == 0:
            break
        n += 1
    return PgfCoefficients(q=q, a=np.asarray(a))


def stationary_solution(p, n_max: int | None = None) -> SemiInfiniteSolution:
    """Truncated stationary law ``pi_n = pi_0 a_n`` with ``pi_0 = 1 - B(1)``."""
    coeffs = stationary_coefficients(p, n_max)
    pi0 = 1.0 - coeffs.B1
    pi = pi0 * coeffs.a
    bound = pi0 * coefficient_tail_bound(coeffs.a, coeffs.q)
    return SemiInfiniteSolution(pi0=pi0, pi=pi, truncation_n=pi.size, tail_mass_bound=bound)


def truncated_matrix(p, N: int) -> TransitionMatrix:
    """First ``N`` states of the semi-infinite matrix, with upward overflow folded into state ``N-1``."""
    p = as_pmf(p)
    P = np.zeros((N, N))
    for z in range(N):
        for y, py in enumerate(p.p):
            P[z, min(N - 1, max(z + y - 1, 0))] += py
    return validate_stochastic(P, tuple(str(i) for i in range(N)))


def drift(p, pi0: float | None = None) -> float:
    """Long-run growth rate of ``Z_n / n``: ``mu_y - (1 - pi_0 p_0)``.

    ``pi0`` defaults to ``1 - B(1)`` under stability and to zero otherwise,
    so the result is zero for a stable dam and ``mu_y - 1`` for an unstable
    one.
    """
    p = as_pmf(p)
    if pi0 is None:
        if p[0] <= 0:
            pi0 = 0.0
        else:
            holds, value = stability_condition(p)
            pi0 = 1.0 - value if holds else 0.0
    return p.mean - (1.0 - pi0 * p[0])


def _joint_sparse(p: InflowPmf, N: int) -> sp.csr_matrix:
    n_y = len(p)
    rows, cols, vals = [], [], []
    nz = np.flatnonzero(p.p > 0)
    for z0 in range(N):
        for y0 in range(n_y):
            z1 = min(N - 1, max(z0 + y0 - 1, 0))
            r = z0 * n_y + y0
            rows.extend([r] * nz.size)
            cols.extend(z1 * n_y + nz)
            vals.extend(p.p[nz])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N * n_y, N * n_y))


def _functional_variance(p: InflowPmf, N: int) -> tuple[float, float]:
    """Variance of the additive functional on the chain truncated at ``N`` storage levels."""
    n_y = len(p)
    pi_z = np.asarray(stationary_distribution(truncated_matrix(p, N)).mass)
    pi = np.outer(pi_z, p.p).reshape(-1)
    y = np.tile(np.arange(n_y), N).astype(float)
    z = np.repeat(np.arange(N), n_y)
    g = y - (z > 0)
    mu = float(pi @ g)
    gt = g - mu
    M = _joint_sparse(p, N)
    # regeneration at (y, z) = (0, 0)
    w = expected_reward_before_hit(M, [0], gt)
    w[0] = 0.0
    s2 = float(pi @ gt**2 + 2.0 * (pi * gt) @ w)
    return mu, s2


def clt_semi_infinite(p, truncation: int = 50, max_truncation: int = 3200, rtol: float = 1e-4) -> SemiInfiniteClt:
    """Asymptotic variance of the additive functional ``sum_k (Y_k - 1{Z_k > 0})``.

    The regenerative formula with state ``(0, 0)`` as the regeneration point
    is evaluated on truncated chains; the truncation is doubled until two
    successive variances agree to ``rtol``.

    Raises
    ------
    UnstableError, TruncationNotConvergedError
    """
    p = as_pmf(p)
    support = np.flatnonzero(p.p > 0)
    if support.size == 1 and support[0] <= 1:
        # deterministic inflow of 0 or 1: an empty reservoir stays empty
        return SemiInfiniteClt(mu_g=p.mean, mu_g_corrected=p.mean - (1.0 - p[0]), sigma2=0.0, truncation=0)
    holds, value = stability_condition(p)
    if not holds:
        raise UnstableError(f"B(1) = {value:.6g} >= 1")
    pi0 = 1.0 - value
    N = max(truncation, 2 * p.K)
    _, prev = _functional_variance(p, N)
    while True:
        N *= 2
        if N > max_truncation:
            raise TruncationNotConvergedError(f"variance not stable to rtol={rtol} by truncation {N // 2}")
        _, s2 = _functional_variance(p, N)
        if abs(s2 - prev) <= rtol * max(abs(s2), 1e-300):
            break
        prev = s2
    return SemiInfiniteClt(
        mu_g=p.mean - (1.0 - pi0),
        mu_g_corrected=p.mean - (1.0 - pi0 * p[0]),
        sigma2=s2,
        truncation=N,
    )


def storage_labels_semi(n: int) -> tuple[str, ...]:
    return storage_labels(n)
