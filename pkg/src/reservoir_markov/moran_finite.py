"""Finite-capacity Moran dam with i.i.d. annual inflows.

Storage and inflow are measured in units of the annual release ``c0``:
storage takes values ``0..C-1`` and inflow ``0..K``. One year maps storage
``z`` and inflow ``y`` to ``min(C - 1, max(z + y - 1, 0))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain_core import (
    Distribution,
    TransitionMatrix,
    as_mass,
    as_transition_matrix,
    fundamental_matrix,
    stationary_distribution,
    validate_stochastic,
)
from .exceptions import DegenerateInflowError, StateIndexError

PMF_TOL = 1e-6


@dataclass(frozen=True)
class DamSpec:
    """Physical parameters in hm³: annual release ``c0`` and capacity ``C1``."""

    c0: float
    C1: float

    def __post_init__(self):
        if not (0 < self.c0 < self.C1):
            raise ValueError(f"need 0 < c0 < C1, got c0={self.c0}, C1={self.C1}")

    @property
    def unit(self) -> float:
        return self.c0

    @property
    def top(self) -> float:
        """Largest storage after release, ``C1 - c0``."""
        return self.C1 - self.c0

    @classmethod
    def from_config(cls, cfg: dict) -> "DamSpec":
        return cls(float(cfg["c0_hm3"]), float(cfg["C1_hm3"]))

    def to_config(self) -> dict:
        return {"c0_hm3": self.c0, "C1_hm3": self.C1}


@dataclass(frozen=True)
class InflowPmf:
    """Annual inflow distribution over ``{0, 1, ..., K}`` release units."""

    p: np.ndarray = field()

    def __post_init__(self):
        p = np.array(self.p, dtype=float, copy=True).reshape(-1)
        if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("inflow pmf must be a non-empty vector of nonnegative numbers")
        s = p.sum()
        if abs(s - 1.0) > PMF_TOL:
            raise ValueError(f"inflow pmf sums to {s!r}")
        p /= s
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def K(self) -> int:
        return self.p.size - 1

    def __len__(self):
        return self.p.size

    def __getitem__(self, y: int) -> float:
        return float(self.p[y]) if 0 <= y < self.p.size else 0.0

    def tail(self, k: int) -> float:
        """``h_k = P(Y >= k)``."""
        return float(self.p[max(k, 0):].sum())

    @property
    def mean(self) -> float:
        return float(np.arange(self.p.size) @ self.p)

    @property
    def variance(self) -> float:
        y = np.arange(self.p.size)
        return float((y - self.mean) ** 2 @ self.p)

    def labels(self) -> tuple[str, ...]:
        return inflow_labels(self.p.size)

    def as_distribution(self) -> Distribution:
        return Distribution(self.labels(), self.p)


def as_pmf(p) -> InflowPmf:
    return p if isinstance(p, InflowPmf) else InflowPmf(np.asarray(p, dtype=float))


def storage_labels(C: int) -> tuple[str, ...]:
    """``I_0, ..., I_{C-2}, I_{C-1}'`` -- the top storage class carries a prime."""
    return tuple(f"I_{i}" for i in range(C - 1)) + (f"I_{C - 1}'",)


def inflow_labels(n: int) -> tuple[str, ...]:
    return tuple(f"Y_{j}" for j in range(n))


@dataclass(frozen=True)
class StorageStates:
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if len(self.labels) < 2 or v.shape != (len(self.labels),):
            raise ValueError("need at least two labelled storage states with one value each")
        if np.any(np.diff(v) <= 0):
            raise ValueError("storage values must be strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "values", v)

    @classmethod
    def index_units(cls, C: int) -> "StorageStates":
        return cls(storage_labels(C), np.arange(C, dtype=float))

    @property
    def C(self) -> int:
        return len(self.labels)


def moran_step(z: int, y: int, C: int) -> int:
    """Storage after one year: ``min(C-1, max(z+y-1, 0))``."""
    if not 0 <= z <= C - 1:
        raise StateIndexError(f"storage index {z} outside 0..{C - 1}")
    if y < 0:
        raise StateIndexError(f"negative inflow index {y}")
    return min(C - 1, max(z + y - 1, 0))


def _step_table(C: int, n_inflow: int) -> np.ndarray:
    z = np.arange(C)[:, None]
    y = np.arange(n_inflow)[None, :]
    return np.clip(z + y - 1, 0, C - 1)


def build_transition_matrix(p, C: int) -> TransitionMatrix:
    """Storage transition matrix: ``P[z, z'] = sum of p_y over y with step(z, y) = z'``."""
    p = as_pmf(p)
    if C < 2:
        raise ValueError("need at least two storage states")
    nxt = _step_table(C, len(p))
    P = np.zeros((C, C))
    for z in range(C):
        np.add.at(P[z], nxt[z], p.p)
    return validate_stochastic(P, storage_labels(C))


def recursive_coefficients(p, C: int) -> np.ndarray:
    """Coefficients ``a_n = pi_n / pi_0`` for ``n = 0..C-1``.

    ``a_1 = (1 - p0 - p1) / p0`` and for ``n >= 2``
    ``a_n = (a_{n-1} - sum_{j=1}^{n} p_j a_{n-j}) / p0``.
    """
    p = as_pmf(p)
    p0, p1 = p[0], p[1]
    if p0 <= 0:
        raise DegenerateInflowError("recursion needs p0 > 0")
    a = [1.0]
    if C > 1:
        a.append((1.0 - p0 - p1) / p0)
    for n in range(2, C):
        b = math.fsum(p[j] * a[n - j] for j in range(1, n + 1))
        a.append((a[n - 1] - b) / p0)
    return np.asarray(a)


def stationary_recursive(p, C: int) -> Distribution:
    """Stationary storage law from the forward recursion on ``a_n``.

    Falls back to the linear solve (with a ``RuntimeWarning``) if rounding
    drives a coefficient negative.
    """
    a = recursive_coefficients(p, C)
    if np.any(a < -1e-9):
        warnings.warn(
            "negative recursion coefficient; using the linear-solve stationary law",
            RuntimeWarning,
            stacklevel=2,
        )
        return stationary_distribution(build_transition_matrix(p, C))
    a = np.clip(a, 0.0, None)
    return Distribution(storage_labels(C), a / math.fsum(a))


@dataclass(frozen=True)
class WaterBalance:
    """Long-run balance of inflow, controlled release and overflow (release units per year).

    ``release_rate`` is ``1 - P(Z=0, Y=0)``, the rate at which a full unit
    is actually released. ``release_rate_occupancy`` is ``1 - pi_0`` and
    ``release_rate_threshold`` is ``P(Z >= 1)``; they coincide in index units
    and are kept for comparison since they do not close the balance.
    """

    mu_y: float
    release_rate: float
    loss_rate: float
    residual: float
    release_rate_occupancy: float
    release_rate_threshold: float


def overflow_loss(pi_z, p, C: int) -> float:
    """``M = sum_{y,z} pi(z) p_y (z + y - C)^+``."""
    pz = as_mass(pi_z)
    p = as_pmf(p)
    z = np.arange(C)[:, None]
    y = np.arange(len(p))[None, :]
    spill = np.clip(z + y - C, 0, None)
    return float(pz @ spill @ p.p)


def water_balance_residual(p, C: int, pi=None) -> WaterBalance:
    """Check ``mu_y = (1 - pi_0 p_0) + M`` on the stationary chain.

    ``pi`` may be supplied when the chain has several stationary laws (for
    example a deterministic inflow); otherwise it is computed and
    ``NotErgodicError`` is raised if it is not unique.
    """
    p = as_pmf(p)
    if pi is None:
        pi = stationary_distribution(build_transition_matrix(p, C))
    m = as_mass(pi)
    M = overflow_loss(m, p, C)
    release = 1.0 - m[0] * p[0]
    return WaterBalance(
        mu_y=p.mean,
        release_rate=release,
        loss_rate=M,
        residual=p.mean - release - M,
        release_rate_occupancy=1.0 - m[0],
        release_rate_threshold=float(m[1:].sum()),
    )


def _values(states, n: int) -> np.ndarray:
    if states is None:
        return np.arange(n, dtype=float)
    if isinstance(states, StorageStates):
        return np.asarray(states.values)
    return np.asarray(states, dtype=float)


def mean_storage(pi, states: StorageStates | Sequence[float] | None = None) -> float:
    """Stationary mean storage ``sum z_i pi_i`` (index units unless ``states`` gives values)."""
    m = as_mass(pi)
    return float(_values(states, m.size) @ m)


def clt_variance(P, pi=None, states: StorageStates | Sequence[float] | None = None) -> float:
    r"""Asymptotic variance of ``(S_n - n mu_z) / sqrt(n)`` with ``S_n = sum_{k<n} Z_k``.

    Computed as ``g D_pi (2 (I - P + 1 pi)^{-1} - I) g^T`` where
    ``g_i = z_i - mu_z``.
    """
    P = as_transition_matrix(P)
    if pi is None:
        pi = stationary_distribution(P)
    m = as_mass(pi)
    z = _values(states, P.n)
    g = z - z @ m
    Z = fundamental_matrix(P, m).Z
    s2 = float(g @ (np.diag(m) @ (2.0 * Z - np.eye(P.n))) @ g)
    if s2 < 0:
        if s2 < -1e-12:
            raise ArithmeticError(f"negative asymptotic variance {s2}")
        s2 = 0.0
    return s2
