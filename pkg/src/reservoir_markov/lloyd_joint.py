"""Joint (inflow, storage) chain for i.i.d. and Markov-dependent inflows.

States are ordered with storage as the outer key: index ``z * n_y + y``.
The block of rows for storage level ``i`` is ``E_y x {i}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_core import (
    Distribution,
    TransitionMatrix,
    as_transition_matrix,
    closed_classes,
    stationary_distribution,
    validate_stochastic,
)
from .exceptions import NotIrreducibleError, StateIndexError
from .moran_finite import InflowPmf, _step_table, as_pmf, inflow_labels, storage_labels


def joint_labels(n_y: int, C: int) -> tuple[str, ...]:
    return tuple(f"(y={y},z={z})" for z in range(C) for y in range(n_y))


@dataclass(frozen=True)
class JointChain:
    """Joint chain plus the inflow model it was built from.

    ``inflow`` is an :class:`InflowPmf` for i.i.d. inflows or the inflow
    :class:`TransitionMatrix` in the Markov case.
    """

    inflow: InflowPmf | TransitionMatrix
    C: int
    matrix: TransitionMatrix

    @property
    def n_y(self) -> int:
        return len(self.inflow) if isinstance(self.inflow, InflowPmf) else self.inflow.n

    @property
    def iid(self) -> bool:
        return isinstance(self.inflow, InflowPmf)

    def index(self, y: int, z: int) -> int:
        return z * self.n_y + y

    def storage_of(self) -> np.ndarray:
        """Storage index of every joint state."""
        return np.repeat(np.arange(self.C), self.n_y)

    def inflow_of(self) -> np.ndarray:
        return np.tile(np.arange(self.n_y), self.C)

    def inflow_stationary(self) -> np.ndarray:
        if self.iid:
            return np.asarray(self.inflow.p)
        return np.asarray(stationary_distribution(self.inflow).mass)

    def inflow_rows(self) -> np.ndarray:
        """Inflow transition rows (identical rows in the i.i.d. case)."""
        if self.iid:
            return np.tile(self.inflow.p, (self.n_y, 1))
        return np.asarray(self.inflow.entries)

    def start_vector(self, z0: int) -> np.ndarray:
        """``e_{z0} (x) pi_y``: storage fixed at ``z0``, inflow at its stationary law."""
        v = np.zeros(self.matrix.n)
        v[z0 * self.n_y:(z0 + 1) * self.n_y] = self.inflow_stationary()
        return v

    def storage_labels(self) -> tuple[str, ...]:
        return storage_labels(self.C)

    def storage_index(self, z) -> int:
        if isinstance(z, (int, np.integer)) and not isinstance(z, bool):
            if not 0 <= int(z) < self.C:
                raise StateIndexError(f"storage index {z} outside 0..{self.C - 1}")
            return int(z)
        labels = self.storage_labels()
        if str(z) not in labels:
            raise StateIndexError(f"unknown storage state {z!r}; known: {list(labels)}")
        return labels.index(str(z))


def _assemble(rows: np.ndarray, C: int) -> np.ndarray:
    n_y = rows.shape[0]
    nxt = _step_table(C, n_y)
    M = np.zeros((C * n_y, C * n_y))
    for z0 in range(C):
        for y0 in range(n_y):
            z1 = nxt[z0, y0]
            M[z0 * n_y + y0, z1 * n_y:(z1 + 1) * n_y] = rows[y0]
    return M


def build_joint_iid(p, C: int) -> JointChain:
    """``P((y0,z0),(y1,z1)) = 1{z1 = step(z0, y0)} p_{y1}``."""
    p = as_pmf(p)
    M = _assemble(np.tile(p.p, (len(p), 1)), C)
    return JointChain(p, C, validate_stochastic(M, joint_labels(len(p), C)))


def build_joint_lloyd(P_y, C: int) -> JointChain:
    """``P((y0,z0),(y1,z1)) = 1{z1 = step(z0, y0)} P_y[y0, y1]``.

    Raises
    ------
    NotIrreducibleError
        If the inflow chain has more than one closed class.
    """
    P_y = as_transition_matrix(P_y)
    if len(closed_classes(P_y)) != 1:
        raise NotIrreducibleError("inflow chain has no unique stationary law")
    if P_y.states == tuple(str(i) for i in range(P_y.n)):
        P_y = TransitionMatrix(inflow_labels(P_y.n), P_y.entries)
    M = _assemble(np.asarray(P_y.entries), C)
    return JointChain(P_y, C, validate_stochastic(M, joint_labels(P_y.n, C)))


def joint_stationary(chain: JointChain) -> tuple[Distribution, Distribution, Distribution]:
    """Stationary joint law and its storage and inflow marginals."""
    pi = stationary_distribution(chain.matrix)
    grid = np.asarray(pi.mass).reshape(chain.C, chain.n_y)
    pi_z = Distribution(storage_labels(chain.C), grid.sum(axis=1))
    y_labels = chain.inflow.labels() if chain.iid else chain.inflow.states
    pi_y = Distribution(y_labels, grid.sum(axis=0))
    return pi, pi_z, pi_y


def marginal_storage_matrix(chain: JointChain) -> TransitionMatrix:
    """Storage transition matrix of an i.i.d. joint chain (sum over the inflow branch)."""
    if not chain.iid:
        raise ValueError("storage alone is not Markov under Markov-dependent inflows")
    n_y = chain.n_y
    M = np.asarray(chain.matrix.entries).reshape(chain.C, n_y, chain.C, n_y)
    # rows: average over y0 with weight p_y0; columns: sum over y1
    P = np.einsum("y,zyw->zw", chain.inflow.p, M.sum(axis=3))
    return validate_stochastic(P, storage_labels(chain.C))
