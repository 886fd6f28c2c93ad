"""scikit-learn style wrappers around the functional API.

:class:`InflowDiscretizer` maps annual volumes to inflow interval indices;
:class:`MoranReservoir` fits the finite dam from annual volumes and
predicts storage after a number of years.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ingest import DiscretizationScheme, fit_inflow_markov, fit_inflow_pmf
from .lloyd_joint import build_joint_iid, build_joint_lloyd, joint_stationary
from .moran_finite import DamSpec


def _volumes(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected one feature (annual volume), got {X.shape[1]}")
        X = X[:, 0]
    if np.any(X < 0):
        raise ValueError("volumes must be nonnegative")
    return X


class InflowDiscretizer(TransformerMixin, BaseEstimator):
    """Annual inflow volume (hm³) to interval index.

    Parameters
    ----------
    c0 : float
        Annual release (hm³).
    C1 : float
        Capacity (hm³).
    use_capacity_after_release : bool
        Take ``C1 - c0`` instead of ``C1`` as the top storage bound.
    """

    def __init__(self, c0=10.0, C1=32.0, use_capacity_after_release=False):
        self.c0 = c0
        self.C1 = C1
        self.use_capacity_after_release = use_capacity_after_release

    def fit(self, X, y=None):
        _volumes(X)
        spec = DamSpec(self.c0, self.C1)
        upper = spec.C1 - spec.c0 if self.use_capacity_after_release else spec.C1
        self.scheme_ = DiscretizationScheme(spec.c0, upper)
        self.n_states_ = self.scheme_.n_inflow
        return self

    def transform(self, X):
        check_is_fitted(self, "scheme_")
        return self.scheme_.inflow_index(_volumes(X)).reshape(-1, 1)


class MoranReservoir(BaseEstimator):
    """Finite Moran dam fitted to a record of annual inflow volumes.

    ``inflow="iid"`` fits the interval frequencies; ``inflow="markov"``
    fits lag-1 transition frequencies of the ordered record.

    Attributes
    ----------
    scheme_ : DiscretizationScheme
    pmf_ : InflowPmf
    inflow_matrix_ : TransitionMatrix or None
    joint_ : JointChain
    stationary_ : ndarray of shape (n_storage_states,)
    """

    def __init__(self, c0=10.0, C1=32.0, inflow="iid", use_capacity_after_release=False):
        self.c0 = c0
        self.C1 = C1
        self.inflow = inflow
        self.use_capacity_after_release = use_capacity_after_release

    def fit(self, X, y=None):
        v = _volumes(X)
        if self.inflow not in ("iid", "markov"):
            raise ValueError(f"inflow must be 'iid' or 'markov', got {self.inflow!r}")
        disc = InflowDiscretizer(self.c0, self.C1, self.use_capacity_after_release).fit(v)
        self.scheme_ = disc.scheme_
        self.pmf_ = fit_inflow_pmf(v, self.scheme_)
        if self.inflow == "iid":
            self.inflow_matrix_ = None
            self.joint_ = build_joint_iid(self.pmf_, self.scheme_.C)
        else:
            seq = disc.transform(v)[:, 0]
            self.inflow_matrix_, self.unobserved_rows_ = fit_inflow_markov(seq, self.scheme_.n_inflow)
            self.joint_ = build_joint_lloyd(self.inflow_matrix_, self.scheme_.C)
        _, pi_z, _ = joint_stationary(self.joint_)
        self.stationary_ = np.asarray(pi_z.mass)
        self.storage_values_ = self.scheme_.storage_values()
        return self

    def predict_proba(self, X, n_steps=1):
        """Storage-state distribution ``n_steps`` years after each initial storage in ``X`` (hm³)."""
        check_is_fitted(self, "joint_")
        z0 = self.scheme_.storage_index(_volumes(X))
        P = np.asarray(self.joint_.matrix.entries)
        Pn = np.linalg.matrix_power(P, int(n_steps))
        C, n_y = self.joint_.C, self.joint_.n_y
        out = np.empty((z0.size, C))
        for r, z in enumerate(z0):
            v = self.joint_.start_vector(int(z)) @ Pn
            out[r] = v.reshape(C, n_y).sum(axis=1)
        return out

    def predict(self, X, n_steps=1):
        """Expected storage (hm³, interval midpoints) ``n_steps`` years ahead."""
        return self.predict_proba(X, n_steps) @ self.storage_values_
