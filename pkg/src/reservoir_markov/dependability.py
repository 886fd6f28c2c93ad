"""Reliability-type measures on the joint (inflow, storage) chain.

All measures start from storage ``z0`` with the inflow at its stationary
law, i.e. from ``e_{z0} (x) pi_y``. For i.i.d. inflows the results coincide
with the storage-only formulas; the joint chain is used throughout so the
same code serves Markov-dependent inflows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chain_core import Distribution, as_mass, mean_first_passage_time
from .exceptions import (
    EmptyUnreachableError,
    StartInEmptyClassError,
    StateIndexError,
    TargetUnreachableError,
    TopUnreachableError,
)
from .lloyd_joint import JointChain, joint_stationary
from .moran_finite import overflow_loss
from .series import MetricSeries


@dataclass(frozen=True)
class EmptyClass:
    """Storage states counted as "empty" and the threshold used by the safety level.

    ``safe_threshold=None`` means the lowest state above the empty class.
    """

    empty_states: tuple = ("I_0",)
    safe_threshold: object = None

    def __post_init__(self):
        object.__setattr__(self, "empty_states", tuple(self.empty_states))
        if not self.empty_states:
            raise ValueError("empty class must be nonempty")

    def resolve(self, joint: JointChain) -> np.ndarray:
        idx = sorted({joint.storage_index(s) for s in self.empty_states})
        if len(idx) == joint.C:
            raise ValueError("empty class must be a proper subset of the storage states")
        return np.asarray(idx, dtype=int)

    def safe_index(self, joint: JointChain) -> int:
        if self.safe_threshold is None:
            return min(int(self.resolve(joint).max()) + 1, joint.C - 1)
        return joint.storage_index(self.safe_threshold)


def _empty(empty) -> EmptyClass:
    if empty is None:
        return EmptyClass()
    if isinstance(empty, EmptyClass):
        return empty
    return EmptyClass(tuple(empty))


def _joint_mask(joint: JointChain, storage_idx: Sequence[int]) -> np.ndarray:
    return np.isin(joint.storage_of(), np.asarray(storage_idx, dtype=int))


def reliability_curve(joint: JointChain, z0, horizon: int, empty=None) -> MetricSeries:
    """``R(n) = (e_{z0} (x) pi_y) P0^n 1``: probability of no emptiness through step ``n``.

    ``P0`` is the joint matrix restricted to non-empty storage. ``R(0) = 1``.

    Raises
    ------
    StartInEmptyClassError
        If ``z0`` is itself empty.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    empty = _empty(empty)
    i = joint.storage_index(z0)
    e_idx = empty.resolve(joint)
    if i in e_idx:
        raise StartInEmptyClassError(f"start {z0!r} is in the empty class")
    keep = ~_joint_mask(joint, e_idx)
    P0 = np.asarray(joint.matrix.entries)[np.ix_(keep, keep)]
    v = joint.start_vector(i)[keep]
    out = [1.0]
    for _ in range(horizon):
        v = v @ P0
        out.append(float(v.sum()))
    return MetricSeries("reliability", joint.storage_labels()[i], np.arange(horizon + 1), out)


def availability_curve(joint: JointChain, z0, horizon: int, empty=None) -> MetricSeries:
    """``A(n) = P(Z_n not empty)``; tends to ``1 - pi(empty)``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    empty = _empty(empty)
    i = joint.storage_index(z0)
    ok = (~_joint_mask(joint, empty.resolve(joint))).astype(float)
    v = joint.start_vector(i)
    P = np.asarray(joint.matrix.entries)
    out = [float(v @ ok)]
    for _ in range(horizon):
        v = v @ P
        out.append(float(v @ ok))
    return MetricSeries("availability", joint.storage_labels()[i], np.arange(horizon + 1), out)


def long_run_availability(joint: JointChain, empty=None) -> float:
    _, pi_z, _ = joint_stationary(joint)
    return float(1.0 - pi_z.mass[_empty(empty).resolve(joint)].sum())


def _first_passage(joint: JointChain, z0, target_idx, err) -> float:
    i = joint.storage_index(z0)
    A = np.flatnonzero(_joint_mask(joint, target_idx))
    try:
        return mean_first_passage_time(joint.matrix, A, joint.start_vector(i))
    except TargetUnreachableError as exc:
        raise err(str(exc)) from exc


def mtte(joint: JointChain, z0, empty=None) -> float:
    """Mean time to emptiness, ``E[T]`` with ``T = inf{n >= 1: Z_n empty}``.

    For ``z0`` outside the empty class this is ``(e_{z0} (x) pi_y)(I - P0)^{-1} 1``;
    from inside it is the mean return time.

    Raises
    ------
    EmptyUnreachableError
    """
    empty = _empty(empty)
    return _first_passage(joint, z0, empty.resolve(joint), EmptyUnreachableError)


def mtto(joint: JointChain, z0, top=None) -> float:
    """Mean time to overflow: first entry into ``top`` (default: the highest storage state).

    Raises
    ------
    TopUnreachableError
    """
    if top is None:
        top_idx = [joint.C - 1]
    else:
        top_idx = sorted({joint.storage_index(s) for s in top})
    return _first_passage(joint, z0, top_idx, TopUnreachableError)


def overflow_loss_rate(pi_z, p, C: int) -> float:
    """Long-run spill per year, ``sum pi(z) p_y (z + y - C)^+`` (index units)."""
    return overflow_loss(pi_z, p, C)


def joint_overflow_loss_rate(joint: JointChain) -> float:
    """Long-run spill per year from the joint stationary law (any inflow model)."""
    pi, _, _ = joint_stationary(joint)
    spill = np.clip(joint.storage_of() + joint.inflow_of() - joint.C, 0, None)
    return float(np.asarray(pi.mass) @ spill)


def _safe_mask(joint: JointChain, z_safe) -> np.ndarray:
    return joint.storage_of() >= joint.storage_index(z_safe)


def safety_level(model, z0=None, n=np.inf, z_safe="I_1") -> float:
    """``S(n) = P(Z_n >= z_safe | Z_0 = z0)``; ``n = inf`` gives the stationary tail.

    ``model`` is a :class:`JointChain`, or a storage :class:`Distribution`
    when only the long-run value is wanted.
    """
    if isinstance(model, Distribution) or not isinstance(model, JointChain):
        if np.isfinite(n):
            raise ValueError("finite-horizon safety needs the chain, not only pi")
        m = as_mass(model)
        if isinstance(model, Distribution):
            k = model.index(z_safe)
        else:
            if not isinstance(z_safe, (int, np.integer)):
                raise StateIndexError("integer threshold needed for an unlabelled distribution")
            k = int(z_safe)
        return float(m[k:].sum())
    mask = _safe_mask(model, z_safe).astype(float)
    if not np.isfinite(n):
        pi, _, _ = joint_stationary(model)
        return float(np.asarray(pi.mass) @ mask)
    v = model.start_vector(model.storage_index(z0))
    P = np.asarray(model.matrix.entries)
    for _ in range(int(n)):
        v = v @ P
    return float(v @ mask)


def safety_curve(joint: JointChain, z0, horizon: int, z_safe="I_1") -> MetricSeries:
    mask = _safe_mask(joint, z_safe).astype(float)
    i = joint.storage_index(z0)
    v = joint.start_vector(i)
    P = np.asarray(joint.matrix.entries)
    out = [float(v @ mask)]
    for _ in range(horizon):
        v = v @ P
        out.append(float(v @ mask))
    return MetricSeries("safety", joint.storage_labels()[i], np.arange(horizon + 1), out)


def expected_storage_curve(joint: JointChain, z0, horizon: int, values=None) -> MetricSeries:
    """``E[value(Z_n) | Z_0 = z0]``; ``values`` defaults to storage indices."""
    vals = np.arange(joint.C, dtype=float) if values is None else np.asarray(values, dtype=float)
    if vals.shape != (joint.C,):
        raise ValueError(f"need {joint.C} storage values")
    f = vals[joint.storage_of()]
    i = joint.storage_index(z0)
    v = joint.start_vector(i)
    P = np.asarray(joint.matrix.entries)
    out = [float(v @ f)]
    for _ in range(horizon):
        v = v @ P
        out.append(float(v @ f))
    return MetricSeries("expected_storage", joint.storage_labels()[i], np.arange(horizon + 1), out)
