"""Resilience as expected visit counts before a first passage.

The storage states are split into perfect (``E1``), imperfect (``E2``) and
interrupted (``E3``) operation. Resistant resilience counts visits to
``E1`` before the chain first enters ``E3``; recovery resilience counts
visits to ``E3`` before it first returns to ``E1``. Visits are counted at
times ``1..T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_core import TransitionMatrix, as_transition_matrix, expected_visits_vector, point_mass
from .exceptions import E1UnreachableError, E3UnreachableError, TargetUnreachableError
from .lloyd_joint import JointChain


@dataclass(frozen=True)
class ResiliencePartition:
    E1: tuple
    E2: tuple
    E3: tuple

    def __post_init__(self):
        for name in ("E1", "E2", "E3"):
            object.__setattr__(self, name, tuple(str(s) for s in getattr(self, name)))
        if not self.E1 or not self.E3:
            raise ValueError("E1 and E3 must be nonempty")
        seen = self.E1 + self.E2 + self.E3
        if len(set(seen)) != len(seen):
            raise ValueError("partition classes must be pairwise disjoint")

    @classmethod
    def case_study(cls) -> "ResiliencePartition":
        """Four-state default: ``E1 = {I_1, I_2}``, ``E3 = {I_0, I_3'}``."""
        return cls(("I_1", "I_2"), (), ("I_0", "I_3'"))

    def check_against(self, labels) -> None:
        labels = tuple(labels)
        have = set(self.E1 + self.E2 + self.E3)
        if have != set(labels):
            missing = sorted(set(labels) - have)
            extra = sorted(have - set(labels))
            raise ValueError(f"partition does not cover the states: missing {missing}, unknown {extra}")

    def to_dict(self) -> dict:
        return {"E1": list(self.E1), "E2": list(self.E2), "E3": list(self.E3)}

    @classmethod
    def from_dict(cls, d: dict) -> "ResiliencePartition":
        return cls(tuple(d["E1"]), tuple(d.get("E2", ())), tuple(d["E3"]))


def _setup(model, part: ResiliencePartition, i):
    """Matrix, start law and a storage-index map for either a storage chain or a joint chain."""
    if isinstance(model, JointChain):
        labels = model.storage_labels()
        part.check_against(labels)
        start = model.start_vector(model.storage_index(i))
        return model.matrix, start, model.storage_of(), labels
    P = as_transition_matrix(model)
    part.check_against(P.states)
    return P, point_mass(P.n, P.index(i)), np.arange(P.n), P.states


def _count(model, part, i, target, counted, err) -> float:
    P, start, storage_of, labels = _setup(model, part, i)
    t_idx = [labels.index(s) for s in target]
    c_idx = [labels.index(s) for s in counted]
    A = np.flatnonzero(np.isin(storage_of, t_idx))
    try:
        visits = expected_visits_vector(P, A, start)
    except TargetUnreachableError as exc:
        raise err(str(exc)) from exc
    return float(visits[np.isin(storage_of, c_idx)].sum())


def resistant_resilience(model: TransitionMatrix | JointChain, part: ResiliencePartition, i) -> float:
    """``sum_{j in E1} g_{E3}(i, j)``: expected years in ``E1`` before first entering ``E3``.

    Raises
    ------
    E3UnreachableError
    """
    return _count(model, part, i, part.E3, part.E1, E3UnreachableError)


def recovery_resilience(model: TransitionMatrix | JointChain, part: ResiliencePartition, i) -> float:
    """``sum_{j in E3} g_{E1}(i, j)``: expected years in ``E3`` before first returning to ``E1``.

    Raises
    ------
    E1UnreachableError
    """
    return _count(model, part, i, part.E1, part.E3, E1UnreachableError)
