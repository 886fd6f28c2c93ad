import numpy as np
import pytest

from reservoir_markov.exceptions import E1UnreachableError, E3UnreachableError
from reservoir_markov.lloyd_joint import build_joint_iid, build_joint_lloyd
from reservoir_markov.resilience import ResiliencePartition, recovery_resilience, resistant_resilience
from reservoir_markov.simulate import SimConfig, estimate_metric

from conftest import PUBLISHED_PZ
from oracles import visits_series

PART = ResiliencePartition.case_study()
LABELS = ("I_0", "I_1", "I_2", "I_3'")


def _published():
    from reservoir_markov.chain_core import validate_stochastic
    return validate_stochastic(PUBLISHED_PZ, LABELS)


def test_published_values():
    P = _published()
    assert resistant_resilience(P, PART, "I_1") == pytest.approx(1.36, abs=0.01)
    assert recovery_resilience(P, PART, "I_1") == pytest.approx(1.90, abs=0.01)


def test_against_visit_series():
    P = _published()
    M = np.asarray(P.entries)
    res = visits_series(M, [0, 3], 1, 1) + visits_series(M, [0, 3], 1, 2)
    rec = visits_series(M, [1, 2], 1, 0) + visits_series(M, [1, 2], 1, 3)
    assert resistant_resilience(P, PART, "I_1") == pytest.approx(res, rel=1e-10)
    assert recovery_resilience(P, PART, "I_1") == pytest.approx(rec, rel=1e-10)


def test_joint_chain_agrees_with_storage_chain(pmf, Pz):
    J = build_joint_iid(pmf, 4)
    for fn in (resistant_resilience, recovery_resilience):
        assert fn(J, PART, "I_1") == pytest.approx(fn(Pz, PART, "I_1"), rel=1e-10)


def test_immediate_failure_and_recovery():
    P = np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    from reservoir_markov.chain_core import validate_stochastic
    T = validate_stochastic(P, ("a", "b", "c"))
    part = ResiliencePartition(("b", "c"), (), ("a",))
    assert resistant_resilience(T, part, "b") == 0.0
    part2 = ResiliencePartition(("b",), (), ("a", "c"))
    assert recovery_resilience(validate_stochastic([[0, 1, 0], [1, 0, 0], [0, 1, 0]], ("a", "b", "c")), part2, "a") == 0.0


def test_unreachable_classes():
    J = build_joint_iid([0.0, 1.0], 4)  # storage never moves
    with pytest.raises(E3UnreachableError):
        resistant_resilience(J, PART, "I_1")
    J2 = build_joint_iid([1.0], 4)  # drains to I_0 and stays
    with pytest.raises(E1UnreachableError):
        recovery_resilience(J2, PART, "I_0")


def test_partition_validation():
    with pytest.raises(ValueError):
        ResiliencePartition(("I_1",), (), ())
    with pytest.raises(ValueError):
        ResiliencePartition(("I_1",), ("I_1",), ("I_0",))
    with pytest.raises(ValueError):
        ResiliencePartition(("I_1",), (), ("I_0",)).check_against(LABELS)
    d = PART.to_dict()
    assert ResiliencePartition.from_dict(d) == PART


def test_markov_inflow_runs():
    Py = np.array([[0.6, 0.3, 0.1, 0.0], [0.3, 0.4, 0.2, 0.1], [0.1, 0.3, 0.4, 0.2], [0.1, 0.2, 0.3, 0.4]])
    J = build_joint_lloyd(Py, 4)
    assert resistant_resilience(J, PART, "I_1") > 0
    assert recovery_resilience(J, PART, "I_1") > 0


@pytest.mark.slow
def test_monte_carlo(joint):
    cfg = SimConfig(seed=31, n_paths=100_000, horizon=1)
    for metric, fn in (("resistant_resilience", resistant_resilience), ("recovery_resilience", recovery_resilience)):
        est, se = estimate_metric(metric, joint, cfg, z0="I_1", partition=PART)
        assert abs(est - fn(joint, PART, "I_1")) < 3 * se
