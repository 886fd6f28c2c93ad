"""Markov-chain models of reservoir storage under a constant annual release."""
from .chain_core import (
    Distribution,
    TransitionMatrix,
    expected_visits_before_hit,
    fundamental_matrix,
    is_irreducible_aperiodic,
    mean_first_passage_time,
    n_step_distribution,
    stationary_distribution,
    validate_stochastic,
)
from .continuous_kernel import (
    ContinuousDam,
    GridCdf,
    InflowCdf,
    doeblin_certificate,
    kernel_cdf,
    stationary_cdf,
)
from .dependability import (
    EmptyClass,
    availability_curve,
    expected_storage_curve,
    mtte,
    mtto,
    overflow_loss_rate,
    reliability_curve,
    safety_level,
)
from .estimators import InflowDiscretizer, MoranReservoir
from .exceptions import ReservoirMarkovError
from .ingest import (
    DiscretizationScheme,
    balance_residual_series,
    build_discretization,
    fit_inflow_markov,
    fit_inflow_pmf,
    independence_diagnostic,
    monthly_to_annual,
)
from .lloyd_joint import JointChain, build_joint_iid, build_joint_lloyd, joint_stationary
from .moran_finite import (
    DamSpec,
    InflowPmf,
    StorageStates,
    build_transition_matrix,
    clt_variance,
    moran_step,
    stationary_recursive,
    water_balance_residual,
)
from .resilience import ResiliencePartition, recovery_resilience, resistant_resilience
from .semi_infinite import (
    SemiInfiniteDam,
    clt_semi_infinite,
    drift,
    stability_condition,
    stationary_coefficients,
    stationary_solution,
)
from .series import MetricSeries
from .simulate import SimConfig, Trajectory, estimate_metric, simulate

__version__ = "0.1.0"
