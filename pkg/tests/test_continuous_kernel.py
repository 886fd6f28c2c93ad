import numpy as np
import pytest

from reservoir_markov.continuous_kernel import (
    ContinuousDam,
    InflowCdf,
    doeblin_certificate,
    fixed_point_residual,
    kernel_cdf,
    stationary_cdf,
    stationary_nodes,
)
from reservoir_markov.exceptions import NoConvergenceError, OutOfDomainError, ZeroAtomError
from reservoir_markov.lloyd_joint import build_joint_iid, joint_stationary
from reservoir_markov.moran_finite import DamSpec
from reservoir_markov.simulate import SimConfig, final_states

from conftest import PUBLISHED_PMF
from oracles import ks_distance_with_atoms, stieltjes_rhs

SPEC = DamSpec(10.0, 32.0)


@pytest.fixture
def G():
    return InflowCdf.from_interval_pmf(PUBLISHED_PMF, 10.0)


def test_inflow_cdf_shape(G):
    assert G(0.0) == pytest.approx(0.3462) and G.left(0.0) == 0.0
    assert G(5.0) == pytest.approx(0.3462) and G(15.0) == pytest.approx(0.3462 + 0.3846)
    assert G(1e6) == 1.0 and G(-1.0) == 0.0
    # mean of the smeared law: interval midpoints weighted by p
    assert G.mean() == pytest.approx(10.0 * np.arange(1, 5) @ PUBLISHED_PMF[1:])


def test_inflow_integral_matches_quadrature(G):
    from scipy.integrate import quad
    for t in (0.0, 3.0, 5.0, 17.5, 60.0):
        ref = quad(lambda s: float(G(s)), 0, t, points=G.knots[G.knots < t], limit=200)[0] if t > 0 else 0.0
        assert float(G.integral(t)) == pytest.approx(ref, abs=1e-10)


def test_inflow_cdf_validation():
    with pytest.raises(ValueError):
        InflowCdf(0.2, [0.0, 1.0], [0.2, 0.9])
    with pytest.raises(ValueError):
        InflowCdf(0.2, [0.0, 1.0, 0.5], [0.2, 0.5, 1.0])


def test_kernel_cases(G):
    assert kernel_cdf(5.0, SPEC.top, G, SPEC) == 1.0
    for z1 in (0.0, 4.0, 10.0):
        assert kernel_cdf(z1, 0.0, G, SPEC) == pytest.approx(float(G(10.0 - z1)))
    with pytest.raises(OutOfDomainError):
        kernel_cdf(-1.0, 0.0, G, SPEC)
    with pytest.raises(OutOfDomainError):
        kernel_cdf(0.0, SPEC.top + 1, G, SPEC)


def test_kernel_zero_inflow_is_drawdown():
    G0 = InflowCdf.point_mass_zero()
    for z1 in (0.0, 3.0, 12.0, 22.0):
        target = max(z1 - 10.0, 0.0)
        for z2 in np.linspace(0, 22, 23):
            assert kernel_cdf(z1, z2, G0, SPEC) == (1.0 if z2 >= target else 0.0)


def test_doeblin_certificates(G):
    n0, delta = doeblin_certificate(G, SPEC)
    assert n0 == 3 and delta == pytest.approx(G.atom0**2)
    assert delta == pytest.approx(0.1199, abs=1e-4)
    assert doeblin_certificate(G, DamSpec(10.0, 15.0)) == (1, 1.0)
    with pytest.raises(ZeroAtomError):
        doeblin_certificate(InflowCdf(0.0, [0.0, 5.0], [0.0, 1.0]), SPEC)


def test_nodes_contain_jump_points():
    x = stationary_nodes(SPEC, 64)
    for j in (12.0, 2.0):
        assert np.any(x == j)
    assert x[0] == 0.0 and x[-1] == SPEC.top


def test_zero_inflow_drains_to_zero():
    F = stationary_cdf(InflowCdf.point_mass_zero(), SPEC, grid_size=64, z_init=SPEC.top)
    assert F.atom_zero == pytest.approx(1.0) and F.mean() == pytest.approx(0.0, abs=1e-12)


def test_fixed_point_equation_independent_quadrature(G):
    F = stationary_cdf(G, SPEC, grid_size=256, tol=1e-10)
    assert fixed_point_residual(F, G, SPEC) < 1e-9
    x = np.asarray(F.grid)
    worst = 0.0
    for z in x[:-1]:
        rhs = stieltjes_rhs(z, x, F.values, F.left, G.knots, G.values, SPEC.c0)
        worst = max(worst, abs(rhs - F(z)))
    assert worst < 1e-9


def test_start_point_does_not_matter(G):
    a = stationary_cdf(G, SPEC, grid_size=128)
    b = stationary_cdf(G, SPEC, grid_size=128, z_init=SPEC.top)
    assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_grid_refinement_differences_shrink(G):
    z = np.linspace(0, SPEC.top, 2001)
    F = [stationary_cdf(G, SPEC, grid_size=n)(z) for n in (256, 512, 1024)]
    d1, d2 = np.abs(F[0] - F[1]).max(), np.abs(F[1] - F[2]).max()
    assert d2 < d1 < 1e-4


def test_cross_model_mean_matches_discrete():
    # top = C1 - c0 = 30 hm³ matches the four-level discrete model with 10 hm³ steps
    spec = DamSpec(10.0, 40.0)
    G = InflowCdf.from_interval_pmf(PUBLISHED_PMF, 10.0)
    F = stationary_cdf(G, spec, grid_size=512)
    _, pi_z, _ = joint_stationary(build_joint_iid(PUBLISHED_PMF, 4))
    discrete_mean = pi_z.mass @ np.array([2.5, 10.0, 20.0, 28.5])
    assert F.mean() == pytest.approx(discrete_mean, rel=0.05)


def test_no_convergence_raises(G):
    with pytest.raises(NoConvergenceError):
        stationary_cdf(G, SPEC, grid_size=32, tol=1e-14, max_iter=3)
    with pytest.raises(ValueError):
        stationary_cdf(G, SPEC, grid_size=8)


def test_csv_export(tmp_path, G):
    F = stationary_cdf(G, SPEC, grid_size=32)
    path = tmp_path / "F.csv"
    F.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,F" and len(rows) > F.grid.size


@pytest.mark.slow
def test_simulated_final_states_match_cdf(G):
    F = stationary_cdf(G, SPEC, grid_size=512)
    z = final_states(ContinuousDam(G, SPEC), 0.0, SimConfig(seed=3, n_paths=20_000, horizon=100))
    assert ks_distance_with_atoms(z, F) < 0.02
