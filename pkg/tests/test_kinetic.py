import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hsgas.ensembles import InitialDensity
from hsgas.errors import MalformedSpec, NegativeMass
from hsgas.kinetic import (
    VelocityGridField,
    VelocityHistogram,
    build_linearized_matrix,
    collision_invariants,
    collision_operator_apply,
    dsmc_solve,
    entropy,
    entropy_with_error,
    equilibrium_collision_rate,
    kac_homogeneous,
    maxwellian_entropy,
    mean_free_time,
    semigroup_apply,
    semigroup_eig,
    semigroup_path,
    weak_form_rhs,
)

MFT = mean_free_time()
EDGES = stats.norm.ppf(np.linspace(0, 1, 21))


@pytest.fixture(scope="module")
def L():
    return build_linearized_matrix((2, 6.0, 21), 40_000, 0)


def bimodal_field(n=31):
    f0 = InitialDensity.bimodal(1.5, 0.7)
    return VelocityGridField.from_function(f0.velocity_density, 2, 6.0, n)


# grid fields -------------------------------------------------------------------

def test_grid_symmetry_and_weight():
    g = VelocityGridField.maxwellian(2, 6.0, 41)
    np.testing.assert_allclose(g.axis, -g.axis[::-1], atol=1e-14)
    assert g.weight == pytest.approx(0.3**2)
    assert g.integrate() == pytest.approx(1.0, abs=1e-7)


def test_interpolation_exact_on_quadratics():
    g = VelocityGridField.from_function(lambda v: 1 + v[:, 0] - 2 * v[:, 1] ** 2 + v[:, 0] * v[:, 1], 2, 6.0, 21)
    pts = np.random.default_rng(0).uniform(-5.9, 5.9, (200, 2))
    exact = 1 + pts[:, 0] - 2 * pts[:, 1] ** 2 + pts[:, 0] * pts[:, 1]
    np.testing.assert_allclose(g.interpolate(pts), exact, atol=1e-10)
    out = np.array([[7.0, 0.5]])
    assert g.interpolate(out)[0] == 0.0
    assert g.interpolate(out, extrapolate=True)[0] == pytest.approx(1 + 7 - 0.5 + 3.5, abs=1e-9)


def test_grid_csv_round_trip(tmp_path):
    g = bimodal_field(11)
    g.to_csv(tmp_path / "g.csv")
    back = VelocityGridField.from_csv(tmp_path / "g.csv")
    np.testing.assert_allclose(back.values, g.values, rtol=1e-15)
    assert back.vmax == g.vmax and back.n == g.n


def test_grid_rejects_bad_shape():
    with pytest.raises(MalformedSpec):
        VelocityGridField(2, 6.0, 5, np.zeros(24))


# collision quadrature -------------------------------------------------------------

def test_equilibrium_rate_value():
    assert equilibrium_collision_rate(2) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-10)
    assert equilibrium_collision_rate(3) == pytest.approx(4 * math.sqrt(math.pi), rel=1e-10)


def test_maxwellian_annihilated():
    m = VelocityGridField.maxwellian(2, 6.0, 31)
    c = collision_operator_apply(m, 20_000, 0)
    # sup-norm comparison; a per-node 3-sigma check fails by multiplicity over ~1000 nodes
    assert np.max(np.abs(c.flat)) <= np.max(c.error)


def test_mass_conservation_and_weak_form():
    phi = bimodal_field()
    q = lambda v: v[:, 0] ** 4 / 10
    c, rep, ints = collision_operator_apply(phi, 20_000, 0, test_functions=[lambda v: np.ones(len(v)), q],
                                            return_report=True)
    mass_val, mass_se = ints[0]
    assert abs(mass_val) <= 3 * mass_se + float(np.sum(rep.interp_bound) * phi.weight)
    rhs, rhs_se = weak_form_rhs(phi, q, 200_000, 1)
    lhs, lhs_se = ints[1]
    interp = float(np.sum(np.abs(q(phi.points)) * rep.interp_bound) * phi.weight)
    assert abs(lhs - rhs) <= 3 * math.hypot(lhs_se, rhs_se) + interp


def test_collision_quadrature_deterministic():
    phi = bimodal_field(15)
    a = collision_operator_apply(phi, 2000, 5)
    b = collision_operator_apply(phi, 2000, 5)
    np.testing.assert_array_equal(a.flat, b.flat)


# linearized operator -----------------------------------------------------------------

def test_invariants_in_kernel(L):
    for q in collision_invariants(2):
        assert L.invariant_residual(q) <= L.tol_L
        assert np.max(np.abs(L.apply(q).flat)) <= L.tol_L * max(1.0, np.max(np.abs(L.values(q))))


def test_weighted_symmetry(L):
    assert L.antisymmetry() <= 3 * L.tol_L


def test_operator_is_dissipative(L):
    rng = np.random.default_rng(1)
    for _ in range(5):
        h = rng.standard_normal(L.n**2)
        assert L.inner(h, L.matrix @ h) <= 1e-10


def test_small_cutoff_rejected():
    with pytest.raises(MalformedSpec):
        build_linearized_matrix((2, 4.0, 21), 5000, 0)


# semigroup --------------------------------------------------------------------------

def test_semigroup_identity_at_zero(L):
    h = lambda v: v[:, 0] * v[:, 1]
    np.testing.assert_array_equal(semigroup_apply(L, h, 0.0).flat, L.values(h))


def test_semigroup_keeps_invariants(L):
    e = collision_invariants(2)[-1]
    out = semigroup_apply(L, e, 1.0)
    np.testing.assert_allclose(out.flat, L.values(e), atol=L.tol_L * 1.0 * np.max(np.abs(L.values(e))) + 1e-8)


def test_semigroup_self_convergence(L):
    h = lambda v: v[:, 0] * v[:, 1]
    a = semigroup_apply(L, h, 0.5, rtol=1e-8)
    b = semigroup_apply(L, h, 0.5, rtol=5e-9)
    assert np.max(np.abs(a.flat - b.flat)) < 1e-6


def test_semigroup_path_matches_apply_and_eig(L):
    h = lambda v: v[:, 0] ** 2 - 1
    path = semigroup_path(L, h, [0.0, 0.25, 0.5])
    for tau, f in zip([0.0, 0.25, 0.5], path):
        np.testing.assert_allclose(f.flat, semigroup_apply(L, h, tau).flat, atol=1e-7)
        np.testing.assert_allclose(f.flat, semigroup_eig(L, h, tau).flat, atol=1e-6)


# Kac process --------------------------------------------------------------------------

def test_kac_energy_conserved_and_maxwellian_stationary():
    tr = kac_homogeneous(InitialDensity.equilibrium(), 5000, 2.0, 3)
    e0, e1 = (np.sum(tr.velocities[k] ** 2) for k in (0, 1))
    assert abs(e1 - e0) <= 1e-9 * e0
    np.testing.assert_allclose(tr.velocities[1].sum(0), tr.velocities[0].sum(0), atol=1e-9 * 5000)
    assert stats.chisquare(np.histogram(tr.velocities[1].ravel(), EDGES)[0]).pvalue >= 0.01
    assert tr.accepted > 0


def test_kac_collision_rate_at_equilibrium():
    # accepted jumps per particle per unit time, two particles per jump
    tr = kac_homogeneous(InitialDensity.equilibrium(), 4000, 1.0, 4)
    rate = 2 * tr.accepted / 4000
    assert rate == pytest.approx(equilibrium_collision_rate(2), rel=0.05)


def test_kac_relaxes_bimodal_to_matched_maxwellian():
    f0 = InitialDensity.bimodal(1.5, 0.7)
    tr = kac_homogeneous(f0, 20_000, 15 * MFT, 5)
    v = tr.velocities[-1]
    temp = 2 * f0.velocity_moments()[1] / 2
    assert stats.kstest(v[:, 1] / math.sqrt(temp), "norm").pvalue >= 0.001
    assert abs(np.mean(v[:, 0] ** 4) / temp**2 - 3) < 0.15


def test_kac_autocovariance_matches_semigroup(L):
    h = lambda v: v[:, 0] * v[:, 1]
    runs, tau = 400, 0.5 * MFT
    prods = []
    for r in range(runs):
        tr = kac_homogeneous(InitialDensity.equilibrium(), 1000, tau, 1000 + r)
        a, b = (np.sum(h(tr.velocities[k])) for k in (0, 1))
        prods.append(a * b / 1000)
    prods = np.array(prods)
    g = L.values(h)
    pred = float(np.sum(L.weights * g * semigroup_apply(L, h, tau).flat))
    assert abs(prods.mean() - pred) <= 3 * prods.std(ddof=1) / math.sqrt(runs) + 0.03


# DSMC ----------------------------------------------------------------------------------

def test_dsmc_homogeneous_conservation_and_relaxation():
    f0 = InitialDensity.bimodal(1.5, 0.7)
    T = 0.025 * 113  # about ten mean free times
    res = dsmc_solve(f0, T, 0.025, 1, 20_000, 1, keep_velocities=True, sample_times=[0.0, T])
    v0, v1 = res.velocities
    assert np.max(np.abs(v1.sum(0) - v0.sum(0))) <= 1e-9 * len(v0)
    assert abs(np.sum(v1**2) - np.sum(v0**2)) <= 1e-9 * np.sum(v0**2)
    temp = 2 * f0.velocity_moments()[1] / 2
    assert abs(np.mean(v1[:, 0] ** 4) / temp**2 - 3) < 0.15


def test_dsmc_equilibrium_stationary():
    res = dsmc_solve(InitialDensity.equilibrium(), 5.0, 0.025, 1, 20_000, 2, keep_velocities=True)
    assert stats.chisquare(np.histogram(res.velocities[-1].ravel(), EDGES)[0]).pvalue >= 0.01


def test_dsmc_transport_only_is_free_flight():
    f0 = InitialDensity.cosine(0.3)
    T = 0.025 * 8
    res = dsmc_solve(f0, T, 0.025, 1, 20_000, 3, collisions=False, keep_velocities=True, sample_times=[0.0, T])
    # with no collisions velocities are untouched and the density mode decays like exp(-(2 pi)^2 T^2 / 2)
    np.testing.assert_array_equal(res.velocities[0], res.velocities[1])
    obs = lambda x, v: np.cos(2 * np.pi * x[:, 0])
    res2 = dsmc_solve(f0, T, 0.025, 1, 200_000, 4, collisions=False, observables=[obs], sample_times=[0.0, T])
    m, e = next(iter(res2.observables.values()))
    expected = 0.15 * math.exp(-0.5 * (2 * math.pi * T) ** 2)
    assert abs(m[-1] - expected) <= 3 * e[-1]


def test_dsmc_validates_inputs():
    f0 = InitialDensity.equilibrium()
    with pytest.raises(MalformedSpec):
        dsmc_solve(f0, 1.0, 0.1, 1, 20_000)
    with pytest.raises(MalformedSpec):
        dsmc_solve(f0, 1.0, 0.01, 1, 100)


# entropy ------------------------------------------------------------------------------

def test_maxwellian_grid_entropy():
    g = VelocityGridField.maxwellian(2, 8.0, 161)
    assert entropy(g) == pytest.approx(1 + math.log(2 * math.pi), abs=1e-6)
    assert maxwellian_entropy(2) == pytest.approx(2.8378770664, abs=1e-9)


def test_entropy_scaling_identity():
    g = bimodal_field(41)
    two = g.with_values(2 * g.flat)
    mass = g.integrate()
    assert entropy(two) == pytest.approx(2 * entropy(g) - 2 * math.log(2) * mass, rel=1e-12)


def test_entropy_negative_mass():
    g = VelocityGridField.maxwellian(2, 6.0, 11)
    with pytest.raises(NegativeMass):
        entropy(g.with_values(-g.flat))


def test_histogram_entropy_of_maxwellian_sample():
    v = np.random.default_rng(6).standard_normal((400_000, 2))
    s, se = entropy_with_error(VelocityHistogram.from_samples(v, 40, 6.0))
    assert abs(s - maxwellian_entropy(2)) <= 3 * se + 0.01


@given(st.lists(st.floats(0, 10), min_size=27, max_size=27).filter(lambda x: sum(x) > 0))
def test_entropy_bounded_by_uniform(vals):
    g = VelocityGridField(3, 1.0, 3, np.array(vals))
    mass = g.integrate()
    # -int f log f <= mass log(volume / mass) by Jensen
    assert entropy(g) <= mass * math.log(27 * g.weight / mass) + 1e-9
