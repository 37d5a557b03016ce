import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from hsgas.core import scaling_from_mu
from hsgas.ensembles import GrandCanonicalSpec, InitialDensity, sample_equilibrium, sample_grand_canonical
from hsgas.errors import InvalidDensity, RejectionBudgetExhausted
from hsgas.md import advance

S1000 = scaling_from_mu(2, 1000)


def test_poisson_mean_without_exclusion():
    spec = GrandCanonicalSpec(scaling_from_mu(2, 50), InitialDensity.equilibrium(), 0)
    rng = np.random.default_rng(1)
    ns = [sample_grand_canonical(spec, exclusion=False, rng=rng)[0].n for _ in range(10_000)]
    assert abs(np.mean(ns) - 50) <= 3 * math.sqrt(50 / 10_000)


@pytest.mark.parametrize("seed", range(5))
def test_accepted_configuration_excludes_overlap(seed):
    s, rep = sample_equilibrium(scaling_from_mu(2, 2000), seed)
    assert s.min_pair_distance() > s.scaling.eps
    assert 0 < rep.acceptance_rate <= 1


def test_positions_uniform_by_chi_square():
    rng = np.random.default_rng(2)
    spec = GrandCanonicalSpec(S1000, InitialDensity.equilibrium(), 0)
    # first particle of each of 1000 independent draws, binned on a 5 x 5 grid
    pts = np.array([sample_grand_canonical(spec, rng=rng)[0].positions[0] for _ in range(1000)])
    counts = np.histogram2d(pts[:, 0], pts[:, 1], bins=5, range=[[0, 1], [0, 1]])[0].ravel()
    assert stats.chisquare(counts).pvalue >= 0.01


def test_equilibrium_velocity_moments():
    v = np.concatenate([sample_equilibrium(S1000, k)[0].velocities for k in range(20)])
    n = v.shape[0]
    assert np.all(np.abs(v.mean(0)) <= 3 / math.sqrt(n))
    # var of a sample variance of unit normals is 2 / n
    assert np.all(np.abs(v.var(0) - 1) <= 3 * math.sqrt(2 / n))
    ke = 0.5 * np.sum(v**2, axis=1)
    assert abs(ke.mean() - 1.0) <= 3 * ke.std() / math.sqrt(n)


def test_two_dimensional_energy_by_quadrature():
    # E|v|^2 / 2 under the 2D Maxwellian is d/2 = 1
    val, _ = integrate.quad(lambda r: 0.5 * r * r * r * math.exp(-r * r / 2), 0, 40)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_determinism():
    a = sample_equilibrium(S1000, 123)[0]
    b = sample_equilibrium(S1000, 123)[0]
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.velocities, b.velocities)
    c = sample_equilibrium(S1000, 124)[0]
    assert c.n != a.n or not np.array_equal(c.positions, a.positions)


def test_rejection_budget():
    dense = scaling_from_mu(2, 1000).__class__(d=2, eps=0.05, alpha=1.0, mu=1000)
    spec = GrandCanonicalSpec(dense, InitialDensity.equilibrium(), 0)
    with pytest.raises(RejectionBudgetExhausted):
        sample_grand_canonical(spec, max_attempts=5)


@pytest.mark.parametrize("bad", [
    {"spatial": {"kind": "cosine", "a": 0.7}},
    {"spatial": {"kind": "sawtooth"}},
    {"velocity": {"kind": "maxwellian", "temperature": 0}},
    {"velocity": {"kind": "bimodal", "shift": 1.0, "std": -1.0}},
])
def test_invalid_densities(bad):
    with pytest.raises(InvalidDensity):
        InitialDensity.from_dict({"d": 2, **bad})


def test_dimension_mismatch():
    with pytest.raises(InvalidDensity):
        GrandCanonicalSpec(S1000, InitialDensity.equilibrium(3), 0)


@pytest.mark.parametrize("f0", [InitialDensity.equilibrium(), InitialDensity.cosine(0.3),
                                InitialDensity.bimodal(1.5, 0.7)])
def test_densities_normalized(f0):
    sp, _ = integrate.quad(lambda x: f0.spatial_density(np.array([[x, 0.0]]))[0], 0, 1)
    ax = np.linspace(-10, 10, 401)
    vx, vy = np.meshgrid(ax, ax, indexing="ij")
    vel = f0.velocity_density(np.stack([vx, vy], -1)).sum() * (ax[1] - ax[0]) ** 2
    assert sp == pytest.approx(1.0, abs=1e-10)
    assert vel == pytest.approx(1.0, abs=1e-8)


def test_cosine_positions_follow_profile():
    f0 = InitialDensity.cosine(0.3)
    x = f0.sample_positions(np.random.default_rng(4), 200_000)[:, 0]
    # E cos(2 pi x) under 1 + a cos(2 pi x) is a / 2
    c = np.cos(2 * np.pi * x)
    assert abs(c.mean() - 0.15) <= 3 * c.std() / math.sqrt(len(c))


def test_bimodal_moments():
    f0 = InitialDensity.bimodal(1.5, 0.7)
    v = f0.sample_velocities(np.random.default_rng(5), 200_000)
    _, e = f0.velocity_moments()
    ke = 0.5 * np.sum(v**2, axis=1)
    assert abs(ke.mean() - e) <= 3 * ke.std() / math.sqrt(len(ke))


def test_spec_json_round_trip():
    spec = GrandCanonicalSpec(S1000, InitialDensity.cosine(0.2), 2**40 + 7)
    assert GrandCanonicalSpec.from_json(spec.to_json()) == spec


def test_snapshot_csv_round_trip(tmp_path):
    s = sample_equilibrium(scaling_from_mu(2, 100), 3)[0]
    s.to_csv(tmp_path / "s.csv")
    t = type(s).from_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(t.velocities, s.velocities)


def test_stationarity_after_advance():
    v, x = [], []
    for k in range(6):
        s = sample_equilibrium(S1000, 300 + k)[0]
        out, _ = advance(s, 2.0 / (2 * math.sqrt(math.pi)))
        v.append(out.velocities.ravel())
        x.append(out.positions[:, 0])
    v, x = np.concatenate(v), np.concatenate(x)
    edges = stats.norm.ppf(np.linspace(0, 1, 21))
    assert stats.chisquare(np.histogram(v, edges)[0]).pvalue >= 0.01
    assert stats.chisquare(np.histogram(x, 10, range=(0, 1))[0]).pvalue >= 0.01


@given(st.integers(0, 2**62))
def test_any_seed_gives_valid_configuration(seed):
    s = sample_equilibrium(scaling_from_mu(2, 300), seed)[0]
    assert s.n == 0 or s.min_pair_distance() > s.scaling.eps
    assert np.all((s.positions >= 0) & (s.positions < 1))
