import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from hsgas.core import ParticleSystem, minimal_image, scaling_from_mu, validate_scaling
from hsgas.ensembles import sample_equilibrium
from hsgas.errors import NonUnitOmega, OverlapInput, SizeGuard
from hsgas.md import (
    EventLog,
    advance,
    apply_scattering,
    brute_force_advance,
    predict_pair_collision,
    reverse_velocities,
    trajectory,
)

TOY = validate_scaling(2, 0.1, check_packing=False)
vel = st.floats(-3, 3, allow_nan=False)


def head_on():
    return ParticleSystem(0.0, [[0.0, 0.0], [0.5, 0.0]], [[1.0, 0.0], [-1.0, 0.0]], TOY)


def equilibrium(n_mu, seed):
    return sample_equilibrium(scaling_from_mu(2, n_mu), seed)[0]


# contact prediction -----------------------------------------------------------

def test_head_on_contact_time():
    t, omega = predict_pair_collision(([0, 0], [1, 0]), ([0.5, 0], [-1, 0]), 0.1, 1.0)
    assert t == pytest.approx(0.2, abs=1e-14)
    np.testing.assert_allclose(omega, [1.0, 0.0], atol=1e-14)


def test_head_on_contact_matches_bisection():
    dist = lambda s: np.linalg.norm(minimal_image([s, 0.0], [0.5 - s, 0.0])) - 0.1
    root = optimize.brentq(dist, 0.0, 0.22, xtol=1e-15)
    t, _ = predict_pair_collision(([0, 0], [1, 0]), ([0.5, 0], [-1, 0]), 0.1, 1.0)
    assert t == pytest.approx(root, abs=1e-13)


def test_parallel_velocities_never_meet():
    assert predict_pair_collision(([0.1, 0.1], [1, 0.3]), ([0.4, 0.6], [1, 0.3]), 0.05, 10.0) is None


def test_receding_pair_within_horizon():
    assert predict_pair_collision(([0.4, 0.5], [-1, 0]), ([0.6, 0.5], [1, 0]), 0.05, 0.1) is None


def test_contact_through_periodic_image():
    # closest approach is across the boundary at x = 0
    t, omega = predict_pair_collision(([0.05, 0.5], [-1, 0]), ([0.85, 0.5], [1, 0]), 0.1, 1.0)
    assert t == pytest.approx(0.05, abs=1e-13)
    np.testing.assert_allclose(omega, [-1.0, 0.0], atol=1e-12)


def test_overlap_input_rejected():
    with pytest.raises(OverlapInput):
        predict_pair_collision(([0, 0], [1, 0]), ([0.05, 0], [0, 0]), 0.1, 1.0)


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=4, max_size=4),
       st.lists(vel, min_size=4, max_size=4))
def test_predicted_contact_is_exact(xs, vs):
    xi, xj = np.array(xs[:2]), np.array(xs[2:])
    vi, vj = np.array(vs[:2]), np.array(vs[2:])
    eps = 0.05
    if np.linalg.norm(minimal_image(xi, xj)) < eps:
        return
    res = predict_pair_collision((xi, vi), (xj, vj), eps, 2.0)
    if res is None:
        return
    t, omega = res
    assert 0 < t <= 2.0
    sep = minimal_image(xi + vi * t, xj + vj * t)
    assert np.linalg.norm(sep) == pytest.approx(eps, abs=1e-9)
    assert np.linalg.norm(omega) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(vj - vi, omega) <= 1e-12  # approaching at contact


# scattering ---------------------------------------------------------------------

def test_head_on_exchange():
    a, b = apply_scattering([1, 0], [-1, 0], [1, 0])
    np.testing.assert_array_equal(a, [-1, 0])
    np.testing.assert_array_equal(b, [1, 0])


def test_grazing_leaves_velocities():
    a, b = apply_scattering([1, 0], [0, 0], [0, 1])
    np.testing.assert_array_equal(a, [1, 0])
    np.testing.assert_array_equal(b, [0, 0])


def test_oblique_scattering():
    r = math.sqrt(2) / 2
    a, b = apply_scattering([1, 0], [0, 0], [r, r])
    np.testing.assert_allclose(a, [0.5, -0.5], atol=1e-15)
    np.testing.assert_allclose(b, [0.5, 0.5], atol=1e-15)


def test_non_unit_omega():
    with pytest.raises(NonUnitOmega):
        apply_scattering([1, 0], [0, 0], [1, 1])


@given(st.lists(vel, min_size=6, max_size=6), st.floats(0, 2 * math.pi))
def test_scattering_conserves_and_is_involution(vs, phi):
    vi, vj = np.array(vs[:3]), np.array(vs[3:])
    omega = np.array([math.cos(phi), math.sin(phi) * 0.6, math.sin(phi) * 0.8])
    a, b = apply_scattering(vi, vj, omega)
    np.testing.assert_allclose(a + b, vi + vj, atol=1e-12)
    assert a @ a + b @ b == pytest.approx(vi @ vi + vj @ vj, rel=1e-12, abs=1e-12)
    c, e = apply_scattering(a, b, omega)
    np.testing.assert_allclose(c, vi, atol=1e-12)
    np.testing.assert_allclose(e, vj, atol=1e-12)


# advance -------------------------------------------------------------------------

def test_single_particle_free_flight():
    s = ParticleSystem(0.0, [[0.2, 0.9]], [[0.7, 0.35]], TOY)
    out, log = advance(s, 1.0)
    np.testing.assert_allclose(out.positions, [[0.9, 0.25]], atol=1e-14)
    assert len(log) == 0 and out.time == 1.0


def test_head_on_single_event():
    out, log = advance(head_on(), 0.5, cells_per_axis=1)
    assert len(log) == 1
    ev = log[0]
    assert ev.time == pytest.approx(0.2, abs=1e-14)
    assert {ev.i, ev.j} == {0, 1}
    np.testing.assert_allclose(out.velocities, [[-1, 0], [1, 0]], atol=1e-14)


def test_empty_system():
    s = ParticleSystem(0.0, np.empty((0, 2)), np.empty((0, 2)), TOY)
    out, log = brute_force_advance(s, 1.0)
    assert out.n == 0 and len(log) == 0


def test_brute_force_single_pair_matches_composition():
    s = head_on()
    out, log = brute_force_advance(s, 0.5)
    t, omega = predict_pair_collision((s.positions[0], s.velocities[0]),
                                      (s.positions[1], s.velocities[1]), TOY.eps, 0.5)
    a, b = apply_scattering(s.velocities[0], s.velocities[1], omega)
    assert log[0].time == t
    np.testing.assert_array_equal(out.velocities, [a, b])


def test_brute_force_size_guard():
    s = ParticleSystem(0.0, np.random.default_rng(0).random((300, 2)), np.zeros((300, 2)),
                       validate_scaling(2, 1e-4))
    with pytest.raises(SizeGuard):
        brute_force_advance(s, 0.1)


@pytest.mark.parametrize("mu,duration,seed", [(32, 1.0, 1), (64, 0.5, 2), (64, 1.0, 3), (200, 1.0, 4)])
def test_oracle_equivalence(mu, duration, seed):
    s = equilibrium(mu, seed)
    a, la = advance(s, duration)
    b, lb = brute_force_advance(s, duration)
    assert len(la) > 0
    np.testing.assert_array_equal(la.times, lb.times)
    np.testing.assert_array_equal(la.pairs, lb.pairs)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.velocities, b.velocities)


@pytest.mark.parametrize("mu", [64, 1000, 4096])
def test_conservation_and_exclusion(mu):
    s = equilibrium(mu, 7)
    out, log = advance(s, 0.5)
    assert np.max(np.abs(out.momentum() - s.momentum())) <= 1e-9 * s.n
    assert abs(out.kinetic_energy() - s.kinetic_energy()) <= 1e-9 * s.kinetic_energy()
    assert out.min_pair_distance() >= s.scaling.eps - 1e-9
    p_err, e_err = log.conservation_errors()
    assert p_err < 1e-9 and e_err < 1e-9
    assert np.all(np.diff(log.times) >= 0)


def test_trajectory_snapshots_respect_exclusion():
    s = equilibrium(500, 11)
    for snap, _ in trajectory(s, [0.1, 0.2, 0.3]):
        assert snap.min_pair_distance() >= s.scaling.eps - 1e-9


def test_reverse_velocities():
    s = ParticleSystem(0.5, [[0.1, 0.2]], [[1.0, 2.0]], TOY)
    r = reverse_velocities(s)
    np.testing.assert_array_equal(r.velocities, [[-1.0, -2.0]])
    np.testing.assert_array_equal(r.positions, s.positions)
    assert r.time == s.time
    np.testing.assert_array_equal(reverse_velocities(r).velocities, s.velocities)


@pytest.mark.parametrize("seed", range(3))
def test_round_trip_over_one_mean_free_time(seed):
    s = equilibrium(64, seed)
    mft = s.scaling.alpha / (2 * math.sqrt(math.pi))
    fwd, _ = advance(s, mft)
    back, _ = advance(reverse_velocities(fwd), mft)
    assert np.max(np.abs(minimal_image(back.positions, s.positions))) < 1e-6
    np.testing.assert_allclose(-back.velocities, s.velocities, atol=1e-6)


def test_equilibrium_collision_rate():
    # per-particle rate at alpha = 1 is 2 sqrt(pi) in kinetic units
    rates = []
    for seed in range(8):
        s = equilibrium(1000, 100 + seed)
        _, log = advance(s, 0.5)
        rates.append(2 * len(log) / (s.n * 0.5))
    rates = np.array(rates)
    se = rates.std(ddof=1) / math.sqrt(len(rates))
    assert abs(rates.mean() - 2 * math.sqrt(math.pi)) <= 3 * se + 0.02


def test_event_log_jsonl_round_trip(tmp_path):
    _, log = advance(equilibrium(200, 5), 0.3)
    log.to_jsonl(tmp_path / "log.jsonl")
    back = EventLog.from_jsonl(tmp_path / "log.jsonl", 2)
    np.testing.assert_array_equal(back.rows, log.rows)


def test_permutation_invariant_dynamics():
    s = equilibrium(200, 9)
    perm = np.random.default_rng(3).permutation(s.n)
    a, _ = advance(s, 0.3)
    b, _ = advance(s.replace(positions=s.positions[perm], velocities=s.velocities[perm]), 0.3)
    assert b.kinetic_energy() == pytest.approx(a.kinetic_energy(), rel=1e-12)
    key = lambda p: np.lexsort(p.T)
    np.testing.assert_allclose(b.positions[key(b.positions)], a.positions[key(a.positions)], atol=1e-8)
