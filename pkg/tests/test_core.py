import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.spatial.transform import Rotation

from hsgas.core import (
    ParticleSystem,
    TestFunctionSpec,
    eval_test_function,
    maxwellian,
    minimal_image,
    scaling_from_mu,
    validate_scaling,
    wrap,
    write_table_csv,
)
from hsgas.errors import InvalidDimension, MalformedSpec, ScalingViolation

coords = st.floats(-5, 5, allow_nan=False)


# validate_scaling ---------------------------------------------------------

def test_scaling_desk_value():
    s = validate_scaling(2, 0.001, 1.0)
    assert s.mu == pytest.approx(1000, rel=1e-12)


def test_scaling_three_dimensions():
    # the packing fraction at eps = 0.1 exceeds the dilute cap, so only the relation is checked
    s = validate_scaling(3, 0.1, 1.0, check_packing=False)
    assert s.mu == pytest.approx(100, rel=1e-12)
    with pytest.raises(ScalingViolation):
        validate_scaling(3, 0.1, 1.0)


def test_scaling_violation_at_large_eps():
    # packing fraction 2.5 * 0.16 * pi / 4 ~ 0.31 > 0.05
    with pytest.raises(ScalingViolation):
        validate_scaling(2, 0.4, 1.0)


@pytest.mark.parametrize("d", [1, 4, 2.5])
def test_scaling_rejects_dimension(d):
    with pytest.raises(InvalidDimension):
        validate_scaling(d, 0.01)


@pytest.mark.parametrize("eps,alpha", [(0.0, 1.0), (0.6, 1.0), (0.01, 0.0), (0.01, -1.0)])
def test_scaling_rejects_bad_inputs(eps, alpha):
    with pytest.raises(ScalingViolation):
        validate_scaling(2, eps, alpha)


@given(st.sampled_from([2, 3]), st.floats(1e-4, 1e-2), st.floats(0.5, 4.0))
def test_scaling_relation_and_idempotence(d, eps, alpha):
    s = validate_scaling(d, eps, alpha, check_packing=False)
    assert s.mu * s.eps ** (d - 1) * s.alpha == pytest.approx(1.0, rel=1e-12)
    assert validate_scaling(d, eps, alpha, check_packing=False) == s
    assert scaling_from_mu(d, s.mu, alpha).eps == pytest.approx(eps, rel=1e-10) if s.packing_fraction < 0.05 else True


# geometry -------------------------------------------------------------------

def test_minimal_image_wraps():
    np.testing.assert_allclose(minimal_image([0.1, 0.1], [0.9, 0.1]), [-0.2, 0.0], atol=1e-15)
    np.testing.assert_array_equal(minimal_image([0.3, 0.7], [0.3, 0.7]), [0.0, 0.0])


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=4, max_size=4))
def test_minimal_image_matches_image_search(c):
    x1, x2 = np.array(c[:2]), np.array(c[2:])
    offsets = np.array([[a, b] for a in (-1, 0, 1) for b in (-1, 0, 1)])
    best = min(np.linalg.norm(x2 + o - x1) for o in offsets)
    dx = minimal_image(x1, x2)
    assert np.linalg.norm(dx) == pytest.approx(best, abs=1e-12)
    assert np.all(dx >= -0.5) and np.all(dx < 0.5)


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=4, max_size=4))
def test_minimal_image_antisymmetric(c):
    x1, x2 = np.array(c[:2]), np.array(c[2:])
    dx = minimal_image(x1, x2)
    if np.any(np.abs(np.abs(dx) - 0.5) < 1e-9):
        return
    np.testing.assert_allclose(minimal_image(x2, x1), -dx, atol=1e-12)


@given(st.lists(coords, min_size=3, max_size=3), st.integers(-3, 3))
def test_wrap_idempotent_and_periodic(x, k):
    x = np.array(x)
    w = wrap(x)
    assert np.all((w >= 0) & (w < 1))
    np.testing.assert_array_equal(wrap(w), w)
    np.testing.assert_allclose(minimal_image(wrap(x + k), w), 0.0, atol=1e-12)


# Maxwellian -------------------------------------------------------------------

def test_maxwellian_values():
    assert maxwellian([0.0, 0.0]) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert maxwellian([1.0, 0.0, 0.0]) == pytest.approx((2 * math.pi) ** -1.5 * math.exp(-0.5), rel=1e-15)


def test_maxwellian_radial_quadrature_3d():
    # 4 pi int r^2 M(r) dr = 1 ties the prefactor to the closed form
    val, _ = integrate.quad(lambda r: 4 * math.pi * r * r * maxwellian([r, 0.0, 0.0]), 0, 40)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_maxwellian_grid_normalization():
    ax = np.linspace(-8, 8, 161)
    vx, vy = np.meshgrid(ax, ax, indexing="ij")
    vals = maxwellian(np.stack([vx, vy], -1))
    assert vals.sum() * (ax[1] - ax[0]) ** 2 == pytest.approx(1.0, abs=1e-10)


@given(st.lists(st.floats(-4, 4), min_size=3, max_size=3), st.integers(0, 2**31))
def test_maxwellian_rotation_invariant(v, seed):
    R = Rotation.random(random_state=seed).as_matrix()
    v = np.array(v)
    assert maxwellian(R @ v) == pytest.approx(maxwellian(v), rel=1e-12)


# test functions ---------------------------------------------------------------

def test_constant_and_degenerate_modes():
    x, v = np.array([0.3, 0.4]), np.array([1.5, -2.0])
    assert eval_test_function(TestFunctionSpec.constant(2.5), x, v) == 2.5
    assert eval_test_function(TestFunctionSpec.hermite([0, 0], [0, 0]), x, v) == 1.0


def test_collision_invariants():
    x, v = np.array([0.3, 0.4]), np.array([1.5, -2.0])
    assert eval_test_function(TestFunctionSpec.invariant("mass"), x, v) == 1.0
    assert eval_test_function(TestFunctionSpec.invariant("momentum", 1), x, v) == -2.0
    assert eval_test_function(TestFunctionSpec.invariant("energy"), x, v) == pytest.approx(6.25)


def test_hermite_values():
    h = TestFunctionSpec.hermite([3, 1], [1, 0], "cos")
    x, v = np.array([0.125, 0.0]), np.array([2.0, 0.5])
    expected = math.cos(2 * math.pi * 0.125) * (8 - 6) * 0.5
    assert h(x, v) == pytest.approx(expected, rel=1e-14)


def test_tabulated_round_trip(tmp_path):
    nodes = [np.linspace(-2, 2, 5), np.linspace(-1, 1, 3)]
    vals = np.arange(15, dtype=float).reshape(5, 3) / 7
    path = tmp_path / "t.csv"
    write_table_csv(path, ["v1", "v2"], nodes, vals)
    h = TestFunctionSpec("tabulated", {"table": str(path)})
    for i, a in enumerate(nodes[0]):
        for j, b in enumerate(nodes[1]):
            assert h(np.zeros(2), np.array([a, b])) == pytest.approx(vals[i, j], abs=1e-15)
    assert h(np.zeros(2), np.array([3.0, 0.0])) == 0.0  # outside the bounding box


def test_spec_json_round_trip():
    h = TestFunctionSpec.hermite([1, 2], [1, 0], "sin", damping=1.0, decay=(1.0, 1.0))
    g = TestFunctionSpec.from_json(h.to_json())
    assert g == h and g.decay == (1.0, 1.0)


@pytest.mark.parametrize("bad", [
    {"kind": "unknown"},
    {"kind": "fourier-hermite", "params": {"modes": [1], "hermite": [0, 0]}},
    {"kind": "fourier-hermite", "params": {"modes": [0, 0], "hermite": [-1, 0]}},
    {"kind": "collision-invariant", "params": {"which": "spin"}},
    {"kind": "constant", "params": {}},
])
def test_malformed_specs(bad):
    with pytest.raises(MalformedSpec):
        TestFunctionSpec.from_dict(bad)


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_evaluation_deterministic(x, v):
    h = TestFunctionSpec.hermite([2, 1], [1, 1])
    assert h(np.array(x), np.array(v)) == h(np.array(x), np.array(v))


# particle systems ---------------------------------------------------------------

def test_particle_system_csv_round_trip(tmp_path, rng):
    s = ParticleSystem(0.5, rng.random((10, 2)), rng.standard_normal((10, 2)), validate_scaling(2, 1e-3))
    s.to_csv(tmp_path / "snap.csv")
    t = ParticleSystem.from_csv(tmp_path / "snap.csv")
    np.testing.assert_array_equal(t.positions, s.positions)
    np.testing.assert_array_equal(t.velocities, s.velocities)
    assert t.time == s.time and t.scaling == s.scaling
