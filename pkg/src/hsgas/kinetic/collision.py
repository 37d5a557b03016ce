"""Monte Carlo quadrature of the hard-sphere collision operator on a velocity grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import integrate

from ..core import sphere_area
from ..errors import CutoffLeak, MalformedSpec
from .grid import VelocityGridField, interp_fast, interp_many

LEAK_LIMIT = 0.01


@dataclass(frozen=True)
class QuadratureReport:
    """Diagnostics attached to a Monte Carlo collision quadrature."""

    samples: int
    seed: int
    proposal_std: float
    leak_fraction: float
    stderr: np.ndarray  # per node
    interp_bound: np.ndarray  # per node, |quadratic - cubic| interpolation

    @property
    def tolerance(self) -> np.ndarray:
        return 3.0 * self.stderr + self.interp_bound


def default_proposal_std(phi: VelocityGridField) -> float:
    mass = phi.integrate()
    if mass <= 0:
        return 1.2
    second = phi.integrate(lambda v: np.sum(v * v, axis=1)) / mass
    return 1.2 * max(math.sqrt(max(second, 0.0) / phi.d), 0.5)


def uniform_directions(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    w = rng.standard_normal((m, d))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def gaussian_density(v: np.ndarray, std: float) -> np.ndarray:
    d = v.shape[1]
    return np.exp(-np.sum(v * v, axis=1) / (2 * std * std)) / (2 * np.pi * std * std) ** (d / 2)


@nb.njit(cache=True)
def _collision_kernel(phi, nodes, v1s, omegas, wq, phi_v1, phi_v1_hi, vmax, h, n, Q):
    P, d = nodes.shape
    S = v1s.shape[0]
    K = Q.shape[0]
    mean = np.zeros(P)
    m2 = np.zeros(P)
    hi = np.zeros(P)
    per_sample = np.zeros((K, S))
    base = np.empty(d, np.int64)
    loc = np.empty((d, 4))
    vp = np.empty(d)
    v1p = np.empty(d)
    leak = 0.0
    total = 0.0
    for p in range(P):
        fv = phi[p]
        for s in range(S):
            gw = 0.0
            for k in range(d):
                gw += (nodes[p, k] - v1s[s, k]) * omegas[s, k]
            if gw <= 0.0:
                continue
            for k in range(d):
                vp[k] = nodes[p, k] - gw * omegas[s, k]
                v1p[k] = v1s[s, k] + gw * omegas[s, k]
            b = gw * wq[s]
            a, in1 = interp_fast(phi, vp, vmax, h, n, 2, base, loc)
            a1, in2 = interp_fast(phi, v1p, vmax, h, n, 2, base, loc)
            # cubic interpolation, for the interpolation-error estimate
            ac, _ = interp_fast(phi, vp, vmax, h, n, 3, base, loc)
            a1c, _ = interp_fast(phi, v1p, vmax, h, n, 3, base, loc)
            val = b * (a * a1 - fv * phi_v1[s])
            mean[p] += val
            m2[p] += val * val
            hi[p] += b * (ac * a1c - fv * phi_v1_hi[s])
            mass = b * abs(fv * phi_v1[s])
            total += mass
            if not (in1 and in2):
                leak += mass
            for q in range(K):
                per_sample[q, s] += Q[q, p] * val
    return mean, m2, hi, per_sample, leak, total


def collision_operator_apply(phi: VelocityGridField, quad_samples: int = 20_000, seed: int = 0, *,
                             proposal_std: float | None = None, test_functions=None,
                             return_report: bool = False):
    """C(phi, phi) at every grid node by Monte Carlo over (v1, omega).

    v1 is drawn from a Gaussian proposal, omega uniformly on the sphere, and
    the gain term uses tensor quadratic interpolation at the post-collisional
    pair.  The same samples serve every node, so the result is a
    deterministic function of ``seed``.  ``test_functions`` (callables or
    nodal arrays) additionally yield per-sample values of the integral of
    q * C, returned in the report tuple as ``(value, stderr)`` pairs.
    """
    if quad_samples < 2:
        raise MalformedSpec("quad_samples must be >= 2")
    rng = np.random.default_rng(seed)
    std = proposal_std or default_proposal_std(phi)
    d = phi.d
    v1 = std * rng.standard_normal((quad_samples, d))
    om = uniform_directions(rng, quad_samples, d)
    wq = sphere_area(d) / gaussian_density(v1, std)
    nodes = phi.points
    flat = phi.flat.copy()
    phi_v1 = interp_many(flat, v1, phi.vmax, phi.spacing, phi.n, 2)
    phi_v1_hi = interp_many(flat, v1, phi.vmax, phi.spacing, phi.n, 3)
    qs = [] if test_functions is None else list(test_functions)
    Q = np.zeros((len(qs), nodes.shape[0]))
    for k, q in enumerate(qs):
        Q[k] = (q(nodes) if callable(q) else np.asarray(q, float).reshape(-1)) * phi.weight
    mean, m2, hi, per_sample, leak, total = _collision_kernel(
        flat, nodes, v1, om, wq, phi_v1, phi_v1_hi, phi.vmax, phi.spacing, phi.n, Q)
    S = quad_samples
    mean /= S
    hi /= S
    var = np.maximum(m2 / S - mean**2, 0.0)
    stderr = np.sqrt(var / S)
    leak_frac = leak / total if total > 0 else 0.0
    if leak_frac > LEAK_LIMIT:
        raise CutoffLeak(f"{leak_frac:.3%} of the collision mass scatters outside the grid")
    report = QuadratureReport(S, seed, std, leak_frac, stderr, np.abs(mean - hi))
    out = phi.with_values(mean, error=report.tolerance)
    if not return_report:
        return out
    integrals = [(float(ps.mean()), float(ps.std(ddof=1) / math.sqrt(S))) for ps in per_sample]
    return out, report, integrals


def weak_form_rhs(phi: VelocityGridField, q, quad_samples: int = 200_000, seed: int = 1, *,
                  proposal_std: float | None = None) -> tuple[float, float]:
    """1/2 * int phi(v1) phi(v2) ((v1 - v2).omega)_+ Delta q, by direct Monte Carlo.

    Independent of ``collision_operator_apply``: pairs are drawn jointly and
    q is evaluated at the exact scattered velocities.  Returns (value, stderr).
    """
    rng = np.random.default_rng(seed)
    std = proposal_std or default_proposal_std(phi)
    d = phi.d
    v1 = std * rng.standard_normal((quad_samples, d))
    v2 = std * rng.standard_normal((quad_samples, d))
    om = uniform_directions(rng, quad_samples, d)
    gw = np.maximum(np.sum((v1 - v2) * om, axis=1), 0.0)
    w1 = v1 - gw[:, None] * om
    w2 = v2 + gw[:, None] * om
    dq = q(w1) + q(w2) - q(v1) - q(v2)
    f1 = phi.interpolate(v1)
    f2 = phi.interpolate(v2)
    dens = gaussian_density(v1, std) * gaussian_density(v2, std)
    vals = 0.5 * sphere_area(d) * f1 * f2 * gw * dq / dens
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(quad_samples))


def equilibrium_collision_rate(d: int = 2) -> float:
    """Per-particle collision rate at unit Maxwellian equilibrium, kinetic units.

    Deterministic quadrature of int int int M(v) M(v1) ((v - v1).omega)_+,
    i.e. twice the half-integral counting each collision once per partner.
    """
    if d == 2:
        ang, _ = integrate.quad(lambda t: max(math.cos(t), 0.0), 0.0, 2 * math.pi, points=[math.pi / 2, 1.5 * math.pi])
    elif d == 3:
        ang, _ = integrate.quad(lambda t: 2 * math.pi * math.cos(t) * math.sin(t), 0.0, math.pi / 2)
    else:
        raise MalformedSpec("dimension must be 2 or 3")
    # |v - v1| for independent standard Gaussians: chi law with variance 2 per axis
    area = sphere_area(d)
    dens = lambda r: area * r ** (d - 1) * math.exp(-r * r / 4) / (4 * math.pi) ** (d / 2)
    mean_speed, _ = integrate.quad(lambda r: r * dens(r), 0.0, math.inf)
    return ang * mean_speed
