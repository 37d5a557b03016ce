"""Kac's homogeneous jump process on velocities with the hard-sphere kernel."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..core import sphere_area
from ..errors import MajorantBreach, MalformedSpec
from .dsmc import _seed

MIN_PARTICLES = 1000


@nb.njit(cache=True)
def kac_run(v, times, rate_coef):
    """Exact event-by-event simulation with majorant 2 * max speed and thinning.

    Each unordered pair jumps at rate rate_coef * ((v_i - v_j).omega)_+ per unit
    solid angle.  Since every relative speed is bounded by twice the largest
    speed, and that bound is refreshed after each accepted jump, thinning is
    exact.  Returns (snapshots, accepted, candidates, status).
    """
    m, d = v.shape
    out = np.empty((times.shape[0], m, d))
    om = np.empty(d)
    vmax2 = 0.0
    for i in range(m):
        s = 0.0
        for k in range(d):
            s += v[i, k] * v[i, k]
        vmax2 = max(vmax2, s)
    t = 0.0
    k_time = 0
    accepted = 0
    cand = 0
    npairs = 0.5 * m * (m - 1)
    while k_time < times.shape[0]:
        gmax = 2.0 * math.sqrt(vmax2)
        lam = npairs * rate_coef * gmax
        t += np.random.exponential(1.0 / lam) if lam > 0 else np.inf
        while k_time < times.shape[0] and times[k_time] < t:
            out[k_time] = v
            k_time += 1
        if k_time >= times.shape[0]:
            break
        cand += 1
        a = np.random.randint(m)
        b = np.random.randint(m - 1)
        if b >= a:
            b += 1
        nrm = 0.0
        for k in range(d):
            om[k] = np.random.standard_normal()
            nrm += om[k] * om[k]
        nrm = math.sqrt(nrm)
        gw = 0.0
        for k in range(d):
            om[k] /= nrm
            gw += (v[a, k] - v[b, k]) * om[k]
        if gw > gmax * (1 + 1e-12):
            return out, accepted, cand, 1
        if gw <= 0.0 or np.random.random() * gmax >= gw:
            continue
        sa = 0.0
        sb = 0.0
        for k in range(d):
            v[a, k] -= gw * om[k]
            v[b, k] += gw * om[k]
            sa += v[a, k] * v[a, k]
            sb += v[b, k] * v[b, k]
        vmax2 = max(vmax2, sa, sb)
        accepted += 1
    return out, accepted, cand, 0


@dataclass
class KacTrajectory:
    times: np.ndarray
    velocities: np.ndarray  # (n_times, M, d)
    accepted: int
    candidates: int


def kac_homogeneous(f0, particles: int, T: float, seed: int = 0, *, sample_times=None,
                    alpha: float = 1.0, strict: bool = True) -> KacTrajectory:
    """Velocity ensemble of the Kac process at the sample times (default: [0, T]).

    ``f0`` is an InitialDensity (velocity part used) or a callable
    ``(rng, m) -> velocities``.  Each particle carries weight 1/particles, so
    the mean-field collision term has coefficient 1/alpha.
    """
    if strict and particles < MIN_PARTICLES:
        raise MalformedSpec(f"need at least {MIN_PARTICLES} particles")
    if T < 0:
        raise MalformedSpec("T must be nonnegative")
    rng = np.random.default_rng(seed)
    _seed(int(rng.integers(2**31 - 1)))
    v = f0.sample_velocities(rng, particles) if hasattr(f0, "sample_velocities") else f0(rng, particles)
    v = np.ascontiguousarray(v, dtype=float)
    times = np.asarray(sorted(sample_times) if sample_times is not None else [0.0, T], dtype=float)
    if np.any(times < 0) or np.any(times > T + 1e-12):
        raise MalformedSpec("sample times must lie in [0, T]")
    coef = sphere_area(v.shape[1]) / (alpha * particles)
    snaps, acc, cand, status = kac_run(v, times, coef)
    if status:
        raise MajorantBreach("relative speed exceeded twice the maximal speed")
    return KacTrajectory(times, snaps, int(acc), int(cand))
