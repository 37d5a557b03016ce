"""Direct simulation Monte Carlo for the hard-sphere Boltzmann equation on the torus."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ..core import TestFunctionSpec, sphere_area
from ..ensembles import InitialDensity
from ..errors import CellUnderflow, MajorantBreach, MalformedSpec
from .collision import equilibrium_collision_rate

MIN_PARTICLES = 10_000
MAX_MAJORANT_DOUBLINGS = 30


@nb.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@nb.njit(cache=True)
def collide_cells(v, order, start, count, coef, dt, gmax):
    """One no-time-counter collision step in every cell.

    Candidate pairs per cell: 0.5 * m (m - 1) * coef * gmax * dt (randomly
    rounded); omega uniform on the sphere; acceptance ((v_i - v_j).omega)_+ / gmax.
    Returns (status, accepted, candidates) with status 1 on a majorant breach.
    """
    d = v.shape[1]
    om = np.empty(d)
    accepted = 0
    cand_total = 0
    for c in range(start.shape[0]):
        m = count[c]
        if m < 2:
            continue
        lam = 0.5 * m * (m - 1) * coef[c] * gmax * dt
        n_cand = int(lam)
        if np.random.random() < lam - n_cand:
            n_cand += 1
        cand_total += n_cand
        s0 = start[c]
        for _ in range(n_cand):
            a = np.random.randint(m)
            b = np.random.randint(m - 1)
            if b >= a:
                b += 1
            i = order[s0 + a]
            j = order[s0 + b]
            nrm = 0.0
            for k in range(d):
                om[k] = np.random.standard_normal()
                nrm += om[k] * om[k]
            nrm = math.sqrt(nrm)
            gw = 0.0
            for k in range(d):
                om[k] /= nrm
                gw += (v[i, k] - v[j, k]) * om[k]
            if gw > gmax:
                return 1, accepted, cand_total
            if gw <= 0.0 or np.random.random() * gmax >= gw:
                continue
            for k in range(d):
                v[i, k] -= gw * om[k]
                v[j, k] += gw * om[k]
            accepted += 1
    return 0, accepted, cand_total


@dataclass
class DsmcState:
    """Simulated particles, each carrying weight 1 / M_s of the unit mass."""

    x: np.ndarray
    v: np.ndarray
    time: float
    dt: float
    cells: tuple
    weight: float

    def cell_index(self) -> np.ndarray:
        idx = np.zeros(self.x.shape[0], dtype=np.int64)
        for k, nk in enumerate(self.cells):
            ck = np.minimum((self.x[:, k] * nk).astype(np.int64), nk - 1)
            idx = idx * nk + ck
        return idx


@dataclass
class DsmcResult:
    times: np.ndarray
    observables: dict  # name -> (means, stderrs) arrays over times
    histograms: list = field(default_factory=list)  # dicts keyed by t, cell
    velocities: list = field(default_factory=list)  # per time, when requested
    stats: dict = field(default_factory=dict)

    def histograms_to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.histograms:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def mean_free_time(alpha: float = 1.0, d: int = 2) -> float:
    return alpha / equilibrium_collision_rate(d)


def dsmc_solve(f0: InitialDensity, T: float, dt: float, cells=1, particles: int = 100_000, seed: int = 0, *,
               alpha: float = 1.0, sample_times=None, observables=None, collisions: bool = True,
               hist_bins: int = 0, hist_vmax: float = 6.0, keep_velocities: bool = False,
               strict: bool = True) -> DsmcResult:
    """Strang-split DSMC: half transport, per-cell stochastic collisions, half transport.

    ``cells`` is an int (same on every axis) or one count per axis; the collision
    term carries the factor 1/alpha.  Observables are TestFunctionSpec or
    callables h(x, v) averaged over particles at each sample time.
    """
    d = f0.d
    cells = tuple([int(cells)] * d) if np.isscalar(cells) else tuple(int(c) for c in cells)
    if len(cells) != d or min(cells) < 1:
        raise MalformedSpec("cells must give a positive count per axis")
    if dt <= 0 or T < 0:
        raise MalformedSpec("need dt > 0 and T >= 0")
    tau = mean_free_time(alpha, d)
    if strict:
        if dt > 0.1 * tau * (1 + 1e-12):
            raise MalformedSpec(f"dt = {dt} exceeds 0.1 mean free time ({0.1 * tau:.4g})")
        if particles < MIN_PARTICLES:
            raise MalformedSpec(f"need at least {MIN_PARTICLES} simulated particles")
        mfp = tau * math.sqrt(math.pi / 2) if d == 2 else tau * math.sqrt(8 / math.pi)
        edge = min(1.0 / c for c in cells)
        if edge < mfp / 8:
            raise MalformedSpec(f"cell edge {edge:.4g} below mean free path / 8 ({mfp / 8:.4g})")
    times = np.asarray(sorted(sample_times) if sample_times is not None else [T], dtype=float)
    steps = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - times) > 1e-9 * max(1.0, T)) or np.any(times > T + 1e-12) or np.any(times < 0):
        raise MalformedSpec("sample times must lie on the dt grid within [0, T]")
    rng = np.random.default_rng(seed)
    _seed(int(rng.integers(2**31 - 1)))
    state = DsmcState(f0.sample_positions(rng, particles), f0.sample_velocities(rng, particles),
                      0.0, dt, cells, 1.0 / particles)
    n_cells = int(np.prod(cells))
    vol = 1.0 / n_cells
    coef = np.full(n_cells, sphere_area(d) / (alpha * particles * vol))
    p0 = state.v.sum(0)
    e0 = float(np.sum(state.v**2))
    speeds = np.sqrt(np.sum(state.v**2, axis=1))
    gmax = 2.0 * float(np.max(speeds)) if particles else 1.0
    obs = list(observables or [])
    names = [o.to_json() if isinstance(o, TestFunctionSpec) else getattr(o, "__name__", f"h{k}")
             for k, o in enumerate(obs)]
    means = np.zeros((len(obs), len(times)))
    errs = np.zeros((len(obs), len(times)))
    result = DsmcResult(times, {}, stats={"collisions": 0, "candidates": 0, "majorant_doublings": 0})

    def record(k_time):
        for q, o in enumerate(obs):
            vals = np.asarray(o(state.x, state.v), dtype=float)
            means[q, k_time] = vals.mean()
            errs[q, k_time] = vals.std(ddof=1) / math.sqrt(len(vals))
        if hist_bins:
            _histograms(state, times[k_time], hist_bins, hist_vmax, result.histograms)
        if keep_velocities:
            result.velocities.append(state.v.copy())

    k_time = 0
    while k_time < len(times) and steps[k_time] == 0:
        record(k_time)
        k_time += 1
    n_steps = int(steps[-1]) if len(steps) else 0
    for step in range(1, n_steps + 1):
        state.x = np.mod(state.x + 0.5 * dt * state.v, 1.0)
        if collisions:
            cid = state.cell_index()
            order = np.argsort(cid, kind="stable")
            count = np.bincount(cid, minlength=n_cells)
            if np.any(count < 2):
                raise CellUnderflow(f"{int(np.sum(count < 2))} cells hold fewer than 2 particles")
            start = np.concatenate([[0], np.cumsum(count)[:-1]])
            saved = state.v.copy()
            for _ in range(MAX_MAJORANT_DOUBLINGS):
                status, acc, cand = collide_cells(state.v, order, start, count, coef, dt, gmax)
                if status == 0:
                    break
                state.v[:] = saved
                gmax *= 2.0
                result.stats["majorant_doublings"] += 1
            else:
                raise MajorantBreach("majorant doubled too often")
            result.stats["collisions"] += int(acc)
            result.stats["candidates"] += int(cand)
        state.x = np.mod(state.x + 0.5 * dt * state.v, 1.0)
        state.x[state.x >= 1.0] = 0.0
        state.time = step * dt
        while k_time < len(times) and steps[k_time] == step:
            record(k_time)
            k_time += 1
    result.observables = {nm: (means[q], errs[q]) for q, nm in enumerate(names)}
    p_scale = math.sqrt(e0) if e0 > 0 else 1.0
    result.stats["momentum_drift"] = float(np.max(np.abs(state.v.sum(0) - p0)) / p_scale)
    result.stats["energy_drift"] = float(abs(np.sum(state.v**2) - e0) / max(e0, 1e-300))
    result.stats["gmax"] = gmax
    return result


def _histograms(state: DsmcState, t: float, bins: int, vmax: float, out: list) -> None:
    cid = state.cell_index()
    edges = [np.linspace(-vmax, vmax, bins + 1)] * state.v.shape[1]
    for c in range(int(np.prod(state.cells))):
        sel = state.v[cid == c]
        counts, _ = np.histogramdd(sel, bins=edges)
        cell = list(np.unravel_index(c, state.cells))
        out.append({"t": float(t), "cell": [int(i) for i in cell], "n": int(sel.shape[0]),
                    "vmax": vmax, "bins": bins, "counts": counts.astype(int).ravel().tolist()})
