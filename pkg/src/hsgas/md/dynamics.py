"""Event-driven hard-sphere dynamics on the unit torus."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..core import ParticleSystem, minimal_image
from ..errors import (
    EventCascadeOverflow,
    InconsistentState,
    NonUnitOmega,
    OverlapInput,
    SizeGuard,
)
from . import _kernels as K

OVERLAP_TOL = 1e-9
BRUTE_FORCE_MAX_N = 256
DEFAULT_EVENT_CAP_RATE = 1000.0  # collisions per particle per unit time


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    i: int
    j: int
    omega: np.ndarray
    v_pre: np.ndarray  # shape (2, d): velocities of i and j before impact
    v_post: np.ndarray

    def to_dict(self) -> dict:
        return {
            "t": self.time,
            "i": self.i,
            "j": self.j,
            "omega": self.omega.tolist(),
            "v_pre": self.v_pre.tolist(),
            "v_post": self.v_post.tolist(),
        }


class EventLog:
    """Executed collisions in time order, backed by one row per event."""

    def __init__(self, rows: np.ndarray, d: int):
        self.d = d
        self._rows = np.asarray(rows, dtype=float).reshape(-1, 3 + 5 * d)

    def __len__(self) -> int:
        return self._rows.shape[0]

    def __iter__(self) -> Iterator[CollisionEvent]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> CollisionEvent:
        r, d = self._rows[k], self.d
        return CollisionEvent(
            time=float(r[0]),
            i=int(r[1]),
            j=int(r[2]),
            omega=r[3:3 + d].copy(),
            v_pre=r[3 + d:3 + 3 * d].reshape(2, d).copy(),
            v_post=r[3 + 3 * d:3 + 5 * d].reshape(2, d).copy(),
        )

    @property
    def times(self) -> np.ndarray:
        return self._rows[:, 0].copy()

    @property
    def pairs(self) -> np.ndarray:
        return self._rows[:, 1:3].astype(np.int64)

    @property
    def rows(self) -> np.ndarray:
        return self._rows.copy()

    def conservation_errors(self) -> tuple[float, float]:
        """Worst relative pairwise momentum and energy mismatch over all events."""
        if not len(self):
            return 0.0, 0.0
        d = self.d
        pre = self._rows[:, 3 + d:3 + 3 * d].reshape(-1, 2, d)
        post = self._rows[:, 3 + 3 * d:3 + 5 * d].reshape(-1, 2, d)
        p_err = np.linalg.norm(pre.sum(1) - post.sum(1), axis=1)
        p_scale = np.maximum(np.linalg.norm(pre, axis=2).sum(1), 1e-300)
        e_pre = np.sum(pre**2, axis=(1, 2))
        e_post = np.sum(post**2, axis=(1, 2))
        e_err = np.abs(e_pre - e_post) / np.maximum(e_pre, 1e-300)
        return float(np.max(p_err / p_scale)), float(np.max(e_err))

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for ev in self:
                fh.write(json.dumps(ev.to_dict()) + "\n")

    @classmethod
    def from_jsonl(cls, path, d: int) -> "EventLog":
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    e = json.loads(line)
                    rows.append([e["t"], e["i"], e["j"], *e["omega"],
                                 *np.ravel(e["v_pre"]), *np.ravel(e["v_post"])])
        return cls(np.array(rows).reshape(-1, 3 + 5 * d), d)


# ---------------------------------------------------------------------------
# single pair


def predict_pair_collision(z_i, z_j, eps: float, horizon: float):
    """First contact time in (0, horizon] of two spheres and the contact direction.

    ``z_i`` and ``z_j`` are ``(x, v)`` pairs on the unit torus.  Returns
    ``None`` when the spheres do not touch within the horizon.
    """
    (xi, vi), (xj, vj) = z_i, z_j
    x = np.array([xi, xj], dtype=float)
    v = np.array([vi, vj], dtype=float)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sep = float(np.linalg.norm(minimal_image(x[0], x[1])))
    if sep < eps - OVERLAP_TOL:
        raise OverlapInput(f"initial separation {sep} below diameter {eps}")
    x = x - np.floor(x)
    t = K.pair_time(x, v, np.zeros(2), 0, 1, float(eps), float(horizon), np.empty(12))
    if not math.isfinite(t):
        return None
    contact = minimal_image(x[0] + v[0] * t, x[1] + v[1] * t)
    return t, contact / np.linalg.norm(contact)


def apply_scattering(v_i, v_j, omega):
    """Elastic hard-sphere collision rule for contact direction omega (from i to j)."""
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise NonUnitOmega(f"|omega| = {np.linalg.norm(omega)!r}")
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    g = np.dot(v_i - v_j, omega)
    return v_i - g * omega, v_j + g * omega


def reverse_velocities(system: ParticleSystem) -> ParticleSystem:
    return system.replace(velocities=-system.velocities)


# ---------------------------------------------------------------------------
# many particles


def choose_cells(n: int, eps: float, d: int, per_cell: float = 2.0) -> int:
    """Cells per axis: edge strictly above eps, about ``per_cell`` particles each.

    Returns 1 (all-pairs scan) when fewer than three cells per axis fit.
    """
    by_eps = int(math.floor(1.0 / (eps * (1.0 + 1e-6))))
    by_density = int(math.floor((max(n, 1) / per_cell) ** (1.0 / d)))
    nc = min(by_eps, by_density)
    return nc if nc >= 3 else 1


def _check_input(system: ParticleSystem) -> None:
    if system.n >= 2:
        dmin = system.min_pair_distance()
        if dmin < system.scaling.eps - OVERLAP_TOL:
            raise InconsistentState(f"overlapping input: min pair distance {dmin}")


def _arrays(system: ParticleSystem):
    x = np.array(system.positions, dtype=float)
    x = x - np.floor(x)
    x[x >= 1.0] = 0.0
    v = np.array(system.velocities, dtype=float)
    tl = np.full(system.n, system.time)
    return x, v, tl


def _finish(system, x, v, t_end, status, log, n_log, cap, check):
    if status == K.STATUS_OVERFLOW:
        raise EventCascadeOverflow(f"more than {cap} collisions; near-pathological configuration")
    if status == K.STATUS_INCONSISTENT:
        raise InconsistentState("collision predicted before the last executed event")
    out = system.replace(time=t_end, positions=x, velocities=v)
    if check:
        _check_output(out)
    return out, EventLog(log[:n_log], system.d)


def _check_output(system: ParticleSystem) -> None:
    if system.n >= 2:
        dmin = system.min_pair_distance()
        if dmin < system.scaling.eps - OVERLAP_TOL:
            raise InconsistentState(f"overlap after advance: min pair distance {dmin}")


def _event_cap(n: int, duration: float, rate: float) -> int:
    return int(rate * max(n, 1) * max(duration, 0.0)) + 1000


def advance(system: ParticleSystem, duration: float, *, event_cap_rate: float = DEFAULT_EVENT_CAP_RATE,
            cells_per_axis: int | None = None, check: bool = True,
            return_stats: bool = False):
    """Exact event-driven evolution over ``duration`` using a cell grid.

    Returns ``(system, log)``, plus a stats dict with the number of
    cell-crossing events when ``return_stats`` is set.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if check:
        _check_input(system)
    x, v, tl = _arrays(system)
    eps = system.scaling.eps
    nc = cells_per_axis or choose_cells(system.n, eps, system.d)
    if nc != 1 and (nc < 3 or 1.0 / nc <= eps):
        raise ValueError(f"cells per axis must be 1 or >= 3 with edge > eps, got {nc}")
    t_end = system.time + duration
    cap = _event_cap(system.n, duration, event_cap_rate)
    if system.n == 0:
        out = system.replace(time=t_end)
        res = (out, EventLog(np.empty((0, 3 + 5 * system.d)), system.d))
        return (*res, {"crossings": 0, "cells_per_axis": nc}) if return_stats else res
    status, log, n_log, n_cross = K.advance_cells(x, v, tl, system.time, t_end, eps, nc, cap)
    out, elog = _finish(system, x, v, t_end, status, log, n_log, cap, check)
    if return_stats:
        return out, elog, {"crossings": int(n_cross), "cells_per_axis": nc}
    return out, elog


def brute_force_advance(system: ParticleSystem, duration: float, *,
                        event_cap_rate: float = DEFAULT_EVENT_CAP_RATE, check: bool = True):
    """All-pairs rescan after every event; the correctness oracle for ``advance``."""
    if system.n > BRUTE_FORCE_MAX_N:
        raise SizeGuard(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {system.n}")
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if check:
        _check_input(system)
    x, v, tl = _arrays(system)
    t_end = system.time + duration
    cap = _event_cap(system.n, duration, event_cap_rate)
    status, log, n_log = K.advance_bruteforce(x, v, tl, system.time, t_end, system.scaling.eps, cap)
    return _finish(system, x, v, t_end, status, log, n_log, cap, check)


def trajectory(system: ParticleSystem, times, **kwargs):
    """Advance through increasing absolute ``times``; yields (system, log) at each."""
    current = system
    for t in times:
        if t < current.time - 1e-15:
            raise ValueError("sample times must be nondecreasing and not before the start")
        current, log = advance(current, max(t - current.time, 0.0), **kwargs)
        yield current, log
