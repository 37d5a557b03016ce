"""Boltzmann entropy -int f log f of grid fields and velocity histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NegativeMass
from .grid import VelocityGridField


@dataclass(frozen=True)
class VelocityHistogram:
    """Counts on a uniform box ``[-vmax, vmax]^d`` with ``bins`` per axis."""

    counts: np.ndarray
    vmax: float
    bins: int

    @property
    def cell_volume(self) -> float:
        return (2 * self.vmax / self.bins) ** self.counts.ndim

    @classmethod
    def from_samples(cls, v, bins: int = 40, vmax: float = 6.0) -> "VelocityHistogram":
        v = np.asarray(v, dtype=float)
        counts, _ = np.histogramdd(v, bins=[np.linspace(-vmax, vmax, bins + 1)] * v.shape[1])
        return cls(counts, vmax, bins)


def _xlogx(f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] = f[pos] * np.log(f[pos])
    return out


def entropy(obj) -> float:
    """-sum f log f times the quadrature weight, with 0 log 0 = 0."""
    if isinstance(obj, VelocityHistogram):
        counts = np.asarray(obj.counts, dtype=float)
        if np.any(counts < 0) or counts.sum() <= 0:
            raise NegativeMass("histogram needs nonnegative counts with positive total")
        f = counts / (counts.sum() * obj.cell_volume)
        return float(-np.sum(_xlogx(f)) * obj.cell_volume)
    if isinstance(obj, VelocityGridField):
        f = obj.flat
        if np.any(f < 0) or f.sum() <= 0:
            raise NegativeMass("field needs nonnegative values with positive mass")
        return float(-np.sum(_xlogx(f)) * obj.weight)
    raise TypeError("entropy expects a VelocityHistogram or VelocityGridField")


def entropy_with_error(hist: VelocityHistogram) -> tuple[float, float]:
    """Plug-in histogram entropy and its delta-method standard error.

    With bin probabilities p_b and M samples, S = -sum p_b log(p_b / vol) and
    Var S ~ (sum p (log p)^2 - (sum p log p)^2) / M.
    """
    counts = np.asarray(hist.counts, dtype=float).ravel()
    total = counts.sum()
    if np.any(counts < 0) or total <= 0:
        raise NegativeMass("histogram needs nonnegative counts with positive total")
    p = counts[counts > 0] / total
    lp = np.log(p)
    var = max(float(np.sum(p * lp * lp) - np.sum(p * lp) ** 2), 0.0) / total
    return entropy(hist), math.sqrt(var)


def maxwellian_entropy(d: int, temperature: float = 1.0) -> float:
    """Closed-form differential entropy of a unit-mass Maxwellian."""
    return 0.5 * d * (1.0 + math.log(2 * math.pi * temperature))
