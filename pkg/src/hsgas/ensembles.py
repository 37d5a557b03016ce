"""Random initial data: grand-canonical hard-sphere configurations."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree

from .core import ParticleSystem, ScalingParams, maxwellian, wrap
from .errors import InvalidDensity, RejectionBudgetExhausted

SPATIAL_KINDS = ("uniform", "cosine")
VELOCITY_KINDS = ("maxwellian", "bimodal")


@dataclass(frozen=True)
class InitialDensity:
    """Product density f0(x, v) = spatial(x) * velocity(v).

    spatial: ``{"kind": "uniform"}`` or ``{"kind": "cosine", "a": a, "axis": 0, "mode": 1}``
    giving 1 + a cos(2 pi mode x_axis) with |a| <= 0.5.

    velocity: ``{"kind": "maxwellian"}`` (optionally ``temperature``) or
    ``{"kind": "bimodal", "shift": u, "std": s}``, an equal mixture of
    Gaussians centred at +-u e_1 with covariance s^2 I.
    """

    d: int = 2
    spatial: Mapping[str, Any] = field(default_factory=lambda: {"kind": "uniform"})
    velocity: Mapping[str, Any] = field(default_factory=lambda: {"kind": "maxwellian"})

    def __post_init__(self):
        object.__setattr__(self, "spatial", dict(self.spatial))
        object.__setattr__(self, "velocity", dict(self.velocity))
        s, vel = self.spatial, self.velocity
        if s.get("kind") not in SPATIAL_KINDS:
            raise InvalidDensity(f"unknown spatial profile {s.get('kind')!r}")
        if s["kind"] == "cosine":
            if abs(float(s.get("a", 0.0))) > 0.5:
                raise InvalidDensity("cosine amplitude must satisfy |a| <= 0.5")
            if not 0 <= int(s.get("axis", 0)) < self.d or int(s.get("mode", 1)) < 1:
                raise InvalidDensity("bad cosine axis/mode")
        if vel.get("kind") not in VELOCITY_KINDS:
            raise InvalidDensity(f"unknown velocity law {vel.get('kind')!r}")
        if vel["kind"] == "maxwellian" and float(vel.get("temperature", 1.0)) <= 0:
            raise InvalidDensity("temperature must be positive")
        if vel["kind"] == "bimodal" and float(vel.get("std", 1.0)) <= 0:
            raise InvalidDensity("bimodal std must be positive")

    # ----- densities
    def spatial_density(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        s = self.spatial
        if s["kind"] == "uniform":
            return np.ones(x.shape[0])
        k = int(s.get("axis", 0))
        return 1.0 + float(s["a"]) * np.cos(2 * np.pi * int(s.get("mode", 1)) * x[:, k])

    def velocity_density(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        vel = self.velocity
        if vel["kind"] == "maxwellian":
            temp = float(vel.get("temperature", 1.0))
            return maxwellian(v / math.sqrt(temp)) / temp ** (self.d / 2)
        u = np.zeros(self.d)
        u[0] = float(vel["shift"])
        s = float(vel["std"])
        scale = s ** (-self.d)
        return 0.5 * scale * (maxwellian((v - u) / s) + maxwellian((v + u) / s))

    def density(self, x, v) -> np.ndarray:
        return self.spatial_density(x) * self.velocity_density(v)

    def velocity_moments(self) -> tuple[np.ndarray, float]:
        """Mean velocity and mean kinetic energy per particle."""
        vel = self.velocity
        if vel["kind"] == "maxwellian":
            return np.zeros(self.d), 0.5 * self.d * float(vel.get("temperature", 1.0))
        u, s = float(vel["shift"]), float(vel["std"])
        return np.zeros(self.d), 0.5 * (self.d * s * s + u * u)

    # ----- sampling
    def sample_positions(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.random((n, self.d))
        s = self.spatial
        if s["kind"] == "cosine" and n:
            a = float(s["a"])
            k = int(s.get("axis", 0))
            mode = int(s.get("mode", 1))
            col = np.empty(n)
            filled = 0
            while filled < n:
                m = 2 * (n - filled) + 16
                prop = rng.random(m)
                keep = prop[rng.random(m) * (1 + abs(a)) < 1 + a * np.cos(2 * np.pi * mode * prop)]
                take = min(len(keep), n - filled)
                col[filled:filled + take] = keep[:take]
                filled += take
            x[:, k] = col
        return x

    def sample_velocities(self, rng: np.random.Generator, n: int) -> np.ndarray:
        vel = self.velocity
        if vel["kind"] == "maxwellian":
            return math.sqrt(float(vel.get("temperature", 1.0))) * rng.standard_normal((n, self.d))
        v = float(vel["std"]) * rng.standard_normal((n, self.d))
        sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        v[:, 0] += sign * float(vel["shift"])
        return v

    def to_dict(self) -> dict:
        return {"d": self.d, "spatial": dict(self.spatial), "velocity": dict(self.velocity)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "InitialDensity":
        return cls(int(data.get("d", 2)), data.get("spatial", {"kind": "uniform"}),
                   data.get("velocity", {"kind": "maxwellian"}))

    @classmethod
    def equilibrium(cls, d: int = 2) -> "InitialDensity":
        return cls(d)

    @classmethod
    def cosine(cls, a: float, d: int = 2) -> "InitialDensity":
        return cls(d, {"kind": "cosine", "a": a, "axis": 0, "mode": 1})

    @classmethod
    def bimodal(cls, shift: float, std: float, d: int = 2) -> "InitialDensity":
        return cls(d, {"kind": "uniform"}, {"kind": "bimodal", "shift": shift, "std": std})


@dataclass(frozen=True)
class GrandCanonicalSpec:
    scaling: ScalingParams
    f0: InitialDensity
    seed: int

    def __post_init__(self):
        if self.f0.d != self.scaling.d:
            raise InvalidDensity("f0 dimension does not match the scaling dimension")

    def to_json(self) -> str:
        return json.dumps({"scaling": self.scaling.to_dict(), "f0": self.f0.to_dict(),
                           "seed": int(self.seed)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GrandCanonicalSpec":
        data = json.loads(text)
        return cls(ScalingParams.from_dict(data["scaling"]), InitialDensity.from_dict(data["f0"]),
                   int(data["seed"]))


@dataclass(frozen=True)
class SamplerReport:
    n: int
    rejections: int
    acceptance_rate: float


def has_overlap(x: np.ndarray, eps: float) -> bool:
    if len(x) < 2:
        return False
    tree = cKDTree(wrap(x), boxsize=1.0)
    return len(tree.query_pairs(eps, output_type="ndarray")) > 0


def sample_grand_canonical(spec: GrandCanonicalSpec, *, max_attempts: int = 10_000,
                           exclusion: bool = True, rng: np.random.Generator | None = None):
    """Exact draw from the grand-canonical hard-sphere measure by whole-configuration rejection.

    N ~ Poisson(mu), N iid points from f0; accepted iff every torus distance
    exceeds eps.  ``exclusion=False`` gives the eps -> 0 (ideal gas) sampler.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    scaling, f0 = spec.scaling, spec.f0
    for attempt in range(max_attempts):
        n = int(rng.poisson(scaling.mu))
        x = f0.sample_positions(rng, n)
        v = f0.sample_velocities(rng, n)
        if exclusion and has_overlap(x, scaling.eps):
            continue
        report = SamplerReport(n=n, rejections=attempt, acceptance_rate=1.0 / (attempt + 1))
        return ParticleSystem(0.0, x, v, scaling), report
    raise RejectionBudgetExhausted(
        f"no admissible configuration in {max_attempts} attempts; scaling too dense?"
    )


def sample_equilibrium(scaling: ScalingParams, seed: int, **kwargs):
    """Grand-canonical sample with spatially uniform positions and Maxwellian velocities."""
    spec = GrandCanonicalSpec(scaling, InitialDensity.equilibrium(scaling.d), seed)
    return sample_grand_canonical(spec, **kwargs)
