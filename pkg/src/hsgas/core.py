"""Shared domain types: scaling parameters, torus geometry, test functions, particle states."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma

from .errors import InvalidDimension, MalformedSpec, ScalingViolation

PACKING_CAP = 0.05
SUPPORTED_DIMS = (2, 3)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2 * math.pi ** (d / 2) / gamma(d / 2)


def cross_section_constant(d: int) -> float:
    """Integral of (e . omega)_+ over the unit sphere for a unit vector e."""
    return math.pi ** ((d - 1) / 2) / gamma((d + 1) / 2)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalingParams:
    d: int
    eps: float
    mu: float
    alpha: float = 1.0

    @property
    def packing_fraction(self) -> float:
        return self.mu * self.eps**self.d * unit_ball_volume(self.d) * 2.0 ** (-self.d)

    def to_dict(self) -> dict:
        return {"d": self.d, "eps": self.eps, "mu": self.mu, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScalingParams":
        return validate_scaling(int(data["d"]), float(data["eps"]), float(data.get("alpha", 1.0)))


def validate_scaling(d: int, eps: float, alpha: float = 1.0, check_packing: bool = True) -> ScalingParams:
    """Return scaling parameters with ``mu * eps**(d-1) * alpha == 1``.

    Raises ScalingViolation when the expected packing fraction leaves the
    dilute regime (above ``PACKING_CAP``).
    """
    if int(d) != d or d < 2:
        raise InvalidDimension(f"dimension must be an integer >= 2, got {d!r}")
    d = int(d)
    if d not in SUPPORTED_DIMS:
        raise InvalidDimension(f"dimension {d} not supported (supported: {SUPPORTED_DIMS})")
    if not (0.0 < eps < 0.5):
        raise ScalingViolation(f"eps must lie in (0, 0.5), got {eps}")
    if not alpha > 0:
        raise ScalingViolation(f"alpha must be positive, got {alpha}")
    mu = 1.0 / (alpha * eps ** (d - 1))
    params = ScalingParams(d=d, eps=float(eps), mu=mu, alpha=float(alpha))
    if check_packing and params.packing_fraction >= PACKING_CAP:
        raise ScalingViolation(
            f"packing fraction {params.packing_fraction:.4g} exceeds dilute cap {PACKING_CAP}"
        )
    return params


def scaling_from_mu(d: int, mu: float, alpha: float = 1.0) -> ScalingParams:
    """Convenience inverse of validate_scaling: pick eps from the intensity."""
    eps = (1.0 / (alpha * mu)) ** (1.0 / (d - 1))
    return validate_scaling(d, eps, alpha)


# ---------------------------------------------------------------------------
# torus geometry


def wrap(x):
    """Map coordinates to [0, 1)."""
    y = np.asarray(x, dtype=float)
    y = y - np.floor(y)
    # y can round to exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def minimal_image(x1, x2) -> np.ndarray:
    """Representative of x2 - x1 on the unit torus, components in [-0.5, 0.5)."""
    dx = np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float)
    return dx - np.floor(dx + 0.5)


def torus_distance(x1, x2) -> np.ndarray:
    return np.linalg.norm(minimal_image(x1, x2), axis=-1)


def maxwellian(v) -> np.ndarray | float:
    """Standard Maxwellian (2 pi)^{-d/2} exp(-|v|^2/2); d is the last axis length."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    out = (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(v * v, axis=-1))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# test functions

KINDS = ("fourier-hermite", "gaussian-bump", "tabulated", "constant", "collision-invariant")


def write_table_csv(path, axes: Sequence[str], nodes: Sequence[np.ndarray], values: np.ndarray) -> None:
    """Write a tensor-grid table as CSV rows ``axis coordinates..., value``."""
    values = np.asarray(values, dtype=float)
    grids = np.meshgrid(*nodes, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(axes) + ["value"])
        for idx in np.ndindex(values.shape):
            w.writerow([repr(float(g[idx])) for g in grids] + [repr(float(values[idx]))])


def read_table_csv(path) -> tuple[list[str], list[np.ndarray], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[-1] != "value":
        raise MalformedSpec(f"table {path}: last header column must be 'value'")
    axes = header[:-1]
    nodes = [np.unique(body[:, k]) for k in range(len(axes))]
    shape = tuple(len(n) for n in nodes)
    if body.shape[0] != int(np.prod(shape)):
        raise MalformedSpec(f"table {path} is not a full tensor grid")
    values = np.zeros(shape)
    index = [np.searchsorted(n, body[:, k]) for k, n in enumerate(nodes)]
    values[tuple(index)] = body[:, -1]
    return axes, nodes, values


def _axis_column(axis: str, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    if len(axis) < 2 or axis[0] not in "xv" or not axis[1:].isdigit():
        raise MalformedSpec(f"bad table axis name {axis!r}")
    k = int(axis[1:]) - 1
    src = x if axis[0] == "x" else v
    if not 0 <= k < src.shape[1]:
        raise MalformedSpec(f"table axis {axis!r} out of range")
    return src[:, k]


@dataclass(frozen=True)
class TestFunctionSpec:
    """Declarative observable h(x, v).

    ``params`` by kind:

    * constant: ``value``
    * fourier-hermite: ``modes`` (ints, one per axis), ``hermite`` (ints, one per
      velocity axis), optional ``phase`` ("cos" | "sin"), ``amplitude`` and
      ``damping`` beta (multiplies by exp(-beta |v|^2 / 4))
    * gaussian-bump: ``center_v``, ``width_v``, optional ``center_x``/``width_x``, ``amplitude``
    * tabulated: ``table`` (CSV path) or inline ``axes``/``nodes``/``values``
    * collision-invariant: ``which`` in {mass, momentum, energy} and ``component`` for momentum

    ``decay`` = (C, beta) declares |h(x, v)| <= C exp(-beta |v|^2 / 4).
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    decay: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MalformedSpec(f"unknown test-function kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        if self.decay is not None:
            c, beta = self.decay
            if c < 0 or beta <= 0:
                raise MalformedSpec("decay flag needs C >= 0 and beta > 0")
            object.__setattr__(self, "decay", (float(c), float(beta)))
        _check_params(self)

    def __hash__(self):
        return hash(self.to_json())

    def __call__(self, x, v):
        return eval_test_function(self, x, v)

    @property
    def velocity_only(self) -> bool:
        p = self.params
        if self.kind == "fourier-hermite":
            return not any(p.get("modes", []))
        if self.kind == "gaussian-bump":
            return p.get("center_x") is None
        if self.kind == "tabulated":
            return all(a.startswith("v") for a in _table(self)[0])
        return True

    def sup_bound(self) -> float:
        """Upper bound on sup |h| (inf when unbounded)."""
        p = self.params
        if self.kind == "constant":
            return abs(float(p["value"]))
        if self.kind == "collision-invariant":
            return 1.0 if p["which"] == "mass" else math.inf
        if self.kind == "gaussian-bump":
            return abs(float(p.get("amplitude", 1.0)))
        if self.kind == "tabulated":
            return float(np.max(np.abs(_table(self)[2])))
        amp = abs(float(p.get("amplitude", 1.0)))
        beta = p.get("damping")
        if beta is None:
            return amp if not any(p["hermite"]) else math.inf
        grid = np.linspace(-40, 40, 80001)
        damp = np.exp(-beta * grid**2 / 4)
        bound = amp
        for n in p["hermite"]:
            coeff = np.zeros(n + 1)
            coeff[n] = 1.0
            bound *= float(np.max(np.abs(hermeval(grid, coeff) * damp)))
        return bound

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "params": _jsonable(self.params)}
        if self.decay is not None:
            out["params"]["decay"] = list(self.decay)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TestFunctionSpec":
        if "kind" not in data:
            raise MalformedSpec("test function JSON needs a 'kind' field")
        params = dict(data.get("params", {}))
        decay = params.pop("decay", None)
        return cls(data["kind"], params, tuple(decay) if decay is not None else None)

    @classmethod
    def from_json(cls, text: str) -> "TestFunctionSpec":
        return cls.from_dict(json.loads(text))

    # convenience constructors
    @classmethod
    def constant(cls, value: float) -> "TestFunctionSpec":
        return cls("constant", {"value": float(value)}, decay=None)

    @classmethod
    def invariant(cls, which: str, component: int = 0) -> "TestFunctionSpec":
        return cls("collision-invariant", {"which": which, "component": component})

    @classmethod
    def hermite(cls, hermite, modes=None, phase="cos", amplitude=1.0, damping=None, decay=None):
        d = len(hermite)
        params = {
            "modes": list(modes) if modes is not None else [0] * d,
            "hermite": list(hermite),
            "phase": phase,
            "amplitude": float(amplitude),
        }
        if damping is not None:
            params["damping"] = float(damping)
        return cls("fourier-hermite", params, decay)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_params(spec: TestFunctionSpec) -> None:
    p = spec.params
    try:
        if spec.kind == "constant":
            float(p["value"])
        elif spec.kind == "collision-invariant":
            if p["which"] not in ("mass", "momentum", "energy"):
                raise MalformedSpec(f"bad invariant {p['which']!r}")
            int(p.get("component", 0))
        elif spec.kind == "fourier-hermite":
            if len(p["modes"]) != len(p["hermite"]):
                raise MalformedSpec("modes and hermite must have one entry per axis")
            if any(int(n) < 0 for n in p["hermite"]):
                raise MalformedSpec("hermite degrees must be >= 0")
            if p.get("phase", "cos") not in ("cos", "sin"):
                raise MalformedSpec("phase must be cos or sin")
        elif spec.kind == "gaussian-bump":
            if float(p["width_v"]) <= 0:
                raise MalformedSpec("width_v must be positive")
            len(p["center_v"])
            if p.get("center_x") is not None and float(p["width_x"]) <= 0:
                raise MalformedSpec("width_x must be positive")
        elif spec.kind == "tabulated":
            if "table" not in p and not {"axes", "nodes", "values"} <= set(p):
                raise MalformedSpec("tabulated spec needs 'table' or inline axes/nodes/values")
    except (KeyError, TypeError) as exc:
        raise MalformedSpec(f"malformed {spec.kind} spec: {exc}") from exc


_TABLE_CACHE: dict[str, tuple] = {}


def _table(spec: TestFunctionSpec):
    p = spec.params
    if "table" in p:
        key = str(Path(p["table"]).resolve())
        if key not in _TABLE_CACHE:
            _TABLE_CACHE[key] = read_table_csv(key)
        return _TABLE_CACHE[key]
    return list(p["axes"]), [np.asarray(n, float) for n in p["nodes"]], np.asarray(p["values"], float)


def eval_test_function(spec: TestFunctionSpec, x, v):
    """Evaluate h at one point (returns float) or at arrays of shape (n, d)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    scalar = v.ndim == 1
    x2 = np.atleast_2d(x)
    v2 = np.atleast_2d(v)
    out = _evaluate(spec, x2, v2)
    return float(out[0]) if scalar else out


def _evaluate(spec: TestFunctionSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    p = spec.params
    n = v.shape[0]
    if spec.kind == "constant":
        return np.full(n, float(p["value"]))
    if spec.kind == "collision-invariant":
        which = p["which"]
        if which == "mass":
            return np.ones(n)
        if which == "momentum":
            return v[:, int(p.get("component", 0))].copy()
        return np.sum(v * v, axis=1)
    if spec.kind == "fourier-hermite":
        modes = np.asarray(p["modes"], dtype=float)
        out = np.full(n, float(p.get("amplitude", 1.0)))
        if np.any(modes):
            phase = 2 * np.pi * (x @ modes)
            out *= np.cos(phase) if p.get("phase", "cos") == "cos" else np.sin(phase)
        elif p.get("phase", "cos") == "sin":
            out[:] = 0.0
        for j, deg in enumerate(p["hermite"]):
            if deg:
                coeff = np.zeros(int(deg) + 1)
                coeff[-1] = 1.0
                out *= hermeval(v[:, j], coeff)
        if p.get("damping") is not None:
            out *= np.exp(-float(p["damping"]) * np.sum(v * v, axis=1) / 4)
        return out
    if spec.kind == "gaussian-bump":
        c = np.asarray(p["center_v"], dtype=float)
        out = float(p.get("amplitude", 1.0)) * np.exp(
            -np.sum((v - c) ** 2, axis=1) / (2 * float(p["width_v"]) ** 2)
        )
        if p.get("center_x") is not None:
            dx = minimal_image(np.asarray(p["center_x"], dtype=float), x)
            out *= np.exp(-np.sum(dx * dx, axis=1) / (2 * float(p["width_x"]) ** 2))
        return out
    axes, nodes, values = _table(spec)
    pts = np.column_stack([_axis_column(a, x, v) for a in axes])
    interp = RegularGridInterpolator(nodes, values, method="linear", bounds_error=False, fill_value=0.0)
    return interp(pts)


# ---------------------------------------------------------------------------
# particle states


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    time: float
    positions: np.ndarray
    velocities: np.ndarray
    scaling: ScalingParams

    def __post_init__(self):
        d = self.scaling.d
        pos = np.array(self.positions, dtype=float).reshape(-1, d)
        vel = np.array(self.velocities, dtype=float).reshape(-1, d)
        if pos.shape != vel.shape:
            raise ValueError("positions and velocities must have matching shapes")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("non-finite particle coordinates")
        pos.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.scaling.d

    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=0)

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.velocities**2))

    def min_pair_distance(self) -> float:
        return min_pair_distance(self.positions, self.scaling.eps)

    def replace(self, **changes) -> "ParticleSystem":
        fields = {"time": self.time, "positions": self.positions, "velocities": self.velocities,
                  "scaling": self.scaling}
        fields.update(changes)
        return ParticleSystem(**fields)

    def to_csv(self, path) -> None:
        """Snapshot CSV: one row per particle, columns x1..xd, v1..vd."""
        d = self.d
        with open(path, "w", newline="") as fh:
            fh.write(f"# time={self.time!r} d={d} eps={self.scaling.eps!r} alpha={self.scaling.alpha!r}\n")
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)])
            for xi, vi in zip(self.positions, self.velocities):
                w.writerow([repr(float(c)) for c in xi] + [repr(float(c)) for c in vi])

    @classmethod
    def from_csv(cls, path) -> "ParticleSystem":
        with open(path, newline="") as fh:
            meta_line = fh.readline()
            meta = dict(tok.split("=") for tok in meta_line.lstrip("# ").split())
            rows = list(csv.reader(fh))
        d = int(meta["d"])
        data = np.array(rows[1:], dtype=float).reshape(-1, 2 * d)
        scaling = validate_scaling(d, float(meta["eps"]), float(meta["alpha"]), check_packing=False)
        return cls(float(meta["time"]), data[:, :d], data[:, d:], scaling)


def min_pair_distance(positions: np.ndarray, eps: float) -> float:
    """Smallest torus distance between distinct particles (inf if fewer than two)."""
    from scipy.spatial import cKDTree

    n = len(positions)
    if n < 2:
        return math.inf
    tree = cKDTree(wrap(positions), boxsize=1.0)
    r = 4 * eps
    while True:
        pairs = tree.query_pairs(r, output_type="ndarray")
        if len(pairs):
            dist = torus_distance(positions[pairs[:, 0]], positions[pairs[:, 1]])
            return float(dist.min())
        if r >= 0.25:
            break
        r = min(2 * r, 0.25)
    # sparse configuration: exhaustive scan
    iu, ju = np.triu_indices(n, 1)
    return float(torus_distance(positions[iu], positions[ju]).min())
