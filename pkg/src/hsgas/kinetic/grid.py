"""Uniform symmetric velocity grids and tensor interpolation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ..core import maxwellian, read_table_csv, write_table_csv
from ..errors import MalformedSpec

DEFAULT_VMAX = 6.0
DEFAULT_NODES = 41


@dataclass(eq=False)
class VelocityGridField:
    """Values on the tensor grid ``linspace(-vmax, vmax, n)^d``.

    ``error`` optionally carries a per-node error bound for computed fields.
    """

    d: int
    vmax: float
    n: int
    values: np.ndarray
    error: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise MalformedSpec(f"velocity grid dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 3 or self.vmax <= 0:
            raise MalformedSpec("grid needs n >= 3 nodes per axis and vmax > 0")
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.n**self.d:
            raise MalformedSpec(f"expected {self.n ** self.d} values, got {vals.size}")
        self.values = vals.reshape((self.n,) * self.d)

    @property
    def spacing(self) -> float:
        return 2.0 * self.vmax / (self.n - 1)

    @property
    def weight(self) -> float:
        return self.spacing**self.d

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.vmax, self.vmax, self.n)

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.d, self.vmax, self.n)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def integrate(self, q=None) -> float:
        """Grid quadrature of f (times q(v) when given)."""
        w = self.flat if q is None else self.flat * _as_values(q, self.points)
        return float(np.sum(w) * self.weight)

    def interpolate(self, v, extrapolate: bool = False) -> np.ndarray:
        """Tensor quadratic interpolation; zero outside the grid box unless ``extrapolate``.

        Extrapolation continues the boundary quadratic, which is exact for
        polynomials of degree <= 2 such as the collision invariants.
        """
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return interp_many(self.flat, v, self.vmax, self.spacing, self.n, 2, extrapolate)

    def with_values(self, values, error=None) -> "VelocityGridField":
        return VelocityGridField(self.d, self.vmax, self.n, np.asarray(values, float), error)

    def like(self, func) -> "VelocityGridField":
        return self.with_values(_as_values(func, self.points))

    @classmethod
    def from_function(cls, func, d: int = 2, vmax: float = DEFAULT_VMAX, n: int = DEFAULT_NODES):
        pts = grid_points(d, vmax, n)
        return cls(d, vmax, n, _as_values(func, pts))

    @classmethod
    def maxwellian(cls, d: int = 2, vmax: float = DEFAULT_VMAX, n: int = DEFAULT_NODES):
        return cls.from_function(maxwellian, d, vmax, n)

    def to_csv(self, path) -> None:
        axes = [f"v{k + 1}" for k in range(self.d)]
        write_table_csv(path, axes, [self.axis] * self.d, self.values)

    @classmethod
    def from_csv(cls, path) -> "VelocityGridField":
        axes, nodes, values = read_table_csv(path)
        n = len(nodes[0])
        vmax = float(nodes[0][-1])
        for a in nodes:
            if len(a) != n or not np.allclose(a, np.linspace(-vmax, vmax, n), atol=1e-12 * vmax):
                raise MalformedSpec("CSV grid is not uniform and symmetric")
        return cls(len(axes), vmax, n, values)


def grid_points(d: int, vmax: float, n: int) -> np.ndarray:
    ax = np.linspace(-vmax, vmax, n)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _as_values(func, pts: np.ndarray) -> np.ndarray:
    if callable(func):
        try:
            out = np.asarray(func(pts), dtype=float)
        except TypeError:
            out = np.asarray(func(np.zeros_like(pts), pts), dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.asarray([func(p) for p in pts], dtype=float)
        return out
    return np.asarray(func, dtype=float).reshape(-1)


def field_values(h, grid: VelocityGridField) -> np.ndarray:
    """Nodal values of a velocity test function (callable, TestFunctionSpec or field)."""
    if isinstance(h, VelocityGridField):
        if (h.d, h.n) != (grid.d, grid.n) or not math.isclose(h.vmax, grid.vmax):
            raise MalformedSpec("grid mismatch")
        return h.flat.copy()
    pts = grid.points
    if hasattr(h, "kind") and hasattr(h, "params"):
        return np.asarray(h(np.zeros_like(pts), pts), dtype=float)
    return _as_values(h, pts)


# ---------------------------------------------------------------------------
# interpolation kernels


@nb.njit(cache=True)
def stencil(u, vmax, h, n, idx, wts, order, base, loc):
    """Fill tensor Lagrange interpolation indices/weights at u; return count (0 if outside).

    ``order`` is 1 (linear), 2 (quadratic, nearest-centred) or 3 (cubic).
    ``base`` (int, d) and ``loc`` (d, 4) are scratch buffers.
    """
    d = u.shape[0]
    width = order + 1
    for k in range(d):
        if abs(u[k]) > vmax:
            return 0
        r = (u[k] + vmax) / h
        if order == 2:
            c = int(math.floor(r + 0.5))
            c = min(max(c, 1), n - 2)
            s = r - c
            base[k] = c - 1
            loc[k, 0] = 0.5 * s * (s - 1.0)
            loc[k, 1] = 1.0 - s * s
            loc[k, 2] = 0.5 * s * (s + 1.0)
        elif order == 1:
            c = min(int(math.floor(r)), n - 2)
            s = r - c
            base[k] = c
            loc[k, 0] = 1.0 - s
            loc[k, 1] = s
        else:
            c = min(max(int(math.floor(r)), 1), n - 3)
            s = r - c
            base[k] = c - 1
            loc[k, 0] = -s * (s - 1.0) * (s - 2.0) / 6.0
            loc[k, 1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
            loc[k, 2] = -(s + 1.0) * s * (s - 2.0) / 2.0
            loc[k, 3] = (s + 1.0) * s * (s - 1.0) / 6.0
    total = width**d
    for m in range(total):
        rem = m
        flat = 0
        w = 1.0
        stride = 1
        for k in range(d - 1, -1, -1):
            o = rem % width
            rem //= width
            flat += (base[k] + o) * stride
            stride *= n
            w *= loc[k, o]
        idx[m] = flat
        wts[m] = w
    return total


@nb.njit(cache=True)
def interp_point(values, u, vmax, h, n, idx, wts, order, base, loc):
    cnt = stencil(u, vmax, h, n, idx, wts, order, base, loc)
    acc = 0.0
    for m in range(cnt):
        acc += wts[m] * values[idx[m]]
    return acc


@nb.njit(cache=True)
def _interp_many(values, pts, vmax, h, n, order, extrapolate):
    d = pts.shape[1]
    idx = np.empty(4**d, np.int64)
    wts = np.empty(4**d)
    base = np.empty(d, np.int64)
    loc = np.empty((d, 4))
    out = np.empty(pts.shape[0])
    for p in range(pts.shape[0]):
        if extrapolate:
            out[p] = interp_fast(values, pts[p], vmax, h, n, order, base, loc, True)[0]
        else:
            out[p] = interp_point(values, pts[p], vmax, h, n, idx, wts, order, base, loc)
    return out


def interp_many(values, pts, vmax, h, n, order=2, extrapolate=False) -> np.ndarray:
    return _interp_many(np.ascontiguousarray(values, dtype=float), np.ascontiguousarray(pts, dtype=float),
                        float(vmax), float(h), int(n), int(order), bool(extrapolate))


@nb.njit(cache=True)
def _weights_1d(x, vmax, h, n, order, k, base, loc):
    r = (x + vmax) / h
    if order == 2:
        c = min(max(int(math.floor(r + 0.5)), 1), n - 2)
        s = r - c
        base[k] = c - 1
        loc[k, 0] = 0.5 * s * (s - 1.0)
        loc[k, 1] = 1.0 - s * s
        loc[k, 2] = 0.5 * s * (s + 1.0)
    elif order == 1:
        c = min(max(int(math.floor(r)), 0), n - 2)
        s = r - c
        base[k] = c
        loc[k, 0] = 1.0 - s
        loc[k, 1] = s
    else:
        c = min(max(int(math.floor(r)), 1), n - 3)
        s = r - c
        base[k] = c - 1
        loc[k, 0] = -s * (s - 1.0) * (s - 2.0) / 6.0
        loc[k, 1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
        loc[k, 2] = -(s + 1.0) * s * (s - 2.0) / 2.0
        loc[k, 3] = (s + 1.0) * s * (s - 1.0) / 6.0


@nb.njit(cache=True)
def interp_fast(values, u, vmax, h, n, order, base, loc, extrapolate=False):
    """Interpolated value at u and an inside-the-box flag (no index buffers)."""
    d = u.shape[0]
    inside = True
    for k in range(d):
        if abs(u[k]) > vmax:
            if not extrapolate:
                return 0.0, False
            inside = False
        _weights_1d(u[k], vmax, h, n, order, k, base, loc)
    w = order + 1
    acc = 0.0
    if d == 2:
        for a in range(w):
            row = (base[0] + a) * n + base[1]
            inner = 0.0
            for b in range(w):
                inner += loc[1, b] * values[row + b]
            acc += loc[0, a] * inner
    elif d == 3:
        for a in range(w):
            for b in range(w):
                row = ((base[0] + a) * n + base[1] + b) * n + base[2]
                inner = 0.0
                for c in range(w):
                    inner += loc[2, c] * values[row + c]
                acc += loc[0, a] * loc[1, b] * inner
    else:
        for a in range(w):
            acc += loc[0, a] * values[base[0] + a]
    return acc, inside
