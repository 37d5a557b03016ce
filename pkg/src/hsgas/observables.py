"""Replica-ensemble estimators: empirical measures, fluctuation fields, cumulants, CGF, Wick checks."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .core import ParticleSystem, ScalingParams, TestFunctionSpec
from .errors import (
    AmplitudeGuard,
    ConfigHashMismatch,
    InsufficientReplicas,
    KTooLarge,
    MalformedSpec,
    MissingSampleTime,
)

Z_CI = 3.0
N_BOOT = 1000
MIN_REPLICAS = 100
MIN_REPLICAS_P4 = 1000


def label_of(h) -> str:
    if isinstance(h, str):
        return h
    if isinstance(h, TestFunctionSpec):
        return h.to_json()
    raise MalformedSpec("observables are addressed by label or TestFunctionSpec")


# ---------------------------------------------------------------------------
# single configurations


def empirical_pairing(system: ParticleSystem, h) -> float:
    """(1/mu) * sum_i h(x_i, v_i)."""
    if system.n == 0:
        return 0.0
    return float(np.sum(h(system.positions, system.velocities)) / system.scaling.mu)


def tensor(*hs) -> Callable:
    """Product test function (z_1, ..., z_k) -> prod_l h_l(z_l)."""
    def hk(*zs):
        out = 1.0
        for h, (x, v) in zip(hs, zs):
            out = out * h(x, v)
        return out
    return hk


def k_particle_pairing(system: ParticleSystem, h_k, k: int) -> float:
    """(1/mu^k) times the sum of h_k over ordered k-tuples of distinct particles.

    ``h_k(z_1, ..., z_k)`` receives ``(x, v)`` array pairs of equal length and
    returns one value per row.
    """
    if k > 3:
        raise KTooLarge(f"k-particle sums are capped at k = 3, got {k}")
    if k < 1:
        raise MalformedSpec("k must be >= 1")
    n = system.n
    mu = system.scaling.mu
    if n < k:
        return 0.0
    x, v = system.positions, system.velocities
    if k == 1:
        return float(np.sum(h_k((x, v))) / mu)
    total = 0.0
    idx = np.arange(n)
    if k == 2:
        for i in range(n):
            j = idx[idx != i]
            zi = (np.repeat(x[i:i + 1], n - 1, 0), np.repeat(v[i:i + 1], n - 1, 0))
            total += float(np.sum(h_k(zi, (x[j], v[j]))))
        return total / mu**2
    for i, j in itertools.permutations(range(n), 2):
        rest = idx[(idx != i) & (idx != j)]
        m = rest.size
        if m == 0:
            continue
        zi = (np.repeat(x[i:i + 1], m, 0), np.repeat(v[i:i + 1], m, 0))
        zj = (np.repeat(x[j:j + 1], m, 0), np.repeat(v[j:j + 1], m, 0))
        total += float(np.sum(h_k(zi, zj, (x[rest], v[rest]))))
    return total / mu**3


# ---------------------------------------------------------------------------
# replica records


@dataclass
class ReplicaRecord:
    """Raw sums of one replica at its sample times.

    ``sums[a, p]`` is sum_i h_a(z_i(t_p)); ``diag[a, p, b, q]`` is
    sum_i h_a(z_i(t_p)) h_b(z_i(t_q)), the same-particle terms removed from
    tuple sums.  ``collisions[p]`` counts collisions up to t_p.
    """

    seed: int
    scaling: ScalingParams
    times: np.ndarray
    observables: list
    sums: np.ndarray
    n: int
    collisions: np.ndarray
    diag: np.ndarray | None = None
    config_hash: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.sums = np.asarray(self.sums, dtype=float).reshape(len(self.observables), len(self.times))
        self.collisions = np.asarray(self.collisions, dtype=np.int64)
        if np.any(np.diff(self.times) <= 0):
            raise MalformedSpec("sample times must be strictly increasing")
        if self.diag is not None:
            k, m = self.sums.shape
            self.diag = np.asarray(self.diag, dtype=float).reshape(k, m, k, m)

    @property
    def mu(self) -> float:
        return self.scaling.mu

    def time_index(self, theta: float) -> int:
        hit = np.nonzero(np.abs(self.times - theta) <= 1e-12 * max(1.0, abs(theta)))[0]
        if hit.size == 0:
            raise MissingSampleTime(f"time {theta} not among sampled times {self.times.tolist()}")
        return int(hit[0])

    def obs_index(self, h) -> int:
        lab = label_of(h)
        try:
            return self.observables.index(lab)
        except ValueError:
            raise MalformedSpec(f"observable {lab!r} not recorded") from None

    def pairing(self, h, theta: float) -> float:
        return float(self.sums[self.obs_index(h), self.time_index(theta)] / self.mu)

    def payload(self) -> dict:
        out = {
            "seed": str(self.seed),
            "scaling": self.scaling.to_dict(),
            "times": self.times.tolist(),
            "observables": list(self.observables),
            "sums": self.sums.tolist(),
            "n": int(self.n),
            "collisions": self.collisions.tolist(),
            "config_hash": self.config_hash,
        }
        if self.diag is not None:
            out["diag"] = self.diag.reshape(-1).tolist()
        return out

    def to_json(self) -> str:
        body = json.dumps(self.payload(), sort_keys=True)
        return json.dumps({"record": json.loads(body), "checksum": _digest(body)}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ReplicaRecord":
        """Parse one JSON line; raises MalformedSpec on checksum or format errors."""
        try:
            wrapper = json.loads(line)
            body = json.dumps(wrapper["record"], sort_keys=True)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedSpec(f"unreadable replica record: {exc}") from exc
        if _digest(body) != wrapper.get("checksum"):
            raise MalformedSpec("replica record checksum mismatch")
        r = wrapper["record"]
        return cls(int(r["seed"]), ScalingParams.from_dict(r["scaling"]), r["times"], list(r["observables"]),
                   r["sums"], int(r["n"]), r["collisions"], r.get("diag"), r.get("config_hash", ""))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_records(path, records: Sequence[ReplicaRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[ReplicaRecord]:
    with open(path) as fh:
        return [ReplicaRecord.from_json(line) for line in fh if line.strip()]


def record_from_trajectory(seed: int, systems: Sequence[ParticleSystem], collisions, observables: dict,
                           config_hash: str = "", with_diag: bool = True) -> ReplicaRecord:
    """Build a record from snapshots of one replica (same particle labels at every time).

    ``observables`` maps labels to callables h(x, v).
    """
    labels = list(observables)
    times = [s.time for s in systems]
    n = systems[0].n
    if any(s.n != n for s in systems):
        raise MalformedSpec("particle number must be constant along a replica")
    cols = np.empty((n, len(labels), len(systems)))
    for p, s in enumerate(systems):
        for a, lab in enumerate(labels):
            cols[:, a, p] = observables[lab](s.positions, s.velocities) if n else 0.0
    sums = cols.sum(axis=0)
    diag = None
    if with_diag:
        flat = cols.reshape(n, -1)
        diag = (flat.T @ flat).reshape(len(labels), len(systems), len(labels), len(systems))
    return ReplicaRecord(seed, systems[0].scaling, times, labels, sums, n, collisions, diag, config_hash)


# ---------------------------------------------------------------------------
# ensembles


class ReplicaEnsemble:
    """Canonically ordered (by seed) replica records sharing one configuration."""

    def __init__(self, records: Sequence[ReplicaRecord]):
        if not records:
            raise InsufficientReplicas("empty ensemble")
        first = records[0]
        for r in records:
            if r.config_hash != first.config_hash:
                raise ConfigHashMismatch("records come from different configurations")
            if r.observables != first.observables or not np.array_equal(r.times, first.times):
                raise ConfigHashMismatch("records disagree on observables or sample times")
            if r.scaling != first.scaling:
                raise ConfigHashMismatch("records disagree on scaling")
        self.records = sorted(records, key=lambda r: r.seed)
        self.mu = first.mu
        self.times = first.times
        self.observables = list(first.observables)
        self._sums = np.stack([r.sums for r in self.records])  # (R, K, m)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def R(self) -> int:
        return len(self.records)

    def _idx(self, h, theta):
        return self.records[0].obs_index(h), self.records[0].time_index(theta)

    def sums(self, h, theta) -> np.ndarray:
        a, p = self._idx(h, theta)
        return self._sums[:, a, p]

    def pairings(self, h, theta) -> np.ndarray:
        """<pi_theta, h> for every replica."""
        return self.sums(h, theta) / self.mu

    def diag(self, h1, t1, h2, t2) -> np.ndarray:
        a, p = self._idx(h1, t1)
        b, q = self._idx(h2, t2)
        if any(r.diag is None for r in self.records):
            raise MalformedSpec("records lack same-particle terms")
        return np.array([r.diag[a, p, b, q] for r in self.records])

    def fields(self, h, theta) -> np.ndarray:
        """Fluctuation field for every replica, centred by the ensemble mean."""
        x = self.pairings(h, theta)
        return math.sqrt(self.mu) * (x - x.mean())

    def stats(self) -> "EnsembleStats":
        return EnsembleStats.from_ensemble(self)


def fluctuation_field(record: ReplicaRecord, h, theta: float, ensemble_mean: float) -> float:
    """sqrt(mu) * (<pi_theta, h> - ensemble mean)."""
    return math.sqrt(record.mu) * (record.pairing(h, theta) - ensemble_mean)


# ---------------------------------------------------------------------------
# summary statistics


@dataclass
class EnsembleStats:
    """Per (observable, time): mean, variance, central moments 3 and 4, R, half-width z*std/sqrt(R)."""

    rows: list = field(default_factory=list)

    COLUMNS = ("observable", "time", "mean", "var", "m3", "m4", "R", "ci")

    @staticmethod
    def moments(values) -> dict:
        x = np.asarray(values, dtype=float)
        R = x.size
        mean = float(x.mean())
        c = x - mean
        var = float(np.sum(c * c) / (R - 1)) if R > 1 else 0.0
        return {"mean": mean, "var": var, "m3": float(np.mean(c**3)), "m4": float(np.mean(c**4)),
                "R": R, "ci": Z_CI * math.sqrt(var / R)}

    @classmethod
    def from_values(cls, table: dict) -> "EnsembleStats":
        """``table`` maps (observable, time) to per-replica values."""
        rows = []
        for (obs, t) in sorted(table, key=lambda k: (k[0], k[1])):
            rows.append({"observable": obs, "time": float(t), **cls.moments(table[(obs, t)])})
        return cls(rows)

    @classmethod
    def from_ensemble(cls, ens: ReplicaEnsemble) -> "EnsembleStats":
        table = {(lab, float(t)): ens.pairings(lab, t) for lab in ens.observables for t in ens.times}
        return cls.from_values(table)

    def get(self, observable, time) -> dict:
        lab = label_of(observable)
        for row in self.rows:
            if row["observable"] == lab and abs(row["time"] - time) <= 1e-12 * max(1.0, abs(time)):
                return row
        raise MissingSampleTime(f"no statistics for ({lab}, {time})")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in self.COLUMNS})

    @classmethod
    def from_csv(cls, path) -> "EnsembleStats":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append({"observable": row["observable"], "time": float(row["time"]),
                             **{k: float(row[k]) for k in ("mean", "var", "m3", "m4", "ci")},
                             "R": int(row["R"])})
        return cls(rows)


@dataclass(frozen=True)
class Estimate:
    """Point estimate with half-width ``ci`` (z = 3 times the bootstrap std)."""

    value: float
    ci: float
    extra: dict = field(default_factory=dict)

    def contains(self, target: float, slack: float = 0.0) -> bool:
        return abs(self.value - target) <= self.ci + slack


def bootstrap_std(stat: Callable[[np.ndarray], float], R: int, n_boot: int = N_BOOT, seed: int = 0) -> float:
    """Standard deviation of ``stat(indices)`` over replica resamples."""
    rng = np.random.default_rng(seed)
    vals = np.array([stat(rng.integers(0, R, R)) for _ in range(n_boot)])
    vals = vals[np.isfinite(vals)]
    return float(vals.std(ddof=1)) if vals.size > 1 else math.inf


def _require(ens: ReplicaEnsemble, minimum: int) -> None:
    if ens.R < minimum:
        raise InsufficientReplicas(f"need at least {minimum} replicas, got {ens.R}")


def estimate_F2_and_cumulant(ens: ReplicaEnsemble, h1, h2, theta1: float, theta2: float, *,
                             n_boot: int = N_BOOT, seed: int = 0, min_replicas: int = MIN_REPLICAS):
    """Two-time, two-particle correlation F2 and the rescaled cumulant f2.

    F2 = E[(S1 S2 - D12)] / mu^2 with D12 the same-particle terms, F1 the
    one-time means, f2 = mu (F2 - F1[h1] F1[h2]).  Returns (F2, f2) Estimates
    whose half-widths come from replica bootstrap.
    """
    if theta2 < theta1:
        raise MalformedSpec("need theta1 <= theta2")
    _require(ens, min_replicas)
    mu = ens.mu
    s1 = ens.sums(h1, theta1)
    s2 = ens.sums(h2, theta2)
    dd = ens.diag(h1, theta1, h2, theta2)
    f2_rep = (s1 * s2 - dd) / mu**2

    def stats(ix):
        F2 = f2_rep[ix].mean()
        return F2, mu * (F2 - (s1[ix].mean() / mu) * (s2[ix].mean() / mu))

    F2, f2 = stats(slice(None))
    rng = np.random.default_rng(seed)
    boot = np.array([stats(rng.integers(0, ens.R, ens.R)) for _ in range(n_boot)])
    sd = boot.std(axis=0, ddof=1)
    return Estimate(float(F2), Z_CI * float(sd[0])), Estimate(float(f2), Z_CI * float(sd[1]))


def _check_cgf_input(h, amplitude: float) -> None:
    if not isinstance(h, TestFunctionSpec):
        return
    if h.decay is None and h.kind not in ("constant", "gaussian-bump"):
        raise MalformedSpec("CGF estimation needs a test function with the Gaussian velocity-decay flag")
    if abs(amplitude) * h.sup_bound() > 1.0 + 1e-12:
        raise AmplitudeGuard(f"sup|s h| = {abs(amplitude) * h.sup_bound():.4g} exceeds 1")


def estimate_cgf(ens: ReplicaEnsemble, h, theta: float, *, amplitude: float = 1.0, spec=None,
                 n_boot: int = N_BOOT, seed: int = 0) -> Estimate:
    """(1/mu) log mean_r exp(mu <pi_theta, s h>) by max-shifted log-sum-exp.

    ``spec`` (or ``h`` itself when a TestFunctionSpec) is checked for the
    amplitude guard.  The estimate carries a warning when the top 1% of
    replicas holds more than half of the exponential mass.
    """
    _check_cgf_input(spec if spec is not None else h, amplitude)
    mu = ens.mu
    e = amplitude * ens.sums(h, theta)
    R = e.size

    def cgf(ix):
        return float((logsumexp(e[ix]) - math.log(R)) / mu)

    value = cgf(np.arange(R))
    warnings = []
    top = max(1, int(math.ceil(0.01 * R)))
    w = np.exp(e - e.max())
    share = float(np.sort(w)[-top:].sum() / w.sum())
    if share > 0.5:
        warnings.append(f"top 1% of replicas carry {share:.0%} of the exponential mass; estimate unreliable")
    sd = bootstrap_std(cgf, R, n_boot, seed)
    return Estimate(value, Z_CI * sd, {"warnings": warnings, "top_share": share})


def pair_partitions(items: Sequence[int]):
    """All partitions of ``items`` into unordered pairs (none for odd length)."""
    items = list(items)
    if not items:
        yield []
        return
    if len(items) % 2:
        return
    a = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for tail in pair_partitions(rest):
            yield [(a, items[k])] + tail


def wick_check(ens: ReplicaEnsemble, fields: Sequence[tuple], *, n_boot: int = N_BOOT, seed: int = 0,
               min_replicas: int | None = None):
    """Compare the p-th joint moment of fluctuation fields with its pair-partition (Wick) sum.

    Returns (moment, pairing_sum, discrepancy) Estimates; the pairing sum is
    empty (zero) for odd p.
    """
    p = len(fields)
    if p not in (2, 3, 4):
        raise MalformedSpec("wick_check handles p in {2, 3, 4}")
    _require(ens, min_replicas if min_replicas is not None else (MIN_REPLICAS_P4 if p == 4 else MIN_REPLICAS))
    sqrt_mu = math.sqrt(ens.mu)
    raw = np.stack([ens.pairings(h, t) for h, t in fields])  # (p, R)
    parts = list(pair_partitions(list(range(p))))

    def stats(ix):
        x = raw[:, ix]
        z = sqrt_mu * (x - x.mean(axis=1, keepdims=True))
        moment = float(np.mean(np.prod(z, axis=0)))
        pairing = sum(math.prod(float(np.mean(z[a] * z[b])) for a, b in part) for part in parts)
        return moment, pairing, moment - pairing

    m, s, disc = stats(np.arange(ens.R))
    rng = np.random.default_rng(seed)
    boot = np.array([stats(rng.integers(0, ens.R, ens.R)) for _ in range(n_boot)])
    sd = boot.std(axis=0, ddof=1)
    if p == 2:
        sd[2] = 0.0
    return (Estimate(m, Z_CI * float(sd[0])), Estimate(s, Z_CI * float(sd[1])), Estimate(disc, Z_CI * float(sd[2])))


def time_covariance(ens: ReplicaEnsemble, h1, theta1, h2, theta2, *, n_boot: int = N_BOOT, seed: int = 0) -> Estimate:
    """Mean of zeta_theta1(h1) zeta_theta2(h2) over replicas, with bootstrap half-width."""
    x = ens.pairings(h1, theta1)
    y = ens.pairings(h2, theta2)
    mu = ens.mu

    def cov(ix):
        a, b = x[ix], y[ix]
        return float(mu * np.mean((a - a.mean()) * (b - b.mean())))

    return Estimate(cov(np.arange(ens.R)), Z_CI * bootstrap_std(cov, ens.R, n_boot, seed))


# ---------------------------------------------------------------------------
# estimator objects


class CumulantEstimator(BaseEstimator):
    """Estimator wrapper around ``estimate_F2_and_cumulant``; ``fit`` takes records or an ensemble."""

    def __init__(self, h1=None, h2=None, theta1=0.0, theta2=0.0, n_boot=N_BOOT, seed=0):
        self.h1 = h1
        self.h2 = h2
        self.theta1 = theta1
        self.theta2 = theta2
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        ens = X if isinstance(X, ReplicaEnsemble) else ReplicaEnsemble(X)
        self.F2_, self.f2_ = estimate_F2_and_cumulant(ens, self.h1, self.h2, self.theta1, self.theta2,
                                                      n_boot=self.n_boot, seed=self.seed)
        return self


class CGFEstimator(BaseEstimator):
    """Cumulant generating function at a grid of amplitudes."""

    def __init__(self, h=None, theta=0.0, amplitudes=(1.0,), spec=None, n_boot=N_BOOT, seed=0):
        self.h = h
        self.theta = theta
        self.amplitudes = amplitudes
        self.spec = spec
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        ens = X if isinstance(X, ReplicaEnsemble) else ReplicaEnsemble(X)
        self.estimates_ = [estimate_cgf(ens, self.h, self.theta, amplitude=s, spec=self.spec,
                                        n_boot=self.n_boot, seed=self.seed) for s in self.amplitudes]
        self.values_ = np.array([e.value for e in self.estimates_])
        return self


class WickEstimator(BaseEstimator):
    def __init__(self, fields=(), n_boot=N_BOOT, seed=0):
        self.fields = fields
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        ens = X if isinstance(X, ReplicaEnsemble) else ReplicaEnsemble(X)
        self.moment_, self.pairing_sum_, self.discrepancy_ = wick_check(
            ens, list(self.fields), n_boot=self.n_boot, seed=self.seed)
        return self
