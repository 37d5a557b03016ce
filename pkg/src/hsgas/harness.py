"""Experiment orchestration: configuration, seeded replica scheduling, persistence and reports.

Output layout under ``config.out``::

    config.json            canonical configuration echo
    replicas/<seed>.jsonl  one checksummed record per replica
    report.json            criteria and event counts (byte-reproducible)
    telemetry.json         wall-clock timings (not reproducible, kept apart)
    tables/*.csv           ensemble statistics
    plotdata/*.csv         series behind each criterion

Times in a configuration (sample times, durations, time steps) are in mean
free times of the standard Maxwellian equilibrium; the solvers work in kinetic
units where that time is alpha / (2 sqrt(pi)) in 2D, and the harness converts.

Replica ``k`` of a run with root seed ``r`` uses the seed
``int.from_bytes(blake2b(f"{r}:{k}", digest_size=16))``; the full 128-bit value
names the record file and the low 64 bits seed numpy's PCG64.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .core import ScalingParams, TestFunctionSpec, scaling_from_mu, validate_scaling
from .ensembles import GrandCanonicalSpec, InitialDensity, sample_grand_canonical
from .errors import ConfigHashMismatch, ConfigInvalid, MalformedSpec, ResourceBudgetExceeded
from .kinetic.dsmc import mean_free_time
from .md.dynamics import DEFAULT_EVENT_CAP_RATE, advance
from .observables import EnsembleStats, ReplicaEnsemble, ReplicaRecord, record_from_trajectory

KINDS = ("lanford-lln", "equilibrium-fluctuations", "wick", "variance-scaling", "reversibility",
         "h-theorem", "cgf", "hamiltonian-checks")

# kind -> params that must be present
REQUIRED_PARAMS = {
    "lanford-lln": ("mu_compare", "dsmc"),
    "equilibrium-fluctuations": ("taus",),
    "wick": (),
    "variance-scaling": ("mu_grid", "theta"),
    "reversibility": ("duration_mft",),
    "h-theorem": ("dsmc",),
    "cgf": ("amplitude", "theta"),
    "hamiltonian-checks": (),
}
MAX_EVENTS = 5e9


def derive_seed(root_seed: int, k) -> int:
    """128-bit replica seed from (root seed, counter)."""
    digest = hashlib.blake2b(f"{int(root_seed)}:{k}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "big")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & (2**64 - 1))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One experiment: kind, scaling, initial law, observables, times, replicas, seed, output.

    ``scaling`` holds ``d``, ``alpha`` and either ``mu`` or ``eps``; ``f0`` is an
    InitialDensity dict; ``observables`` maps labels to TestFunctionSpec dicts;
    ``params`` carries the kind-specific settings.
    """

    kind: str
    scaling: dict = field(default_factory=lambda: {"d": 2, "mu": 1000, "alpha": 1.0})
    f0: dict = field(default_factory=lambda: InitialDensity.equilibrium(2).to_dict())
    observables: dict = field(default_factory=dict)
    sample_times: list = field(default_factory=lambda: [0.0])
    replicas: int = 1
    root_seed: int = 0
    out: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown experiment kind {self.kind!r}")
        if int(self.replicas) < 1:
            raise ConfigInvalid("replica count must be >= 1")
        times = [float(t) for t in self.sample_times]
        if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigInvalid("sample times must be nonnegative and strictly increasing")
        horizon = float(self.params.get("horizon", max(times, default=0.0)))
        if times and max(times) > horizon + 1e-12:
            raise ConfigInvalid(f"sample times exceed the declared horizon {horizon}")
        missing = [p for p in REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise ConfigInvalid(f"kind {self.kind} needs params {missing}")
        try:
            self.scaling_params()
            InitialDensity.from_dict(self.f0)
            self.observable_specs()
        except (MalformedSpec, KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from exc

    def scaling_params(self, mu: float | None = None) -> ScalingParams:
        s = self.scaling
        d = int(s.get("d", 2))
        alpha = float(s.get("alpha", 1.0))
        if mu is not None:
            return scaling_from_mu(d, mu, alpha)
        if "mu" in s:
            return scaling_from_mu(d, float(s["mu"]), alpha)
        return validate_scaling(d, float(s["eps"]), alpha)

    def time_unit(self) -> float:
        """Length of one mean free time in the kinetic units used by the solvers."""
        sp = self.scaling_params()
        return mean_free_time(sp.alpha, sp.d)

    def initial_density(self) -> InitialDensity:
        return InitialDensity.from_dict(self.f0)

    def observable_specs(self) -> dict:
        return {lab: TestFunctionSpec.from_dict(spec) for lab, spec in self.observables.items()}

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigInvalid(f"unknown config fields {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigInvalid("config needs a kind")
        return cls(**copy.deepcopy(data))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc

    def hash(self) -> str:
        """Digest of everything that determines results (output directory excluded)."""
        body = self.to_dict()
        body.pop("out", None)
        body["version"] = __version__
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values parse as JSON, else stay strings."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigInvalid(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = value
    return data


# ---------------------------------------------------------------------------
# checksummed persistence


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def dump_checked(payload: dict) -> str:
    body = json.dumps(payload, sort_keys=True)
    return json.dumps({"record": json.loads(body), "checksum": _digest(body)}, sort_keys=True)


def load_checked(line: str) -> dict:
    try:
        wrapper = json.loads(line)
        body = json.dumps(wrapper["record"], sort_keys=True)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedSpec(f"unreadable record: {exc}") from exc
    if _digest(body) != wrapper.get("checksum"):
        raise MalformedSpec("record checksum mismatch")
    return wrapper["record"]


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load_replica(path: Path, config_hash: str):
    """Stored payload if the file is complete, intact and from this configuration, else None."""
    if not path.exists():
        return None
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if len(lines) != 1:
            return None
        payload = load_checked(lines[0])
    except (MalformedSpec, OSError):
        return None
    if payload.get("config_hash") != config_hash:
        return None
    return payload


# ---------------------------------------------------------------------------
# replica tasks (module-level so worker processes can import them)


def md_replica(cfg: ExperimentConfig, seed: int, mu: float | None = None, exclusion: bool = True,
               observables: dict | None = None) -> ReplicaRecord:
    """Sample a grand-canonical state, run MD through the sample times, record the sums.

    ``observables`` (label -> spec dict) replaces the configured list when given.
    """
    scaling = cfg.scaling_params(mu)
    spec = GrandCanonicalSpec(scaling, cfg.initial_density(), 0)
    system, _ = sample_grand_canonical(spec, exclusion=exclusion, rng=rng_for(seed))
    obs = cfg.observable_specs() if observables is None else {
        lab: TestFunctionSpec.from_dict(spec) for lab, spec in observables.items()}
    times = [float(t) for t in cfg.sample_times] if exclusion else [0.0]
    if not exclusion and times != [0.0]:
        raise ConfigInvalid("runs without hard-core exclusion are static (sample times [0])")
    cap_rate = float(cfg.params.get("event_cap_rate", DEFAULT_EVENT_CAP_RATE))
    unit = cfg.time_unit()
    snaps, coll = [], []
    total = 0
    cur = system
    for t in times:
        if t * unit > cur.time:
            cur, log = advance(cur, t * unit - cur.time, event_cap_rate=cap_rate)
            total += len(log)
        snaps.append(cur.replace(time=t))  # recorded in mean free times
        coll.append(total)
        cur = cur.replace(time=t * unit)
    return record_from_trajectory(seed, snaps, coll, obs, cfg.hash(), with_diag=bool(cfg.params.get("diag", True)))


def _run_task(args):
    task, cfg_dict, seed, extra = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    if task == "md":
        rec = md_replica(cfg, seed, **extra)
        return rec.payload()
    from . import experiments  # noqa: F401  (registers the tasks in worker processes)

    fn = TASKS[task]
    payload = fn(cfg, seed, **extra)
    payload["config_hash"] = cfg.hash()
    payload["seed"] = str(seed)
    return payload


TASKS: dict[str, Callable] = {}


def register_task(name: str):
    def deco(fn):
        TASKS[name] = fn
        return fn
    return deco


@dataclass
class RunContext:
    """Per-run bookkeeping shared by the criterion evaluators."""

    cfg: ExperimentConfig
    workers: int = 1
    out: Path | None = None
    timings: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    plotdata: dict = field(default_factory=dict)

    def replicas(self, task: str, counters: Sequence, extra: dict | None = None) -> list[dict]:
        """Run (or reload) one replica per counter value, returned in counter order."""
        extra = extra or {}
        cfg_hash = self.cfg.hash()
        seeds = [derive_seed(self.cfg.root_seed, k) for k in counters]
        results: list = [None] * len(seeds)
        todo = []
        rdir = self.out / "replicas" if self.out else None
        if rdir is not None:
            rdir.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(seeds):
            if rdir is not None:
                results[i] = _load_replica(rdir / f"{s}.jsonl", cfg_hash)
            if results[i] is None:
                todo.append(i)
        cfg_dict = self.cfg.to_dict()
        jobs = [(task, cfg_dict, seeds[i], extra) for i in todo]
        t0 = time.perf_counter()
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                done = list(pool.map(_run_task, jobs, chunksize=1))
        else:
            done = [_run_task(j) for j in jobs]
        self.timings[task] = self.timings.get(task, 0.0) + time.perf_counter() - t0
        for i, payload in zip(todo, done):
            results[i] = payload
            if rdir is not None:
                _write_atomic(rdir / f"{seeds[i]}.jsonl", dump_checked(payload) + "\n")
        return results

    def md_records(self, counters: Sequence, **extra) -> list[ReplicaRecord]:
        payloads = self.replicas("md", counters, extra)
        recs = [ReplicaRecord.from_json(dump_checked(p)) for p in payloads]
        self.events["md_collisions"] = self.events.get("md_collisions", 0) + int(
            sum(int(r.collisions[-1]) for r in recs))
        return recs

    def check_budget(self, n_expected: float, duration: float, replicas: int) -> None:
        """``duration`` in mean free times; the event cap is per unit kinetic time."""
        duration = duration * self.cfg.time_unit()
        cap_rate = float(self.cfg.params.get("event_cap_rate", DEFAULT_EVENT_CAP_RATE))
        total = cap_rate * n_expected * duration * replicas
        budget = float(self.cfg.params.get("event_budget", MAX_EVENTS))
        if total > budget:
            raise ResourceBudgetExceeded(f"event cap x R = {total:.3g} exceeds the budget {budget:.3g}")


# ---------------------------------------------------------------------------
# reports


@dataclass
class Criterion:
    """One acceptance criterion: pass flag, measured value, target and tolerance."""

    id: str
    passed: bool
    measured: object
    target: object
    tolerance: object
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({"id": self.id, "passed": bool(self.passed), "measured": self.measured,
                       "target": self.target, "tolerance": self.tolerance, "details": self.details})


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


@dataclass
class ExperimentReport:
    config: dict
    config_hash: str
    version: str
    criteria: list
    events: dict
    wall_clock: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.criteria)

    def to_json(self) -> str:
        """Deterministic part of the report (wall-clock timings live in telemetry.json)."""
        body = {"config": self.config, "config_hash": self.config_hash, "version": self.version,
                "criteria": self.criteria, "events": self.events, "passed": self.passed}
        return json.dumps(_clean(body), sort_keys=True, indent=2) + "\n"

    def lines(self) -> list[str]:
        return [f"{'PASS' if c['passed'] else 'FAIL'} {c['id']}: measured={_short(c['measured'])} "
                f"target={_short(c['target'])} tol={_short(c['tolerance'])}" for c in self.criteria]


def _short(x) -> str:
    if isinstance(x, float):
        return f"{x:.4g}"
    if isinstance(x, (list, tuple)) and len(x) > 4:
        return f"[{len(x)} values]"
    return json.dumps(_clean(x))


def aggregate_replicas(records: Sequence[ReplicaRecord]) -> EnsembleStats:
    """Per (observable, time) moments over canonically ordered replicas."""
    if not records:
        raise MalformedSpec("no records to aggregate")
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        raise ConfigHashMismatch(f"records carry {len(hashes)} different config hashes")
    return ReplicaEnsemble(records).stats()


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def run_experiment(config: ExperimentConfig | dict, *, workers: int | None = None,
                   out: str | os.PathLike | None = None) -> ExperimentReport:
    """Run every criterion of the config's kind and persist records, tables and the report."""
    from .experiments import EVALUATORS

    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out = out if out is not None else cfg.out
    ctx = RunContext(cfg, workers=max(1, int(workers or os.cpu_count() or 1)),
                     out=Path(out) if out is not None else None)
    if ctx.out is not None:
        ctx.out.mkdir(parents=True, exist_ok=True)
        _write_atomic(ctx.out / "config.json", cfg.to_json() + "\n")
    t0 = time.perf_counter()
    criteria = [c.to_dict() for c in EVALUATORS[cfg.kind](ctx)]
    ctx.timings["total"] = time.perf_counter() - t0
    echo = cfg.to_dict()
    echo.pop("out", None)
    report = ExperimentReport(_clean(echo), cfg.hash(), __version__, criteria, _clean(ctx.events),
                              dict(ctx.timings))
    if ctx.out is not None:
        _write_atomic(ctx.out / "report.json", report.to_json())
        _write_atomic(ctx.out / "telemetry.json",
                      json.dumps({"wall_clock_s": ctx.timings, "workers": ctx.workers}, sort_keys=True, indent=2))
        for sub, store in (("tables", ctx.tables), ("plotdata", ctx.plotdata)):
            (ctx.out / sub).mkdir(exist_ok=True)
            for name, (cols, rows) in store.items():
                _write_csv(ctx.out / sub / f"{name}.csv", cols, rows)
    return report


def load_report(out) -> dict:
    return json.loads((Path(out) / "report.json").read_text())
