"""Desk-scale configurations for the acceptance criteria (d = 2, mu = 1000 unless stated).

All times are in mean free times.
"""
from __future__ import annotations

import copy

from .core import TestFunctionSpec
from .ensembles import InitialDensity

SCALING = {"d": 2, "mu": 1000, "alpha": 1.0}


def _fh(modes, hermite, phase="cos", damping=None, decay=None) -> dict:
    return TestFunctionSpec.hermite(hermite, modes, phase, damping=damping, decay=decay).to_dict()


LANFORD_OBSERVABLES = {
    "density_mode": _fh([1, 0], [0, 0]),
    "momentum_mode": _fh([1, 0], [1, 0], "sin"),
    "stress_mode": _fh([1, 0], [2, 0]),
    "transverse_stress_mode": _fh([1, 0], [0, 2]),
    "second_harmonic": _fh([2, 0], [0, 0]),
}

COVARIANCE_OBSERVABLES = {
    "shear": _fh([0, 0], [1, 1]),
    "normal_stress": _fh([0, 0], [2, 0]),
    "heat_flux_cubic": _fh([0, 0], [3, 0]),
}

CONFIGS = {
    "reversibility": {
        "kind": "reversibility",
        "scaling": {"d": 2, "mu": 64, "alpha": 1.0},
        "replicas": 10,
        "params": {"duration_mft": 1.0, "exact_runs": 50, "exact_mu": 1000, "oracle_sizes": [32, 64, 128, 200]},
    },
    "equilibrium-fluctuations": {
        "kind": "equilibrium-fluctuations",
        "observables": COVARIANCE_OBSERVABLES,
        "sample_times": [0.0, 0.25, 0.5],
        "replicas": 1000,
        "params": {"taus": [0.0, 0.25, 0.5], "stationarity_runs": 10, "stationarity_T": 2.0,
                   "kac": {"replicas": 4000, "particles": 1000},
                   "operator": {"nodes": 41, "quad_samples": 200_000, "seed": 0,
                                "variants": [[31, 1], [41, 2], [51, 3]]},
                   "diag": False},
    },
    "lanford-lln": {
        "kind": "lanford-lln",
        "f0": InitialDensity.cosine(0.3).to_dict(),
        "observables": LANFORD_OBSERVABLES,
        "sample_times": [0.05, 0.1, 0.2],
        "replicas": 400,
        "params": {"mu_compare": 2000,
                   "dsmc": {"particles": 2_000_000, "dt": 0.01, "cells": [20, 1]}, "diag": False},
    },
    "wick": {
        "kind": "wick",
        "f0": InitialDensity.cosine(0.3).to_dict(),
        "observables": {"momentum_mode": _fh([1, 0], [1, 0])},
        "replicas": 1000,
        "params": {"iid_replicas": 10_000, "diag": False},
    },
    "variance-scaling": {
        "kind": "variance-scaling",
        "observables": {"stress_mode": _fh([1, 0], [2, 0])},
        "sample_times": [0.1],
        "replicas": 1000,
        "params": {"mu_grid": [250, 500, 1000, 2000], "theta": 0.1, "diag": False},
    },
    "h-theorem": {
        "kind": "h-theorem",
        "f0": InitialDensity.bimodal(1.5, 0.7).to_dict(),
        "params": {"dsmc": {"particles": 200_000, "dt": 0.05, "T": 10.0, "outputs": 50, "bins": 40, "vmax": 6.0}},
    },
    "cgf": {
        "kind": "cgf",
        "observables": {"damped_density_mode": _fh([1, 0], [0, 0], damping=1.0, decay=[1.0, 1.0])},
        "sample_times": [0.0, 0.1],
        "replicas": 2000,
        "params": {"amplitude": 0.05, "theta": 0.1, "constant": 0.03, "iid_replicas": 10_000, "diag": False},
    },
    "hamiltonian-checks": {
        "kind": "hamiltonian-checks",
        "params": {"nodes": 41, "collision_samples": 20_000, "hamiltonian_samples": 200_000,
                   "operator_samples": 200_000, "random_fields": 1000},
    },
}

# criterion number -> kind that evaluates it
CRITERIA = {
    1: "reversibility", 2: "reversibility", 3: "equilibrium-fluctuations", 4: "lanford-lln", 5: "wick",
    6: "variance-scaling", 7: "equilibrium-fluctuations", 8: "h-theorem", 9: "hamiltonian-checks",
    10: "hamiltonian-checks", 11: "cgf",
}

# CLI subcommand -> default kind
SUBCOMMANDS = {
    "simulate": "reversibility",
    "dsmc": "h-theorem",
    "kac": "equilibrium-fluctuations",
    "fluctuations": "equilibrium-fluctuations",
    "wick": "wick",
    "cgf": "cgf",
    "ldp-eval": "hamiltonian-checks",
}


def default_config(kind: str) -> dict:
    cfg = copy.deepcopy(CONFIGS[kind])
    cfg.setdefault("scaling", dict(SCALING))
    return cfg
