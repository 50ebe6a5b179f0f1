"""Experiment configuration: JSON files merged over per-experiment defaults."""
import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import (
    ControlGrid,
    basis_state,
    build_ising,
    fidelity_problem,
    infidelity_problem,
)

EXPERIMENTS = (
    "spectrum",
    "surrogate-bench",
    "taylor-order",
    "bounds-audit",
    "optimize",
    "kernel-bandwidth",
)


class ConfigError(ValueError):
    """Invalid or empty configuration (CLI exit code 1)."""


_BENCH_METHOD = {
    "families": ["taylor", "fourier", "sinc"],
    "n_train": [16, 32, 64, 128, 256, 512, 1024],
    "pool_train": 2048,
    "pool_test": 512,
    "n_test": 128,
    "repeats": 16,
    "ridge_features": 1e-6,
    "ridge_sinc": 1e-12,
    "omega_ker_ratios": [1.0],
    "fourier_candidates": [3, 5, 9, 17, 33, 65, 129, 257, 513],
    "taylor_max_degree": 24,
    "split_fraction": 0.75,
}

DEFAULTS = {
    "spectrum": {
        "problem": {
            "Q": 4,
            "alpha_d_over_pi": [0.0, 0.89, 1.78, 2.67, 4.0],
            "h_z": 0.0,
            "initial": "0",
            "target": "1",
            "observable": "fidelity",
        },
        "grid": {"N": 1, "T": 1.0, "u_max": 1.0},
        "method": {"n": 200, "symmetry": "x"},
    },
    "surrogate-bench": {
        "problem": {"Q": 5, "alpha_d": 1.0, "h_z": 0.0, "initial": "0", "target": "1", "observable": "fidelity"},
        "grid": {"N": 2, "T": 1.0, "u_max": 1.0},
        "method": _BENCH_METHOD,
    },
    "kernel-bandwidth": {
        "problem": {"Q": 5, "alpha_d": 1.0, "h_z": 0.0, "initial": "0", "target": "1", "observable": "fidelity"},
        "grid": {"N": 4, "T": 1.0, "u_max": 1.0},
        "method": dict(_BENCH_METHOD, families=["sinc"], omega_ker_ratios=[0.1, 0.3, 0.5, 0.8, 0.9, 1.0]),
    },
    "taylor-order": {
        "problem": {},
        "grid": {},
        "method": {
            "epsilons": [1e-1, 1e-2, 1e-3, 1e-6, 1e-9, 1e-15],
            "u_max_L_min_exp": -2,
            "u_max_L_max_exp": 2,
            "points_per_decade": 20,
            "slope_at": 100.0,
            "slope_tolerance": 0.1,
        },
    },
    "bounds-audit": {
        "problem": {"Q": 3, "alpha_d": 1.0, "h_z": 0.0, "initial": "0", "target": "1", "observable": "fidelity"},
        "grid": {"N": 4, "T": 1.0, "u_max": 2.0},
        "method": {
            "samples": 1000,
            "fd_tol": 1e-4,
            "taylor_u_max_L": 0.5,
            "taylor_fd_tol": 1e-6,
            "variance_Q": 2,
            "variance_N": [1, 2],
            "variance_samples": 100000,
            "trotter_n": 4,
            "minima_epsilon": 1e-3,
            "minima_budget": 300,
            "shrink_N": [2, 4, 8],
            "shrink_samples": 100000,
            "shrink_threshold": 0.1,
            "shrink_observable": "infidelity",
            "constant_model_N": [2, 4],
            "constant_model_samples": 10000,
        },
    },
    "optimize": {
        "problem": {"Q": 2, "alpha_d": 1.0, "h_z": 0.0, "initial": "0", "target": "1", "observable": "fidelity"},
        "grid": {"N": 2, "T": 1.0, "u_max": 4.0},
        "method": {
            "mode": "maximize",
            "budget": 500,
            "prune": True,
            "epsilon_prune": None,
            "min_radius": 0.0,
            "grid_resolution": 101,
            "audit_resolution": 11,
        },
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    problem: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    method: dict = field(default_factory=dict)
    output: str = "results"

    def canonical(self) -> dict:
        """Everything that affects the results (the output directory does not)."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "problem": self.problem,
            "grid": self.grid,
            "method": self.method,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, override: dict, block: str) -> dict:
    out = copy.deepcopy(base)
    if block == "grid" and ("T" in override or "dt" in override):
        out.pop("T", None)
        out.pop("dt", None)
    if block == "problem" and ("alpha_d" in override or "alpha_d_over_pi" in override):
        out.pop("alpha_d", None)
        out.pop("alpha_d_over_pi", None)
    for key, value in override.items():
        out[key] = copy.deepcopy(value)
    return out


def validate_selector(sel):
    if sel in ("0", "1", "+", "-"):
        return
    if isinstance(sel, str) and sel.startswith("random:"):
        try:
            int(sel.split(":", 1)[1])
            return
        except ValueError:
            pass
    raise ConfigError(f"invalid state selector {sel!r}; use 0, 1, +, - or random:<seed>")


def _validate(cfg: ExperimentConfig):
    grid = cfg.grid
    if grid:
        if ("T" in grid) == ("dt" in grid):
            raise ConfigError("grid block needs exactly one of T or dt")
        if int(grid.get("N", 0)) < 1:
            raise ConfigError("grid.N must be a positive integer")
        if not float(grid.get("u_max", 0)) > 0:
            raise ConfigError("grid.u_max must be positive")
    for key in ("initial", "target"):
        if key in cfg.problem:
            validate_selector(cfg.problem[key])
    if cfg.problem.get("observable", "fidelity") not in ("fidelity", "infidelity"):
        raise ConfigError("problem.observable must be fidelity or infidelity")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def load_config(experiment, path=None, overrides=None) -> ExperimentConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides`` (CLI flags)."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    user = {}
    if path is not None:
        text = Path(path).read_text()
        if not text.strip():
            raise ConfigError(f"config file {path} is empty")
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict) or not user:
            raise ConfigError(f"config file {path} holds no settings")
    unknown = set(user) - {"experiment", "seed", "problem", "grid", "method", "output"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if user.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {user['experiment']!r}, not {experiment!r}")
    defaults = DEFAULTS[experiment]
    cfg = ExperimentConfig(
        experiment,
        seed=user.get("seed", 0),
        problem=_merge(defaults["problem"], user.get("problem", {}), "problem"),
        grid=_merge(defaults["grid"], user.get("grid", {}), "grid"),
        method=_merge(defaults["method"], user.get("method", {}), "method"),
        output=user.get("output", "results"),
    )
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("seed", "output"):
            setattr(cfg, key, value)
        else:
            cfg.method[key] = value
    _validate(cfg)
    return cfg


def cell_seed(global_seed, *key) -> int:
    """Per-cell seed derived from the global seed and the cell key."""
    blob = json.dumps([int(global_seed), *key], sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def resolve_state(selector, q):
    validate_selector(selector)
    if selector.startswith("random:"):
        return basis_state("random", q, seed=int(selector.split(":", 1)[1]))
    return basis_state(selector, q)


def resolve_alpha(problem) -> float:
    if "alpha_d" in problem:
        return float(problem["alpha_d"])
    return float(problem["alpha_d_over_pi"]) * math.pi


def build_grid(grid) -> ControlGrid:
    n = int(grid["N"])
    if "dt" in grid:
        return ControlGrid(n, float(grid["dt"]), float(grid["u_max"]))
    return ControlGrid.from_total_time(n, float(grid["T"]), float(grid["u_max"]))


def build_problem(problem: dict, grid: dict):
    """Ising state-transfer problem from config blocks (scalar ``alpha_d`` expected)."""
    q = int(problem["Q"])
    model = build_ising(q, resolve_alpha(problem), float(problem.get("h_z", 0.0)))
    psi = resolve_state(problem.get("initial", "0"), q)
    chi = resolve_state(problem.get("target", "1"), q)
    make = infidelity_problem if problem.get("observable") == "infidelity" else fidelity_problem
    return make(model, build_grid(grid), psi, chi)


def jsonable(value):
    """Convert numpy scalars and arrays for JSON output."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value
