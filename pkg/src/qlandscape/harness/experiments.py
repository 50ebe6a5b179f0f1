"""Experiment pipelines behind the CLI subcommands.

Each ``run_*`` takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` holding long-format tables, a JSON-able summary and
the names of failed hard checks. Cells are independent and seeded from the
global seed and their key, so any ``threads`` value gives the same tables.
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import bounds as B
from ..direct import DirectConfig, as_objective, audit_pruned, check_min_distance, grid_search, optimize
from ..dynamics import HamiltonianModel, PAULI_X, ControlGrid, fidelity_problem, parity_operator
from ..errors import ConditioningError, SymmetryError
from ..liefourier import (
    TrotterConfig,
    allowed_frequency_mask,
    build_sectors,
    coefficient_rows,
    dft_extract,
    evaluate_jn_many,
)
from ..surrogates import (
    FourierFamily,
    TaylorFamily,
    constant_model_bound,
    constant_model_loss,
    rmse,
    sample_dataset,
    select_n_weights,
    train_kernel,
)
from .config import ExperimentConfig, build_problem, cell_seed, resolve_alpha
from .tables import ResultTable

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    experiment: str
    tables: list
    summary: dict
    failures: list = field(default_factory=list)


def map_cells(fn, cells, threads=1):
    """Apply ``fn`` to every cell, in order, optionally across processes."""
    cells = list(cells)
    if threads <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, cells))


# ----------------------------------------------------------------------------
# spectrum


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _spectrum_cell(args):
    problem_cfg, grid_cfg, method, seed = args
    t0 = time.perf_counter()
    problem = build_problem(problem_cfg, grid_cfg)
    cfg = TrotterConfig(int(method["n"]))
    tensor = dft_extract(problem, cfg)
    mask = None
    if method.get("symmetry") in ("x", "y", "z"):
        q = int(problem_cfg["Q"])
        chi = np.linalg.eigh(problem.observable)[1][:, -1]
        try:
            sectors = build_sectors(problem.model, parity_operator(q, method["symmetry"]), problem.initial, chi)
            mask = allowed_frequency_mask(sectors, tensor.grid, problem.n_steps)
        except SymmetryError:
            mask = None
    rows = list(coefficient_rows(tensor, mask))
    c = tensor.data
    k_sum = np.indices(c.shape).sum(axis=0) - tensor.grid.k_max * tensor.n_steps
    flipped = np.conj(c[(slice(None, None, -1),) * tensor.n_steps])
    stats = {
        "max_abs_c": float(np.abs(c).max()),
        "max_imag": float(np.abs(c.imag).max()),
        "odd_branch_max": float(np.abs(c[k_sum % 2 == 1]).max()) if np.any(k_sum % 2 == 1) else 0.0,
        "l2_sum": float(np.sum(np.abs(c) ** 2)),
        "conjugate_symmetry_error": float(np.abs(c - flipped).max()),
        "masked_out_max": None if mask is None else float(np.abs(c[~mask]).max(initial=0.0)),
        "k_max": tensor.grid.k_max,
        "omega_max": tensor.grid.omega_max,
        "seconds": round(time.perf_counter() - t0, 3),
    }
    return rows, stats


def run_spectrum(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    n_steps = int(cfg.grid["N"])
    if n_steps not in (1, 2):
        raise ValueError("the spectrum experiment supports N = 1 or 2")
    problem = dict(cfg.problem)
    if "alpha_d" in problem:
        alphas = [("alpha_d", a) for a in _as_list(problem.pop("alpha_d"))]
        problem.pop("alpha_d_over_pi", None)
    else:
        alphas = [("alpha_d_over_pi", a) for a in _as_list(problem.pop("alpha_d_over_pi"))]
    cells = []
    for key, a in alphas:
        pc = dict(problem, **{key: a})
        cells.append((pc, cfg.grid, cfg.method, cell_seed(cfg.seed, "spectrum", key, a)))
    results = map_cells(_spectrum_cell, cells, threads)
    cols = [("cell", "experiment cell index"), ("alpha_d", "drift strength")]
    cols += [(f"k{i + 1}", f"integer frequency index, timestep {i + 1}") for i in range(n_steps)]
    cols += [(f"omega{i + 1}", f"frequency, timestep {i + 1}") for i in range(n_steps)]
    cols += [
        ("re_c", "real part of the coefficient"),
        ("im_c", "imaginary part of the coefficient"),
        ("re_scaled", "real part of n^N times the coefficient"),
        ("im_scaled", "imaginary part of n^N times the coefficient"),
        ("allowed", "1 if the symmetry selection rule allows the frequency (blank when no symmetry applies)"),
    ]
    table = ResultTable("spectrum", cols)
    cell_stats = []
    for i, ((pc, _, _, seed), (rows, stats)) in enumerate(zip(cells, results)):
        alpha = resolve_alpha(pc)
        for row in rows:
            table.add(dict(row, cell=i, alpha_d=alpha, seed=seed))
        cell_stats.append(dict(stats, cell=i, alpha_d=alpha, seed=seed))
    summary = {"experiment": "spectrum", "cells": cell_stats, "trotter_n": cfg.method["n"], "N": n_steps}
    return ExperimentResult("spectrum", [table], summary)


# ----------------------------------------------------------------------------
# surrogate benchmark and kernel bandwidth


def _pools(problem_cfg, grid_cfg, method, seed):
    problem = build_problem(problem_cfg, grid_cfg)
    train = sample_dataset(problem, int(method["pool_train"]), cell_seed(seed, "pool", "train"))
    test = sample_dataset(problem, int(method["pool_test"]), cell_seed(seed, "pool", "test"))
    return problem, train, test


def _fourier_candidates(method, limit):
    return [c for c in method["fourier_candidates"] if c < limit]


def _bench_repeat(args):
    problem_cfg, grid_cfg, method, seed, repeat = args
    problem, pool_train, pool_test = _pools(problem_cfg, grid_cfg, method, seed)
    rs = cell_seed(seed, "repeat", repeat)
    rng = np.random.default_rng(rs)
    test = pool_test.subset(rng.choice(len(pool_test), int(method["n_test"]), replace=False))
    order = rng.permutation(len(pool_train))
    omega_max, dt, n_dims = problem.model.omega_max, problem.dt, problem.n_steps
    u_max = problem.grid.u_max
    frac = float(method["split_fraction"])
    rows = []
    for n_train in method["n_train"]:
        data = pool_train.subset(order[: int(n_train)])
        split_size = int(round(frac * len(data)))
        split_seed = cell_seed(rs, "split", n_train)
        base = {"n_train": int(n_train), "repeat": repeat, "seed": rs}
        for family in method["families"]:
            if family == "sinc":
                for ratio in method["omega_ker_ratios"]:
                    row = dict(base, family="sinc", omega_ker_ratio=float(ratio), ridge=method["ridge_sinc"],
                               omega_ker=float(ratio) * omega_max, n_weights=len(data))
                    try:
                        model = train_kernel(data, float(method["ridge_sinc"]), float(ratio) * omega_max, dt, omega_max)
                        row.update(rmse=rmse(model, test), status="ok", solver=model.metadata["solver"])
                    except (ConditioningError, ValueError, np.linalg.LinAlgError) as exc:
                        row.update(rmse=float("nan"), status=f"error: {exc}", solver="")
                    rows.append(row)
                continue
            if family == "fourier":
                fam = FourierFamily(omega_max, dt, n_dims, cell_seed(rs, "fourier", n_train))
                cands = _fourier_candidates(method, split_size)
            elif family == "taylor":
                fam = TaylorFamily(n_dims, np.zeros(n_dims), u_max)
                cands = [d for d in range(int(method["taylor_max_degree"]) + 1) if fam(d).n_weights < split_size]
            else:
                raise ValueError(f"unknown feature family {family!r}")
            row = dict(base, family=family, omega_ker_ratio=None, ridge=method["ridge_features"], omega_ker=None)
            try:
                if not cands:
                    raise ValueError("no feature-count candidate fits below N_train")
                sel = select_n_weights(fam, data, float(method["ridge_features"]), cands, split_seed, frac)
                row.update(
                    rmse=rmse(sel.model, test), status="ok", n_weights=sel.model.features.n_weights,
                    solver=sel.model.metadata["solver"], selected=sel.best,
                )
            except (ConditioningError, ValueError, np.linalg.LinAlgError) as exc:
                row.update(rmse=float("nan"), status=f"error: {exc}", n_weights=None, solver="")
            rows.append(row)
    return rows, float(np.std(pool_test.values, ddof=1))


def _curve_key(row):
    if row["family"] == "sinc":
        return f"sinc@{row['omega_ker_ratio']:g}"
    return row["family"]


def _aggregate(rows):
    groups = {}
    for r in rows:
        groups.setdefault((_curve_key(r), r["n_train"]), []).append(r["rmse"])
    out = []
    for (curve, n_train), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        v = np.array([x for x in vals if np.isfinite(x)])
        stats = np.percentile(v, [25, 50, 75]) if len(v) else [float("nan")] * 3
        out.append({"curve": curve, "n_train": n_train, "q25": float(stats[0]), "median": float(stats[1]),
                    "q75": float(stats[2]), "n_ok": len(v), "n_total": len(vals)})
    return out


def _inversions(values):
    return int(sum(b > a for a, b in zip(values, values[1:])))


def _bench_common(cfg: ExperimentConfig, threads, name):
    if int(cfg.method["repeats"]) < 1:
        raise ValueError("repeats must be at least 1")
    seed = cell_seed(cfg.seed, name, cfg.problem, cfg.grid)
    cells = [(cfg.problem, cfg.grid, cfg.method, seed, r) for r in range(int(cfg.method["repeats"]))]
    results = map_cells(_bench_repeat, cells, threads)
    rows = [row for rs, _ in results for row in rs]
    landscape_std = results[0][1]
    cols = [
        ("family", "feature family (taylor, fourier, sinc)"),
        ("omega_ker_ratio", "sinc bandwidth over omega_max (blank for explicit features)"),
        ("n_train", "training set size"),
        ("repeat", "repetition index"),
        ("rmse", "root mean squared test error"),
        ("n_weights", "number of weights (training points for the kernel model)"),
        ("ridge", "ridge parameter lambda_R"),
        ("omega_ker", "kernel bandwidth (sinc only)"),
        ("selected", "selected size parameter (Fourier features or Taylor degree)"),
        ("solver", "linear solver used"),
        ("status", "ok or the training error message"),
    ]
    raw = ResultTable(name.replace("-", "_"), cols, rows)
    agg_rows = [dict(r, seed=seed, landscape_std=landscape_std) for r in _aggregate(rows)]
    agg = ResultTable(
        f"{name.replace('-', '_')}_summary",
        [
            ("curve", "family, with the bandwidth ratio for sinc"),
            ("n_train", "training set size"),
            ("q25", "25th percentile of the test RMSE"),
            ("median", "median test RMSE"),
            ("q75", "75th percentile of the test RMSE"),
            ("n_ok", "repeats that trained successfully"),
            ("n_total", "repeats attempted"),
            ("landscape_std", "standard deviation of the sampled landscape (test pool)"),
        ],
        agg_rows,
    )
    return rows, raw, agg, agg_rows, landscape_std, seed


def run_surrogate_bench(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    rows, raw, agg, agg_rows, std, seed = _bench_common(cfg, threads, "surrogate-bench")
    curves = {}
    for r in agg_rows:
        curves.setdefault(r["curve"], []).append((r["n_train"], r["median"]))
    checks = {}
    for curve, pts in curves.items():
        meds = [m for _, m in sorted(pts)]
        inv = _inversions(meds)
        checks[f"monotone_{curve}"] = {"inversions": inv, "passed": inv <= 1}
    largest = max(int(n) for n in cfg.method["n_train"])
    final = {c: dict(pts)[largest] for c, pts in curves.items()}
    sinc_keys = [c for c in final if c.startswith("sinc")]
    others = [c for c in final if not c.startswith("sinc")]
    if sinc_keys and others:
        best_sinc = final[sinc_keys[-1]] if "sinc@1" not in final else final["sinc@1"]
        checks["sinc_best_at_largest"] = {
            "sinc_median": best_sinc,
            "other_medians": {c: final[c] for c in others},
            "passed": all(best_sinc <= final[c] for c in others),
        }
    summary = {"experiment": "surrogate-bench", "seed": seed, "landscape_std": std,
               "largest_n_train": largest, "soft_checks": checks,
               "failed_cells": sum(1 for r in rows if r["status"] != "ok")}
    return ExperimentResult("surrogate-bench", [raw, agg], summary)


def run_kernel_bandwidth(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    cfg.method["families"] = ["sinc"]
    rows, raw, agg, agg_rows, std, seed = _bench_common(cfg, threads, "kernel-bandwidth")
    ratios = sorted(float(r) for r in cfg.method["omega_ker_ratios"])
    sizes = sorted(int(n) for n in cfg.method["n_train"])
    small, large = sizes[0], sizes[-1]
    table = {(r["omega_ker_ratio"], r["n_train"], r["repeat"]): r["rmse"] for r in rows}
    repeats = int(cfg.method["repeats"])
    full = max(ratios)
    comparisons = {}
    for ratio in ratios:
        if ratio == full:
            continue
        better_small = sum(table[(ratio, small, k)] < table[(full, small, k)] for k in range(repeats))
        worse_large = sum(table[(ratio, large, k)] > table[(full, large, k)] for k in range(repeats))
        both = sum(
            table[(ratio, small, k)] < table[(full, small, k)] and table[(ratio, large, k)] > table[(full, large, k)]
            for k in range(repeats)
        )
        comparisons[f"{ratio:g}"] = {"better_at_smallest": int(better_small), "worse_at_largest": int(worse_large),
                                     "both": int(both), "repeats": repeats}
    summary = {"experiment": "kernel-bandwidth", "seed": seed, "landscape_std": std,
               "reference_ratio": full, "smallest_n_train": small, "largest_n_train": large,
               "per_seed_tradeoff": comparisons}
    return ExperimentResult("kernel-bandwidth", [raw, agg], summary)


# ----------------------------------------------------------------------------
# taylor order


def run_taylor_order(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    m = cfg.method
    eps_list = [float(e) for e in m["epsilons"]]
    if any(not 0 < e < 1 for e in eps_list):
        raise ValueError("epsilons must lie in (0, 1)")
    ppd = int(m["points_per_decade"])
    exps = np.arange(int(m["u_max_L_min_exp"]) * ppd, int(m["u_max_L_max_exp"]) * ppd + 1) / ppd
    grid = [float(10.0**e) for e in exps]
    table = ResultTable(
        "taylor_order",
        [("epsilon", "error threshold"), ("u_max_L", "u_max times the time-energy budget"),
         ("p_star", "minimum Taylor order"), ("ratio", "p_star / u_max_L")],
    )
    for eps in eps_list:
        for x in grid:
            p = B.min_taylor_order(eps, x)
            table.add({"epsilon": eps, "u_max_L": x, "p_star": p, "ratio": p / x, "seed": cfg.seed})
    at = float(m["slope_at"])
    tol = float(m["slope_tolerance"])
    slopes = {f"{e:g}": B.min_taylor_order(e, at) / at / math.e for e in eps_list}
    checks = {
        "p5_at_1e-3_and_1": {"value": B.min_taylor_order(1e-3, 1.0), "passed": B.min_taylor_order(1e-3, 1.0) == 5},
        "small_order_at_0.01": {
            "values": {f"{e:g}": B.min_taylor_order(e, 0.01) for e in eps_list},
            "passed": all(B.min_taylor_order(e, 0.01) <= 10 for e in eps_list),
        },
        "slope_near_e": {
            "u_max_L": at,
            "ratio_over_e": slopes,
            "passed_per_epsilon": {k: abs(v - 1) <= tol for k, v in slopes.items()},
        },
    }
    summary = {"experiment": "taylor-order", "checks": checks}
    failures = [k for k in ("p5_at_1e-3_and_1", "small_order_at_0.01") if not checks[k]["passed"]]
    return ExperimentResult("taylor-order", [table], summary, failures)


# ----------------------------------------------------------------------------
# bounds audit


def _rabi_problem(u_max=np.pi / 2):
    model = HamiltonianModel(np.zeros((2, 2)), PAULI_X)
    return fidelity_problem(model, ControlGrid(1, 1.0, u_max), [1, 0], [0, 1])


def _small_problem(cfg, q, n_steps, u_max=None, observable=None):
    pc = dict(cfg.problem, Q=q)
    if observable:
        pc["observable"] = observable
    gc = dict(cfg.grid, N=n_steps)
    if u_max is not None:
        gc["u_max"] = u_max
    return build_problem(pc, gc)


def _audit_task(args):
    task, cfg = args
    m = cfg.method
    seed = cell_seed(cfg.seed, "bounds-audit", task)
    reports = []
    if task == "derivatives":
        problem = build_problem(cfg.problem, cfg.grid)
        for P in (1, 2):
            reports.append(B.audit_derivatives(problem, P, int(m["samples"]), cell_seed(seed, P), float(m["fd_tol"])))
    elif task == "lipschitz":
        problem = build_problem(cfg.problem, cfg.grid)
        reports.append(B.audit_lipschitz(problem, int(m["samples"]), seed))
    elif task == "taylor":
        base = build_problem(cfg.problem, cfg.grid)
        u_max = float(m["taylor_u_max_L"]) / (base.model.omega_max * base.grid.total_time)
        problem = build_problem(cfg.problem, dict(cfg.grid, u_max=u_max))
        reports.append(B.audit_taylor(problem, int(m["samples"]), seed, fd_tol=float(m["taylor_fd_tol"])))
        p = B.min_taylor_order(1e-3, 1.0)
        reports.append(B.BoundReport("min_taylor_order_eps1e-3_uL1", 0.0, float(abs(p - 5)),
                                     metadata={"order": p, "expected": 5}))
    elif task == "variance":
        q = int(m["variance_Q"])
        tcfg = TrotterConfig(int(m["trotter_n"]))
        for n_steps in m["variance_N"]:
            problem = _small_problem(cfg, q, int(n_steps), u_max=1.0)
            tensor = dft_extract(problem, tcfg)
            ev = lambda c, p=problem: evaluate_jn_many(p, tcfg, c)  # noqa: E731
            specs = [B.VarianceSpec(())] + [B.VarianceSpec((nu,)) for nu in sorted({0, int(n_steps) - 1})]
            for spec in specs:
                mc = B.mc_estimator(problem, spec, int(m["variance_samples"]), cell_seed(seed, n_steps, spec.derivative_indices), evaluate=ev)
                reports.extend(B.audit_variance(problem, tensor, spec, mc))
                unb = B.variance_unbounded(tensor, spec, problem.dt)
                cap = ((problem.dt * problem.model.omega_max) ** spec.order * problem.observable_span / 2) ** 2
                reports.append(B.BoundReport(f"variance_unbounded_P{spec.order}_idx{'-'.join(map(str, spec.derivative_indices)) or 'none'}_N{n_steps}", cap, unb, tolerance=1e-12))
    elif task == "lower_bound":
        rabi = _rabi_problem()
        tensor = dft_extract(rabi, TrotterConfig(1))
        lb = B.variance_lower_bound(B.support_frequencies(tensor), 1.0, 1, rabi.dt)
        summed = B.summed_variance_unbounded(tensor, 1, rabi.dt)
        reports.append(B.BoundReport("variance_lower_bound_rabi", lb.value, summed, direction="lower", tolerance=1e-12,
                                     metadata={"simplified": lb.simplified}))
    elif task == "ruggedness":
        problem = _small_problem(cfg, int(m["variance_Q"]), 2, u_max=float(cfg.grid["u_max"]), observable="infidelity")
        res = optimize(problem, int(m["minima_budget"]), "minimize")
        minima = B.near_optimal(res.trace.points, res.trace.values, float(m["minima_epsilon"]))
        rep = B.audit_ruggedness(problem, minima)
        rep.metadata.update(epsilon=float(m["minima_epsilon"]), best=res.value)
        reports.append(rep)
    elif task == "constant_model":
        tcfg = TrotterConfig(int(m["trotter_n"]))
        for n_steps in m["constant_model_N"]:
            problem = _small_problem(cfg, int(m["variance_Q"]), int(n_steps), u_max=1.0)
            tensor = dft_extract(problem, tcfg)
            cm = constant_model_bound(tensor, problem.grid.u_max)
            loss, se = constant_model_loss(problem, tcfg, cm.w0, int(m["constant_model_samples"]), cell_seed(seed, n_steps))
            reports.append(B.BoundReport(f"constant_model_loss_N{n_steps}", cm.loss_bound, loss, slack=2.0, hard=False,
                                         metadata={"w0": cm.w0, "mc_se": se}))
    elif task == "shrinking":
        fracs = []
        for n_steps in m["shrink_N"]:
            problem = _small_problem(cfg, int(m["variance_Q"]), int(n_steps), u_max=1.0,
                                     observable=m["shrink_observable"])
            frac, se = B.deviation_fraction(problem, int(m["shrink_samples"]), cell_seed(seed, n_steps), float(m["shrink_threshold"]))
            fracs.append((int(n_steps), frac, se))
        steps = sum(b[1] >= a[1] for a, b in zip(fracs, fracs[1:]))
        reports.append(B.BoundReport("shrinking_fraction_monotone", 0.0, float(steps), hard=False,
                                     metadata={"fractions": fracs}))
    elif task == "closed_form":
        problem = build_problem(cfg.problem, cfg.grid)
        reports.append(B.BoundReport("qsl_lower_bound", B.qsl_lower_bound(problem.grid.u_max, problem.model.omega_max),
                                     None, hard=False, metadata={"total_time": problem.grid.total_time}))
        tb = B.trap_ball(0.5, 20, 3.0)
        reports.append(B.BoundReport("trap_ball_stirling_N20", 0.01, abs(tb.stirling_volume / tb.volume - 1),
                                     metadata={"volume": tb.volume, "stirling": tb.stirling_volume}))
    else:
        raise ValueError(f"unknown audit task {task!r}")
    return [dict(r.as_dict(), task=task, seed=seed) for r in reports]


AUDIT_TASKS = ("derivatives", "lipschitz", "taylor", "variance", "lower_bound", "ruggedness",
               "constant_model", "shrinking", "closed_form")


def run_bounds_audit(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    tasks = cfg.method.get("tasks", list(AUDIT_TASKS))
    t0 = time.perf_counter()
    results = map_cells(_audit_task, [(t, cfg) for t in tasks], threads)
    reports = [r for rs in results for r in rs]
    table = ResultTable(
        "bounds_audit",
        [("task", "audit group"), ("name", "bound"), ("analytic_value", "analytic bound"),
         ("empirical_value", "empirical value (blank if none)"), ("satisfied", "1 if the bound holds"),
         ("slack", "slack factor"), ("tolerance", "absolute allowance"), ("hard", "1 for hard checks"),
         ("direction", "upper or lower bound")],
        reports,
    )
    failures = [r["name"] for r in reports if r["hard"] and not r["satisfied"]]
    summary = {"experiment": "bounds-audit", "reports": reports, "failures": failures,
               "n_reports": len(reports), "seconds": round(time.perf_counter() - t0, 1)}
    return ExperimentResult("bounds-audit", [table], summary, failures)


# ----------------------------------------------------------------------------
# optimize


def run_optimize(cfg: ExperimentConfig, threads=1) -> ExperimentResult:
    m = cfg.method
    problem = build_problem(cfg.problem, cfg.grid)
    mode = m["mode"]
    seed = cell_seed(cfg.seed, "optimize")
    eps = None if m.get("epsilon_prune") is None else float(m["epsilon_prune"])
    prune = m["prune"] if isinstance(m["prune"], bool) else str(m["prune"]).lower() in ("on", "true", "1")
    dcfg = DirectConfig(prune=prune, epsilon_prune=eps, min_radius=float(m.get("min_radius", 0.0)))
    res = optimize(problem, int(m["budget"]), mode, dcfg)
    trace = res.trace
    n = problem.n_steps
    cols = [("eval", "evaluation index"), ("value", "objective value"), ("incumbent", "best value so far")]
    cols += [(f"u{i + 1}", f"control amplitude, timestep {i + 1}") for i in range(n)]
    trace_table = ResultTable("optimize_trace", cols, [dict(r, seed=seed) for r in trace.rows()])
    pcols = [("iteration", "iteration at which the rectangle was pruned"), ("value", "centre value"),
             ("incumbent", "incumbent when pruned"), ("margin", "certificate margin"),
             ("k_bar", "Lipschitz constant used"), ("epsilon_prune", "pruning tolerance")]
    pcols += [(f"c{i + 1}", f"centre, timestep {i + 1}") for i in range(n)]
    pcols += [(f"h{i + 1}", f"half-width, timestep {i + 1}") for i in range(n)]
    prows = []
    for rec in trace.pruned:
        row = {"iteration": rec.iteration, "value": rec.value, "incumbent": rec.incumbent, "margin": rec.margin,
               "k_bar": rec.k_bar, "epsilon_prune": rec.epsilon_prune, "seed": seed}
        row.update({f"c{i + 1}": float(x) for i, x in enumerate(rec.center)})
        row.update({f"h{i + 1}": float(x) for i, x in enumerate(rec.half_widths)})
        prows.append(row)
    pruned_table = ResultTable("optimize_pruned", pcols, prows)
    violations, worst = audit_pruned(problem, trace, int(m.get("audit_resolution", 11)))
    dist_bad = check_min_distance(trace, problem.lipschitz_constant)
    inc = np.array(trace.incumbents)
    monotone = bool(np.all(np.diff(inc) <= 0) if mode == "minimize" else np.all(np.diff(inc) >= 0))
    summary = {
        "experiment": "optimize",
        "seed": seed,
        "mode": mode,
        "best_u": res.u,
        "best_value": res.value,
        "evaluations": trace.n_evaluations,
        "termination": trace.termination,
        "pruned": len(trace.pruned),
        "prune": prune,
        "epsilon_prune": dcfg.resolved(as_objective(problem))[0],
        "k_bar": problem.lipschitz_constant,
        "pruning_violations": violations,
        "worst_pruned_gap": worst,
        "min_distance_violations": dist_bad,
        "incumbent_monotone": monotone,
    }
    resolution = int(m.get("grid_resolution", 0) or 0)
    if resolution:
        gu, gj = grid_search(problem, resolution, mode)
        summary.update(grid_best_u=gu, grid_best_value=gj, grid_resolution=resolution,
                       gap_to_grid=abs(res.value - gj))
    failures = []
    if violations:
        failures.append("pruning_soundness")
    if dist_bad:
        failures.append("min_distance")
    if not monotone:
        failures.append("incumbent_monotone")
    return ExperimentResult("optimize", [trace_table, pruned_table], summary, failures)


RUNNERS = {
    "spectrum": run_spectrum,
    "surrogate-bench": run_surrogate_bench,
    "taylor-order": run_taylor_order,
    "bounds-audit": run_bounds_audit,
    "optimize": run_optimize,
    "kernel-bandwidth": run_kernel_bandwidth,
}
