"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a one-line PASS/FAIL verdict with the measured numbers;
the lines are printed in pytest's terminal summary, or directly when this
file is run as a script (``python tests/test_acceptance.py``).
"""
import time

import numpy as np

from qlandscape import bounds as B
from qlandscape.direct import DirectConfig, audit_pruned, grid_search, optimize
from qlandscape.dynamics import (
    PAULI_X,
    ControlGrid,
    HamiltonianModel,
    basis_state,
    build_ising,
    evaluate_many,
    fidelity_problem,
    infidelity_problem,
)
from qlandscape.harness.config import load_config
from qlandscape.harness.experiments import run_kernel_bandwidth, run_surrogate_bench
from qlandscape.liefourier import TrotterConfig, dft_extract, evaluate_jn_many, lattice_axis, resum_many
from qlandscape.surrogates import Dataset, SincKernel, train_kernel

ACCEPTANCE_RESULTS = {}


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return ok


def ising(q, n_steps, init, target, alpha=1.0, T=1.0, u_max=1.0, observable="fidelity"):
    model = build_ising(q, alpha)
    grid = ControlGrid.from_total_time(n_steps, T, u_max)
    make = infidelity_problem if observable == "infidelity" else fidelity_problem
    return make(model, grid, basis_state(init, q), basis_state(target, q))


def audit_problem():
    return ising(3, 4, "0", "1", T=1.0, u_max=2.0)


def test_criterion_01_selection_rule_zeroing():
    t0 = time.perf_counter()
    t = dft_extract(ising(3, 1, "+", "-"), TrotterConfig(100))
    seconds = time.perf_counter() - t0
    worst = float(np.abs(t.data).max())
    ok = worst <= 1e-8 and seconds < 30
    assert record(1, "selection-rule zeroing, Q=3 +->-", ok, f"max|c|={worst:.2e}, {seconds:.2f}s")


def test_criterion_02_coefficient_structure():
    t0 = time.perf_counter()
    t = dft_extract(ising(4, 1, "0", "1"), TrotterConfig(200))
    seconds = time.perf_counter() - t0
    c, k = t.data, t.grid.indices
    imag = float(np.abs(c.imag).max())
    odd = float(np.abs(c[k % 2 == 1]).max())
    l2 = float(np.sum(np.abs(c) ** 2))
    conj = float(np.abs(c - np.conj(c[::-1])).max())
    ok = imag <= 1e-6 and odd <= 1e-6 and l2 <= 1 + 1e-8 and conj <= 1e-8 and seconds < 120
    detail = f"max|Im c|={imag:.1e}, odd={odd:.1e}, sum|c|^2={l2:.4f}, conj={conj:.1e}, {seconds:.2f}s"
    assert record(2, "coefficient structure, Q=4 0->1", ok, detail)


def test_criterion_03_dft_round_trip():
    worst_lattice, worst_off = 0.0, 0.0
    rng = np.random.default_rng(3)
    for problem, n in ((ising(4, 1, "0", "1"), 200), (ising(2, 2, "0", "+", alpha=0.6), 4)):
        cfg = TrotterConfig(n)
        t = dft_extract(problem, cfg)
        axis = lattice_axis(t.grid, problem.dt)
        mesh = np.stack(np.meshgrid(*[axis] * problem.n_steps, indexing="ij"), -1).reshape(-1, problem.n_steps)
        worst_lattice = max(worst_lattice, float(np.abs(resum_many(t, problem.dt, mesh) - evaluate_jn_many(problem, cfg, mesh)).max()))
        off = rng.uniform(-3, 3, (100, problem.n_steps))
        worst_off = max(worst_off, float(np.abs(resum_many(t, problem.dt, off) - evaluate_jn_many(problem, cfg, off)).max()))
    ok = worst_lattice <= 1e-8 and worst_off <= 1e-8
    assert record(3, "DFT round trip", ok, f"lattice={worst_lattice:.1e}, off-lattice={worst_off:.1e}")


def test_criterion_04_rabi_closed_form():
    model = HamiltonianModel(np.zeros((2, 2)), PAULI_X)
    t = dft_extract(fidelity_problem(model, ControlGrid(1, 1.0, 1.0), [1, 0], [0, 1]), TrotterConfig(1))
    err = float(np.abs(t.data - np.array([-0.25, 0.5, -0.25])).max())
    assert record(4, "Rabi closed form {1/2, -1/4, -1/4}", err <= 1e-10, f"max error={err:.1e}")


def test_criterion_05_derivative_lipschitz_audits():
    t0 = time.perf_counter()
    p = audit_problem()
    reports = [B.audit_derivatives(p, P, 1000, 50 + P, fd_tol=1e-4) for P in (1, 2)]
    reports.append(B.audit_lipschitz(p, 1000, 52))
    seconds = time.perf_counter() - t0
    ok = all(r.satisfied for r in reports) and seconds < 120
    detail = ", ".join(f"{r.name}={r.empirical_value:.3g}<={r.analytic_value:.3g}" for r in reports)
    assert record(5, "derivative and Lipschitz audits", ok, f"{detail}, {seconds:.1f}s")


def test_criterion_06_taylor_bound():
    base = audit_problem()
    u_max = 0.5 / (base.model.omega_max * base.grid.total_time)
    p = ising(3, 4, "0", "1", T=1.0, u_max=u_max)
    rep = B.audit_taylor(p, 1000, 60, fd_tol=1e-6)
    order = B.min_taylor_order(1e-3, 1.0)
    ok = rep.satisfied and rep.metadata["violations"] == 0 and order == 5
    detail = f"max err={rep.metadata['max_error']:.2e}, max bound={rep.metadata['max_bound']:.2e}, P*={order}"
    assert record(6, "Taylor bound at u_max L = 0.5", ok, detail)


def test_criterion_07_variance_identity():
    cfg = TrotterConfig(4)
    lines, ok = [], True
    for n_steps in (1, 2):
        p = ising(2, n_steps, "0", "1", u_max=1.0)
        t = dft_extract(p, cfg)
        specs = [B.VarianceSpec(())] + [B.VarianceSpec((nu,)) for nu in range(n_steps)]
        for spec in specs:
            mc = B.mc_estimator(p, spec, 100_000, 70 + 10 * n_steps + len(lines),
                                evaluate=lambda c, p=p: evaluate_jn_many(p, cfg, c))
            qf = B.variance_quadratic_form(t, spec, 1.0, p.dt)
            first, _ = B.bounded_variance_upper_bounds(spec.order, n_steps, p.budget, p.observable_span, 1.0)
            sig = abs(qf - mc.variance) / mc.variance_se
            ok &= sig <= 3 and qf <= first and mc.variance <= first
            lines.append(f"N={n_steps} idx={spec.derivative_indices}: {sig:.2f} se")
    assert record(7, "variance quadratic form vs Monte Carlo", ok, "; ".join(lines))


def test_criterion_08_whittaker_shannon():
    p = ising(2, 1, "0", "1", T=1.0, u_max=2 * np.pi)
    spacing = np.pi / (p.model.omega_max * p.dt)
    nodes = spacing * np.arange(-8, 9)[:, None]
    fidelity_values = evaluate_many(p, nodes)
    data = Dataset(nodes, fidelity_values, p.grid.u_max)
    gram = SincKernel(p.model.omega_max, p.dt)(nodes, nodes)
    k_err = float(np.abs(gram - np.eye(len(nodes))).max())
    model = train_kernel(data, 0.0, p.model.omega_max, p.dt)
    values = model.predict_many(nodes)
    r_err = float(np.abs(values - fidelity_values).max())
    ok = k_err <= 1e-10 and r_err <= 1e-9
    assert record(8, "Whittaker-Shannon lattice", ok, f"|K-I|={k_err:.1e}, node error={r_err:.1e}")


def test_criterion_09_surrogate_benchmark():
    cfg = load_config("surrogate-bench")
    t0 = time.perf_counter()
    res = run_surrogate_bench(cfg, threads=1)
    seconds = time.perf_counter() - t0
    agg = res.tables[1].rows
    curves = {}
    for r in agg:
        curves.setdefault(r["curve"], []).append((r["n_train"], r["median"]))
    inversions = {}
    for name, pts in curves.items():
        med = [m for _, m in sorted(pts)]
        inversions[name] = sum(b > a for a, b in zip(med, med[1:]))
    sinc = next(name for name in curves if name.startswith("sinc"))
    largest = max(n for n, _ in curves[sinc])
    at_largest = {name: dict(pts)[largest] for name, pts in curves.items()}
    ok = all(v <= 1 for v in inversions.values()) and all(at_largest[sinc] <= v for v in at_largest.values())
    ok &= seconds < 1800
    detail = (f"seed={cfg.seed}, inversions={inversions}, medians@{largest}="
              + "{" + ", ".join(f"{k}: {v:.2e}" for k, v in sorted(at_largest.items())) + "}"
              + f", {seconds:.0f}s on 1 core")
    assert record(9, "surrogate benchmark ordering", ok, detail)


def test_criterion_10_kernel_bandwidth_tradeoff():
    cfg = load_config("kernel-bandwidth")
    cfg.method["omega_ker_ratios"] = [0.3, 1.0]
    res = run_kernel_bandwidth(cfg, threads=1)
    trade = res.summary["per_seed_tradeoff"]["0.3"]
    ok = trade["both"] >= 12
    detail = (f"both={trade['both']}/16 (better at N_train={res.summary['smallest_n_train']}: "
              f"{trade['better_at_smallest']}, worse at N_train={res.summary['largest_n_train']}: "
              f"{trade['worse_at_largest']})")
    assert record(10, "kernel bandwidth trade-off, ratio 0.3 vs 1.0", ok, detail)


def test_criterion_11_optimizer():
    p = ising(2, 2, "0", "1", T=1.0, u_max=4.0)
    res = optimize(p, 500, "maximize")
    _, grid_best = grid_search(p, 101, "maximize")
    gap = grid_best - res.value
    # the budget-500 run prunes nothing, so soundness and cost are checked on runs
    # that stop at a common minimum rectangle size
    pruned = optimize(p, 10**6, "maximize", DirectConfig(prune=True, min_radius=0.5))
    full = optimize(p, 10**6, "maximize", DirectConfig(prune=False, min_radius=0.5))
    violations_500, _ = audit_pruned(p, res.trace)
    violations, _ = audit_pruned(p, pruned.trace)
    ok = (gap <= 0.05 and res.trace.n_evaluations <= 500 and violations_500 == 0 and violations == 0
          and pruned.trace.n_evaluations <= full.trace.n_evaluations)
    detail = (f"gap={gap:.2e} in {res.trace.n_evaluations} evals, pruned rects={len(pruned.trace.pruned)}, "
              f"violations={violations}, evals pruned/unpruned={pruned.trace.n_evaluations}/{full.trace.n_evaluations}")
    assert record(11, "DIRECT vs grid, pruning soundness and cost", ok, detail)


def test_criterion_12_shrinking_landscape():
    fracs = []
    for n_steps in (2, 4, 8):
        p = ising(2, n_steps, "0", "1", T=1.0, u_max=1.0, observable="infidelity")
        frac, _ = B.deviation_fraction(p, 100_000, 120 + n_steps, 0.1)
        fracs.append(frac)
    ok = all(b < a for a, b in zip(fracs, fracs[1:]))
    detail = ", ".join(f"N={n}: {f:.2e}" for n, f in zip((2, 4, 8), fracs))
    assert record(12, "shrinking deviation fraction (infidelity)", ok, detail)


if __name__ == "__main__":
    import sys

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
