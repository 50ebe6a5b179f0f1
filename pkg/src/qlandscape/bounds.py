"""Analytic landscape bounds and Monte-Carlo audits against simulated landscapes."""
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    LandscapeProblem,
    default_fd_step,
    evaluate_many,
    fd_derivatives_many,
    sample_controls,
)
from .liefourier import CoefficientTensor


@dataclass
class BoundReport:
    """Comparison of an analytic bound against an empirical value.

    ``satisfied`` holds iff ``empirical <= analytic * slack + tolerance``;
    ``tolerance`` carries finite-difference or roundoff allowance and is zero
    for exact comparisons. Lower bounds are reported with ``direction='lower'``
    and the inequality reversed.
    """

    name: str
    analytic_value: float
    empirical_value: Optional[float] = None
    slack: float = 1.0
    tolerance: float = 0.0
    hard: bool = True
    direction: str = "upper"
    metadata: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        if self.empirical_value is None:
            return True
        if self.direction == "lower":
            return self.empirical_value >= self.analytic_value / self.slack - self.tolerance
        return self.empirical_value <= self.analytic_value * self.slack + self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "analytic_value": self.analytic_value,
            "empirical_value": self.empirical_value,
            "satisfied": self.satisfied,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "hard": self.hard,
            "direction": self.direction,
            "metadata": self.metadata,
        }


@dataclass(frozen=True)
class VarianceSpec:
    """Zero-based timestep indices of the derivative and the sampling region."""

    derivative_indices: tuple = ()
    region: str = "bounded"

    def __post_init__(self):
        object.__setattr__(self, "derivative_indices", tuple(int(i) for i in self.derivative_indices))
        if self.region not in ("bounded", "unbounded"):
            raise ValueError("region must be 'bounded' or 'unbounded'")
        if any(i < 0 for i in self.derivative_indices):
            raise ValueError("derivative indices must be non-negative")

    @property
    def order(self) -> int:
        return len(self.derivative_indices)

    def check(self, n_steps):
        if any(i >= n_steps for i in self.derivative_indices):
            raise ValueError(f"derivative index out of range for N={n_steps}")


# ----------------------------------------------------------------------------
# Closed-form bounds


def derivative_bound(P, omega_max, dt, delta_o) -> float:
    if P < 1:
        raise ValueError("derivative order must be at least 1")
    return (omega_max * dt) ** P * delta_o / 2


def lipschitz_bound(omega_max, dt, delta_o) -> float:
    return omega_max * dt * delta_o / 2


def critical_point_bound(omega_max, dt, delta_o) -> float:
    return (omega_max * dt) ** 2 * delta_o / 2


def min_distance(delta_j, omega_max, dt, delta_o) -> float:
    """L1 separation needed for the landscape to change by ``delta_j``."""
    if delta_j == 0:
        return 0.0
    k_bar = lipschitz_bound(omega_max, dt, delta_o)
    return math.inf if k_bar == 0 else abs(delta_j) / k_bar


def taylor_error_bound(P, u_max_L) -> float:
    if P < 0:
        raise ValueError("order must be non-negative")
    if u_max_L == 0:
        return 0.0
    return math.exp((P + 1) * math.log(u_max_L) - math.lgamma(P + 2)) / 2


def min_taylor_order(epsilon, u_max_L, max_order=100000) -> int:
    """Smallest ``P`` with ``taylor_error_bound(P) <= epsilon`` (linear scan)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    for P in range(max_order + 1):
        if taylor_error_bound(P, u_max_L) <= epsilon:
            return P
    raise ValueError("no order found below max_order")


def qsl_lower_bound(u_max, omega_max) -> float:
    if not (u_max > 0 and omega_max > 0):
        raise ValueError("u_max and omega_max must be positive")
    return 1.0 / (u_max * omega_max)


@dataclass(frozen=True)
class TrapBall:
    beta: float
    l_c: float
    volume: float
    density_bound: float
    stirling_volume: float
    log_regime: float

    @property
    def exponentially_suppressed(self) -> bool:
        return self.log_regime > 0


def trap_ball(delta_j, N, L, delta_o=1.0) -> TrapBall:
    """L1 ball around a minimum within which the landscape moves by less than ``delta_j``."""
    if not 0 < delta_j <= delta_o:
        raise ValueError("delta_j must lie in (0, delta_o]")
    beta = max(math.sqrt(2 * delta_j), 2 * delta_j)
    l_c = beta * N / L
    log_vol = N * math.log(2 * l_c) - math.lgamma(N + 1)
    volume = math.exp(log_vol)
    stirling = math.exp(N * math.log(2 * math.e * beta / L)) / math.sqrt(2 * math.pi * N)
    return TrapBall(beta, l_c, volume, math.exp(-log_vol), stirling, math.log(2 * math.e * beta / L))


def ruggedness_bound(omega_max, dt, delta_o=1.0) -> float:
    return critical_point_bound(omega_max, dt, delta_o)


def ruggedness_estimate(problem, minima, step=None, evaluate=None) -> Optional[float]:
    """Mean diagonal Hessian element over the supplied minima (None if empty)."""
    minima = np.asarray(minima, dtype=float).reshape(-1, problem.n_steps)
    if len(minima) == 0:
        return None
    evaluate = evaluate or (lambda c: evaluate_many(problem, c))
    step = default_fd_step(minima, 2) if step is None else step
    diag = [fd_derivatives_many(evaluate, minima, (nu, nu), step) for nu in range(problem.n_steps)]
    return float(np.mean(diag))


def near_optimal(points, values, epsilon, mode="minimize"):
    """Points within ``epsilon`` of the best value (the minima neighbourhood)."""
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    if mode == "maximize":
        keep = values >= values.max() - epsilon
    else:
        keep = values <= values.min() + epsilon
    return points[keep]


# ----------------------------------------------------------------------------
# Variance of the Lie-Fourier representation


def _check_tensor(tensor: CoefficientTensor, spec: VarianceSpec):
    spec.check(tensor.n_steps)
    if tensor.data.shape != (tensor.grid.n_delta,) * tensor.n_steps:
        raise ValueError("tensor shape does not match its frequency grid")


def _derivative_weights(tensor: CoefficientTensor, spec: VarianceSpec) -> np.ndarray:
    """``prod_p omega_{nu_p}`` on the tensor grid (dt and the phase factored out)."""
    freqs = tensor.grid.frequencies
    weight = np.ones(tensor.data.shape)
    for nu in spec.derivative_indices:
        shape = [1] * tensor.n_steps
        shape[nu] = -1
        weight = weight * freqs.reshape(shape)
    return weight


def _box_kernel_matrix(tensor: CoefficientTensor, u_max, dt) -> np.ndarray:
    k = tensor.grid.indices
    arg = (k[:, None] - k[None, :]) * tensor.grid.spacing * dt * u_max
    return np.sinc(arg / np.pi)


def variance_quadratic_form(tensor: CoefficientTensor, spec: VarianceSpec, u_max, dt) -> float:
    """Exact variance of a derivative of ``J_n`` over uniform controls in the box.

    Evaluates ``dt^{2P} [a^dag (K x ... x K) a - |sum a kt(omega)|^2]`` with
    ``a = c prod omega_{nu_p}`` and ``K_kl = kt(omega_k - omega_l)``; the
    product structure of the box kernel lets each axis be contracted on its own.
    """
    if spec.region != "bounded":
        raise ValueError("use variance_unbounded for the unbounded region")
    _check_tensor(tensor, spec)
    a = tensor.data * _derivative_weights(tensor, spec)
    kmat = _box_kernel_matrix(tensor, u_max, dt)
    ka = a
    for axis in range(tensor.n_steps):
        ka = np.moveaxis(np.tensordot(kmat, ka, axes=(1, axis)), 0, axis)
    second = np.vdot(a, ka).real
    kappa = kmat[:, tensor.grid.k_max]
    mean = a
    for _ in range(tensor.n_steps):
        mean = np.tensordot(mean, kappa, axes=(0, 0))
    return float(dt ** (2 * spec.order) * (second - abs(mean) ** 2))


def variance_unbounded(tensor: CoefficientTensor, spec: VarianceSpec, dt) -> float:
    """Long-box limit: ``dt^{2P} sum_{omega != 0} |c|^2 prod omega_{nu_p}^2``."""
    _check_tensor(tensor, spec)
    terms = np.abs(tensor.data) ** 2 * _derivative_weights(tensor, spec) ** 2
    terms[tensor.zero_index()] = 0.0
    return float(dt ** (2 * spec.order) * terms.sum())


def summed_variance_unbounded(tensor: CoefficientTensor, P, dt) -> float:
    """Sum of ``variance_unbounded`` over every length-``P`` index tuple."""
    norms = np.sum(tensor.frequency_mesh() ** 2, axis=-1)
    terms = np.abs(tensor.data) ** 2 * norms**P
    terms[tensor.zero_index()] = 0.0
    return float(dt ** (2 * P) * terms.sum())


def support_frequencies(tensor: CoefficientTensor, rtol=1e-12) -> np.ndarray:
    """Frequency vectors whose coefficient exceeds ``rtol`` times the largest one."""
    mags = np.abs(tensor.data)
    keep = mags > rtol * mags.max() if mags.max() > 0 else np.zeros(mags.shape, bool)
    return tensor.frequency_mesh()[keep]


@dataclass(frozen=True)
class VarianceLowerBound:
    value: float
    simplified: float


def variance_lower_bound(support, delta_j, P, dt, omega_min=None, n_frequencies=None) -> VarianceLowerBound:
    """Lower bound on the summed order-``P`` variance over unbounded controls.

    ``support`` holds the frequency vectors a landscape with range ``delta_j``
    may use. The simplified value replaces every norm by ``omega_min`` and the
    support size by ``n_frequencies`` (the full lattice count when given).
    """
    support = np.atleast_2d(np.asarray(support, dtype=float))
    norms = np.linalg.norm(support, axis=1)
    norms = norms[norms > 0]
    if len(norms) == 0:
        return VarianceLowerBound(0.0, 0.0)
    value = delta_j**2 * dt ** (2 * P) / (4 * np.sum(norms ** (-2.0 * P)))
    omega_min = norms.min() if omega_min is None else omega_min
    count = len(norms) if n_frequencies is None else n_frequencies - 1
    simplified = delta_j**2 * (dt * omega_min) ** (2 * P) / (4 * count)
    return VarianceLowerBound(float(value), float(simplified))


def bounded_variance_upper_bounds(P, N, L, delta_o, u_max):
    """Both branches of the bounded-box variance bound: exact, then asymptotic."""
    first = L ** (2 * P) * delta_o**2 / (4 * N ** (2 * P))
    second = (delta_o * L ** (P + 1) * u_max) ** 2 / (3 * N ** (2 * P + 1))
    return first, second


# ----------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    samples: int
    seed: int


def _moments(x, seed) -> MCEstimate:
    m = len(x)
    mean = float(x.mean())
    centered = x - mean
    var = float(centered @ centered / (m - 1))
    mu4 = float(np.mean(centered**4))
    var_se = math.sqrt(max(mu4 - var**2, 0.0) / m)
    return MCEstimate(mean, math.sqrt(var / m), var, var_se, m, seed)


def mc_estimator(problem: LandscapeProblem, spec: VarianceSpec, samples, seed, evaluate=None, step=None) -> MCEstimate:
    """Uniform-box Monte Carlo of ``J`` (or an FD derivative) and its variance.

    ``evaluate`` swaps in another landscape, e.g. the Trotter approximant.
    """
    if samples < 100:
        raise ValueError("at least 100 samples are required")
    if spec.region != "bounded":
        raise ValueError("Monte Carlo sampling needs a bounded box")
    spec.check(problem.n_steps)
    rng = np.random.default_rng(seed)
    u = sample_controls(rng, samples, problem.n_steps, problem.grid.u_max)
    evaluate = evaluate or (lambda c: evaluate_many(problem, c))
    if spec.order == 0:
        x = evaluate(u)
    else:
        h = default_fd_step(np.full(1, problem.grid.u_max), spec.order) if step is None else step
        x = fd_derivatives_many(evaluate, u, spec.derivative_indices, h)
    return _moments(np.asarray(x, dtype=float), seed)


def deviation_fraction(problem, samples, seed, threshold=0.1, evaluate=None):
    """Fraction of the box where ``E[J] - J > threshold`` and its standard error."""
    rng = np.random.default_rng(seed)
    u = sample_controls(rng, samples, problem.n_steps, problem.grid.u_max)
    evaluate = evaluate or (lambda c: evaluate_many(problem, c))
    values = evaluate(u)
    hits = (values.mean() - values) > threshold
    frac = float(hits.mean())
    return frac, math.sqrt(frac * (1 - frac) / samples)


# ----------------------------------------------------------------------------
# Audits


def _problem_constants(problem):
    return problem.model.omega_max, problem.dt, problem.observable_span


def audit_derivatives(problem, P, samples, seed, fd_tol=1e-4, step=None) -> BoundReport:
    """Max FD derivative of order ``P`` over random points and all index tuples."""
    omega_max, dt, delta_o = _problem_constants(problem)
    rng = np.random.default_rng(seed)
    u = sample_controls(rng, samples, problem.n_steps, problem.grid.u_max)
    evaluate = lambda c: evaluate_many(problem, c)  # noqa: E731
    h = default_fd_step(np.full(1, problem.grid.u_max), P) if step is None else step
    worst = 0.0
    for idx in combinations_with_replacement(range(problem.n_steps), P):
        worst = max(worst, float(np.max(np.abs(fd_derivatives_many(evaluate, u, idx, h)))))
    bound = derivative_bound(P, omega_max, dt, delta_o)
    meta = {"samples": samples, "seed": seed, "order": P, "fd_step": h}
    return BoundReport(f"derivative_P{P}", bound, worst, tolerance=fd_tol, metadata=meta)


def audit_lipschitz(problem, pairs, seed, tol=1e-12) -> BoundReport:
    """Worst ratio ``|J(u)-J(v)| / ||u-v||_1`` over random pairs.

    Half of the pairs are independent uniform draws; the other half are local
    perturbations, where the ratio approaches the local gradient norm.
    """
    omega_max, dt, delta_o = _problem_constants(problem)
    rng = np.random.default_rng(seed)
    n, u_max = problem.n_steps, problem.grid.u_max
    a = sample_controls(rng, pairs, n, u_max)
    b = sample_controls(rng, pairs, n, u_max)
    local = slice(pairs // 2, pairs)
    b[local] = np.clip(a[local] + rng.uniform(-1, 1, a[local].shape) * 1e-3 * u_max, -u_max, u_max)
    ja = evaluate_many(problem, a)
    jb = evaluate_many(problem, b)
    dist = np.sum(np.abs(a - b), axis=1)
    ok = dist > 0
    ratio = np.abs(ja - jb)[ok] / dist[ok]
    k_bar = lipschitz_bound(omega_max, dt, delta_o)
    violations = int(np.sum(np.abs(ja - jb)[ok] > k_bar * dist[ok] + tol))
    meta = {"pairs": pairs, "seed": seed, "violations": violations}
    return BoundReport("lipschitz", k_bar, float(ratio.max()), tolerance=tol, metadata=meta)


def taylor_remainder_bound(P, omega_max, dt, delta_o, l1_distance) -> np.ndarray:
    """Lagrange remainder of the order-``P`` expansion at L1 distance ``d``."""
    d = np.asarray(l1_distance, dtype=float)
    return (omega_max * dt * d) ** (P + 1) * delta_o / (2 * math.factorial(P + 1))


def audit_taylor(problem, samples, seed, reference=None, fd_tol=1e-6, step=1e-4) -> BoundReport:
    """Second-order expansion error against the pointwise Lagrange bound.

    The empirical value is the largest excess ``|J - J_2| - bound(u)``, so the
    report compares it with zero.
    """
    omega_max, dt, delta_o = _problem_constants(problem)
    n = problem.n_steps
    u0 = np.zeros(n) if reference is None else np.asarray(reference, dtype=float)
    evaluate = lambda c: evaluate_many(problem, c)  # noqa: E731
    j0 = float(evaluate(u0[None])[0])
    grad = np.array([fd_derivatives_many(evaluate, u0[None], (i,), step)[0] for i in range(n)])
    hess = np.empty((n, n))
    for i, j in combinations_with_replacement(range(n), 2):
        hess[i, j] = hess[j, i] = fd_derivatives_many(evaluate, u0[None], (i, j), step)[0]
    rng = np.random.default_rng(seed)
    u = sample_controls(rng, samples, n, problem.grid.u_max)
    d = u - u0
    approx = j0 + d @ grad + 0.5 * np.einsum("mi,ij,mj->m", d, hess, d)
    err = np.abs(evaluate(u) - approx)
    bound = taylor_remainder_bound(2, omega_max, dt, delta_o, np.sum(np.abs(d), axis=1))
    excess = err - bound
    meta = {
        "samples": samples,
        "seed": seed,
        "max_error": float(err.max()),
        "max_bound": float(bound.max()),
        "violations": int(np.sum(excess > fd_tol)),
        "u_max_L": problem.grid.u_max * problem.budget,
    }
    return BoundReport("taylor_P2", 0.0, float(excess.max()), tolerance=fd_tol, metadata=meta)


def audit_ruggedness(problem, minima, step=None) -> BoundReport:
    omega_max, dt, delta_o = _problem_constants(problem)
    est = ruggedness_estimate(problem, minima, step)
    empirical = None if est is None else abs(est)
    meta = {"n_minima": int(np.asarray(minima).reshape(-1, problem.n_steps).shape[0])}
    return BoundReport("ruggedness", ruggedness_bound(omega_max, dt, delta_o), empirical, tolerance=1e-6, metadata=meta)


def audit_variance(problem, tensor, spec: VarianceSpec, mc: MCEstimate, sigmas=3.0) -> Sequence[BoundReport]:
    """Quadratic-form variance against MC, plus both upper-bound branches."""
    qf = variance_quadratic_form(tensor, spec, problem.grid.u_max, problem.dt)
    L = problem.budget
    first, second = bounded_variance_upper_bounds(
        spec.order, problem.n_steps, L, problem.observable_span, problem.grid.u_max
    )
    tag = f"P{spec.order}_idx{'-'.join(map(str, spec.derivative_indices)) or 'none'}_N{problem.n_steps}"
    meta = {"quadratic_form": qf, "mc_variance": mc.variance, "mc_se": mc.variance_se, "samples": mc.samples}
    return [
        BoundReport(f"variance_identity_{tag}", sigmas * mc.variance_se, abs(qf - mc.variance), metadata=meta),
        BoundReport(f"variance_branch1_qf_{tag}", first, qf, tolerance=1e-12),
        BoundReport(f"variance_branch1_mc_{tag}", first, mc.variance),
        BoundReport(f"variance_branch2_{tag}", second, qf, slack=2.0, hard=False),
    ]
