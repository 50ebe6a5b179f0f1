"""Piecewise-constant controlled dynamics and landscape evaluation.

A landscape is the expectation value of a Hermitian observable on the state
reached after ``N`` steps of ``exp(-i dt (H_d + u_nu H_c))``. Everything here
works on batches of control vectors of shape ``(M, N)`` so that Monte-Carlo
and lattice sweeps stay vectorized; the scalar functions are thin wrappers.

Qubits are indexed little-endian: site ``i`` acts on bit ``i`` of the basis
index, so site 0 is the rightmost Kronecker factor.
"""
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapacityError

MAX_QUBITS = 12
# rows of (M, D, D) complex work arrays processed per chunk
_CHUNK_ELEMENTS = 1 << 22

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _as_hermitian(mat, name, rtol=1e-12):
    mat = np.array(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.conj().T)) > rtol * scale:
        raise ValueError(f"{name} is not Hermitian")
    return 0.5 * (mat + mat.conj().T)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Drift and control generators, in angular-frequency units.

    ``eigvecs`` is the unitary ``V`` with ``control = V^dagger diag(eigvals) V``;
    its rows are the control eigenvectors sorted by ascending eigenvalue.
    """

    drift: np.ndarray
    control: np.ndarray
    eigvecs: np.ndarray = field(init=False, repr=False)
    eigvals: np.ndarray = field(init=False)
    omega_max: float = field(init=False)

    def __post_init__(self):
        drift = _as_hermitian(self.drift, "drift")
        control = _as_hermitian(self.control, "control")
        if drift.shape != control.shape:
            raise ValueError("drift and control must have the same shape")
        w, q = np.linalg.eigh(control)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "eigvecs", q.conj().T)
        object.__setattr__(self, "eigvals", w)
        object.__setattr__(self, "omega_max", float(w[-1] - w[0]))

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def commutator_norm(self) -> float:
        comm = self.drift @ self.control - self.control @ self.drift
        return float(np.linalg.norm(comm, 2))


@dataclass(frozen=True)
class ControlGrid:
    n_steps: int
    dt: float
    u_max: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_total_time(cls, n_steps, total_time, u_max):
        return cls(n_steps, total_time / n_steps, u_max)

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    def budget(self, omega_max: float) -> float:
        """Time-energy budget ``L = omega_max * T``."""
        return omega_max * self.total_time


@dataclass(frozen=True, eq=False)
class LandscapeProblem:
    model: HamiltonianModel
    grid: ControlGrid
    initial: np.ndarray
    observable: np.ndarray
    observable_span: float = field(init=False)
    observable_norm: float = field(init=False)

    def __post_init__(self):
        psi = np.array(self.initial, dtype=complex).reshape(-1)
        if psi.shape[0] != self.model.dim:
            raise ValueError("initial state dimension does not match the model")
        if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
            raise ValueError("initial state must be normalized")
        obs = _as_hermitian(self.observable, "observable")
        if obs.shape[0] != self.model.dim:
            raise ValueError("observable dimension does not match the model")
        spectrum = np.linalg.eigvalsh(obs)
        object.__setattr__(self, "initial", psi)
        object.__setattr__(self, "observable", obs)
        object.__setattr__(self, "observable_span", float(spectrum[-1] - spectrum[0]))
        object.__setattr__(self, "observable_norm", float(np.max(np.abs(spectrum))))

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def budget(self) -> float:
        return self.grid.budget(self.model.omega_max)

    @property
    def lipschitz_constant(self) -> float:
        """Certified L1 Lipschitz constant ``omega_max dt dO / 2``."""
        return self.model.omega_max * self.grid.dt * self.observable_span / 2


def fidelity_problem(model, grid, initial, target) -> LandscapeProblem:
    chi = np.asarray(target, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(chi) - 1.0) > 1e-12:
        raise ValueError("target state must be normalized")
    return LandscapeProblem(model, grid, initial, np.outer(chi, chi.conj()))


def infidelity_problem(model, grid, initial, target) -> LandscapeProblem:
    chi = np.asarray(target, dtype=complex).reshape(-1)
    obs = np.eye(chi.shape[0]) - np.outer(chi, chi.conj())
    return LandscapeProblem(model, grid, initial, obs)


# ----------------------------------------------------------------------------
# Ising chain


def site_operator(op, site, n_qubits):
    factors = [PAULI_I] * n_qubits
    factors[n_qubits - 1 - site] = op
    return reduce(np.kron, factors)


def build_ising(q_qubits, alpha_d, h_z=0.0) -> HamiltonianModel:
    """Periodic transverse-field Ising ring with the x field as the control.

    drift   = sum_i alpha_d (Z_i Z_{i+1} + h_z Z_i)
    control = sum_i X_i
    """
    if int(q_qubits) != q_qubits or q_qubits <= 1:
        raise ValueError("the periodic Ising ring needs at least 2 qubits")
    if q_qubits > MAX_QUBITS:
        raise CapacityError(f"Q={q_qubits} exceeds the dense limit of {MAX_QUBITS} qubits")
    q = int(q_qubits)
    zs = [site_operator(PAULI_Z, i, q) for i in range(q)]
    drift = sum(alpha_d * (zs[i] @ zs[(i + 1) % q] + h_z * zs[i]) for i in range(q))
    control = sum(site_operator(PAULI_X, i, q) for i in range(q))
    return HamiltonianModel(drift, control)


def parity_operator(q_qubits, pauli="x"):
    """``Sigma_alpha``: tensor product of the same Pauli on every site."""
    op = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}[pauli]
    return reduce(np.kron, [op] * q_qubits)


def basis_state(selector, q_qubits, seed=None) -> np.ndarray:
    """Named product states: ``"0"``, ``"1"``, ``"+"``, ``"-"``, ``"random"``."""
    dim = 2 ** q_qubits
    idx = np.arange(dim)
    if selector == "0":
        psi = np.zeros(dim, dtype=complex)
        psi[0] = 1.0
    elif selector == "1":
        psi = np.zeros(dim, dtype=complex)
        psi[-1] = 1.0
    elif selector == "+":
        psi = np.full(dim, 1 / np.sqrt(dim), dtype=complex)
    elif selector == "-":
        parity = np.array([bin(i).count("1") % 2 for i in idx])
        psi = ((-1.0) ** parity / np.sqrt(dim)).astype(complex)
    elif selector == "random":
        psi = sample_random_state(dim, seed)
    else:
        raise ValueError(f"unknown state selector {selector!r}")
    return psi


def sample_random_state(dim, seed) -> np.ndarray:
    """Uniform real and imaginary parts on [-1, 1] per amplitude, then normalized."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-1, 1, dim) + 1j * rng.uniform(-1, 1, dim)
    return vec / np.linalg.norm(vec)


# ----------------------------------------------------------------------------
# Propagation


def _as_controls(controls, n_steps) -> np.ndarray:
    arr = np.asarray(controls, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_steps:
        raise ValueError(f"controls must have {n_steps} entries per row, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("controls must be finite")
    return arr


def _chunks(total, dim):
    size = max(1, _CHUNK_ELEMENTS // (dim * dim))
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))


def propagate_many(problem, controls, dt=None) -> np.ndarray:
    """Final states for each row of ``controls``; shape ``(M, D)``.

    ``dt`` overrides the grid step (a negative value runs time backwards).
    """
    u = _as_controls(controls, problem.n_steps)
    dt = problem.dt if dt is None else dt
    model = problem.model
    out = np.empty((u.shape[0], model.dim), dtype=complex)
    for sl in _chunks(u.shape[0], model.dim):
        states = np.repeat(problem.initial[None, :], sl.stop - sl.start, axis=0)
        for nu in range(problem.n_steps):
            h = model.drift[None] + u[sl, nu, None, None] * model.control[None]
            w, q = np.linalg.eigh(h)
            coeff = np.einsum("mji,mj->mi", q.conj(), states) * np.exp(-1j * dt * w)
            states = np.einsum("mij,mj->mi", q, coeff)
        out[sl] = states
    return out


def propagate(problem, u) -> np.ndarray:
    return propagate_many(problem, u)[0]


def expectation(observable, states) -> np.ndarray:
    return np.real(np.einsum("mi,ij,mj->m", states.conj(), observable, states))


def evaluate_many(problem, controls, dt=None) -> np.ndarray:
    return expectation(problem.observable, propagate_many(problem, controls, dt))


def evaluate_landscape(problem, u) -> float:
    return float(evaluate_many(problem, u)[0])


def sample_controls(rng, count, n_steps, u_max) -> np.ndarray:
    return rng.uniform(-u_max, u_max, size=(count, n_steps))


# ----------------------------------------------------------------------------
# Finite differences


@dataclass(frozen=True)
class FDResult:
    value: float
    step: float
    order: int
    warnings: tuple = ()


def default_fd_step(u, order) -> float:
    if order <= 2:
        return 1e-3 * max(1.0, float(np.max(np.abs(u))))
    return 1e-2


def _fd_stencil(multi_index, n_steps):
    order = len(multi_index)
    shifts, weights = [], []
    for signs in product((-1, 1), repeat=order):
        vec = np.zeros(n_steps)
        for s, nu in zip(signs, multi_index):
            vec[nu] += s
        shifts.append(vec)
        weights.append(np.prod(signs))
    return np.array(shifts), np.array(weights, dtype=float)


def fd_derivatives_many(
    evaluate: Callable[[np.ndarray], np.ndarray],
    controls: np.ndarray,
    multi_index: Sequence[int],
    step: float,
) -> np.ndarray:
    """Central differences of ``evaluate`` at every row of ``controls``.

    Applies one central difference per entry of ``multi_index``, so repeated
    indices give wider stencils; truncation error is O(step**2) in all cases.
    """
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    order = len(multi_index)
    if order == 0:
        return evaluate(controls)
    shifts, weights = _fd_stencil(multi_index, controls.shape[1])
    points = controls[:, None, :] + step * shifts[None, :, :]
    values = evaluate(points.reshape(-1, controls.shape[1])).reshape(len(controls), -1)
    return values @ weights / (2 * step) ** order


def fd_derivative(problem, u, multi_index, step=None, evaluate=None) -> FDResult:
    """Central finite-difference estimate of a mixed partial derivative of J.

    ``multi_index`` lists zero-based timestep indices (order <= 4). A warning is
    attached when double-precision cancellation could exceed 1e-6.
    """
    u = _as_controls(u, problem.n_steps)[0]
    order = len(multi_index)
    if order > 4:
        raise ValueError("finite-difference oracle supports orders up to 4")
    if any(not 0 <= nu < problem.n_steps for nu in multi_index):
        raise ValueError("multi_index entries must be timestep indices")
    step = default_fd_step(u, order) if step is None else step
    if not step > 0:
        raise ValueError("step must be positive")
    if evaluate is None:
        evaluate = lambda c: evaluate_many(problem, c)  # noqa: E731
    value = float(fd_derivatives_many(evaluate, u[None], multi_index, step)[0])
    notes = []
    scale = max(problem.observable_norm, 1.0)
    roundoff = 2**order * np.finfo(float).eps * scale / (2 * step) ** order
    if order and roundoff > 1e-6:
        notes.append(f"cancellation error ~{roundoff:.1e} dominates at step {step:g}")
    return FDResult(value, step, order, tuple(notes))


# ----------------------------------------------------------------------------
# Linear parametrizations


@dataclass(frozen=True, eq=False)
class LinearParametrization:
    """Controls ``u = R v`` with every column of ``R`` rescaled to unit L1 norm."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        norms = np.sum(np.abs(mat), axis=0)
        if np.any(norms == 0):
            raise ValueError("parametrization columns must be nonzero")
        object.__setattr__(self, "matrix", mat / norms)

    @property
    def n_params(self) -> int:
        return self.matrix.shape[1]


def apply_parametrization(p: LinearParametrization, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != p.n_params:
        raise ValueError(f"expected {p.n_params} parameters, got {v.shape[-1]}")
    return v @ p.matrix.T


def random_parametrization(n_steps, n_params, seed=None) -> LinearParametrization:
    rng = np.random.default_rng(seed)
    return LinearParametrization(rng.normal(size=(n_steps, n_params)))


def parametrized_evaluator(problem, p: LinearParametrization, dt: Optional[float] = None):
    return lambda v: evaluate_many(problem, apply_parametrization(p, v), dt)
