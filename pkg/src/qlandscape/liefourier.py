"""Lie-Trotter approximants of the landscape and their Fourier coefficients.

The order-``n`` approximant replaces every step propagator with
``(exp(-i dt H_d / n) exp(-i dt u H_c / n))**n``. Its landscape ``J_n`` is a
finite Fourier sum in the controls whose frequencies are differences of
``n``-fold averages of control eigenvalues. When those eigenvalues are equally
spaced the frequencies sit on the grid ``omega_max * k / k_max`` and the
coefficients follow from an inverse DFT of ``J_n`` sampled on a hyperlattice.
"""
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import _as_controls, _chunks
from .errors import CapacityError, SpectrumError, SymmetryError

DEFAULT_ELEMENT_BUDGET = 2**27
SPACING_RTOL = 1e-9
ACTIVE_SECTOR_TOL = 1e-10
_MAX_BASE_MULTIPLE = 4096


@dataclass(frozen=True)
class TrotterConfig:
    order: int = 1

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("Trotter order must be a positive integer")
        object.__setattr__(self, "order", int(self.order))


@dataclass(frozen=True)
class FrequencyGrid:
    """Single-timestep frequencies ``omega_max * k / k_max``, ``|k| <= k_max``.

    ``base_multiple`` is ``m = k_max / n``: the control eigenvalue gaps are
    integer multiples of ``omega_max / m``.
    """

    k_max: int
    omega_max: float
    trotter_order: int = 1

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.k_max % self.trotter_order:
            raise ValueError("k_max must be a multiple of the Trotter order")

    @property
    def n_delta(self) -> int:
        return 2 * self.k_max + 1

    @property
    def spacing(self) -> float:
        return self.omega_max / self.k_max

    @property
    def base_multiple(self) -> int:
        return self.k_max // self.trotter_order

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def frequencies(self) -> np.ndarray:
        return self.spacing * self.indices

    def period(self, dt) -> float:
        """Common period of all Fourier components along each control axis."""
        return 2 * np.pi * self.k_max / (dt * self.omega_max)


def base_multiple(eigvals, rtol=SPACING_RTOL) -> int:
    """Smallest ``m`` with every eigenvalue gap an integer multiple of ``omega_max / m``."""
    gaps = np.asarray(eigvals) - np.min(eigvals)
    omega_max = float(np.max(gaps))
    if omega_max == 0:
        raise SpectrumError("control Hamiltonian is proportional to the identity")
    tol = rtol * omega_max
    for m in range(1, _MAX_BASE_MULTIPLE + 1):
        units = gaps * m / omega_max
        if np.all(np.abs(units - np.round(units)) * omega_max / m <= tol):
            return m
    raise SpectrumError("control eigenvalue gaps are not commensurate on an equal grid")


def frequency_grid(model, cfg: TrotterConfig) -> FrequencyGrid:
    m = base_multiple(model.eigvals)
    return FrequencyGrid(m * cfg.order, model.omega_max, cfg.order)


# ----------------------------------------------------------------------------
# Trotterized propagators


def _drift_in_control_frame(model, dt, order):
    w, q = np.linalg.eigh(model.drift)
    step = (q * np.exp(-1j * dt / order * w)) @ q.conj().T
    return model.eigvecs @ step @ model.eigvecs.conj().T


def trotter_unitaries(model, cfg: TrotterConfig, dt, us) -> np.ndarray:
    """``U_n(u)`` for each value in ``us``; shape ``(M, D, D)``."""
    us = np.atleast_1d(np.asarray(us, dtype=float))
    if not np.all(np.isfinite(us)):
        raise ValueError("controls must be finite")
    n = cfg.order
    w_frame = _drift_in_control_frame(model, dt, n)
    phases = np.exp(-1j * dt / n * us[:, None] * model.eigvals[None, :])
    layer = w_frame[None, :, :] * phases[:, None, :]
    frame = np.linalg.matrix_power(layer, n)
    v = model.eigvecs
    return v.conj().T[None] @ frame @ v[None]


def trotter_step(model, cfg: TrotterConfig, dt, u) -> np.ndarray:
    return trotter_unitaries(model, cfg, dt, [u])[0]


def evaluate_jn_many(problem, cfg: TrotterConfig, controls) -> np.ndarray:
    u = _as_controls(controls, problem.n_steps)
    model = problem.model
    out = np.empty(u.shape[0])
    for sl in _chunks(u.shape[0], model.dim):
        states = np.repeat(problem.initial[None, :], sl.stop - sl.start, axis=0)
        for nu in range(problem.n_steps):
            steps = trotter_unitaries(model, cfg, problem.dt, u[sl, nu])
            states = np.einsum("mij,mj->mi", steps, states)
        out[sl] = np.real(np.einsum("mi,ij,mj->m", states.conj(), problem.observable, states))
    return out


def evaluate_jn(problem, cfg: TrotterConfig, u) -> float:
    return float(evaluate_jn_many(problem, cfg, u)[0])


# ----------------------------------------------------------------------------
# Lattice sampling and DFT extraction


def lattice_axis(grid: FrequencyGrid, dt) -> np.ndarray:
    """Sample positions ``2 pi j k_max / (dt omega_max n_delta)``, ``j < n_delta``."""
    return np.arange(grid.n_delta) * grid.period(dt) / grid.n_delta


def _row_chunks(total, row_size, elements=1 << 22):
    size = max(1, elements // max(1, row_size))
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))


def _check_budget(grid, n_steps, element_budget):
    count = grid.n_delta**n_steps
    if count > element_budget:
        raise CapacityError(
            f"lattice of {grid.n_delta}^{n_steps} = {count} points exceeds the "
            f"element budget of {element_budget}"
        )


def jn_lattice(problem, cfg, grid=None, element_budget=DEFAULT_ELEMENT_BUDGET) -> np.ndarray:
    """``J_n`` on the full DFT hyperlattice, axis ``nu`` indexing ``u_nu``.

    The ``n_delta`` single-step unitaries are built once; states are pushed
    through the first ``N - 1`` steps for every lattice prefix and the last
    step is folded into the observable's eigenvectors.
    """
    grid = frequency_grid(problem.model, cfg) if grid is None else grid
    n_steps = problem.n_steps
    _check_budget(grid, n_steps, element_budget)
    steps = trotter_unitaries(problem.model, cfg, problem.dt, lattice_axis(grid, problem.dt))
    states = problem.initial[None, :]
    for _ in range(n_steps - 1):
        states = np.einsum("kij,pj->pki", steps, states).reshape(-1, problem.model.dim)

    mu, vecs = np.linalg.eigh(problem.observable)
    keep = np.abs(mu) > 1e-14 * max(1.0, np.max(np.abs(mu)))
    mu, vecs = mu[keep], vecs[:, keep]
    rows = np.einsum("ir,kij->rkj", vecs.conj(), steps).reshape(-1, problem.model.dim)
    out = np.zeros((states.shape[0], grid.n_delta))
    for sl in _row_chunks(states.shape[0], rows.shape[0]):
        amps = (states[sl] @ rows.T).reshape(sl.stop - sl.start, len(mu), grid.n_delta)
        out[sl] = np.einsum("r,prk->pk", mu, np.abs(amps) ** 2)
    return out.reshape((grid.n_delta,) * n_steps)


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Coefficients ``c_k`` of ``J_n(u) = sum_k c_k exp(-i dt omega(k) . u)``.

    ``data[k + k_max]`` holds ``c_k`` along every axis.
    """

    grid: FrequencyGrid
    n_steps: int
    dt: float
    data: np.ndarray = field(repr=False)

    @property
    def trotter_order(self) -> int:
        return self.grid.trotter_order

    def frequency_axes(self):
        return [self.grid.frequencies] * self.n_steps

    def frequency_mesh(self) -> np.ndarray:
        """Frequency vectors with shape ``data.shape + (N,)``."""
        return np.stack(np.meshgrid(*self.frequency_axes(), indexing="ij"), axis=-1)

    def zero_index(self):
        return (self.grid.k_max,) * self.n_steps

    def scaled(self) -> np.ndarray:
        """``n**N * c``, which keeps non-resonant coefficients O(1) as n grows."""
        return self.data * float(self.trotter_order) ** self.n_steps


def dft_extract(problem, cfg, grid=None, element_budget=DEFAULT_ELEMENT_BUDGET) -> CoefficientTensor:
    grid = frequency_grid(problem.model, cfg) if grid is None else grid
    if grid.k_max % cfg.order or grid.trotter_order != cfg.order:
        raise ValueError("frequency grid does not match the Trotter order")
    # validates the equal-spacing precondition on the model at hand
    base_multiple(problem.model.eigvals)
    values = jn_lattice(problem, cfg, grid, element_budget)
    n_steps = problem.n_steps
    j = np.indices(values.shape).sum(axis=0) % grid.n_delta
    shifted = values * np.exp(-2j * np.pi * grid.k_max * j / grid.n_delta)
    data = np.fft.ifftn(shifted)
    return CoefficientTensor(grid, n_steps, problem.dt, data)


def resum_many(tensor: CoefficientTensor, dt, controls) -> np.ndarray:
    """Evaluate the Fourier sum at arbitrary control rows."""
    u = np.atleast_2d(np.asarray(controls, dtype=float))
    if u.shape[1] != tensor.n_steps:
        raise ValueError("control length does not match the tensor")
    rate = dt * tensor.grid.spacing
    k = tensor.grid.indices
    out = np.empty(u.shape[0])
    for sl in _row_chunks(u.shape[0], tensor.data.size // tensor.grid.n_delta):
        waves = np.exp(-1j * rate * u[sl, :, None] * k[None, None, :])
        acc = np.tensordot(waves[:, 0, :], tensor.data, axes=(1, 0))
        for nu in range(1, tensor.n_steps):
            acc = np.einsum("mk...,mk->m...", acc, waves[:, nu, :])
        out[sl] = np.real(acc)
    return out


def resum(tensor: CoefficientTensor, dt, u) -> float:
    return float(resum_many(tensor, dt, u)[0])


def l1_coefficient_sum(tensor: CoefficientTensor) -> float:
    return float(np.sum(np.abs(tensor.data)))


def l2_coefficient_sum(tensor: CoefficientTensor) -> float:
    return float(np.sum(np.abs(tensor.data) ** 2))


def resonant_mask(model, grid: FrequencyGrid) -> np.ndarray:
    """1D mask of grid indices whose frequency is a control eigenvalue difference."""
    m = grid.base_multiple
    units = np.round((model.eigvals - model.eigvals[0]) * m / model.omega_max).astype(int)
    diffs = np.unique((units[:, None] - units[None, :]).ravel())
    mask = np.zeros(grid.n_delta, dtype=bool)
    mask[diffs * grid.trotter_order + grid.k_max] = True
    return mask


# ----------------------------------------------------------------------------
# Symmetry sectors and selection rules


@dataclass(frozen=True, eq=False)
class SymmetrySectors:
    operator: np.ndarray
    basis: np.ndarray
    eigvals: np.ndarray
    sector_of_index: np.ndarray
    sector_eigenvalues: tuple
    active_sectors: tuple

    @property
    def n_sectors(self) -> int:
        return len(self.sector_eigenvalues)

    def projector(self, g) -> np.ndarray:
        cols = self.basis[:, self.sector_of_index == g]
        return cols @ cols.conj().T


def build_sectors(model, gamma, psi, chi, tol=ACTIVE_SECTOR_TOL) -> SymmetrySectors:
    """Joint eigenbasis of a symmetry ``gamma`` and the control Hamiltonian.

    Sectors are the eigenspaces of ``gamma``; a sector is active when both
    ``psi`` and ``chi`` have a projection onto it above ``tol``.
    """
    gamma = np.asarray(gamma, dtype=complex)
    scale = max(1.0, np.linalg.norm(gamma, 2))
    for name, gen in (("control", model.control), ("drift", model.drift)):
        comm = np.linalg.norm(gamma @ gen - gen @ gamma, 2)
        if comm > 1e-10 * scale * max(1.0, np.linalg.norm(gen, 2)):
            raise SymmetryError(f"operator does not commute with the {name} Hamiltonian", comm)

    g_vals, g_vecs = np.linalg.eigh(0.5 * (gamma + gamma.conj().T))
    cuts = np.flatnonzero(np.diff(g_vals) > 1e-8 * scale) + 1
    groups = np.split(np.arange(len(g_vals)), cuts)

    basis, lambdas, sector_of, sector_vals, active = [], [], [], [], []
    psi = np.asarray(psi, dtype=complex)
    chi = np.asarray(chi, dtype=complex)
    for g, idx in enumerate(groups):
        block = g_vecs[:, idx]
        lam, rot = np.linalg.eigh(block.conj().T @ model.control @ block)
        cols = block @ rot
        basis.append(cols)
        lambdas.append(lam)
        sector_of.append(np.full(len(idx), g))
        sector_vals.append(float(np.mean(g_vals[idx])))
        if np.linalg.norm(cols.conj().T @ psi) > tol and np.linalg.norm(cols.conj().T @ chi) > tol:
            active.append(g)
    return SymmetrySectors(
        operator=gamma,
        basis=np.concatenate(basis, axis=1),
        eigvals=np.concatenate(lambdas),
        sector_of_index=np.concatenate(sector_of),
        sector_eigenvalues=tuple(sector_vals),
        active_sectors=tuple(active),
    )


def _nfold_sums(units, n) -> np.ndarray:
    """Indicator over ``0..n*max`` of sums of ``n`` entries drawn from ``units``."""
    single = np.zeros(int(units.max()) + 1, dtype=np.int64)
    single[units] = 1
    result = np.ones(1, dtype=np.int64)
    power = single
    while n:
        if n & 1:
            result = (np.convolve(result, power) > 0).astype(np.int64)
        n >>= 1
        if n:
            power = (np.convolve(power, power) > 0).astype(np.int64)
    return result.astype(bool)


def allowed_frequency_mask(sectors: SymmetrySectors, grid: FrequencyGrid, n_steps) -> np.ndarray:
    """Grid indices compatible with the symmetry selection rules.

    Per-timestep frequencies of one amplitude branch must all come from the
    same active sector; coefficient frequencies are differences of two such
    branches, possibly from different active sectors.
    """
    n = grid.trotter_order
    m = grid.base_multiple
    shape = (grid.n_delta,) * n_steps
    mask = np.zeros(shape, dtype=bool)
    lam_min = sectors.eigvals.min()
    sums = {}
    for g in sectors.active_sectors:
        lam = sectors.eigvals[sectors.sector_of_index == g]
        units = np.round((lam - lam_min) * m / grid.omega_max).astype(int)
        ind = np.zeros(grid.k_max + 1, dtype=bool)
        reach = _nfold_sums(np.unique(units), n)
        ind[: len(reach)] = reach
        sums[g] = ind
    for g1 in sectors.active_sectors:
        for g2 in sectors.active_sectors:
            # entry i of the difference set holds k = i - k_max
            diff = np.convolve(sums[g1].astype(int), sums[g2][::-1].astype(int)) > 0
            block = diff
            for _ in range(n_steps - 1):
                block = np.multiply.outer(block, diff)
            mask |= block.reshape(shape)
    return mask


# ----------------------------------------------------------------------------
# Export


def coefficient_rows(tensor: CoefficientTensor, mask: Optional[np.ndarray] = None):
    """Long-format rows: k indices, frequencies, Re c, Im c, n^N Re c, n^N Im c."""
    k = np.indices(tensor.data.shape).reshape(tensor.n_steps, -1).T - tensor.grid.k_max
    c = tensor.data.reshape(-1)
    scaled = tensor.scaled().reshape(-1)
    allowed = None if mask is None else mask.reshape(-1)
    for i in range(c.size):
        row = {f"k{nu + 1}": int(k[i, nu]) for nu in range(tensor.n_steps)}
        row.update({f"omega{nu + 1}": float(k[i, nu] * tensor.grid.spacing) for nu in range(tensor.n_steps)})
        row.update(
            re_c=float(c[i].real),
            im_c=float(c[i].imag),
            re_scaled=float(scaled[i].real),
            im_scaled=float(scaled[i].imag),
        )
        if allowed is not None:
            row["allowed"] = int(allowed[i])
        yield row


_MAGIC = b"QLFC"


def save_tensor(tensor: CoefficientTensor, path) -> None:
    """Binary layout: magic, uint32 header length, JSON header, complex128 data (C order)."""
    header = {
        "shape": list(tensor.data.shape),
        "k_max": tensor.grid.k_max,
        "omega_max": tensor.grid.omega_max,
        "n": tensor.trotter_order,
        "dt": tensor.dt,
        "dtype": "<c16",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(tensor.data, dtype="<c16").tobytes())


def load_tensor(path) -> CoefficientTensor:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a coefficient tensor file")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length))
        data = np.frombuffer(fh.read(), dtype=header["dtype"]).reshape(header["shape"])
    grid = FrequencyGrid(header["k_max"], header["omega_max"], header["n"])
    return CoefficientTensor(grid, len(header["shape"]), header["dt"], data.copy())
