"""Ridge-regression surrogates of a landscape.

Three feature families are supported: random Fourier features (cos/sin pairs
of frequencies drawn uniformly from the bandwidth box), polynomial features
around a reference pulse, and the product-sinc kernel obtained as the dense
limit of uniform Fourier features.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .dynamics import evaluate_many, sample_controls
from .errors import ConditioningError
from .liefourier import CoefficientTensor, evaluate_jn_many, resum

log = logging.getLogger(__name__)

FOURIER_RIDGE = 1e-6
TAYLOR_RIDGE = 1e-6
SINC_RIDGE = 1e-12
TRAIN_FRACTION = 0.75


def sinc(x):
    """``sin(x) / x`` with ``sinc(0) = 1`` (unnormalized)."""
    return np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True, eq=False)
class Dataset:
    controls: np.ndarray
    values: np.ndarray
    u_max: float
    seed: Optional[int] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(controls) != len(values):
            raise ValueError("controls and values must have the same length")
        if np.any(np.abs(controls) > self.u_max * (1 + 1e-12)):
            raise ValueError("dataset controls leave the control box")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset values must be finite")
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def n_dims(self) -> int:
        return self.controls.shape[1]

    def subset(self, index, **provenance) -> "Dataset":
        prov = dict(self.provenance, **provenance)
        return Dataset(self.controls[index], self.values[index], self.u_max, self.seed, prov)

    def split(self, fraction=TRAIN_FRACTION, seed=0):
        """Random train/validation split; the split seed is kept in provenance."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        cut = min(max(cut, 1), len(self) - 1)
        return (
            self.subset(order[:cut], split_seed=seed, split="train"),
            self.subset(order[cut:], split_seed=seed, split="validation"),
        )


def sample_dataset(problem, count, seed, evaluate=None) -> Dataset:
    """Uniform i.i.d. controls in the box and their landscape values."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    controls = sample_controls(rng, count, problem.n_steps, problem.grid.u_max)
    evaluate = evaluate or (lambda c: evaluate_many(problem, c))
    return Dataset(controls, evaluate(controls), problem.grid.u_max, seed)


# ----------------------------------------------------------------------------
# Feature maps


@dataclass(frozen=True, eq=False)
class RandomFourierFeatures:
    """Real features ``[1, cos(dt w.u), sin(dt w.u)]`` for each sampled ``w``.

    Each cos/sin pair spans the conjugate exponentials ``exp(-/+ i dt w.u)``,
    so predictions are real and the normal equations stay real symmetric.
    """

    frequencies: np.ndarray
    dt: float
    include_constant: bool = True
    omega_max: Optional[float] = None

    def __post_init__(self):
        freqs = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        if freqs.size == 0:
            freqs = freqs.reshape(0, freqs.shape[-1] if freqs.ndim == 2 else 0)
        if self.omega_max is not None and np.any(np.abs(freqs) > self.omega_max * (1 + 1e-12)):
            raise ValueError("Fourier feature frequencies exceed the bandwidth")
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def sample(cls, n_weights, omega_max, n_dims, dt, rng) -> "RandomFourierFeatures":
        """``(n_weights - 1) // 2`` uniform frequency pairs plus the constant feature."""
        n_pairs = max(0, (int(n_weights) - 1) // 2)
        freqs = rng.uniform(-omega_max, omega_max, size=(n_pairs, n_dims))
        return cls(freqs, dt, True, omega_max)

    @property
    def n_weights(self) -> int:
        return int(self.include_constant) + 2 * len(self.frequencies)

    def transform(self, controls) -> np.ndarray:
        u = np.atleast_2d(controls)
        phase = self.dt * u @ self.frequencies.T
        blocks = [np.cos(phase), np.sin(phase)]
        if self.include_constant:
            blocks.insert(0, np.ones((len(u), 1)))
        return np.hstack(blocks)


def graded_lex_indices(n_dims, degree) -> np.ndarray:
    """Exponent vectors with total degree <= ``degree``, graded then descending lex."""
    rows = []
    for d in range(degree + 1):
        block = []
        for combo in combinations_with_replacement(range(n_dims), d):
            vec = np.zeros(n_dims, dtype=int)
            for i in combo:
                vec[i] += 1
            block.append(tuple(vec))
        rows.extend(sorted(block, reverse=True))
    return np.array(rows, dtype=int).reshape(-1, n_dims)


@dataclass(frozen=True, eq=False)
class PolynomialFeatures:
    """Monomials ``prod_nu ((u_nu - u0_nu) / scale)**p_nu``.

    ``scale`` only rescales columns; it changes the effective ridge penalty,
    not the span of the model.
    """

    multi_indices: np.ndarray
    reference: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.multi_indices, dtype=int))
        if len({tuple(r) for r in idx}) != len(idx):
            raise ValueError("polynomial multi-indices must be unique")
        object.__setattr__(self, "multi_indices", idx)
        object.__setattr__(self, "reference", np.asarray(self.reference, dtype=float).reshape(-1))

    @classmethod
    def total_degree(cls, n_dims, degree, reference=None, scale=1.0) -> "PolynomialFeatures":
        reference = np.zeros(n_dims) if reference is None else reference
        return cls(graded_lex_indices(n_dims, degree), reference, scale)

    @property
    def degree(self) -> int:
        return int(self.multi_indices.sum(axis=1).max()) if len(self.multi_indices) else 0

    @property
    def n_weights(self) -> int:
        return len(self.multi_indices)

    def transform(self, controls) -> np.ndarray:
        x = (np.atleast_2d(controls) - self.reference) / self.scale
        powers = x[:, :, None] ** np.arange(self.degree + 1)[None, None, :]
        cols = np.arange(x.shape[1])[None, :]
        return np.prod(powers[:, cols, self.multi_indices], axis=2)


@dataclass(frozen=True)
class SincKernel:
    omega_ker: float
    dt: float
    omega_max: Optional[float] = None

    def __post_init__(self):
        if not self.omega_ker > 0:
            raise ValueError("kernel bandwidth must be positive")
        if self.omega_max is not None and self.omega_ker > self.omega_max * (1 + 1e-12):
            raise ValueError("kernel bandwidth exceeds omega_max")

    def __call__(self, a, b) -> np.ndarray:
        """Kernel matrix between the rows of ``a`` and ``b``."""
        diff = np.atleast_2d(a)[:, None, :] - np.atleast_2d(b)[None, :, :]
        return np.prod(sinc(self.omega_ker * self.dt * diff), axis=2)


# ----------------------------------------------------------------------------
# Training


@dataclass(eq=False)
class Surrogate:
    kind: str
    features: object
    ridge: float
    weights: np.ndarray
    train_controls: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def predict_many(self, controls) -> np.ndarray:
        u = np.atleast_2d(np.asarray(controls, dtype=float))
        if self.kind == "primal":
            if self.features.n_weights == 0:
                raise ValueError("surrogate has no features")
            return self.features.transform(u) @ self.weights
        return self.features(u, self.train_controls) @ self.weights


def _spd_solve(matrix, rhs, ridge, what):
    """Cholesky solve of ``(matrix + ridge I) x = rhs``; least squares as fallback."""
    system = matrix + ridge * np.eye(len(matrix))
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=True)
        return scipy.linalg.cho_solve(factor, rhs), "cholesky"
    except np.linalg.LinAlgError:
        if ridge == 0:
            raise ConditioningError(
                f"{what} system is singular with zero ridge; use a ridge >= 1e-12"
            ) from None
        log.warning("%s system not positive definite at ridge %g; using least squares", what, ridge)
        sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        if not np.all(np.isfinite(sol)):
            raise ConditioningError(f"{what} least-squares fallback failed") from None
        return sol, "lstsq"


def train_primal(features, data: Dataset, lambda_r, allow_overparam=False) -> Surrogate:
    """Solve ``(Phi^T Phi + lambda_r I) w = Phi^T J``."""
    if lambda_r < 0:
        raise ValueError("ridge must be non-negative")
    if features.n_weights == 0:
        raise ValueError("feature map is empty")
    if features.n_weights >= len(data) and not allow_overparam:
        raise ValueError(
            f"N_weights={features.n_weights} must stay below N_train={len(data)} "
            "(pass allow_overparam=True to override)"
        )
    phi = features.transform(data.controls)
    weights, solver = _spd_solve(phi.T @ phi, phi.T @ data.values, lambda_r, "feature")
    resid = phi @ weights - data.values
    meta = {
        "n_weights": features.n_weights,
        "n_train": len(data),
        "solver": solver,
        "train_rmse": float(np.sqrt(np.mean(resid**2))),
    }
    return Surrogate("primal", features, lambda_r, weights, None, meta)


def train_kernel(data: Dataset, lambda_r, omega_ker, dt, omega_max=None) -> Surrogate:
    """Solve ``(K + lambda_r I) a = J`` for the product-sinc kernel."""
    if lambda_r < 0:
        raise ValueError("ridge must be non-negative")
    kernel = SincKernel(omega_ker, dt, omega_max)
    gram = kernel(data.controls, data.controls)
    if lambda_r == 0:
        eig = np.linalg.eigvalsh(gram)
        if eig[0] <= 1e-12 * eig[-1]:
            raise ConditioningError(
                f"kernel matrix is near-singular (min eigenvalue {eig[0]:.2e}); use a ridge >= 1e-12"
            )
    coeffs, solver = _spd_solve(gram, data.values, lambda_r, "kernel")
    meta = {"n_weights": len(data), "n_train": len(data), "solver": solver, "omega_ker": omega_ker}
    return Surrogate("dual", kernel, lambda_r, coeffs, data.controls.copy(), meta)


def predict(model: Surrogate, u) -> float:
    return float(model.predict_many(u)[0])


def rmse(model: Surrogate, test: Dataset) -> float:
    if len(test) == 0:
        raise ValueError("test set is empty")
    resid = model.predict_many(test.controls) - test.values
    return float(np.sqrt(np.mean(resid**2)))


# ----------------------------------------------------------------------------
# Model-size selection


class FourierFamily:
    """Nested random Fourier feature maps; ``size`` is the number of real features."""

    def __init__(self, omega_max, dt, n_dims, seed):
        self.omega_max, self.dt, self.n_dims, self.seed = omega_max, dt, n_dims, seed

    def __call__(self, size) -> RandomFourierFeatures:
        rng = np.random.default_rng(self.seed)
        return RandomFourierFeatures.sample(size, self.omega_max, self.n_dims, self.dt, rng)


class TaylorFamily:
    """Total-degree polynomial feature maps; ``size`` is the degree."""

    def __init__(self, n_dims, reference=None, scale=1.0):
        self.n_dims, self.reference, self.scale = n_dims, reference, scale

    def __call__(self, size) -> PolynomialFeatures:
        return PolynomialFeatures.total_degree(self.n_dims, int(size), self.reference, self.scale)


@dataclass
class Selection:
    best: object
    model: Surrogate
    trace: list


def select_n_weights(
    family: Callable[[object], object],
    data: Dataset,
    lambda_r,
    candidates: Sequence,
    split_seed=0,
    fraction=TRAIN_FRACTION,
) -> Selection:
    """Pick the candidate size with the lowest validation RMSE, then refit on all data.

    Candidates whose feature count would reach the training-split size are
    skipped; ties go to the smaller feature count.
    """
    candidates = list(candidates)
    if len(candidates) == 1:
        model = train_primal(family(candidates[0]), data, lambda_r)
        return Selection(candidates[0], model, [(candidates[0], model.features.n_weights, float("nan"))])
    train, val = data.split(fraction, split_seed)
    trace = []
    for cand in candidates:
        feats = family(cand)
        if feats.n_weights >= len(train) or feats.n_weights == 0:
            continue
        try:
            err = rmse(train_primal(feats, train, lambda_r), val)
        except (ConditioningError, ValueError) as exc:
            log.info("candidate %s failed: %s", cand, exc)
            continue
        trace.append((cand, feats.n_weights, err))
    if not trace:
        raise ConditioningError("no feature-count candidate could be trained")
    best = min(trace, key=lambda t: (t[2], t[1]))[0]
    return Selection(best, train_primal(family(best), data, lambda_r), trace)


# ----------------------------------------------------------------------------
# Frequency-space kernel and the constant model


def frequency_kernel(omega, dt, u_max) -> float:
    """Box average of ``exp(-i dt omega.u)`` over ``[-u_max, u_max]^N``."""
    return float(np.prod(sinc(np.asarray(omega, dtype=float) * dt * u_max)))


@dataclass(frozen=True)
class ConstantModel:
    w0: float
    loss_bound: float


def constant_model_bound(tensor: CoefficientTensor, u_max) -> ConstantModel:
    """Best constant fit ``w0 = J_n(0)`` and its mean-square loss bound ``(u_max L)^2 / (3N)``."""
    budget = tensor.grid.omega_max * tensor.n_steps * tensor.dt
    w0 = float(np.real(np.sum(tensor.data)))
    return ConstantModel(w0, (u_max * budget) ** 2 / (3 * tensor.n_steps))


def constant_model_loss(problem, cfg, w0, samples, seed):
    """Monte-Carlo mean of ``(J_n - w0)^2`` over the box and its standard error."""
    rng = np.random.default_rng(seed)
    u = sample_controls(rng, samples, problem.n_steps, problem.grid.u_max)
    sq = (evaluate_jn_many(problem, cfg, u) - w0) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(samples))


def constant_value(tensor: CoefficientTensor) -> float:
    return resum(tensor, tensor.dt, np.zeros(tensor.n_steps))
