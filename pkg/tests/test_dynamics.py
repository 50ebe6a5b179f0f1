import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlandscape.dynamics import (
    PAULI_X,
    PAULI_Z,
    ControlGrid,
    HamiltonianModel,
    LinearParametrization,
    apply_parametrization,
    basis_state,
    build_ising,
    evaluate_landscape,
    evaluate_many,
    fd_derivative,
    fidelity_problem,
    infidelity_problem,
    parametrized_evaluator,
    propagate,
    random_parametrization,
    sample_random_state,
    site_operator,
)
from qlandscape.errors import CapacityError


def rabi(n_steps=1, dt=1.0, u_max=2.0, target=(0, 1)):
    model = HamiltonianModel(np.zeros((2, 2)), PAULI_X)
    return fidelity_problem(model, ControlGrid(n_steps, dt, u_max), [1, 0], target)


def ising_problem(q=2, n_steps=2, u_max=1.0, alpha=1.0, init="0", target="1"):
    model = build_ising(q, alpha)
    grid = ControlGrid.from_total_time(n_steps, 1.0, u_max)
    return fidelity_problem(model, grid, basis_state(init, q), basis_state(target, q))


controls = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3)


# -- models -------------------------------------------------------------------


def test_ising_q2_spectrum():
    m = build_ising(2, 0.7)
    assert np.allclose(m.eigvals, [-2, 0, 0, 2], atol=1e-12)
    assert m.omega_max == pytest.approx(4.0)


def test_ising_q5_bandwidth():
    assert build_ising(5, 1.3).omega_max == pytest.approx(10.0)


def test_ising_pure_zz_ring_does_not_commute():
    m = build_ising(3, 1.0, 0.0)
    assert m.commutator_norm() > 1.0


def test_ising_rejects_small_and_large_rings():
    with pytest.raises(ValueError):
        build_ising(1, 1.0)
    with pytest.raises(CapacityError):
        build_ising(13, 1.0)


def test_site_operator_is_little_endian():
    z0 = site_operator(PAULI_Z, 0, 3)
    # basis index 1 has qubit 0 set
    assert z0[1, 1] == -1 and z0[2, 2] == 1


def test_control_eigendecomposition_reconstructs():
    m = build_ising(3, 0.4, 0.2)
    rebuilt = m.eigvecs.conj().T @ np.diag(m.eigvals) @ m.eigvecs
    assert np.allclose(rebuilt, m.control, atol=1e-10)
    assert m.omega_max == pytest.approx(m.eigvals[-1] - m.eigvals[0])


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        HamiltonianModel(np.array([[0, 1], [0, 0]]), PAULI_X)


def test_grid_total_time():
    g = ControlGrid(4, 0.25, 1.0)
    assert g.total_time == 1.0
    assert g.budget(4.0) == 4.0
    with pytest.raises(ValueError):
        ControlGrid(0, 0.1, 1.0)


def test_fidelity_problem_span():
    p = ising_problem()
    assert p.observable_span == pytest.approx(1.0)
    assert p.observable_norm == pytest.approx(1.0)
    assert np.linalg.matrix_rank(p.observable) == 1


def test_unnormalized_state_rejected():
    m = build_ising(2, 1.0)
    with pytest.raises(ValueError):
        fidelity_problem(m, ControlGrid(1, 1.0, 1.0), [1, 1, 0, 0], basis_state("1", 2))


# -- propagation -------------------------------------------------------------


def test_zero_drift_zero_control_is_identity():
    p = rabi()
    assert np.array_equal(propagate(p, [0.0]), p.initial)


@pytest.mark.parametrize("u", [0.3, -1.1, 1.7])
def test_rabi_state_closed_form(u):
    psi = propagate(rabi(), [u])
    assert np.allclose(psi, [np.cos(u), -1j * np.sin(u)], atol=1e-12)


@pytest.mark.parametrize("u", [0.0, 0.4, 1.2, -0.9])
def test_rabi_landscape(u):
    assert evaluate_landscape(rabi(), [u]) == pytest.approx(np.sin(u) ** 2, abs=1e-12)


def test_stationary_state_has_unit_fidelity():
    m = HamiltonianModel(np.diag([1.0, -1.0]), PAULI_X)
    p = fidelity_problem(m, ControlGrid(3, 0.2, 1.0), [1, 0], [1, 0])
    assert evaluate_landscape(p, np.zeros(3)) == pytest.approx(1.0, abs=1e-12)


def test_commuting_case_depends_on_mean_control():
    m = HamiltonianModel(0.3 * PAULI_X, PAULI_X)
    p = fidelity_problem(m, ControlGrid(4, 0.3, 2.0), [1, 0], [0, 1])
    u = np.array([0.1, -0.7, 1.3, 0.4])
    perms = np.array([u, u[::-1], np.roll(u, 1)])
    vals = evaluate_many(p, perms)
    assert np.ptp(vals) < 1e-12


def test_non_finite_controls_rejected():
    with pytest.raises(ValueError):
        evaluate_landscape(rabi(), [np.nan])


@settings(max_examples=50, deadline=None)
@given(controls)
def test_unitarity_and_fidelity_bounds(u):
    model = build_ising(3, 0.8, 0.3)
    p = fidelity_problem(model, ControlGrid(3, 0.4, 5.0), sample_random_state(8, 1), basis_state("+", 3))
    psi = propagate(p, u)
    assert abs(np.linalg.norm(psi) - 1) < 1e-10
    j = evaluate_landscape(p, u)
    assert -1e-10 <= j <= 1 + 1e-10


@settings(max_examples=50, deadline=None)
@given(controls, controls)
def test_lipschitz_bound_holds(u, v):
    model = build_ising(3, 1.0)
    p = fidelity_problem(model, ControlGrid(3, 1 / 3, 5.0), basis_state("0", 3), basis_state("1", 3))
    gap = abs(evaluate_landscape(p, u) - evaluate_landscape(p, v))
    assert gap <= p.lipschitz_constant * np.sum(np.abs(np.subtract(u, v))) + 1e-12


@settings(max_examples=30, deadline=None)
@given(controls)
def test_time_reversal_for_real_problems(u):
    p = ising_problem(q=3, n_steps=3, init="0", target="+")
    fwd = evaluate_many(p, [u])
    back = evaluate_many(p, [u], dt=-p.dt)
    assert np.allclose(fwd, back, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(controls)
def test_ising_zero_to_one_is_even(u):
    p = ising_problem(q=4, n_steps=3)
    assert evaluate_landscape(p, u) == pytest.approx(evaluate_landscape(p, -np.array(u)), abs=1e-10)


def test_critical_point_strengthening():
    # u = 0 is a stationary point of the even Ising 0 -> 1 landscape
    p = ising_problem(q=2, n_steps=2)
    rng = np.random.default_rng(3)
    j0 = evaluate_landscape(p, [0.0, 0.0])
    k_c = (p.model.omega_max * p.dt) ** 2 * p.observable_span / 2
    for _ in range(200):
        d = rng.uniform(-0.05, 0.05, 2)
        assert abs(evaluate_landscape(p, d) - j0) <= k_c * np.sum(np.abs(d)) ** 2 + 1e-12


# -- finite differences --------------------------------------------------------


def test_fd_rabi_slope_at_zero():
    assert abs(fd_derivative(rabi(), [0.0], [0]).value) < 1e-6


def test_fd_rabi_slope_at_quarter_period():
    assert fd_derivative(rabi(), [np.pi / 4], [0]).value == pytest.approx(1.0, abs=1e-5)


def test_fd_second_derivative():
    # d^2 sin^2(u) / du^2 = 2 cos(2u)
    r = fd_derivative(rabi(), [0.3], [0, 0])
    assert r.value == pytest.approx(2 * np.cos(0.6), abs=1e-5)


def test_fd_warns_on_tiny_step():
    r = fd_derivative(rabi(), [0.3], [0, 0], step=1e-7)
    assert r.warnings


def test_fd_rejects_high_order_and_bad_index():
    with pytest.raises(ValueError):
        fd_derivative(rabi(), [0.3], [0] * 5)
    with pytest.raises(ValueError):
        fd_derivative(rabi(), [0.3], [1])


def test_fd_derivative_bound_on_samples():
    p = ising_problem(q=2, n_steps=3, u_max=2.0)
    rng = np.random.default_rng(0)
    bound = p.model.omega_max * p.dt * p.observable_span / 2
    for u in rng.uniform(-2, 2, (50, 3)):
        for nu in range(3):
            assert abs(fd_derivative(p, u, [nu]).value) <= bound + 1e-4


# -- parametrizations and random states ---------------------------------------


def test_identity_parametrization():
    p = LinearParametrization(np.eye(3))
    assert np.allclose(apply_parametrization(p, [1.0, 2.0, 3.0]), [1, 2, 3])


def test_mean_pulse_parametrization():
    p = LinearParametrization(np.full((4, 1), 0.25))
    assert np.allclose(apply_parametrization(p, [2.0]), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_random_parametrization_columns_normalized(n, nc, seed):
    p = random_parametrization(n, nc, seed)
    assert np.allclose(np.abs(p.matrix).sum(axis=0), 1.0, atol=1e-12)


def test_parametrization_dimension_mismatch():
    p = LinearParametrization(np.eye(3))
    with pytest.raises(ValueError):
        apply_parametrization(p, [1.0, 2.0])


def test_parametrized_derivative_bound():
    prob = ising_problem(q=2, n_steps=3, u_max=1.0)
    par = random_parametrization(3, 2, 5)
    ev = parametrized_evaluator(prob, par)
    bound = prob.model.omega_max * prob.dt / 2
    rng = np.random.default_rng(1)
    h = 1e-4
    for v in rng.uniform(-2, 2, (30, 2)):
        for e in np.eye(2) * h:
            slope = (ev(np.array([v + e]))[0] - ev(np.array([v - e]))[0]) / (2 * h)
            assert abs(slope) <= bound + 1e-6


def test_random_state_contract():
    a = sample_random_state(8, 11)
    assert abs(np.linalg.norm(a) - 1) < 1e-12
    assert np.array_equal(a, sample_random_state(8, 11))
    assert not np.allclose(a, sample_random_state(8, 12))


def test_basis_state_selectors():
    assert np.allclose(basis_state("1", 2), [0, 0, 0, 1])
    plus, minus = basis_state("+", 3), basis_state("-", 3)
    assert abs(np.vdot(plus, minus)) < 1e-12
    with pytest.raises(ValueError):
        basis_state("x", 2)


def test_infidelity_problem_complements_fidelity():
    m = build_ising(2, 1.0)
    g = ControlGrid(2, 0.5, 1.0)
    f = fidelity_problem(m, g, basis_state("0", 2), basis_state("1", 2))
    i = infidelity_problem(m, g, basis_state("0", 2), basis_state("1", 2))
    u = [0.3, -0.2]
    assert evaluate_landscape(f, u) + evaluate_landscape(i, u) == pytest.approx(1.0)
