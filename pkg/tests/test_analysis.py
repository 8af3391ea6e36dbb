import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from phasorgrid.analysis import (
    ZERO_TOL, LinearModel, NotAnEquilibrium, _eig_left_right, default_grid, eigen_analysis,
    jacobian_fd, linearize, participation_factors, sigma_max_sweep, to_db, unstable_modes,
)


def test_jacobian_of_linear_map(rng):
    M = rng.standard_normal((5, 4))
    J = jacobian_fd(lambda x: M @ x, rng.standard_normal(4))
    assert np.abs(J - M).max() < 1e-8


def test_jacobian_of_nonlinear_map():
    f = lambda x: np.array([np.sin(x[0]) * x[1], np.exp(x[1])])
    x = np.array([0.3, -0.7])
    J = jacobian_fd(f, x)
    ref = np.array([[np.cos(0.3) * -0.7, np.sin(0.3)], [0.0, np.exp(-0.7)]])
    assert np.abs(J - ref).max() < 1e-8


def test_rotation_mode():
    A = np.array([[-0.5, -10.0], [10.0, -0.5]])
    (m,) = eigen_analysis(A)
    assert m.eigenvalue == pytest.approx(-0.5 + 10j)
    assert m.f_hz == pytest.approx(10 / (2 * np.pi))
    assert m.zeta_pct == pytest.approx(100 * 0.5 / np.hypot(0.5, 10))
    assert np.allclose(m.participation, 1.0)
    assert abs(abs(m.shape_angle_deg[1] - m.shape_angle_deg[0]) - 90) < 1e-9


def test_diagonal_system_participation_is_identity():
    P, lam = participation_factors(np.diag([-1.0, -2.0, -3.0]))
    order = np.argsort(-lam.real)
    assert np.allclose(P[:, order], np.eye(3))


def test_left_right_normalization(rng):
    A = rng.standard_normal((8, 8))
    lam, phi, psi = _eig_left_right(A)
    assert np.allclose(psi @ phi, np.eye(8), atol=1e-9)
    assert np.allclose(psi @ A, lam[:, None] * psi, atol=1e-9)


@given(st.integers(0, 2 ** 31), st.lists(st.floats(0.1, 10.0), min_size=6, max_size=6))
@settings(max_examples=40, deadline=None)
def test_participation_invariant_under_diagonal_scaling(seed, d):
    A = np.random.default_rng(seed).standard_normal((6, 6))
    T = np.diag(d)
    P1, l1 = participation_factors(A)
    P2, l2 = participation_factors(T @ A @ np.linalg.inv(T))
    gap = min(abs(a - b) for i, a in enumerate(l1) for b in l1[i + 1:])
    if gap < 1e-3:  # nearly repeated eigenvalues: eigenvectors are not well defined
        return
    for i, lam in enumerate(l1):
        j = int(np.argmin(np.abs(l2 - lam)))
        assert abs(l2[j] - lam) < 1e-8 * (1 + abs(lam))
        assert np.abs(P1[:, i] - P2[:, j]).max() < 1e-8 / gap


def test_unstable_classification():
    A = np.diag([1e-10, -1.0, 0.2])
    modes = eigen_analysis(A)
    assert [m.eigenvalue.real for m in unstable_modes(modes)] == [0.2]
    assert not any(m.unstable for m in modes if abs(m.eigenvalue) < ZERO_TOL)
    rot = np.array([[0.1, -250.0], [250.0, 0.1]])
    assert len(unstable_modes(eigen_analysis(rot), (30, 50))) == 1
    assert unstable_modes(eigen_analysis(rot), (1, 5)) == []


def test_integrator_gain():
    lm = LinearModel(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    f = default_grid(0.1, 200, 50)
    assert np.allclose(sigma_max_sweep(lm, f), 1 / (2 * np.pi * f), rtol=1e-12)


def test_static_system_gain():
    D = np.array([[3.0, 0.0], [0.0, -4.0]])
    lm = LinearModel(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), D)
    assert np.allclose(sigma_max_sweep(lm, [1.0, 10.0]), 4.0)


def test_mimo_gain_is_largest_singular_value(rng):
    A = np.diag([-1.0, -5.0])
    B = rng.standard_normal((2, 2))
    C = rng.standard_normal((3, 2))
    lm = LinearModel(A, B, C, np.zeros((3, 2)))
    s = 2j * np.pi * 0.7
    G = C @ np.linalg.solve(s * np.eye(2) - A, B)
    assert sigma_max_sweep(lm, [0.7])[0] == pytest.approx(np.linalg.svd(G)[1][0], rel=1e-12)


def test_grid_validation():
    lm = LinearModel(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        sigma_max_sweep(lm, [0.0, 1.0])
    assert to_db(10.0) == pytest.approx(20.0)


def test_dimension_checks():
    with pytest.raises(ValueError):
        LinearModel(np.zeros((2, 2)), np.zeros((3, 1)), np.zeros((1, 2)), np.zeros((1, 1)))


@given(st.floats(1.0, 100.0), st.floats(0.005, 0.05))
@settings(max_examples=30, deadline=None)
def test_lightly_damped_pair_shows_as_a_peak(fn, zeta):
    wn = 2 * np.pi * fn
    A = np.array([[0.0, 1.0], [-wn ** 2, -2 * zeta * wn]])
    lm = LinearModel(A, np.array([[0.0], [1.0]]), np.array([[wn ** 2, 0.0]]), np.zeros((1, 1)))
    f = default_grid(0.5, 200, 2000)
    s = sigma_max_sweep(lm, f)
    k = int(np.argmax(s))
    assert abs(f[k] - fn) / fn < 0.05
    assert s[k] > 5.0  # resonance gain ~ 1/(2 zeta) against a dc gain of 1


# ---------------------------------------------------------------- on the shipped case
@pytest.fixture(scope="module")
def lm_spc(operating_points):
    op = operating_points["case1", "spc"]
    return op, linearize(op.model, op)


def test_network_block_matches_analytic(lm_spc):
    op, lm = lm_spc
    k = op.model.network_offset
    J = op.model.network.jacobian()
    blk = lm.A[k:, k:]
    assert np.abs(blk - J).max() < 1e-6 * np.abs(J).max()


def test_linear_model_shapes_and_labels(lm_spc):
    op, lm = lm_spc
    assert lm.A.shape == (90, 90) and lm.B.shape == (90, 3) and lm.C.shape == (9, 90)
    assert lm.input_labels == ["GFC1.u", "GFC2.u", "GFC4.u"]
    assert lm.output_labels[0] == "GFC1.v_dc"
    assert np.abs(lm.D).max() < 1e-9


def test_structural_zero_is_not_unstable(lm_spc):
    _, lm = lm_spc
    modes = eigen_analysis(lm)
    near_zero = [m for m in modes if abs(m.eigenvalue) < 1e-6]
    assert near_zero and not any(m.unstable for m in near_zero)


def test_linearize_refuses_non_equilibrium(operating_points):
    op = operating_points["case1", "qpc"]
    x = op.x0.copy()
    x[1] += 0.01
    with pytest.raises(NotAnEquilibrium):
        linearize(op.model, replace(op, x0=x))
