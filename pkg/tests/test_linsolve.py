import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nscahn.dynamics import SchemeParams, mu_system, rho_step_jacobian
from nscahn.linsolve import DENSE_MAX, IllConditionedWarning, SolverError, cg_solve, dense_solve_oracle
from nscahn.mesh import FieldState, build_grid
from nscahn.potentials import PotentialConfig


def shifted_laplacian(n):
    g = build_grid("interval1d", n)
    return (g.stiffness_bulk + sp.diags(g.bulk_weights)).tocsr()


def test_identity():
    b = np.arange(1.0, 6.0)
    x, rep = cg_solve(sp.identity(5, format="csr"), b)
    np.testing.assert_allclose(x, b)
    assert rep.converged and rep.iterations <= 2


def test_zero_rhs():
    x, rep = cg_solve(shifted_laplacian(9), np.zeros(9))
    assert np.all(x == 0) and rep.iterations == 0 and rep.converged


def test_shifted_laplacian_matches_dense():
    A = shifted_laplacian(33)
    b = np.ones(33)
    x, rep = cg_solve(A, b, tol=1e-12)
    ref = dense_solve_oracle(A.toarray(), b)
    assert rep.converged and rep.residual <= 1e-12
    np.testing.assert_allclose(x, ref, rtol=1e-10)


def test_nonpositive_diagonal():
    with pytest.raises(SolverError):
        cg_solve(sp.diags([1.0, 0.0, 2.0]).tocsr(), np.ones(3))


def test_indefinite_flagged():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    _, rep = cg_solve(A, np.array([1.0, -1.0]))
    assert rep.indefinite and not rep.converged


def test_max_iter_report():
    A = shifted_laplacian(65)
    x, rep = cg_solve(A, np.random.default_rng(0).normal(size=65), tol=1e-14, max_iter=3)
    assert rep.iterations == 3 and not rep.converged


def test_dense_small():
    np.testing.assert_allclose(dense_solve_oracle([[2.0, 0.0], [0.0, 4.0]], [2.0, 4.0]), [1.0, 1.0])


def test_dense_random_spd():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(16, 16))
    A = M @ M.T + 16 * np.eye(16)
    b = rng.normal(size=16)
    x = dense_solve_oracle(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_dense_hilbert_warns():
    n = 8
    H = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
    b = H @ np.ones(n)
    with pytest.warns(IllConditionedWarning):
        x = dense_solve_oracle(H, b)
    assert np.linalg.norm(H @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_dense_errors():
    with pytest.raises(SolverError):
        dense_solve_oracle(np.zeros((3, 3)), np.ones(3))
    with pytest.raises(ValueError):
        dense_solve_oracle(np.eye(DENSE_MAX + 1), np.ones(DENSE_MAX + 1))
    with pytest.raises(ValueError):
        dense_solve_oracle(np.eye(3), np.ones(4))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(4, 256), seed=st.integers(0, 2**31), tau=st.sampled_from([1e-4, 1e-3, 1e-2, 1e-1]))
def test_cg_agrees_with_dense_on_scheme_systems(n, seed, tau):
    rng = np.random.default_rng(seed)
    g = build_grid("interval1d", n)
    cfg = PotentialConfig()
    rho = rng.uniform(-0.9, 0.9, n)
    b = rng.normal(size=n)
    J = rho_step_jacobian(rho, tau, cfg, g)
    state = FieldState(0.0, rng.uniform(0, 2, n), rho)
    A_mu, _, _ = mu_system(state, rho + 0.01 * rng.normal(size=n).clip(-5, 5) * (1 - np.abs(rho)),
                           SchemeParams(), cfg, g, tau)
    for A in (J, A_mu):
        x, rep = cg_solve(A, b, tol=1e-12)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            ref = dense_solve_oracle(A.toarray(), b)
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_iteration_growth_under_refinement():
    its = []
    for n in (33, 65, 129, 257):
        _, rep = cg_solve(shifted_laplacian(n), np.ones(n) + np.cos(np.pi * np.linspace(0, 1, n)), tol=1e-10)
        its.append(rep.iterations)
    for a, b in zip(its, its[1:]):
        assert b <= 2.5 * a
