import numpy as np
import pytest
import scipy.sparse as sp

from cutstokes.harness import StudyConfig, solve_level
from cutstokes.solver import (SingularSystemError, condition_estimate,
                              solve_direct, solve_saddle)


def test_identity():
    M = sp.eye(7, format="csr")
    b = np.arange(7.0)
    assert np.array_equal(solve_direct(M, b), b)


def test_small_saddle():
    M = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 0.0]]))
    x = solve_direct(M, np.array([1.0, 1.0]))
    assert np.allclose(x, [1.0, -1.0], atol=1e-14)


def test_spd_against_dense():
    rng = np.random.default_rng(11)
    R = rng.standard_normal((50, 50))
    M = R.T @ R + np.eye(50)
    b = rng.standard_normal(50)
    x = solve_direct(sp.csr_matrix(M), b)
    ref = np.linalg.solve(M, b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_singular_raises():
    M = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularSystemError):
        solve_direct(M, np.array([1.0, 0.0]))


def test_deterministic():
    rng = np.random.default_rng(12)
    R = rng.standard_normal((40, 40))
    M = sp.csr_matrix(R.T @ R + np.eye(40))
    b = rng.standard_normal(40)
    x1 = solve_direct(M, b)
    x2 = solve_direct(M, b)
    assert np.array_equal(x1, x2)
    k1 = condition_estimate(M)
    k2 = condition_estimate(M)
    assert k1 == k2


def test_condition_diagonal():
    M = sp.diags([1.0, 10.0]).tocsr()
    assert abs(condition_estimate(M) - 10.0) <= 1e-5
    M = sp.diags([-3.0, 1.0, 5.0]).tocsr()
    assert abs(condition_estimate(M) - 5.0) <= 1e-4


def test_condition_against_dense():
    rng = np.random.default_rng(13)
    R = rng.standard_normal((30, 30))
    M = R + R.T
    w = np.abs(np.linalg.eigvalsh(M))
    ref = w.max() / w.min()
    got = condition_estimate(sp.csr_matrix(M))
    assert abs(got - ref) <= 1e-4 * ref


def test_energy_identity():
    # on a symmetric system, x.M x = b.x
    rng = np.random.default_rng(14)
    R = rng.standard_normal((60, 60))
    M = sp.csr_matrix(R.T @ R + np.eye(60))
    b = rng.standard_normal(60)
    x = solve_direct(M, b)
    assert abs(x @ (M @ x) - b @ x) <= 1e-9 * abs(b @ x)


def test_saddle_residual_reported():
    _, st = solve_level(StudyConfig(example=1, levels=1, h0=0.6), 0)
    sol = solve_saddle(st.system)
    assert sol.residual <= 1e-9
    x = np.concatenate([sol.u, sol.p, sol.lam, [sol.s]])
    r = st.system.rhs - st.system.matrix @ x
    assert np.linalg.norm(r) <= (sol.residual + 1e-15) * np.linalg.norm(st.system.rhs)
