import numpy as np
import pytest

from glucosindy.lstsq import (RankDeficientWarning, apply_qt, back_substitute, forward_substitute,
                              householder_qr, lstsq)


@pytest.mark.parametrize("pivoting", [False, True])
def test_qr_reconstructs(pivoting):
    rng = np.random.default_rng(1)
    A = rng.normal(size=(9, 5))
    V, R, perm = householder_qr(A, pivoting)
    Q_T_A = np.column_stack([apply_qt(V, A[:, p]) for p in perm])
    np.testing.assert_allclose(Q_T_A, R, atol=1e-12)
    assert np.allclose(np.tril(R, -1), 0)
    if pivoting:
        d = np.abs(np.diag(R))
        assert np.all(d[:-1] >= d[1:] - 1e-12)


def test_triangular_solves():
    rng = np.random.default_rng(2)
    U = np.triu(rng.normal(size=(4, 4))) + 4 * np.eye(4)
    c = rng.normal(size=4)
    np.testing.assert_allclose(U @ back_substitute(U, c), c)
    np.testing.assert_allclose(U.T @ forward_substitute(U.T, c), c)


def test_matches_normal_equations():
    rng = np.random.default_rng(3)
    A, y = rng.normal(size=(6, 4)), rng.normal(size=6)
    oracle = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(lstsq(A, y), oracle, atol=1e-12)


def test_ridge_matches_closed_form():
    rng = np.random.default_rng(4)
    A, y = rng.normal(size=(20, 5)), rng.normal(size=20)
    oracle = np.linalg.solve(A.T @ A + 0.3 * np.eye(5), A.T @ y)
    np.testing.assert_allclose(lstsq(A, y, ridge=0.3), oracle, atol=1e-12)
    with pytest.raises(ValueError):
        lstsq(A, y, ridge=-1.0)


def test_rank_deficient_minimum_norm():
    rng = np.random.default_rng(5)
    B = rng.normal(size=(10, 3))
    A = np.column_stack([B, B[:, 0] + B[:, 1]])
    y = rng.normal(size=10)
    with pytest.warns(RankDeficientWarning):
        x = lstsq(A, y)
    np.testing.assert_allclose(x, np.linalg.pinv(A) @ y, atol=1e-10)


def test_zero_matrix():
    with pytest.warns(RankDeficientWarning):
        np.testing.assert_array_equal(lstsq(np.zeros((4, 2)), np.ones(4)), [0, 0])
    assert lstsq(np.zeros((3, 0)), np.ones(3)).shape == (0,)
