import numpy as np
import pytest

import tuckerlm.svd as svd_mod
from tuckerlm.svd import SvdConvergenceError, truncated_svd

from .oracles import jacobi_singular_values, truncation_residual


def _orthonormal_err(q):
    return np.abs(q.T @ q - np.eye(q.shape[1])).max()


def test_diagonal_example():
    r = truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(r.singular_values, [3, 2], atol=1e-14)
    np.testing.assert_allclose(np.abs(r.left), np.eye(3)[:, :2], atol=1e-14)
    np.testing.assert_allclose(np.abs(r.right), np.eye(3)[:, :2], atol=1e-14)


def test_rank_one_example():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(7), rng.standard_normal(5)
    m = np.outer(a, b)
    r = truncated_svd(m, 1)
    assert r.singular_values[0] == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-13)
    assert np.linalg.norm(m - r.reconstruct()) < 1e-13


def test_random_50x30_matches_full_svd_oracle():
    m = np.random.default_rng(1).standard_normal((50, 30))
    r = truncated_svd(m, 5)
    resid = np.linalg.norm(m - r.reconstruct())
    oracle = np.sqrt(np.sum(jacobi_singular_values(m)[5:] ** 2))
    assert abs(resid - oracle) < 1e-8
    assert abs(resid - truncation_residual(m, 5)) < 1e-8


@pytest.mark.parametrize("shape", [(200, 200), (120, 37), (9, 140)])
def test_residual_within_1e6_relative(shape):
    m = np.random.default_rng(sum(shape)).standard_normal(shape)
    for k in (1, 7, min(shape) // 2):
        resid = np.linalg.norm(m - truncated_svd(m, k).reconstruct())
        assert resid == pytest.approx(truncation_residual(m, k), rel=1e-6)


def test_singular_values_sorted_nonnegative_and_orthonormal():
    rng = np.random.default_rng(2)
    for shape in [(20, 8), (8, 20), (33, 33), (64, 172)]:
        m = rng.standard_normal(shape)
        k = min(shape)
        r = truncated_svd(m, k)
        s = r.singular_values
        assert np.all(s >= 0) and np.all(np.diff(s) <= 0)
        assert _orthonormal_err(r.left) < 1e-8
        assert _orthonormal_err(r.right) < 1e-8
        np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), rtol=1e-10)


def test_rank_deficient_still_orthonormal():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((30, 3)) @ rng.standard_normal((3, 20))
    r = truncated_svd(m, 10)
    assert _orthonormal_err(r.left) < 1e-8
    assert _orthonormal_err(r.right) < 1e-8
    assert np.all(r.singular_values[3:] < 1e-12)


def test_zero_matrix():
    r = truncated_svd(np.zeros((4, 3)), 2)
    np.testing.assert_array_equal(r.singular_values, [0, 0])
    assert _orthonormal_err(r.left) < 1e-12


def test_sign_convention_largest_left_entry_positive():
    m = np.random.default_rng(4).standard_normal((15, 10))
    r = truncated_svd(m, 4)
    idx = np.argmax(np.abs(r.left), axis=0)
    assert np.all(r.left[idx, range(4)] > 0)
    r2 = truncated_svd(-m, 4)
    np.testing.assert_allclose(r2.left, r.left, atol=1e-12)
    np.testing.assert_allclose(r2.right, -r.right, atol=1e-12)


def test_svd_optimality_against_random_rank_k():
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = rng.standard_normal((12, 9))
        k = int(rng.integers(1, 6))
        best = np.linalg.norm(m - truncated_svd(m, k).reconstruct())
        rand = rng.standard_normal((12, k)) @ rng.standard_normal((k, 9))
        assert best <= np.linalg.norm(m - rand) + 1e-12


def test_subspace_path_matches_jacobi():
    rng = np.random.default_rng(6)
    # a decaying spectrum so the top-k subspace is well separated
    u, _ = np.linalg.qr(rng.standard_normal((90, 60)))
    v, _ = np.linalg.qr(rng.standard_normal((60, 60)))
    m = (u * np.geomspace(10, 0.01, 60)) @ v.T
    a = truncated_svd(m, 5, method="subspace")
    b = truncated_svd(m, 5, method="jacobi")
    np.testing.assert_allclose(a.singular_values, b.singular_values, rtol=1e-10)
    np.testing.assert_allclose(a.left, b.left, atol=1e-8)
    np.testing.assert_allclose(a.right, b.right, atol=1e-8)
    assert _orthonormal_err(a.left) < 1e-8


def test_auto_uses_subspace_above_threshold(monkeypatch):
    calls = []
    real = svd_mod._subspace_svd
    monkeypatch.setattr(svd_mod, "JACOBI_MAX_DIM", 10)
    monkeypatch.setattr(svd_mod, "_subspace_svd", lambda a, k: calls.append(k) or real(a, k))
    m = np.random.default_rng(7).standard_normal((30, 20))
    r = truncated_svd(m, 2)
    assert calls == [2]
    assert np.linalg.norm(m - r.reconstruct()) == pytest.approx(truncation_residual(m, 2),
                                                                rel=1e-6)


def test_subspace_non_convergence_raises_with_residual(monkeypatch):
    monkeypatch.setattr(svd_mod, "MAX_SUBSPACE_ITERS", 2)
    # equal singular values at the cut: the leading subspace is not unique
    m = np.random.default_rng(8).standard_normal((40, 40))
    q, _ = np.linalg.qr(m)
    with pytest.raises(SvdConvergenceError) as info:
        truncated_svd(q, 3, method="subspace")
    assert info.value.iterations == 2
    assert info.value.residual > 0


@pytest.mark.parametrize("k", [0, 4, -1])
def test_k_out_of_range(k):
    with pytest.raises(ValueError):
        truncated_svd(np.ones((3, 3)), k)


def test_rejects_non_matrix_and_unknown_method():
    with pytest.raises(ValueError):
        truncated_svd(np.ones(3), 1)
    with pytest.raises(ValueError):
        truncated_svd(np.ones((3, 3)), 1, method="lapack")
