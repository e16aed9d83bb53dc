import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tuckerlm.tensor import frobenius_norm, mode_product
from tuckerlm.tucker import (TuckerFactors, hooi, reconstruct, relative_error, tucker2d,
                             uniform_ranks)

from .oracles import truncation_residual, tucker_als


def _orthonormal_rows(u):
    return np.abs(u @ u.T - np.eye(u.shape[0])).max()


def low_rank_tensor(shape, ranks, seed):
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(ranks)
    t = core
    for mode, (r, n) in enumerate(zip(ranks, shape)):
        q, _ = np.linalg.qr(rng.standard_normal((n, r)))
        t = mode_product(t, q, mode)
    return t


def test_constructed_multilinear_rank_recovered():
    t = low_rank_tensor((6, 7, 5), (2, 3, 2), seed=0)
    f, rep = hooi(t, (2, 3, 2))
    assert rep.relative_error < 1e-8
    assert rep.converged
    assert f.ranks == (2, 3, 2)
    for u in f.factors:
        assert _orthonormal_rows(u) < 1e-8


def test_full_ranks_exact():
    t = np.random.default_rng(1).standard_normal((4, 5, 3))
    f, rep = hooi(t, t.shape)
    assert rep.relative_error < 1e-10
    np.testing.assert_allclose(reconstruct(f), t, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_independent_als_reference(seed):
    t = np.random.default_rng(seed).standard_normal((8, 8, 8))
    _, rep = hooi(t, (2, 2, 2))
    ref = tucker_als(t, (2, 2, 2))
    assert rep.relative_error == pytest.approx(ref, rel=5e-7)


def test_error_history_nonincreasing_and_last_entry():
    rng = np.random.default_rng(2)
    for _ in range(10):
        t = rng.standard_normal((6, 5, 7))
        _, rep = hooi(t, (2, 3, 2), tol=0.0, max_iter=30)
        h = rep.error_history
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))
        assert rep.relative_error == h[-1]
        assert rep.iterations == len(h) == 30
        assert not rep.converged


def test_random_init_is_seeded_and_monotone():
    t = np.random.default_rng(3).standard_normal((5, 5, 5))
    f1, r1 = hooi(t, (2, 2, 2), init="random", seed=7, tol=0, max_iter=20)
    f2, r2 = hooi(t, (2, 2, 2), init="random", seed=7, tol=0, max_iter=20)
    assert r1.error_history == r2.error_history
    h = r1.error_history
    assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))
    with pytest.raises(ValueError):
        hooi(t, (2, 2, 2), init="magic")


def test_core_is_projection_and_norm_identity():
    rng = np.random.default_rng(4)
    for _ in range(5):
        t = rng.standard_normal((6, 6, 6))
        f, _ = hooi(t, (3, 2, 4))
        core = t
        for mode, u in enumerate(f.factors):
            core = mode_product(core, u, mode)
        np.testing.assert_allclose(f.core, core, atol=1e-12)
        lhs = frobenius_norm(t) ** 2 - frobenius_norm(f.core) ** 2
        rhs = frobenius_norm(t - reconstruct(f)) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-6)


def test_rank_monotonicity():
    rng = np.random.default_rng(5)
    for _ in range(5):
        t = rng.standard_normal((6, 6, 6))
        errs = [hooi(t, (r, r, r))[1].relative_error for r in range(1, 7)]
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_zero_tensor_convention():
    f, rep = hooi(np.zeros((3, 4, 2)), (2, 2, 1))
    assert rep.relative_error == 0.0
    assert np.all(f.core == 0)
    np.testing.assert_array_equal(f.factors[0], np.eye(2, 3))
    assert relative_error(np.zeros((3, 4, 2)), f) == 0.0


@pytest.mark.parametrize("ranks", [(0, 1, 1), (3, 1, 1), (1, 1)])
def test_rank_out_of_range(ranks):
    with pytest.raises(ValueError):
        hooi(np.ones((2, 2, 2)), ranks)


def test_bad_tolerance_iterations_and_order():
    t = np.ones((2, 2, 2))
    with pytest.raises(ValueError):
        hooi(t, (1, 1, 1), tol=-1)
    with pytest.raises(ValueError):
        hooi(t, (1, 1, 1), max_iter=0)
    with pytest.raises(ValueError):
        hooi(np.ones((2, 2, 2, 2)), (1, 1, 1, 1))


def test_uniform_ranks_clips_to_dims():
    assert uniform_ranks((4, 2, 6), 3) == (3, 2, 3)
    with pytest.raises(ValueError):
        uniform_ranks((4, 4), 0)


def test_tucker_factors_invariants():
    with pytest.raises(ValueError):
        TuckerFactors(np.zeros((2, 2)), (np.zeros((2, 3)), np.zeros((3, 3))), (3, 3))
    with pytest.raises(ValueError):
        TuckerFactors(np.zeros((2, 2)), (np.zeros((2, 3)), np.zeros((2, 4))), (3, 3))


def test_tucker2d_rank_one_exact():
    rng = np.random.default_rng(6)
    w = np.outer(rng.standard_normal(9), rng.standard_normal(6))
    f = tucker2d(w, 1)
    assert np.abs(reconstruct(f) - w).max() < 1e-10


def test_tucker2d_64x48_pr8_matches_oracle():
    w = np.random.default_rng(7).standard_normal((64, 48))
    f = tucker2d(w, 8)
    assert f.n_params == 64 * 8 + 8 * 8 + 8 * 48
    assert f.a.shape == (64, 8) and f.b.shape == (8, 8) and f.c.shape == (8, 48)
    resid = np.linalg.norm(w - reconstruct(f))
    assert abs(resid - truncation_residual(w, 8)) < 1e-8


def test_tucker2d_full_rank():
    w = np.random.default_rng(8).standard_normal((10, 13))
    assert np.linalg.norm(w - reconstruct(tucker2d(w, 10))) < 1e-9


def test_tucker2d_reconstruct_equals_abc_chain():
    w = np.random.default_rng(9).standard_normal((20, 15))
    f = tucker2d(w, 4)
    np.testing.assert_allclose(reconstruct(f), f.a @ f.b @ f.c, atol=1e-12)


def test_tucker2d_pr_out_of_range():
    with pytest.raises(ValueError):
        tucker2d(np.ones((3, 4)), 0)
    with pytest.raises(ValueError):
        tucker2d(np.ones((3, 4)), 4)


def test_order2_hooi_equals_truncated_svd():
    w = np.random.default_rng(10).standard_normal((12, 9))
    _, rep = hooi(w, (3, 3))
    assert rep.relative_error == pytest.approx(
        truncation_residual(w, 3) / np.linalg.norm(w), rel=1e-8)


def test_relative_error_examples():
    rng = np.random.default_rng(11)
    t = low_rank_tensor((5, 5, 5), (2, 2, 2), seed=11)
    f, _ = hooi(t, (2, 2, 2))
    assert relative_error(t, f) < 1e-9
    other = rng.standard_normal((5, 5, 5))
    other *= frobenius_norm(t) / frobenius_norm(other)
    g, _ = hooi(other, (5, 5, 5))
    assert relative_error(t, g) <= 2.0
    m = rng.standard_normal((10, 10))
    expect = truncation_residual(m, 3) / np.linalg.norm(m)
    assert abs(relative_error(m, tucker2d(m, 3)) - expect) < 1e-8
    with pytest.raises(ValueError):
        relative_error(np.ones((3, 3)), f)


def test_reconstruct_identity_factors():
    t = np.random.default_rng(12).standard_normal((3, 4, 2))
    f = TuckerFactors(t, tuple(np.eye(n) for n in t.shape), t.shape)
    np.testing.assert_array_equal(reconstruct(f), t)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 24), st.integers(2, 24), st.data())
def test_tucker2d_is_svd_equivalent(h, w, data):
    pr = data.draw(st.integers(1, min(h, w)))
    seed = data.draw(st.integers(0, 2**31))
    m = np.random.default_rng(seed).standard_normal((h, w))
    f = tucker2d(m, pr)
    assert f.n_params == h * pr + pr * pr + pr * w
    resid = np.linalg.norm(m - reconstruct(f))
    oracle = truncation_residual(m, pr)
    assert abs(resid - oracle) <= 1e-8 * max(1.0, np.linalg.norm(m))


@pytest.mark.parametrize("ranks", [(1, 2, 1), (2, 3), (4, 1, 2)])
def test_infeasible_multilinear_ranks_rejected(ranks):
    with pytest.raises(ValueError, match="product of the other ranks"):
        hooi(np.ones((4,) * len(ranks)), ranks)
