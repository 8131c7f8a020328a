import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossgram import matcore
from crossgram.matcore import (ConvergenceError, DimensionError, NotPSDError, SingularMatrixError,
                               cholesky_psd, eig_sym, fro_norm, gemm, lu_solve, psd_factor, svd)

from .conftest import random_orthogonal

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def small_matrices(max_side=8):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))


# ----------------------------------------------------------------- gemm

def test_gemm_identity(rng):
    x = rng.standard_normal((2, 2))
    np.testing.assert_array_equal(gemm(np.eye(2), x), x)


def test_gemm_hand_arithmetic():
    np.testing.assert_array_equal(gemm([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])


def test_gemm_transpose_of_permutation():
    p = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(gemm(p, p, transpose_a=True), np.eye(2))


def test_gemm_transpose_b(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    np.testing.assert_allclose(gemm(a, b, transpose_b=True), a @ b.T)


def test_gemm_mismatch_reports_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        gemm(np.ones((2, 3)), np.ones((2, 3)))


# --------------------------------------------------------------- lu_solve

def test_solve_identity(rng):
    r = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(lu_solve(np.eye(3), r), r)


def test_solve_diagonal():
    np.testing.assert_allclose(lu_solve([[2, 0], [0, 4]], [[2], [4]]), [[1], [1]], rtol=0, atol=1e-15)


def test_solve_unit_lower_triangular(rng):
    low = np.tril(rng.standard_normal((6, 6)), -1) + np.eye(6)
    x0 = rng.standard_normal((6, 3))
    np.testing.assert_allclose(lu_solve(low, low @ x0), x0, atol=1e-10)


def test_solve_vector_rhs():
    x = lu_solve([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0])
    np.testing.assert_allclose(x, [3.0, 2.0])


def test_solve_singular_carries_pivot():
    with pytest.raises(SingularMatrixError) as info:
        lu_solve([[1.0, 2.0], [2.0, 4.0]], [[1.0], [1.0]])
    assert abs(info.value.pivot) < 1e-12


def test_solve_dimension_mismatch():
    with pytest.raises(DimensionError):
        lu_solve(np.eye(3), np.ones((2, 1)))


def test_solve_round_trip_100_systems(rng):
    for _ in range(100):
        n = int(rng.integers(1, 20))
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        rhs = rng.standard_normal((n, int(rng.integers(1, 4))))
        x = lu_solve(a, rhs)
        assert fro_norm(gemm(a, x) - rhs) <= 1e-10 * max(1.0, fro_norm(rhs))


# ------------------------------------------------------------ cholesky

def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky_psd(np.eye(2)), np.eye(2))


def test_cholesky_hand_arithmetic():
    np.testing.assert_allclose(cholesky_psd([[4, 2], [2, 2]]), [[2, 0], [1, 1]], atol=1e-15)


def test_cholesky_gram_matrix(rng):
    g = rng.standard_normal((5, 5))
    low = cholesky_psd(g.T @ g)
    assert np.allclose(low, np.tril(low))
    assert fro_norm(low @ low.T - g.T @ g) <= 1e-8 * max(1.0, fro_norm(g.T @ g))


def test_cholesky_semidefinite_clamps(rng):
    v = rng.standard_normal((6, 2))
    a = v @ v.T
    low = cholesky_psd(a)
    assert fro_norm(low @ low.T - a) <= 1e-8 * fro_norm(a)


def test_cholesky_not_psd_carries_pivot():
    with pytest.raises(NotPSDError) as info:
        cholesky_psd([[1.0, 0.0], [0.0, -1.0]])
    assert info.value.pivot == pytest.approx(-1.0)


def test_cholesky_rejects_nonsymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        cholesky_psd([[1.0, 1.0], [0.0, 1.0]])


def test_cholesky_round_trip_100_gram_matrices(rng):
    for _ in range(100):
        n = int(rng.integers(1, 65))
        g = rng.standard_normal((n, n))
        a = g.T @ g
        low = cholesky_psd(a)
        assert fro_norm(low @ low.T - a) <= 1e-8 * max(1.0, fro_norm(a))


def test_psd_factor_round_trip_100_low_rank_gram_matrices(rng):
    for _ in range(100):
        n = int(rng.integers(1, 65))
        g = rng.standard_normal((int(rng.integers(1, n + 1)), n))
        a = g.T @ g
        f = psd_factor(a)
        assert fro_norm(f @ f.T - a) <= 1e-8 * max(1.0, fro_norm(a))


def test_psd_factor_rank_deficient(rng):
    # eigenvalues spanning 1..1e-20: plain Cholesky hits negative noise pivots
    q = random_orthogonal(rng, 30)
    a = (q * np.logspace(0, -20, 30)) @ q.T
    a = 0.5 * (a + a.T)
    f = psd_factor(a)
    assert fro_norm(f @ f.T - a) <= 1e-13 * fro_norm(a)


# -------------------------------------------------------------- eig_sym

def test_eig_diagonal():
    values, vectors = eig_sym(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(values, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(vectors), np.eye(2))


def test_eig_plus_minus_one_magnitude_order():
    values, _ = eig_sym([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(values, [1.0, -1.0], atol=1e-15)


def test_eig_spectral_synthesis(rng):
    n = 12
    q = random_orthogonal(rng, n)
    d = rng.uniform(-5, 5, n)
    values, vectors = eig_sym(q @ np.diag(d) @ q.T)
    expected = d[np.argsort(-np.abs(d))]
    np.testing.assert_allclose(values, expected, atol=1e-12)
    a = q @ np.diag(d) @ q.T
    for k in range(n):
        assert np.linalg.norm(a @ vectors[:, k] - values[k] * vectors[:, k]) <= 1e-8 * fro_norm(a)
    assert fro_norm(vectors.T @ vectors - np.eye(n)) <= 1e-12


def test_eig_matches_numpy(rng):
    g = rng.standard_normal((40, 40))
    a = g + g.T
    values, _ = eig_sym(a)
    ref = np.linalg.eigvalsh(a)
    np.testing.assert_allclose(np.sort(values), ref, atol=1e-12 * fro_norm(a))


def test_eig_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        eig_sym([[1.0, 2.0], [0.0, 1.0]])


def test_eig_sweep_cap_raises(monkeypatch, rng):
    monkeypatch.setattr(matcore, "MAX_SWEEPS", 1)
    g = rng.standard_normal((10, 10))
    with pytest.raises(ConvergenceError) as info:
        eig_sym(g + g.T)
    assert info.value.residual > 0


# ------------------------------------------------------------------ svd

def test_svd_identity():
    np.testing.assert_allclose(svd(np.eye(3)).s, [1.0, 1.0, 1.0])


def test_svd_diagonal_with_sign():
    dec = svd(np.diag([2.0, -3.0]))
    np.testing.assert_allclose(dec.s, [3.0, 2.0])
    np.testing.assert_allclose(dec.u @ np.diag(dec.s) @ dec.v.T, np.diag([2.0, -3.0]), atol=1e-15)


def test_svd_rank_one(rng):
    u, v = rng.standard_normal(7), rng.standard_normal(5)
    dec = svd(np.outer(u, v))
    assert dec.s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-13)
    assert np.all(dec.s[1:] <= 1e-13 * dec.s[0])
    assert fro_norm(dec.u.T @ dec.u - np.eye(5)) <= 1e-10


def test_svd_zero_matrix():
    dec = svd(np.zeros((3, 2)))
    np.testing.assert_array_equal(dec.s, [0.0, 0.0])
    assert fro_norm(dec.u.T @ dec.u - np.eye(2)) <= 1e-12


def test_svd_sweep_cap_raises(monkeypatch, rng):
    monkeypatch.setattr(matcore, "MAX_SWEEPS", 1)
    with pytest.raises(ConvergenceError):
        svd(rng.standard_normal((12, 12)))


def test_svd_wide_and_tall_shapes(rng):
    for shape in [(3, 8), (8, 3), (1, 5), (5, 1)]:
        a = rng.standard_normal(shape)
        dec = svd(a)
        np.testing.assert_allclose(dec.s, np.linalg.svd(a, compute_uv=False), rtol=1e-12)


def check_svd_invariants(a):
    # thin factors: u is m x k, v is n x k with k = min(m, n)
    dec = svd(a)
    m, n = a.shape
    k = min(m, n)
    assert dec.u.shape == (m, k) and dec.v.shape == (n, k) and dec.s.shape == (k,)
    assert np.all(dec.s >= 0) and np.all(np.diff(dec.s) <= 0)
    assert fro_norm(dec.u.T @ dec.u - np.eye(k)) <= 1e-10
    assert fro_norm(dec.v.T @ dec.v - np.eye(k)) <= 1e-10
    recon = dec.u @ np.diag(dec.s) @ dec.v.T
    assert fro_norm(recon - a) <= 1e-10 * max(1.0, fro_norm(a))
    return dec


@given(small_matrices())
def test_svd_invariants_property(a):
    check_svd_invariants(a)


@given(small_matrices())
def test_svd_squares_are_gram_eigenvalues(a):
    s = svd(a).s
    lam, _ = eig_sym(a.T @ a)
    lam = np.sort(lam)[::-1][:len(s)]
    scale = max(1.0, s[0] ** 2) if len(s) else 1.0
    # relative to the spectrum scale: tiny eigenvalues carry absolute noise
    np.testing.assert_allclose(s ** 2, np.maximum(lam, 0.0), rtol=1e-8, atol=1e-12 * scale)


def test_svd_size_128(rng):
    check_svd_invariants(rng.standard_normal((128, 128)))


# ------------------------------------------------------------ fro_norm

@pytest.mark.parametrize("a, expected", [(np.zeros((2, 2)), 0.0), (np.eye(4), 2.0), ([[3.0, 4.0]], 5.0)])
def test_fro_norm(a, expected):
    assert fro_norm(a) == expected


@given(small_matrices())
def test_fro_norm_matches_numpy(a):
    assert fro_norm(a) == pytest.approx(np.linalg.norm(a), rel=1e-14, abs=0)
