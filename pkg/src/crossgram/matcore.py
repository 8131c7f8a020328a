"""Dense real matrix kernels: products, LU solve, Cholesky, Jacobi eigen/SVD.

Matrices are plain float64 :class:`numpy.ndarray` objects.  The
factorizations are written out here (rather than delegated to LAPACK) so
that their convergence and clamping rules are explicit and testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(np.float64).eps
MAX_SWEEPS = 60


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SingularMatrixError(ArithmeticError):
    """A pivot fell below the singularity tolerance."""

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


class NotPSDError(ArithmeticError):
    """A Cholesky pivot was too negative for a positive semidefinite input."""

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(ArithmeticError):
    """A Jacobi iteration hit its sweep cap."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Svd:
    """Thin singular value decomposition ``a = u @ diag(s) @ v.T``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(a, name="matrix"):
    """Return `a` as a finite 2-D float64 array."""
    out = np.array(a, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite entries")
    return out


def gemm(a, b, transpose_a=False, transpose_b=False):
    """Dense product ``op(a) @ op(b)`` with optional transposition."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    opa = a.T if transpose_a else a
    opb = b.T if transpose_b else b
    if opa.ndim != 2 or opb.ndim != 2 or opa.shape[1] != opb.shape[0]:
        raise DimensionError(
            f"cannot multiply {opa.shape} by {opb.shape} "
            f"(inputs {a.shape}, {b.shape}, transpose_a={transpose_a}, "
            f"transpose_b={transpose_b})")
    return opa @ opb


def fro_norm(a):
    """Frobenius norm."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def lu_solve(a, rhs, tol=None):
    """Solve ``a @ x = rhs`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    a
        Square coefficient matrix.
    rhs
        Right-hand side, a vector or a matrix with ``a.shape[0]`` rows.
    tol
        Pivot magnitude below which `a` is declared singular.  Defaults to
        ``n * eps * max|a|``.

    Raises
    ------
    SingularMatrixError
        If a pivot is too small; the offending magnitude is in ``.pivot``.
    """
    a = np.array(a, dtype=np.float64)
    x = np.array(rhs, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n or x.shape[0] != n:
        raise DimensionError(f"lu_solve needs square a and matching rhs, got {a.shape} and {np.shape(rhs)}")
    if tol is None:
        tol = n * EPS * max(float(np.max(np.abs(a), initial=0.0)), np.finfo(float).tiny)

    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        pivot = a[p, k]
        if abs(pivot) <= tol:
            raise SingularMatrixError(
                f"matrix is singular to working precision (pivot {abs(pivot):.3e} at column {k})", abs(pivot))
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        factors = a[k + 1:, k] / pivot
        a[k + 1:, k:] -= np.outer(factors, a[k, k:])
        x[k + 1:] -= np.outer(factors, x[k])

    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if vector else x


def cholesky_psd(a, clamp=1e-12):
    """Lower Cholesky factor of a symmetric positive semidefinite matrix.

    Pivots in ``[-clamp * ||a||_F, n * eps * ||a||_F]`` are treated as zero
    and their column below the diagonal is zeroed, so ``L @ L.T`` reproduces
    semidefinite inputs (empirical gramians are PSD only up to quadrature
    error).  More negative pivots raise :class:`NotPSDError`.
    """
    a = as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"cholesky needs a square matrix, got {a.shape}")
    scale = fro_norm(a)
    if fro_norm(a - a.T) > 1e-8 * scale:
        raise ValueError("cholesky_psd input is not symmetric")
    a = 0.5 * (a + a.T)
    low = np.zeros_like(a)
    noise = n * EPS * scale
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d < -clamp * scale:
            raise NotPSDError(f"matrix is not PSD (pivot {d:.3e} at column {j})", d)
        if d <= noise:
            continue
        root = np.sqrt(d)
        low[j, j] = root
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / root
    return low


def psd_factor(a, clamp=1e-12):
    """Factor ``F`` with ``F @ F.T == a`` by diagonally pivoted Cholesky.

    The largest remaining diagonal entry is eliminated first, which keeps
    the factor accurate for numerically rank-deficient inputs.  Elimination
    stops once the remaining diagonal is below ``n * eps * ||a||_F``; the
    trailing columns of ``F`` are zero.  ``F`` is lower-triangular up to a
    row permutation.
    """
    a = as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"psd_factor needs a square matrix, got {a.shape}")
    scale = fro_norm(a)
    if fro_norm(a - a.T) > 1e-8 * scale:
        raise ValueError("psd_factor input is not symmetric")
    work = 0.5 * (a + a.T)
    perm = np.arange(n)
    low = np.zeros_like(work)
    noise = n * EPS * scale
    for j in range(n):
        diag = np.diag(work)[j:] - np.einsum("ij,ij->i", low[j:, :j], low[j:, :j])
        if diag.min(initial=0.0) < -clamp * scale:
            raise NotPSDError(f"matrix is not PSD (pivot {diag.min():.3e})", float(diag.min()))
        k = j + int(np.argmax(diag))
        d = diag[k - j]
        if d <= noise:
            break
        if k != j:
            perm[[j, k]] = perm[[k, j]]
            work[[j, k]] = work[[k, j]]
            work[:, [j, k]] = work[:, [k, j]]
            low[[j, k]] = low[[k, j]]
        root = np.sqrt(d)
        low[j, j] = root
        low[j + 1:, j] = (work[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / root
    out = np.empty_like(low)
    out[perm] = low
    return out


def _round_robin(n):
    """Tournament schedule: ``n - 1`` rounds of disjoint index pairs.

    For odd `n` a dummy slot is added and its pairs dropped.  Every pair
    ``(p, q)`` with ``p < q`` occurs exactly once per sweep.
    """
    slots = list(range(n + (n % 2)))
    m = len(slots)
    rounds = []
    for _ in range(m - 1):
        pairs = [(slots[i], slots[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        slots = [slots[0], slots[-1]] + slots[1:-1]
    return rounds


def _rotation(alpha, beta, gamma):
    """Cosine/sine of the Jacobi rotation annihilating `gamma`.

    `alpha`, `beta` are the diagonal entries and `gamma` the coupling of a
    symmetric 2x2 block; returns (c, s) such that with
    ``J = [[c, s], [-s, c]]`` the product ``J.T @ block @ J`` is diagonal.
    """
    nz = gamma != 0.0
    safe = np.where(nz, gamma, 1.0)
    zeta = (beta - alpha) / (2.0 * safe)
    t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
    t = np.where(zeta == 0.0, 1.0, t)
    t = np.where(nz, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, c * t


def eig_sym(a, tol=1e-14):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi.

    Returns
    -------
    values
        Eigenvalues sorted by descending magnitude (positive first on ties).
    vectors
        Orthonormal eigenvectors as columns, same order.
    """
    a = as_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"eig_sym needs a square matrix, got {a.shape}")
    scale = fro_norm(a)
    if fro_norm(a - a.T) > 1e-8 * scale:
        raise ValueError("eig_sym input is not symmetric; symmetrize explicitly if intended")
    work = 0.5 * (a + a.T)
    vecs = np.eye(n)
    rounds = _round_robin(n)
    threshold = tol * scale

    for _ in range(MAX_SWEEPS):
        off = np.abs(work - np.diag(np.diag(work)))
        if n < 2 or off.max() <= threshold:
            break
        for p, q in rounds:
            c, s = _rotation(work[p, p], work[q, q], work[p, q])
            cols_p, cols_q = work[:, p].copy(), work[:, q].copy()
            work[:, p] = c * cols_p - s * cols_q
            work[:, q] = s * cols_p + c * cols_q
            rows_p, rows_q = work[p, :].copy(), work[q, :].copy()
            work[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            work[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            work[p, q] = work[q, p] = 0.0
            vp, vq = vecs[:, p].copy(), vecs[:, q].copy()
            vecs[:, p] = c * vp - s * vq
            vecs[:, q] = s * vp + c * vq
    else:
        off = np.abs(work - np.diag(np.diag(work))).max()
        if off > threshold:
            raise ConvergenceError(f"Jacobi eigensolver did not converge (off-diagonal {off:.3e})", off)

    values = np.diag(work).copy()
    # ties in magnitude: positive value first
    order = np.lexsort((-values, -np.abs(values)))
    return values[order], vecs[:, order]


def _complete_orthonormal(u, keep):
    """Replace columns of `u` not flagged in `keep` by an orthonormal completion.

    Each new vector is the canonical direction with the largest component
    outside the current span, orthogonalized twice.
    """
    m = u.shape[0]
    out = u.copy()
    basis = u[:, keep]
    for j in np.flatnonzero(~keep):
        resid = np.eye(m)
        for _ in range(2):
            resid -= basis @ (basis.T @ resid)
        norms = np.linalg.norm(resid, axis=0)
        v = resid[:, int(np.argmax(norms))] / norms.max()
        out[:, j] = v
        basis = np.hstack([basis, v[:, None]])
    return out


def svd(a, tol=1e-14):
    """Thin SVD by one-sided (Hestenes) Jacobi with cyclic sweeps.

    Column pairs are rotated until every normalized coupling
    ``|g_p . g_q| / (||g_p|| ||g_q||)`` is below ``max(tol, m * eps)``.
    Left singular vectors belonging to (numerically) zero singular values
    are completed to an orthonormal set.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if m < n:
        t = svd(a.T, tol)
        return Svd(u=t.v, s=t.s, v=t.u)
    g = a.copy()
    v = np.eye(n)
    rounds = _round_robin(n)
    limit = max(tol, m * EPS)
    coupling = 0.0

    for _ in range(MAX_SWEEPS):
        coupling = 0.0
        for p, q in rounds:
            gp, gq = g[:, p], g[:, q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            denom = np.sqrt(alpha * beta)
            rel = np.where(denom > 0.0, np.abs(gamma) / np.where(denom > 0.0, denom, 1.0), 0.0)
            active = rel > limit
            if not active.any():
                continue
            coupling = max(coupling, float(rel.max()))
            p, q = p[active], q[active]
            c, s = _rotation(alpha[active], beta[active], gamma[active])
            gp, gq = g[:, p].copy(), g[:, q].copy()
            g[:, p] = c * gp - s * gq
            g[:, q] = s * gp + c * gq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if coupling == 0.0:
            break
    else:
        raise ConvergenceError(f"one-sided Jacobi SVD did not converge (coupling {coupling:.3e})", coupling)

    s = np.sqrt(np.einsum("ij,ij->j", g, g))
    order = np.argsort(-s, kind="stable")
    s, g, v = s[order], g[:, order], v[:, order]
    keep = s > max(s[0] if n else 0.0, np.finfo(float).tiny) * m * EPS
    u = np.zeros_like(g)
    u[:, keep] = g[:, keep] / s[keep]
    if not keep.all():
        u = _complete_orthonormal(u, keep)
    return Svd(u=u, s=s, v=v)
