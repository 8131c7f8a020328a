"""Empirical system gramians from simulated trajectories.

Every gramian is an integral ``int_0^T f(t) dt`` of an outer product of
two kinds of trajectories, both generated in a single RK4 sweep:

* input-impulse states ``X(t) = e^{At} B``  (one column per input), and
* initial-state outputs ``Y(t) = C e^{At}`` (one column per canonical
  initial state).

The observability trajectories ``Y`` are computed once per call and shared
by every gramian requested from that sweep, in particular by all ``M * O``
SISO cross gramians that make up the non-symmetric cross gramian.

Integrals use the trapezoidal rule on the simulation nodes with the
Euler-Maclaurin end correction; the integrand derivative at both ends is
exact because ``X' = AX`` and ``Y' = C A e^{At}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .ltisys import LtiSystem, SimGrid, averaged_siso, embed_symmetric, stability_certificate
from .sim import endpoint_correction, iter_blocks, trapezoid_weights


class UnstableSystemError(ArithmeticError):
    """Gramians were requested for a system without a decay certificate."""


class NonSquareError(ValueError):
    """The classic cross gramian needs as many inputs as outputs."""


# Each integrand is a bilinear form f(left, right) of two trajectory
# samples; a form receives a block of nodes with quadrature weights `w` and
# returns sum_k w_k f(left_k, right_k).  Samples are pairs (X, Y) with X of
# shape (K, N, M) and Y of shape (K, O, N).
def _wc_form(w, x1, y1, x2, y2):
    return np.tensordot(w[:, None, None] * x1, x2, axes=([0, 2], [0, 2]))


def _wo_form(w, x1, y1, x2, y2):
    return np.tensordot(w[:, None, None] * y1, y2, axes=([0, 1], [0, 1]))


def _wx_form(w, x1, y1, x2, y2):
    return np.tensordot(w[:, None, None] * x1, y2, axes=([0, 2], [0, 1]))


def _wz_form(w, x1, y1, x2, y2):
    # cross gramian of the averaged SISO system: summed inputs, summed outputs
    return (w[:, None] * x1.sum(axis=2)).T @ y2.sum(axis=1)


def _wc_table(w, x1, y1, x2, y2):
    return np.einsum("k,kpi,kqi->ipq", w, x1, x2, optimize=True)


def _wo_table(w, x1, y1, x2, y2):
    return np.einsum("k,kjp,kjq->jpq", w, y1, y2, optimize=True)


def _wx_table(w, x1, y1, x2, y2):
    k, n, m = x1.shape
    o = y2.shape[1]
    left = (w[:, None, None] * x1).reshape(k, n * m)
    prod = left.T @ y2.reshape(k, o * n)
    # prod[(p, i), (j, q)] -> table[i, j, p, q]
    return prod.reshape(n, m, o, n).transpose(1, 2, 0, 3)


def _table_forms():
    return {"wc": _wc_table, "wo": _wo_table, "wx": _wx_table}


def _require_stable(sys, grid):
    cert = stability_certificate(sys, grid)
    if not cert.stable:
        raise UnstableSystemError(
            f"system failed the decay certificate (decay {cert.decay:.3e} at t={cert.horizon:g})")


def integrate_forms(sys: LtiSystem, grid: SimGrid, forms, check_stable=True):
    """Integrate several bilinear trajectory forms in one shared sweep.

    Parameters
    ----------
    sys
        The system to simulate.
    grid
        Time grid of the RK4 simulation and the quadrature.
    forms
        Mapping ``name -> f(w, x1, y1, x2, y2)``, a weighted bilinear form
        over a block of nodes (see ``_wc_form``).  ``x`` holds the
        input-impulse states (K x N x M), ``y`` the initial-state outputs
        (K x O x N).
    check_stable
        Refuse systems that fail the decay certificate.

    Returns
    -------
    dict
        ``name -> int_0^T f(node(t), node(t)) dt``.
    """
    if check_stable:
        _require_stable(sys, grid)
    m = sys.m
    weights = trapezoid_weights(grid)
    z0 = np.hstack([sys.b, np.eye(sys.n)])
    acc = {}
    slopes = {}
    last = grid.steps
    one = np.ones(1)

    def split(z):
        return z[:, :, :m], np.matmul(sys.c, z[:, :, m:])

    for k0, z in iter_blocks(sys.a, z0, grid):
        x, y = split(z)
        w = weights[k0:k0 + z.shape[0]]
        for name, form in forms.items():
            term = form(w, x, y, x, y)
            acc[name] = term if k0 == 0 else acc[name] + term
        for k in (0, last):
            if k0 <= k < k0 + z.shape[0]:
                node = z[k - k0:k - k0 + 1]
                nx, ny = split(node)
                dx, dy = split(np.matmul(sys.a, node))
                for name, form in forms.items():
                    slopes.setdefault(name, []).append(
                        form(one, dx, dy, nx, ny) + form(one, nx, ny, dx, dy))
    return {name: acc[name] - endpoint_correction(grid.dt, *slopes[name]) for name in forms}


def wc_empirical(sys, grid):
    """Controllability gramian: sum over inputs of ``int x^i x^i^T``."""
    return integrate_forms(sys, grid, {"wc": _wc_form})["wc"]


def wo_empirical(sys, grid):
    """Observability gramian from the N canonical initial-state output trajectories."""
    return integrate_forms(sys, grid, {"wo": _wo_form})["wo"]


def wx_empirical(sys, grid):
    """Cross gramian ``int e^{At} B C e^{At} dt`` of a square system."""
    if sys.m != sys.o:
        raise NonSquareError(f"cross gramian requires a square system (M={sys.m}, O={sys.o})")
    return integrate_forms(sys, grid, {"wx": _wx_form})["wx"]


@dataclass(frozen=True)
class SubsystemGramians:
    """Gramians of all SISO subsystems (A, b_i, c_j).

    ``wc[i]`` is W_C^i, ``wo[j]`` is W_O^j and ``wx[i, j]`` is W_X^{i,j}.
    """

    wc: np.ndarray
    wo: np.ndarray
    wx: np.ndarray


def subsystem_gramian_table(sys, grid):
    out = integrate_forms(sys, grid, _table_forms())
    return SubsystemGramians(out["wc"], out["wo"], out["wx"])


def wz_nonsymmetric(sys, grid, path="subsystem_sum"):
    """Non-symmetric cross gramian: the sum of all M x O SISO cross gramians.

    ``path="subsystem_sum"`` integrates every W_X^{i,j} separately (with
    shared observability trajectories) and adds them up;
    ``path="averaged_fast_path"`` computes the cross gramian of the SISO
    system with summed input columns and summed output rows.  Both give
    the same matrix up to rounding.
    """
    if path == "subsystem_sum":
        wx = integrate_forms(sys, grid, {"wx": _table_forms()["wx"]})["wx"]
        return wx.sum(axis=(0, 1))
    if path == "averaged_fast_path":
        return wx_empirical(averaged_siso(sys), grid)
    raise ValueError(f"unknown path {path!r}")


def wx_embedding(sys, j, grid):
    """Cross gramian of the symmetric embedding with symmetrizer `j`."""
    return wx_empirical(embed_symmetric(sys, j), grid)


def sylvester_residual(sys, w, rhs_left, rhs_right, form="cross"):
    """Relative residual of a gramian in its defining matrix equation.

    ``form="cross"``: ``A W + W A + L R`` (L R = B C);
    ``form="controllability"``: ``A W + W A^T + L R`` (L R = B B^T);
    ``form="observability"``: ``A^T W + W A + L R`` (L R = C^T C).
    The Frobenius norm is divided by ``max(1, ||L R||_F)``.
    """
    a = sys.a
    w = np.asarray(w, dtype=np.float64)
    rhs = matcore.gemm(rhs_left, rhs_right)
    if w.shape != a.shape or rhs.shape != a.shape:
        raise matcore.DimensionError(
            f"residual operands disagree: A {a.shape}, W {w.shape}, rhs {rhs.shape}")
    if form == "cross":
        lhs = a @ w + w @ a
    elif form == "controllability":
        lhs = a @ w + w @ a.T
    elif form == "observability":
        lhs = a.T @ w + w @ a
    else:
        raise ValueError(f"unknown residual form {form!r}")
    return matcore.fro_norm(lhs + rhs) / max(1.0, matcore.fro_norm(rhs))


def gramian_residual(sys, w, kind):
    """Residual of gramian `kind` in {"wc", "wo", "wx"} for `sys`."""
    if kind == "wc":
        return sylvester_residual(sys, w, sys.b, sys.b.T, "controllability")
    if kind == "wo":
        return sylvester_residual(sys, w, sys.c.T, sys.c, "observability")
    if kind == "wx":
        return sylvester_residual(sys, w, sys.b, sys.c, "cross")
    raise ValueError(f"unknown gramian kind {kind!r}")


def hankel_values(wc, wo):
    """Hankel singular values ``sqrt(lambda(W_C W_O))``, descending.

    Computed as the singular values of ``L_o^T L_c`` from pivoted Cholesky
    factors; their squares are the eigenvalues of the symmetric matrix
    ``L_c^T W_O L_c``, so no nonsymmetric eigenproblem is involved, and
    small values keep their relative accuracy.
    """
    lc = matcore.psd_factor(wc)
    lo = matcore.psd_factor(wo)
    return np.maximum(matcore.svd(lo.T @ lc).s, 0.0)


@dataclass(frozen=True, eq=False)
class GramianSet:
    """Gramians of one system on one grid; absent entries are None."""

    grid: SimGrid
    wc: np.ndarray | None = None
    wo: np.ndarray | None = None
    wx: np.ndarray | None = None
    wz: np.ndarray | None = None
    wx_embed: np.ndarray | None = None
    methods: dict = field(default_factory=dict)

    def present(self):
        return [k for k in ("wc", "wo", "wx", "wz", "wx_embed") if getattr(self, k) is not None]


def compute_gramians(sys, grid, include=("wc", "wo", "wx", "wz"), symmetrizer=None,
                     wz_path="averaged_fast_path"):
    """Build a :class:`GramianSet` with W_C, W_O, W_X from one shared sweep.

    On the averaged fast path W_Z comes from the same sweep (summed
    input-impulse states against summed observability outputs).  ``"wx"``
    is skipped for non-square systems.  ``"wx_embed"`` requires a
    `symmetrizer`.
    """
    include = set(include)
    forms = {}
    if "wc" in include:
        forms["wc"] = _wc_form
    if "wo" in include:
        forms["wo"] = _wo_form
    if "wx" in include and sys.m == sys.o:
        forms["wx"] = _wx_form
    shared_wz = "wz" in include and wz_path == "averaged_fast_path"
    if shared_wz:
        forms["wz"] = _wz_form
    values = integrate_forms(sys, grid, forms) if forms else {}
    methods = {name: "empirical" for name in values}
    if shared_wz:
        methods["wz"] = "averaged_fast_path"
    elif "wz" in include:
        values["wz"] = wz_nonsymmetric(sys, grid, wz_path)
        methods["wz"] = "empirical"
    if "wx_embed" in include:
        if symmetrizer is None:
            raise ValueError("wx_embed requires a symmetrizer")
        values["wx_embed"] = wx_embedding(sys, symmetrizer, grid)
        methods["wx_embed"] = "empirical"
    return GramianSet(grid=grid, methods=methods, **values)
