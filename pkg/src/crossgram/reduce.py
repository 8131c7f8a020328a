"""Projection-based model order reduction and reduced-order error sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .ltisys import LtiSystem, SimGrid, is_stable
from .sim import impulse_response, l2_rel_error

METHODS = ("balanced_truncation", "cross_gramian", "nonsym_cross_gramian", "embedding_cross_gramian")

# method -> gramian it projects with (balanced truncation uses wc and wo)
GALERKIN_SOURCE = {
    "cross_gramian": "wx",
    "nonsym_cross_gramian": "wz",
    "embedding_cross_gramian": "wx_embed",
}

HANKEL_RANK_TOL = 1e-12


class HankelRankError(ValueError):
    """Requested order exceeds the numerical rank of the balancing SVD."""


@dataclass(frozen=True, eq=False)
class Projection:
    """Trial basis ``u1`` (N x n) and test map ``v1`` (n x N)."""

    u1: np.ndarray
    v1: np.ndarray
    kind: str = "galerkin"

    @property
    def order(self) -> int:
        return self.u1.shape[1]


def _check_order(n, size):
    if not 1 <= n <= size:
        raise ValueError(f"order {n} out of range 1..{size}")


class GalerkinFamily:
    """Galerkin projections of every order from one SVD of a gramian."""

    def __init__(self, w):
        self.size = np.shape(w)[0]
        self.basis = matcore.svd(w).u

    def __call__(self, n):
        _check_order(n, self.size)
        u1 = self.basis[:, :n].copy()
        return Projection(u1, u1.T.copy(), "galerkin")


class BalancedFamily:
    """Square-root balanced truncation projections from W_C and W_O.

    With factors ``W_C = Lc Lc^T``, ``W_O = Lo Lo^T`` and
    ``svd(Lo^T Lc) = U S V^T`` the order-n projection is
    ``u1 = Lc V_n S_n^{-1/2}``, ``v1 = S_n^{-1/2} U_n^T Lo^T``.
    """

    def __init__(self, wc, wo):
        self.size = np.shape(wc)[0]
        self.lc = matcore.psd_factor(wc)
        self.lo = matcore.psd_factor(wo)
        dec = matcore.svd(self.lo.T @ self.lc)
        self.hsv, self.left, self.right = dec.s, dec.u, dec.v

    def __call__(self, n):
        _check_order(n, self.size)
        s = self.hsv[:n]
        if s[-1] <= HANKEL_RANK_TOL * self.hsv[0]:
            raise HankelRankError(
                f"requested order exceeds numerical Hankel rank (sigma_{n}/sigma_1 = {s[-1] / self.hsv[0]:.2e})")
        scale = 1.0 / np.sqrt(s)
        u1 = self.lc @ self.right[:, :n] * scale
        v1 = (scale[:, None] * self.left[:, :n].T) @ self.lo.T
        return Projection(u1, v1, "petrov_galerkin")


def galerkin_from_gramian(w, n):
    """Galerkin projection onto the first `n` left singular vectors of `w`."""
    return GalerkinFamily(w)(n)


def balanced_truncation(wc, wo, n):
    """Square-root balanced truncation of order `n` (a Petrov-Galerkin projection)."""
    return BalancedFamily(wc, wo)(n)


def apply_projection(sys: LtiSystem, p: Projection) -> LtiSystem:
    """Reduced system ``(V1 A U1, V1 B, C U1)``."""
    if p.u1.shape[0] != sys.n or p.v1.shape[1] != sys.n:
        raise matcore.DimensionError(f"projection of size {p.u1.shape[0]} does not fit N={sys.n}")
    return LtiSystem(p.v1 @ sys.a @ p.u1, p.v1 @ sys.b, sys.c @ p.u1)


@dataclass
class RomReport:
    """Relative L2 impulse-response errors per method and reduced order.

    ``errors[method][k]`` and ``stable[method][k]`` belong to
    ``orders[k]``; entries are NaN / None where the reduction failed, with
    the reason in ``failures[(method, order)]``.  Methods that could not
    run at all are listed in ``skipped``.
    """

    orders: list
    errors: dict = field(default_factory=dict)
    stable: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    @property
    def methods(self):
        return list(self.errors)

    def rows(self):
        """(order, method, error, stable) for every successful reduction."""
        for k, order in enumerate(self.orders):
            for method in self.errors:
                err = self.errors[method][k]
                if not math.isnan(err):
                    yield order, method, err, self.stable[method][k]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["order", "method", "rel_l2_error", "stable"])
        for order, method, err, stable in self.rows():
            writer.writerow([order, method, repr(float(err)), "true" if stable else "false"])
        return buf.getvalue()

    def write_csv(self, path):
        """Write the CSV atomically (temporary file, then rename)."""
        write_atomic(path, self.to_csv())


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def projection_family(method, gramians):
    """Callable ``n -> Projection`` for `method` using the gramians in `gramians`."""
    if method == "balanced_truncation":
        if gramians.wc is None or gramians.wo is None:
            raise ValueError("balanced_truncation needs wc and wo")
        return BalancedFamily(gramians.wc, gramians.wo)
    if method not in GALERKIN_SOURCE:
        raise ValueError(f"unknown method {method!r}")
    w = getattr(gramians, GALERKIN_SOURCE[method])
    if w is None:
        raise ValueError(f"{method} needs gramian {GALERKIN_SOURCE[method]}, which is absent")
    return GalerkinFamily(w)


def error_sweep(sys: LtiSystem, grid: SimGrid, gramians, orders, methods,
                excitation="joint") -> RomReport:
    """Reduce `sys` with every method at every order and measure the output error.

    The full impulse response is simulated once; each reduced model is
    simulated on the same grid and compared with :func:`l2_rel_error`.
    `excitation` selects an impulse on all inputs at once (``"joint"``)
    or one impulse per input channel (``"separate"``), see
    :func:`~crossgram.sim.impulse_response`.  Stability of each reduced
    model is recorded from the decay certificate, not enforced.
    """
    orders = [int(n) for n in orders]
    h_full = impulse_response(sys, grid, excitation)
    report = RomReport(orders=orders)
    for method in methods:
        try:
            family = projection_family(method, gramians)
        except (ValueError, ArithmeticError) as err:
            report.skipped[method] = str(err)
            continue
        errs, flags = [], []
        for n in orders:
            try:
                rom = apply_projection(sys, family(n))
                errs.append(l2_rel_error(h_full, impulse_response(rom, grid, excitation), grid))
                flags.append(is_stable(rom, grid))
            except (ValueError, ArithmeticError) as err:
                report.failures[(method, n)] = str(err)
                errs.append(math.nan)
                flags.append(None)
        report.errors[method] = errs
        report.stable[method] = flags
    return report
