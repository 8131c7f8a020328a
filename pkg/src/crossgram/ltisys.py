"""Linear time-invariant state-space systems ``x' = Ax + Bu, y = Cx``.

Holds the system type, the simulation grid, the structural predicates
(stability, gain symmetry) and the derived systems used by the gramian
code: SISO subsystems, the averaged SISO system and the symmetric
embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matcore import DimensionError, as_matrix, fro_norm, lu_solve

#: Stream indices for :func:`uniform_matrix`, one per generated matrix.
STREAM_A, STREAM_B, STREAM_C = 0, 1, 2

DECAY_FACTOR = 1e-6


@dataclass(frozen=True)
class SimGrid:
    """Fixed time grid ``t_k = k * dt`` for ``k = 0 .. steps``."""

    dt: float = 0.01
    horizon: float = 10.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= 10 * self.dt * (1 - 1e-12):
            raise ValueError(f"horizon {self.horizon} is shorter than 10 steps of {self.dt}")
        if abs(self.steps * self.dt - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise ValueError(f"horizon {self.horizon} is not a whole number of steps of {self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """State-space triple (A, B, C) with zero feed-forward."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_matrix(self.b, "B")
        c = as_matrix(self.c, "C")
        n = a.shape[0]
        if a.shape != (n, n):
            raise DimensionError(f"A must be square, got {a.shape}")
        if b.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {b.shape}")
        if c.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {c.shape}")
        for name, arr in (("a", a), ("b", b), ("c", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def o(self) -> int:
        return self.c.shape[0]

    def __repr__(self):
        return f"LtiSystem(n={self.n}, m={self.m}, o={self.o})"


@dataclass(frozen=True)
class SystemShape:
    square: bool
    symmetric: bool
    state_space_symmetric: bool


@dataclass(frozen=True)
class StabilityCertificate:
    """Outcome of the trajectory-decay stability test.

    `horizon` is the time at which decay was reached (or the last time
    checked); `blowup_time` is set when the simulation left the finite
    range.
    """

    stable: bool
    horizon: float
    decay: float
    blowup_time: float | None = None


def stability_certificate(sys, grid, factor=DECAY_FACTOR, max_doublings=20):
    """Certify asymptotic stability by decay of free trajectories.

    All canonical initial states are propagated with the RK4 scheme of
    `grid`.  If their largest norm at ``grid.horizon`` is not yet below
    `factor`, the horizon is doubled by squaring the sampled state
    transition matrix (which is exactly the RK4 trajectory at twice the
    time) up to `max_doublings` times.
    """
    from .sim import SimulationDivergence, final_state, iter_blocks

    phi = final_state(sys.a, np.eye(sys.n), grid)
    if not np.all(np.isfinite(phi)):
        try:
            for _ in iter_blocks(sys.a, np.eye(sys.n), grid):
                pass
        except SimulationDivergence as err:
            return StabilityCertificate(False, grid.horizon, math.inf, err.step * grid.dt)
        return StabilityCertificate(False, grid.horizon, math.inf, grid.horizon)
    horizon = grid.horizon
    for _ in range(max_doublings + 1):
        decay = float(np.max(np.linalg.norm(phi, axis=0)))
        if not math.isfinite(decay) or decay > 1e100:
            return StabilityCertificate(False, horizon, math.inf, horizon)
        if decay <= factor:
            return StabilityCertificate(True, horizon, decay)
        with np.errstate(over="ignore", invalid="ignore"):
            phi = phi @ phi
        horizon *= 2
    return StabilityCertificate(False, horizon / 2, decay)


def is_stable(sys, grid=None):
    """True iff every canonical free trajectory decays by 1e-6."""
    return stability_certificate(sys, grid or SimGrid()).stable


def dc_gain(sys):
    """Static gain ``C A^{-1} B`` (the sign convention of the symmetry test)."""
    return sys.c @ lu_solve(sys.a, sys.b)


def gain_symmetric(sys, tol=1e-10):
    """True iff the gain ``C A^{-1} B`` is a symmetric matrix."""
    if sys.m != sys.o:
        raise ValueError(f"symmetry test undefined for M != O (M={sys.m}, O={sys.o})")
    g = dc_gain(sys)
    return fro_norm(g - g.T) <= tol * max(1.0, fro_norm(g))


def system_shape(sys, tol=1e-10):
    square = sys.m == sys.o
    symmetric = square and gain_symmetric(sys, tol)
    ss_sym = (fro_norm(sys.a - sys.a.T) <= tol * max(1.0, fro_norm(sys.a))
              and sys.b.shape == sys.c.T.shape
              and fro_norm(sys.b - sys.c.T) <= tol * max(1.0, fro_norm(sys.b)))
    return SystemShape(square=square, symmetric=symmetric, state_space_symmetric=ss_sym)


def uniform_matrix(seed, stream, shape, low=0.0, high=1.0):
    """I.i.d. uniform matrix from a Philox counter-based stream.

    Every (seed, stream) pair maps to an independent generator, so one
    matrix never shifts the numbers drawn for another.
    """
    seq = np.random.SeedSequence(seed, spawn_key=(stream,))
    rng = np.random.Generator(np.random.Philox(seq))
    return rng.uniform(low, high, size=shape)


def lehmer_matrix(n):
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.minimum.outer(i, i) / np.maximum.outer(i, i)


def lehmer_system(n, m, seed):
    """State-space symmetric test system: A = -Lehmer(n), C = B^T, B ~ U(0,1)."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    b = uniform_matrix(seed, STREAM_B, (n, m))
    return LtiSystem(-lehmer_matrix(n), b, b.T.copy())


def stable_random_matrix(n, seed):
    """Random A shifted left so every Gershgorin disc lies in Re <= -1."""
    r = uniform_matrix(seed, STREAM_A, (n, n), -1.0, 1.0)
    shift = 1.0 + np.max(np.sum(np.abs(r), axis=1))
    return r - shift * np.eye(n)


def random_system(n, m, o, seed, a_mode="lehmer"):
    """System with uniform random B (N x M) and C (O x N).

    `a_mode` is ``"lehmer"`` for the negative Lehmer matrix or
    ``"stable_random"`` for a diagonally shifted random matrix.
    """
    if min(n, m, o) < 1:
        raise ValueError("n, m and o must be at least 1")
    if a_mode == "lehmer":
        a = -lehmer_matrix(n)
    elif a_mode == "stable_random":
        a = stable_random_matrix(n, seed)
    else:
        raise ValueError(f"unknown a_mode {a_mode!r}")
    b = uniform_matrix(seed, STREAM_B, (n, m))
    c = uniform_matrix(seed, STREAM_C, (o, n))
    return LtiSystem(a, b, c)


def siso_subsystem(sys, i, j):
    """SISO system (A, b_i, c_j) for input column `i` and output row `j` (0-based)."""
    if not 0 <= i < sys.m:
        raise IndexError(f"input index {i} out of range for M={sys.m}")
    if not 0 <= j < sys.o:
        raise IndexError(f"output index {j} out of range for O={sys.o}")
    return LtiSystem(sys.a, sys.b[:, i:i + 1], sys.c[j:j + 1, :])


def averaged_siso(sys):
    """SISO system driven by the row sum of B and observed by the column sum of C."""
    return LtiSystem(sys.a, sys.b.sum(axis=1, keepdims=True), sys.c.sum(axis=0, keepdims=True))


def symmetrizer_residual(a, j):
    """Relative residual ``||AJ - JA^T|| / (||A|| ||J||)``."""
    return fro_norm(a @ j - j @ a.T) / max(fro_norm(a) * fro_norm(j), np.finfo(float).tiny)


def embed_symmetric(sys, j, tol=1e-8):
    """Square embedding ``(A, [J C^T, B], [C; B^T J^{-1}])`` for a symmetrizer J."""
    j = as_matrix(j, "J")
    if j.shape != (sys.n, sys.n):
        raise DimensionError(f"symmetrizer must be {sys.n}x{sys.n}, got {j.shape}")
    if fro_norm(j - j.T) > tol * fro_norm(j):
        raise ValueError("symmetrizer J is not symmetric")
    res = symmetrizer_residual(sys.a, j)
    if res > tol:
        raise ValueError(f"J is not a symmetrizer of A (residual {res:.3e})")
    # B^T J^{-1} = (J^{-1} B)^T since J is symmetric
    jinv_b = lu_solve(j, sys.b)
    b_hat = np.hstack([j @ sys.c.T, sys.b])
    c_hat = np.vstack([sys.c, jinv_b.T])
    return LtiSystem(sys.a, b_hat, c_hat)


class ModelFormatError(ValueError):
    """Malformed model file; `field` names the offending entry (e.g. "B")."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def matrix_to_rows(a):
    """Row-major nested lists; Python floats serialize with round-trip precision."""
    return [[float(v) for v in row] for row in np.asarray(a, dtype=np.float64)]


def system_to_dict(sys):
    return {"n": sys.n, "m": sys.m, "o": sys.o,
            "A": matrix_to_rows(sys.a), "B": matrix_to_rows(sys.b), "C": matrix_to_rows(sys.c)}


def _read_count(data, key):
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ModelFormatError(key, f"expected a positive integer, got {value!r}")
    return value


def _read_matrix(data, key, shape):
    rows = data.get(key)
    if not isinstance(rows, list) or len(rows) != shape[0]:
        got = len(rows) if isinstance(rows, list) else type(rows).__name__
        raise ModelFormatError(key, f"expected {shape[0]} rows, got {got}")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != shape[1]:
            raise ModelFormatError(f"{key}[{i}]", f"expected a row of {shape[1]} numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ModelFormatError(f"{key}[{i}][{j}]", f"expected a finite number, got {v!r}")
    return np.array(rows, dtype=np.float64).reshape(shape)


def system_from_dict(data):
    """Validate and build a system from the JSON model schema."""
    if not isinstance(data, dict):
        raise ModelFormatError("<root>", "expected a JSON object")
    n, m, o = (_read_count(data, k) for k in ("n", "m", "o"))
    return LtiSystem(_read_matrix(data, "A", (n, n)),
                     _read_matrix(data, "B", (n, m)),
                     _read_matrix(data, "C", (o, n)))
