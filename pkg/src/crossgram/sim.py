"""Fixed-step RK4 simulation, impulse responses and trapezoidal quadrature.

For the linear vector field ``x' = Ax`` one classical Runge-Kutta step is
the matrix ``R(dt A)`` with ``R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24``.
Trajectories are produced in blocks of nodes from the powers of this
one-step matrix, which keeps long horizons cheap without changing the
scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ltisys import LtiSystem, SimGrid

BLOCK = 256


class SimulationDivergence(ArithmeticError):
    """The state left the finite range; `step` is the first bad node."""

    def __init__(self, step):
        super().__init__(f"simulation diverged at step {step}")
        self.step = step


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled free response.

    ``outputs[k]`` is ``C x(t_k)``; ``states[k]`` is ``x(t_k)`` when kept.
    A batch of initial states (an N x K matrix) adds a trailing axis of
    length K to both arrays.
    """

    grid: SimGrid
    outputs: np.ndarray
    states: np.ndarray | None = None


def rk4_step(a, x, dt):
    """One classical Runge-Kutta step of ``x' = a x`` in stage form."""
    k1 = a @ x
    k2 = a @ (x + 0.5 * dt * k1)
    k3 = a @ (x + 0.5 * dt * k2)
    k4 = a @ (x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagator(a, dt):
    """One-step matrix of RK4 for ``x' = a x``: ``rk4_step(a, x, dt) == P @ x``."""
    h = dt * np.asarray(a, dtype=np.float64)
    eye = np.eye(h.shape[0])
    return eye + h @ (eye + h @ (eye + h @ (eye + h / 4.0) / 3.0) / 2.0)


def step_powers(p, count):
    """Stack ``[I, P, P^2, ..., P^(count-1)]`` of shape (count, N, N)."""
    out = np.empty((count,) + p.shape)
    out[0] = np.eye(p.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, count):
            out[j] = out[j - 1] @ p
    return out


def iter_blocks(a, x0, grid: SimGrid, block=BLOCK):
    """Yield ``(k0, states)`` with ``states[j] = x(t_{k0 + j})`` covering all nodes.

    Raises :class:`SimulationDivergence` at the first non-finite node.
    """
    x = np.array(x0, dtype=np.float64)
    p = rk4_propagator(a, grid.dt)
    count = min(block, grid.steps + 1)
    powers = step_powers(p, count)
    jump = powers[-1] @ p
    for k0 in range(0, grid.steps + 1, count):
        nodes = min(count, grid.steps + 1 - k0)
        with np.errstate(over="ignore", invalid="ignore"):
            states = powers[:nodes] @ x
        finite = np.isfinite(states).reshape(nodes, -1).all(axis=1)
        if not finite.all():
            raise SimulationDivergence(k0 + int(np.argmin(finite)))
        yield k0, states
        with np.errstate(over="ignore", invalid="ignore"):
            x = jump @ x


def final_state(a, x0, grid: SimGrid):
    """``x(T)`` by repeated squaring of the one-step matrix."""
    p = rk4_propagator(a, grid.dt)
    out = np.array(x0, dtype=np.float64)
    k = grid.steps
    with np.errstate(over="ignore", invalid="ignore"):
        while k:
            if k & 1:
                out = p @ out
            p = p @ p
            k >>= 1
    return out


def _observed_blocks(a, c, x0, grid: SimGrid, block=BLOCK):
    """Yield ``(k0, outputs)`` using stacked ``C P^j``; states stay implicit."""
    x = np.array(x0, dtype=np.float64)
    p = rk4_propagator(a, grid.dt)
    count = min(block, grid.steps + 1)
    powers = step_powers(p, count)
    with np.errstate(over="ignore", invalid="ignore"):
        observers = np.matmul(c, powers)
        jump = powers[-1] @ p
    for k0 in range(0, grid.steps + 1, count):
        nodes = min(count, grid.steps + 1 - k0)
        with np.errstate(over="ignore", invalid="ignore"):
            out = observers[:nodes] @ x
        finite = np.isfinite(out).reshape(nodes, -1).all(axis=1)
        if not finite.all():
            raise SimulationDivergence(k0 + int(np.argmin(finite)))
        yield k0, out
        with np.errstate(over="ignore", invalid="ignore"):
            x = jump @ x


def simulate_free(sys: LtiSystem, x0, grid: SimGrid, keep_states=False) -> Trajectory:
    """Free response (u = 0) from `x0`, a vector or an N x K batch."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim not in (1, 2) or x0.shape[0] != sys.n:
        raise ValueError(f"initial state must have {sys.n} rows, got shape {x0.shape}")
    vector = x0.ndim == 1
    if vector:
        x0 = x0[:, None]
    outputs = np.empty((grid.steps + 1, sys.o, x0.shape[1]))
    states = None
    if keep_states:
        states = np.empty((grid.steps + 1,) + x0.shape)
        for k0, block in iter_blocks(sys.a, x0, grid):
            stop = k0 + block.shape[0]
            outputs[k0:stop] = np.matmul(sys.c, block)
            states[k0:stop] = block
    else:
        for k0, block in _observed_blocks(sys.a, sys.c, x0, grid):
            outputs[k0:k0 + block.shape[0]] = block
    if vector:
        outputs = outputs[:, :, 0]
        states = None if states is None else states[:, :, 0]
    return Trajectory(grid, outputs, states)


def impulse_response(sys: LtiSystem, grid: SimGrid, excitation="separate") -> np.ndarray:
    """Sampled impulse response ``C e^{A t_k} B``.

    With D = 0 a Dirac impulse is the free response from ``x0 = B u0``.
    ``excitation="separate"`` returns the full (steps+1, O, M) response,
    one impulse per input channel; ``excitation="joint"`` applies the
    impulse to all inputs at once and returns shape (steps+1, O, 1), which
    equals the separate response summed over inputs.
    """
    if excitation == "separate":
        x0 = sys.b
    elif excitation == "joint":
        x0 = sys.b.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown excitation {excitation!r}")
    return simulate_free(sys, x0, grid).outputs


def trapezoid_weights(grid: SimGrid) -> np.ndarray:
    w = np.full(grid.steps + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


# O(dt^4) Gregory end weights replacing the trapezoidal 1/2, 1, 1 at each end
GREGORY_ENDS = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


def gregory_weights(grid: SimGrid) -> np.ndarray:
    """Trapezoidal weights with third-order Gregory end corrections."""
    w = np.full(grid.steps + 1, grid.dt)
    w[:3] = grid.dt * GREGORY_ENDS
    w[-3:] = grid.dt * GREGORY_ENDS[::-1]
    return w


def endpoint_correction(dt, slope_start, slope_end):
    """Euler-Maclaurin end term turning the trapezoidal rule into an O(dt^4) rule."""
    return (dt * dt / 12.0) * (np.asarray(slope_end) - np.asarray(slope_start))


def l2_rel_error(h_full, h_red, grid: SimGrid) -> float:
    """Relative L2 error of an impulse response, Frobenius norm over all channels."""
    h_full = np.asarray(h_full, dtype=np.float64)
    h_red = np.asarray(h_red, dtype=np.float64)
    if h_full.shape != h_red.shape or h_full.shape[0] != grid.steps + 1:
        raise ValueError(f"impulse responses disagree in shape: {h_full.shape} vs {h_red.shape}")
    w = trapezoid_weights(grid)
    flat_full = h_full.reshape(h_full.shape[0], -1)
    diff = flat_full - h_red.reshape(flat_full.shape)
    ref = w @ np.einsum("ki,ki->k", flat_full, flat_full)
    if ref == 0.0:
        raise ValueError("reference response is identically zero")
    return float(np.sqrt((w @ np.einsum("ki,ki->k", diff, diff)) / ref))


def _batched(traj):
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim == 1:
        return traj[:, None, None]
    if traj.ndim == 2:
        return traj[:, :, None]
    return traj


def quad_traj_outer(left, right, grid: SimGrid, end_slopes=None) -> np.ndarray:
    """Trapezoidal approximation of ``int_0^T left(t) right(t)^T dt``.

    `left` and `right` are sampled on `grid` with shape (steps+1, p[, K])
    and (steps+1, q[, K]); the batch axis K is summed over, so each node
    contributes ``left_k @ right_k.T``.

    The interior uses trapezoidal weights.  If the integrand's time
    derivative at both ends is known, pass it as ``end_slopes=(d0, dT)``
    to apply the exact Euler-Maclaurin end correction; otherwise the three
    nodes at each end get Gregory weights, which raise the rule from
    O(dt^2) to O(dt^4) using the samples alone.
    """
    left, right = _batched(left), _batched(right)
    if left.shape[0] != grid.steps + 1 or right.shape[0] != grid.steps + 1:
        raise ValueError("trajectories are not sampled on the given grid")
    if left.shape[2] != right.shape[2]:
        raise ValueError(f"batch sizes differ: {left.shape[2]} vs {right.shape[2]}")
    if end_slopes is None:
        weighted = gregory_weights(grid)[:, None, None] * left
        return np.tensordot(weighted, right, axes=([0, 2], [0, 2]))
    weighted = trapezoid_weights(grid)[:, None, None] * left
    out = np.tensordot(weighted, right, axes=([0, 2], [0, 2]))
    return out - endpoint_correction(grid.dt, *end_slopes)
