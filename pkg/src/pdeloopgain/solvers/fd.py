"""Finite-difference reference solvers, used only to cross-check the spectral ones.

Loop A: Crank-Nicolson for ``u1`` and a trapezoidal integrating-factor update
for ``u2``, solved jointly each step.  Loop B: Crank-Nicolson with a
second-order ghost-point Robin closure, trapezoidal quadrature for the
non-local term and a semi-Lagrangian (cubic) update of ``u2`` along
characteristics.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from ..model import DisturbanceSignal, LoopAParams, LoopBParams
from ..spectral import WeightFunction
from .grid import Grid, Trajectory, as_profile
from .loop_a import check_loop_a_compatibility
from .loop_b import check_loop_b_compatibility

STEP_TOL = 1e-13
MAX_STEP_ITERS = 30


def _tridiag_banded(n: int, lower, diag, upper) -> np.ndarray:
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return ab


def _banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def fd_loop_a(params: LoopAParams, u1_0, u2_0, d: DisturbanceSignal | None, grid: Grid,
              weight: WeightFunction | None = None, store_every: int = 1) -> Trajectory:
    d = d if d is not None else DisturbanceSignal()
    if not params.b_tilde > 0:
        raise ValueError("loop A requires b_tilde > 0")
    z = grid.z
    f1, f2 = as_profile(u1_0, z), as_profile(u2_0, z)
    check_loop_a_compatibility(f1, d)
    n = grid.n_z
    hz = z[1] - z[0]
    h = grid.dt
    K, r, at, bt = params.K, params.r, params.a_tilde, params.b_tilde
    E = math.exp(-bt * h)
    rb = r * bt

    m = n - 2  # interior unknowns
    off = 1.0 / hz ** 2
    diag_L = -2.0 / hz ** 2 - K
    lhs = _tridiag_banded(m, np.full(m - 1, -0.5 * h * off),
                          np.full(m, 1.0 - 0.5 * h * diag_L - 0.25 * h * h * rb * at),
                          np.full(m - 1, -0.5 * h * off))
    rhs_op = _tridiag_banded(m, np.full(m - 1, 0.5 * h * off),
                             np.full(m, 1.0 + 0.5 * h * diag_L),
                             np.full(m - 1, 0.5 * h * off))

    u1 = f1(z).astype(float)
    u1[0] = d(0.0)
    u1[-1] = 0.0
    u2 = f2(z).astype(float)
    out_t, out_u1, out_u2 = [0.0], [u1.copy()], [u2.copy()]
    for j in range(1, grid.steps + 1):
        t_old, t_new = (j - 1) * h, j * h
        d_old, d_new = d(t_old), d(t_new)
        u2_part = E * u2 + 0.5 * at * h * E * u1  # u2^{n+1} minus its u1^{n+1} term
        rhs = _banded_matvec(rhs_op, u1[1:-1])
        rhs += 0.5 * h * rb * (u2[1:-1] + u2_part[1:-1])
        rhs[0] += 0.5 * h * off * (d_old + d_new)
        new_inner = solve_banded((1, 1), lhs, rhs)
        u1_new = np.empty(n)
        u1_new[0], u1_new[-1], u1_new[1:-1] = d_new, 0.0, new_inner
        u2 = u2_part + 0.5 * at * h * u1_new
        u1 = u1_new
        if j % store_every == 0 or j == grid.steps:
            out_t.append(t_new)
            out_u1.append(u1.copy())
            out_u2.append(u2.copy())
    return Trajectory(np.array(out_t), z, np.array(out_u1), np.array(out_u2), weight,
                      metadata={"solver": "fd", "loop": "A", "params": params.to_json(),
                                "disturbance": d.to_json(), "grid": grid.to_json()})


def fd_loop_b(params: LoopBParams, u1_0, u2_0, grid: Grid,
              weight: WeightFunction | None = None, store_every: int = 1) -> Trajectory:
    z = grid.z
    f1, f2 = as_profile(u1_0, z), as_profile(u2_0, z)
    k, c = params.boundary_gain, params.transport_speed
    check_loop_b_compatibility(f1, f2, k)
    p, a, q = params.diffusion, params.reaction, params.robin_q
    n = grid.n_z
    hz = z[1] - z[0]
    h = grid.dt

    # unknowns u1 at nodes 1..n-1; ghost node n eliminated by the Robin closure
    m = n - 1
    lower = np.full(m - 1, p / hz ** 2)
    upper = np.full(m - 1, p / hz ** 2)
    diag = np.full(m, -2.0 * p / hz ** 2 + a)
    lower[-1] = 2.0 * p / hz ** 2
    diag[-1] += 2.0 * p * q / hz
    lhs = _tridiag_banded(m, -0.5 * h * lower, 1.0 - 0.5 * h * diag, -0.5 * h * upper)
    rhs_op = _tridiag_banded(m, 0.5 * h * lower, 1.0 + 0.5 * h * diag, 0.5 * h * upper)

    trap = np.full(n, hz)
    trap[[0, -1]] = 0.5 * hz
    bmat = None if params.kernel.is_zero else params.kernel(z[:, None], z[None, :]) * trap[None, :]

    def nonlocal_term(u2):
        return np.zeros(m) if bmat is None else (bmat @ u2)[1:]

    u1 = f1(z).astype(float)
    u1[0] = 0.0
    u2 = f2(z).astype(float)
    src = nonlocal_term(u2)
    out_t, out_u1, out_u2 = [0.0], [u1.copy()], [u2.copy()]
    from_trace = z < c * h
    depart = z - c * h
    for j in range(1, grid.steps + 1):
        spline = CubicSpline(z, u2)
        u2_shift = np.where(from_trace, 0.0, spline(np.clip(depart, 0.0, 1.0)))
        rhs_base = _banded_matvec(rhs_op, u1[1:]) + 0.5 * h * src
        end_old = u1[-1]
        end_new = end_old
        for _ in range(MAX_STEP_ITERS):
            # trace u1(t_new - z/c, 1), linear in time inside the step
            lag = z / (c * h)
            trace = end_new * (1.0 - lag) + end_old * lag
            u2_new = np.where(from_trace, k * trace, u2_shift)
            src_new = nonlocal_term(u2_new)
            inner = solve_banded((1, 1), lhs, rhs_base + 0.5 * h * src_new)
            moved = abs(inner[-1] - end_new)
            end_new = inner[-1]
            if bmat is None or moved <= STEP_TOL * max(1.0, abs(end_new)):
                break
        lag = z / (c * h)
        u2 = np.where(from_trace, k * (end_new * (1.0 - lag) + end_old * lag), u2_shift)
        src = nonlocal_term(u2)
        u1 = np.concatenate([[0.0], inner])
        if j % store_every == 0 or j == grid.steps:
            out_t.append(j * h)
            out_u1.append(u1.copy())
            out_u2.append(u2.copy())
    return Trajectory(np.array(out_t), z, np.array(out_u1), np.array(out_u2), weight,
                      metadata={"solver": "fd", "loop": "B", "grid": grid.to_json()})


def fd_reference(loop: str, params, u1_0, u2_0, d: DisturbanceSignal | None, grid: Grid,
                 weight: WeightFunction | None = None, store_every: int = 1) -> Trajectory:
    """Dispatch on ``loop`` (``"A"`` or ``"B"``); ``d`` must be zero for loop B."""
    if loop.upper() == "A":
        return fd_loop_a(params, u1_0, u2_0, d, grid, weight, store_every)
    if loop.upper() == "B":
        if d is not None and not d.is_zero:
            raise ValueError("loop B has no boundary disturbance")
        return fd_loop_b(params, u1_0, u2_0, grid, weight, store_every)
    raise ValueError(f"unknown loop {loop!r}")
