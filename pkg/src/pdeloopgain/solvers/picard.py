"""Windowed Picard iteration of the damped fixed-point maps.

On each window ``[t0, t0 + W]`` the unknowns are rescaled, ``v = exp(-k s) u``
with ``s = t - t0``, which shifts every eigenvalue by the damping constant
``k`` and makes the map contract.  Iterates are whole space-time histories on
the window; a window is accepted once two successive iterates differ by less
than ``tol`` in the sup norm, and its final state seeds the next window.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.interpolate import CubicSpline

from ..model import DisturbanceSignal, LoopAParams, LoopBParams
from ..spectral import (
    WeightFunction,
    eigensystem_dirichlet_dirichlet,
    eigensystem_dirichlet_robin,
    gauss_rule_for_modes,
)
from .grid import Grid, Trajectory, as_profile
from .loop_a import check_loop_a_compatibility
from .loop_b import check_loop_b_compatibility, kernel_coupling_matrix
from .series import step_weights

log = logging.getLogger(__name__)

PICARD_TOL = 1e-9
MAX_ITERS = 200
MAX_HALVINGS = 5


class PicardDivergence(RuntimeError):
    pass


def damping_shift(loop: str, params) -> float:
    """Shift used in the damped maps: twice a bound on the coupling operator norm."""
    if loop == "A":
        return 2.0 * (2.0 * abs(params.r * params.b_tilde))
    return 2.0 * (abs(params.boundary_gain) * kernel_row_bound(params.kernel) + 1.0)


def kernel_row_bound(kernel, n: int = 64) -> float:
    """``max_z int_0^1 |b(z, s)| ds`` by Gauss quadrature on a uniform z grid."""
    if kernel.is_zero:
        return 0.0
    nodes, weights = gauss_rule_for_modes(n)
    zs = np.linspace(0.0, 1.0, 201)
    return float(np.max(np.abs(kernel(zs[:, None], nodes[None, :])) @ weights))


def _recurrence(E, w0, w1, x0, g):
    """``x_{j+1} = E x_j + w0 g_j + w1 g_{j+1}`` for all rows of ``g``."""
    out = np.empty((g.shape[0],) + np.shape(x0))
    out[0] = x0
    for j in range(1, g.shape[0]):
        out[j] = E * out[j - 1] + w0 * g[j - 1] + w1 * g[j]
    return out


def _iterate(step, state, tol):
    """Run ``step`` until the change is below ``tol``; raise on divergence."""
    first = None
    for it in range(1, MAX_ITERS + 1):
        state, change = step(state)
        if change <= tol:
            return state, it
        if first is None:
            first = change
        elif not np.isfinite(change) or change > 1e6 * max(first, tol):
            break
    raise PicardDivergence(f"no contraction after {it} iterations")


def _solve_windows(grid: Grid, window: float, solve_window):
    """Chain windows; a window that fails to contract is halved and retried."""
    j = 0
    base = max(1, int(round(window / grid.dt)))
    iters = 0
    while j < grid.steps:
        m = min(base, grid.steps - j)
        for halving in range(MAX_HALVINGS + 1):
            try:
                iters = max(iters, solve_window(j, m))
                break
            except PicardDivergence:
                if halving == MAX_HALVINGS or m == 1:
                    raise
                m = max(1, m // 2)
                log.info("picard window halved to %d steps at t=%g", m, j * grid.dt)
        j += m
    return iters


def _picard_loop_a(params: LoopAParams, u1_0, u2_0, d, grid, window, weight, store_every, tol):
    d = d if d is not None else DisturbanceSignal()
    if not params.b_tilde > 0:
        raise ValueError("loop A requires b_tilde > 0")
    z = grid.z
    f1, f2 = as_profile(u1_0, z), as_profile(u2_0, z)
    check_loop_a_compatibility(f1, d)
    es = eigensystem_dirichlet_dirichlet(params.K, grid.modes)
    nodes, weights = gauss_rule_for_modes(grid.modes)
    pts = np.concatenate([z, nodes])
    nz = len(z)
    basis = es.phi(pts)
    proj = es.phi(nodes) * weights
    lift = 1.0 - pts
    lift_coef = proj @ (1.0 - nodes)
    h = grid.dt
    K, at, rb = params.K, params.a_tilde, params.r * params.b_tilde
    shift = damping_shift("A", params)
    E, w0, w1 = step_weights(es.eigenvalues + shift, h)
    Eb, wb0, wb1 = (float(v) for v in step_weights(params.b_tilde + shift, h))

    n = grid.steps
    U1 = np.empty((n + 1, len(pts)))
    U2 = np.empty((n + 1, len(pts)))
    C = np.empty((n + 1, es.count))
    C[0] = proj @ (f1(nodes) - (1.0 - nodes) * d(0.0))
    U1[0] = basis.T @ C[0] + lift * d(0.0)
    U1[0, :nz] = f1(z)
    U2[0] = f2(pts)

    def solve_window(j0, m):
        s = np.arange(m + 1) * h
        tau = grid.dt * j0 + s
        damp = np.exp(-shift * s)
        dv = d(tau)
        F1 = -np.outer(d.derivative(tau) + K * dv, lift_coef)
        lift_part = damp[:, None] * (dv[:, None] * lift[None, :])
        # initial iterate: frozen state, damped
        V2 = damp[:, None] * U2[j0][None, :]
        V1 = damp[:, None] * U1[j0][None, :]

        def step(state):
            V1, V2, _ = state
            g = rb * V2[:, nz:] @ proj.T + damp[:, None] * F1
            Cv = _recurrence(E, w0, w1, C[j0], g)
            V1_new = Cv @ basis + lift_part
            V1_new[0] = U1[j0]
            V2_new = _recurrence(Eb, wb0, wb1, U2[j0], at * V1)
            grow = 1.0 / damp[:, None]
            change = max(np.max(np.abs((V1_new - V1) * grow)), np.max(np.abs((V2_new - V2) * grow)))
            return (V1_new, V2_new, Cv), change

        (V1, V2, Cv), its = _iterate(step, (V1, V2, None), tol)
        grow = 1.0 / damp[:, None]
        U1[j0 + 1: j0 + m + 1] = (V1 * grow)[1:]
        U2[j0 + 1: j0 + m + 1] = (V2 * grow)[1:]
        C[j0 + 1: j0 + m + 1] = (Cv * grow)[1:]
        return its

    iters = _solve_windows(grid, window, solve_window)
    keep = sorted(set(range(0, n + 1, store_every)) | {n})
    return Trajectory(grid.times[keep], z, U1[keep, :nz].copy(), U2[keep, :nz].copy(), weight,
                      metadata={"solver": "picard", "loop": "A", "params": params.to_json(),
                                "disturbance": d.to_json(), "grid": grid.to_json(),
                                "damping_shift": shift, "max_picard_iterations": iters})


def _picard_loop_b(params: LoopBParams, u1_0, u2_0, grid, window, weight, store_every, tol):
    z = grid.z
    f1, f2 = as_profile(u1_0, z), as_profile(u2_0, z)
    k, c = params.boundary_gain, params.transport_speed
    check_loop_b_compatibility(f1, f2, k)
    es = eigensystem_dirichlet_robin(params.diffusion, params.reaction, params.robin_q, grid.modes)
    nodes, weights = gauss_rule_for_modes(grid.modes)
    proj = es.phi(nodes) * weights
    G = None if params.kernel.is_zero else kernel_coupling_matrix(es, params.kernel, nodes, weights)
    phi_end = es.phi(np.array([1.0]))[:, 0]
    h = grid.dt
    shift = damping_shift("B", params)
    E, w0, w1 = step_weights(es.eigenvalues + shift, h)

    n = grid.steps
    times = grid.times
    C = np.empty((n + 1, es.count))
    C[0] = proj @ f1(nodes)
    trace = np.empty(n + 1)
    trace[0] = float(f1(np.array([1.0]))[0])

    def u2_at(t, y, tr_times, tr_vals):
        """Characteristics formula with a spline through the trace samples."""
        y = np.broadcast_to(y, np.broadcast(t, y).shape)
        t = np.broadcast_to(t, y.shape)
        out = np.empty(y.shape)
        lagged = c * t > y
        out[~lagged] = f2(y[~lagged] - c * t[~lagged])
        if np.any(lagged):
            if len(tr_times) == 1:
                out[lagged] = k * tr_vals[0]
            else:
                out[lagged] = k * CubicSpline(tr_times, tr_vals)(t[lagged] - y[lagged] / c)
        return out

    def solve_window(j0, m):
        s = np.arange(m + 1) * h
        tau = times[j0: j0 + m + 1]
        damp = np.exp(-shift * s)
        # history needed back to tau[0] - 1/c
        first = max(0, int(math.floor((tau[0] - 1.0 / c) / h)) - 3)
        past_t, past_v = times[first: j0 + 1], trace[first: j0 + 1]
        win_trace = np.full(m + 1, trace[j0])
        Cv0 = None

        def step(state):
            win_trace, _ = state
            tr_t = np.concatenate([past_t, tau[1:]])
            tr_v = np.concatenate([past_v, win_trace[1:]])
            U2n = u2_at(tau[:, None], nodes[None, :], tr_t, tr_v)
            g = np.zeros((m + 1, es.count)) if G is None else damp[:, None] * (U2n @ G.T)
            Cv = _recurrence(E, w0, w1, C[j0], g)
            new_trace = (Cv @ phi_end) / damp
            change = float(np.max(np.abs(new_trace - win_trace)))
            return (new_trace, Cv), change

        (win_trace, Cv), its = _iterate(step, (win_trace, Cv0), tol)
        C[j0 + 1: j0 + m + 1] = (Cv / damp[:, None])[1:]
        trace[j0 + 1: j0 + m + 1] = win_trace[1:]
        return its

    iters = _solve_windows(grid, window, solve_window)
    keep = sorted(set(range(0, n + 1, store_every)) | {n})
    basis_z = es.phi(z)
    u1 = C[keep] @ basis_z
    u1[0] = f1(z)
    u2 = u2_at(times[keep][:, None], z[None, :], times, trace)
    return Trajectory(times[keep], z, u1, u2, weight,
                      metadata={"solver": "picard", "loop": "B", "grid": grid.to_json(),
                                "damping_shift": shift, "max_picard_iterations": iters})


def picard_solve(loop: str, params, u1_0, u2_0, d: DisturbanceSignal | None, grid: Grid,
                 window: float = 0.25, weight: WeightFunction | None = None,
                 store_every: int = 1, tol: float = PICARD_TOL) -> Trajectory:
    """Solve loop ``"A"`` or ``"B"`` by Picard iteration on chained windows.

    Parameters
    ----------
    window : float
        Initial window length; it is halved (up to five times) whenever the
        iteration fails to contract.
    tol : float
        Sup-norm distance between successive iterates that ends a window.
    """
    loop = loop.upper()
    if loop == "A":
        return _picard_loop_a(params, u1_0, u2_0, d, grid, window, weight, store_every, tol)
    if loop == "B":
        if d is not None and not d.is_zero:
            raise ValueError("loop B has no boundary disturbance")
        return _picard_loop_b(params, u1_0, u2_0, grid, window, weight, store_every, tol)
    raise ValueError(f"unknown loop {loop!r}")
