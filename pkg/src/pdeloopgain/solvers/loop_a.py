"""Spectral simulator for loop A.

The parabolic component is lifted, ``w1 = u1 - (1 - z) d(t)``, and advanced
in the Dirichlet sine basis.  The zero-speed component ``u2`` is advanced
pointwise with its exact integrating factor, on the output grid and on the
quadrature nodes used to project the coupling term.  Within each step the two
updates are iterated to a fixed point, which makes the coupling trapezoidal.
"""
from __future__ import annotations

import numpy as np

from ..model import DisturbanceSignal, LoopAParams
from ..spectral import WeightFunction, eigensystem_dirichlet_dirichlet, gauss_rule_for_modes
from .grid import Grid, Trajectory, as_profile
from .series import step_weights

COMPAT_TOL = 1e-10
STEP_TOL = 1e-14
MAX_STEP_ITERS = 50


def check_loop_a_compatibility(u1_0, d: DisturbanceSignal, tol: float = COMPAT_TOL) -> None:
    f = as_profile(u1_0)
    d0 = d.initial_value
    if abs(float(f(np.array([0.0]))[0]) - d0) > tol * max(1.0, abs(d0)):
        raise ValueError("incompatible data: u1_0(0) must equal d(0)")
    if abs(float(f(np.array([1.0]))[0])) > tol:
        raise ValueError("incompatible data: u1_0(1) must be 0")


def simulate_loop_a(params: LoopAParams, u1_0, u2_0, d: DisturbanceSignal | None,
                    grid: Grid, weight: WeightFunction | None = None,
                    store_every: int = 1) -> Trajectory:
    """Solve loop A on ``[0, grid.T]``.

    ``u1_0``/``u2_0`` are callables of ``z`` (or nodal arrays on ``grid.z``).
    """
    d = d if d is not None else DisturbanceSignal()
    if not params.b_tilde > 0:
        raise ValueError("loop A requires b_tilde > 0")
    z = grid.z
    f1 = as_profile(u1_0, z)
    f2 = as_profile(u2_0, z)
    check_loop_a_compatibility(f1, d)

    es = eigensystem_dirichlet_dirichlet(params.K, grid.modes)
    nodes, weights = gauss_rule_for_modes(grid.modes)
    pts = np.concatenate([z, nodes])
    nq = slice(len(z), None)
    basis = es.phi(pts)                     # (N, P)
    proj = es.phi(nodes) * weights          # (N, Q)
    lift = 1.0 - pts
    lift_coef = proj @ (1.0 - nodes)

    h = grid.dt
    E, w0, w1 = step_weights(es.eigenvalues, h)
    Eb, wb0, wb1 = (float(v) for v in step_weights(params.b_tilde, h))
    rb = params.r * params.b_tilde
    K, at = params.K, params.a_tilde

    def modal_forcing(t, u2):
        return rb * (proj @ u2[nq]) - lift_coef * (d.derivative(t) + K * d(t))

    t = 0.0
    c = proj @ (f1(nodes) - (1.0 - nodes) * d(0.0))
    u2 = f2(pts).astype(float)
    u1 = basis.T @ c + lift * d(0.0)
    # exact initial profile on the output grid
    u1[: len(z)] = f1(z)
    g = modal_forcing(0.0, u2)

    n_steps = grid.steps
    keep = list(range(0, n_steps + 1, store_every))
    if keep[-1] != n_steps:
        keep.append(n_steps)
    out_t, out_u1, out_u2 = [0.0], [u1[: len(z)].copy()], [u2[: len(z)].copy()]
    max_iters_used = 0
    for j in range(1, n_steps + 1):
        t_new = j * h
        d_new = d(t_new)
        u1_new = u1.copy()
        u2_base = Eb * u2 + wb0 * at * u1
        c_base = E * c + w0 * g
        for it in range(MAX_STEP_ITERS):
            u2_new = u2_base + wb1 * at * u1_new
            g_new = modal_forcing(t_new, u2_new)
            c_new = c_base + w1 * g_new
            u1_next = basis.T @ c_new + lift * d_new
            delta = np.max(np.abs(u1_next - u1_new))
            u1_new = u1_next
            if delta <= STEP_TOL * max(1.0, np.max(np.abs(u1_new))):
                break
        max_iters_used = max(max_iters_used, it + 1)
        u2_new = u2_base + wb1 * at * u1_new
        g = modal_forcing(t_new, u2_new)
        c, u1, u2 = c_new, u1_new, u2_new
        if j in keep:
            out_t.append(t_new)
            out_u1.append(u1[: len(z)].copy())
            out_u2.append(u2[: len(z)].copy())

    return Trajectory(
        np.array(out_t), z, np.array(out_u1), np.array(out_u2), weight,
        metadata={"solver": "spectral", "loop": "A", "params": params.to_json(),
                  "disturbance": d.to_json(), "grid": grid.to_json(),
                  "first_omitted_eigenvalue": params.K + ((grid.modes + 1) * np.pi) ** 2,
                  "max_step_iterations": max_iters_used},
    )
