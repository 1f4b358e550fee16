"""Spectral/characteristics simulator for loop B.

``u1`` lives in the Dirichlet-Robin eigenbasis; ``u2`` is never stored as a
state but evaluated from characteristics,

    u2(t, z) = k u1(t - z/c, 1)   for c t > z,
    u2(t, z) = u2_0(z - c t)      otherwise,

using a Hermite-interpolated history of the boundary trace ``u1(., 1)``.
"""
from __future__ import annotations

import numpy as np

from ..model import LoopBParams
from ..spectral import (
    EigenSystem,
    WeightFunction,
    eigensystem_dirichlet_robin,
    gauss_rule_for_modes,
)
from .grid import BoundaryTraceHistory, Grid, Trajectory, as_profile
from .series import step_weights

COMPAT_TOL = 1e-10
STEP_TOL = 1e-14
MAX_STEP_ITERS = 50


def check_loop_b_compatibility(u1_0, u2_0, k: float, tol: float = COMPAT_TOL) -> None:
    f1, f2 = as_profile(u1_0), as_profile(u2_0)
    ends = np.array([0.0, 1.0])
    a0, a1 = f1(ends)
    if abs(a0) > tol:
        raise ValueError("incompatible data: u1_0(0) must be 0")
    b0 = float(f2(np.array([0.0]))[0])
    if abs(b0 - k * a1) > tol * max(1.0, abs(k * a1)):
        raise ValueError("incompatible data: u2_0(0) must equal k * u1_0(1)")


def kernel_coupling_matrix(es: EigenSystem, kernel, nodes, weights) -> np.ndarray:
    """``G[n, j]`` with ``int phi_n(s) int b(s, l) v(l) dl ds ~ G @ v(nodes)``."""
    bmat = kernel(nodes[:, None], nodes[None, :])
    return ((es.phi(nodes) * weights) @ bmat) * weights[None, :]


def transport_values(y, t: float, c: float, k: float, history, u2_0) -> np.ndarray:
    """``u2(t, y)`` from the characteristics formula."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    from_trace = c * t > y
    if np.any(from_trace):
        out[from_trace] = k * history(t - y[from_trace] / c)
    if np.any(~from_trace):
        out[~from_trace] = u2_0(y[~from_trace] - c * t)
    return out


def simulate_loop_b(params: LoopBParams, u1_0, u2_0, grid: Grid,
                    weight: WeightFunction | None = None, store_every: int = 1) -> Trajectory:
    """Solve loop B on ``[0, grid.T]`` with initial profiles ``u1_0``, ``u2_0``."""
    z = grid.z
    f1 = as_profile(u1_0, z)
    f2 = as_profile(u2_0, z)
    k, c_speed = params.boundary_gain, params.transport_speed
    check_loop_b_compatibility(f1, f2, k)

    es = eigensystem_dirichlet_robin(params.diffusion, params.reaction, params.robin_q, grid.modes)
    nodes, weights = gauss_rule_for_modes(grid.modes)
    proj = es.phi(nodes) * weights
    G = None if params.kernel.is_zero else kernel_coupling_matrix(es, params.kernel, nodes, weights)
    basis_z = es.phi(z)
    phi_end = es.phi(np.array([1.0]))[:, 0]
    lam = es.eigenvalues

    h = grid.dt
    E, w0, w1 = step_weights(lam, h)
    hist = BoundaryTraceHistory(h, 1.0 / c_speed + h)

    def forcing(t):
        if G is None:
            return np.zeros(es.count)
        return G @ transport_values(nodes, t, c_speed, k, hist, f2)

    c = proj @ f1(nodes)
    F = forcing(0.0)  # at t = 0 every node reads u2_0, no history needed
    # exact initial trace; its derivative from the modes
    hist.push(float(f1(np.array([1.0]))[0]), float(phi_end @ (-lam * c + F)))

    n_steps = grid.steps
    keep = set(range(0, n_steps + 1, store_every)) | {n_steps}
    out_t = [0.0]
    out_u1 = [f1(z)]
    out_u2 = [f2(z)]
    max_iters_used = 0
    for j in range(1, n_steps + 1):
        t_new = j * h
        tr = float(phi_end @ c)
        der = float(phi_end @ (-lam * c + F))
        hist.push(tr + h * der, der)
        c_base = E * c + w0 * F
        for it in range(MAX_STEP_ITERS):
            F_new = forcing(t_new)
            c_new = c_base + w1 * F_new
            tr_new = float(phi_end @ c_new)
            der_new = float(phi_end @ (-lam * c_new + F_new))
            prev = hist(t_new)
            hist.overwrite_latest(tr_new, der_new)
            if G is None or abs(tr_new - float(prev)) <= STEP_TOL * max(1.0, abs(tr_new)):
                break
        max_iters_used = max(max_iters_used, it + 1)
        c, F = c_new, F_new
        if j in keep:
            out_t.append(t_new)
            out_u1.append(c @ basis_z)
            out_u2.append(transport_values(z, t_new, c_speed, k, hist, f2))

    return Trajectory(
        np.array(out_t), z, np.array(out_u1), np.array(out_u2), weight,
        metadata={"solver": "spectral", "loop": "B", "params": _params_json(params),
                  "grid": grid.to_json(), "max_step_iterations": max_iters_used,
                  "first_omitted_eigenvalue": float(
                      eigensystem_dirichlet_robin(params.diffusion, params.reaction,
                                                  params.robin_q, grid.modes + 1).eigenvalues[-1])},
    )


def _params_json(params: LoopBParams) -> dict:
    try:
        return params.to_json()
    except TypeError:
        return {"diffusion": params.diffusion, "transport_speed": params.transport_speed,
                "robin_q": params.robin_q, "reaction": params.reaction,
                "boundary_gain": params.boundary_gain, "kernel": "derived"}
