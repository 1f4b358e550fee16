"""Modal (eigenfunction series) time stepping.

Every step integrates ``c' = -lambda c + g(t)`` exactly for ``g`` linear in
time over the step, so large eigenvalues cause no stiffness.
"""
from __future__ import annotations

import math

import numpy as np

from ..spectral import EigenSystem, gauss_rule_for_modes
from .grid import ForcingTerm


def phi_functions(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi1(x) = (e^x - 1)/x`` and ``phi2(x) = (e^x - 1 - x)/x^2``, stable near 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 0.0, x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        em1 = np.expm1(xs)
        p1 = np.where(small, 0.0, em1 / np.where(small, 1.0, xs))
        p2 = np.where(small, 0.0, (em1 - xs) / np.where(small, 1.0, xs * xs))
    x2, x3, x4 = x * x, x ** 3, x ** 4
    p1 = np.where(small, 1 + x / 2 + x2 / 6 + x3 / 24 + x4 / 120, p1)
    p2 = np.where(small, 0.5 + x / 6 + x2 / 24 + x3 / 120 + x4 / 720, p2)
    return p1, p2


def step_weights(lam, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(E, w0, w1)`` with ``c(t+h) = E c(t) + w0 g(t) + w1 g(t+h)``."""
    lam = np.asarray(lam, dtype=float)
    x = -lam * h
    p1, p2 = phi_functions(x)
    return np.exp(x), h * (p1 - p2), h * p2


def series_evolve(es: EigenSystem, coeffs0, forcing: ForcingTerm | None, t: float,
                  z, n_steps: int | None = None) -> np.ndarray:
    """Truncated eigenfunction series of the forced problem at time ``t``.

    ``coeffs0[n] = int phi_n u0``.  The modal forcing is sampled on a uniform
    time grid and treated as piecewise linear.
    """
    c = np.asarray(coeffs0, dtype=float).copy()
    if c.shape != (es.count,):
        raise ValueError("coefficient vector does not match the eigensystem")
    if t < 0:
        raise ValueError("t must be >= 0")
    if forcing is None or t == 0.0:
        c = c * np.exp(-es.eigenvalues * t)
    else:
        if n_steps is None:
            n_steps = max(1, math.ceil(t / 1e-3))
        h = t / n_steps
        nodes, weights = gauss_rule_for_modes(es.count)
        E, w0, w1 = step_weights(es.eigenvalues, h)
        g_prev = es.project(forcing(0.0, nodes), weights, nodes)
        for j in range(1, n_steps + 1):
            g_next = es.project(forcing(j * h, nodes), weights, nodes)
            c = E * c + w0 * g_prev + w1 * g_next
            g_prev = g_next
    return c @ es.phi(z)


def homogenize_loop_a(u1, z, d_value: float) -> np.ndarray:
    """``w1 = u1 - (1 - z) d``."""
    return np.asarray(u1, dtype=float) - (1.0 - np.asarray(z, dtype=float)) * d_value


def dehomogenize_loop_a(w1, z, d_value: float) -> np.ndarray:
    """Inverse of :func:`homogenize_loop_a`."""
    return np.asarray(w1, dtype=float) + (1.0 - np.asarray(z, dtype=float)) * d_value


def loop_a_lift_forcing(z, d_value: float, d_dot: float, K: float, a_tilde: float):
    """Forcing terms ``(f1, f2)`` produced by the boundary lift."""
    one_minus_z = 1.0 - np.asarray(z, dtype=float)
    return -one_minus_z * (d_dot + K * d_value), a_tilde * one_minus_z * d_value
