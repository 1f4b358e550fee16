"""Eigensystems, weight functions and weighted sup norms.

Only the two constant-coefficient Sturm-Liouville families of the loops are
handled: Dirichlet-Dirichlet (loop A after homogenisation) and
Dirichlet-Robin ``u(0) = u'(1) - q u(1) = 0`` (loop B).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .certificate import Certificate

log = logging.getLogger(__name__)

ROOT_BRACKET_EPS = 1e-9
ROOT_XTOL = 1e-13


# ---------------------------------------------------------------------------
# quadrature


def gauss_rule(n_panels: int = 4, per_panel: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def gauss_rule_for_modes(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule resolving products of the first ``n_modes`` eigenfunctions (>= 64 nodes)."""
    return gauss_rule(max(4, math.ceil(n_modes / 2)))


# ---------------------------------------------------------------------------
# Robin offsets


def _robin_frequency(q: float, n: int) -> float:
    lo = (n - 1) * math.pi + ROOT_BRACKET_EPS
    hi = n * math.pi - ROOT_BRACKET_EPS

    def f(w):
        return w * math.cos(w) / math.sin(w) - q

    return brentq(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def robin_offsets(q: float, N: int) -> np.ndarray:
    """Offsets ``b_n`` with ``w_n cot w_n = q`` where ``w_n = (2n-1)pi/2 - b_n``.

    ``w_n`` is the unique root in ``((n-1)pi, n pi)``; ``w cot w`` is strictly
    decreasing there, from 1 (n = 1) or +inf down to -inf.
    """
    if not q < 1.0:
        raise ValueError(f"robin q must be < 1 (got {q}); w cot w < 1 on (0, pi)")
    if N < 1:
        raise ValueError("N must be >= 1")
    if q == 0.0:
        return np.zeros(N)
    n = np.arange(1, N + 1)
    omega = np.array([_robin_frequency(q, int(k)) for k in n])
    return (2 * n - 1) * math.pi / 2 - omega


def printed_normalizer(n: int, b_n: float) -> float:
    """Normalizer as printed next to the eigenfunctions, for cross-checking."""
    a = (2 * n - 1) * math.pi
    return math.sqrt((2 * a - 4 * b_n) / (a - 2 * b_n - math.sin(a - 2 * b_n)))


def unit_normalizer(omega):
    """``(int_0^1 sin^2(omega z) dz)^(-1/2)``."""
    omega = np.asarray(omega, dtype=float)
    return np.sqrt(4.0 * omega / (2.0 * omega - np.sin(2.0 * omega)))


# ---------------------------------------------------------------------------
# eigensystems


@dataclass(frozen=True)
class EigenSystem:
    """Truncated eigenpairs of ``A u = -p u'' + potential * u``.

    ``phi_n(z) = normalizers[n] * sin(frequencies[n] * z)``.
    """

    kind: str
    eigenvalues: np.ndarray
    frequencies: np.ndarray
    normalizers: np.ndarray
    offsets: np.ndarray | None
    diffusion: float
    potential: float
    robin_q: float | None = None

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def phi(self, z) -> np.ndarray:
        """Matrix ``[n, i] = phi_n(z_i)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = self.normalizers[:, None] * np.sin(self.frequencies[:, None] * z[None, :])
        if self.kind == "dirichlet_dirichlet":
            out[:, z == 1.0] = 0.0
        return out

    def dphi(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = self.frequencies[:, None]
        return self.normalizers[:, None] * w * np.cos(w * z[None, :])

    def project(self, values: np.ndarray, weights: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        """Coefficients ``int phi_n(s) f(s) ds`` from values at quadrature nodes.

        ``values`` may carry extra trailing axes (e.g. time).
        """
        return (self.phi(nodes) * weights[None, :]) @ values

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "b_n", "lambda_n", "A_n"])
        offs = self.offsets if self.offsets is not None else np.full(self.count, np.nan)
        for n in range(self.count):
            w.writerow([n + 1, f"{offs[n]:.16e}", f"{self.eigenvalues[n]:.16e}",
                        f"{self.normalizers[n]:.16e}"])
        return buf.getvalue()


def eigensystem_dirichlet_robin(p: float, a: float, q: float, N: int) -> EigenSystem:
    """Eigenpairs of ``-p u'' - a u`` on ``u(0) = u'(1) - q u(1) = 0``.

    The normalizer comes from the closed-form L2 norm; it is compared with the
    printed expression and any mismatch is logged.
    """
    if p <= 0.0:
        raise ValueError("p must be > 0")
    offsets = robin_offsets(q, N)
    n = np.arange(1, N + 1)
    omega = (2 * n - 1) * math.pi / 2 - offsets
    norm = unit_normalizer(omega)
    printed = np.array([printed_normalizer(int(k), b) for k, b in zip(n, offsets)])
    dev = float(np.max(np.abs(printed - norm)))
    if dev > 1e-10:
        log.warning("printed normalizer deviates from unit-norm value by %.3e", dev)
    return EigenSystem(
        kind="dirichlet_robin",
        eigenvalues=p * omega ** 2 - a,
        frequencies=omega,
        normalizers=norm,
        offsets=offsets,
        diffusion=p,
        potential=-a,
        robin_q=q,
    )


def eigensystem_dirichlet_dirichlet(K: float, N: int) -> EigenSystem:
    """Eigenpairs of ``-u'' + K u`` with Dirichlet conditions at both ends."""
    if N < 1:
        raise ValueError("N must be >= 1")
    omega = np.arange(1, N + 1) * math.pi
    return EigenSystem(
        kind="dirichlet_dirichlet",
        eigenvalues=K + omega ** 2,
        frequencies=omega,
        normalizers=np.full(N, math.sqrt(2.0)),
        offsets=None,
        diffusion=1.0,
        potential=K,
    )


def eigen_residual(es: EigenSystem, n_z: int) -> float:
    """Sup over interior nodes and modes of the central-difference residual
    ``-p phi'' + potential * phi - lambda * phi``."""
    z = np.linspace(0.0, 1.0, n_z)
    h = z[1] - z[0]
    ph = es.phi(z)
    d2 = (ph[:, 2:] - 2.0 * ph[:, 1:-1] + ph[:, :-2]) / h ** 2
    res = -es.diffusion * d2 + (es.potential - es.eigenvalues[:, None]) * ph[:, 1:-1]
    return float(np.max(np.abs(res)))


def h3_partial_sums(es: EigenSystem, n_z: int = 2001) -> np.ndarray:
    """Partial sums of ``lambda_n^-1 max|phi_n|`` over modes with ``lambda_n > 0``."""
    z = np.linspace(0.0, 1.0, n_z)
    peak = np.max(np.abs(es.phi(z)), axis=1)
    terms = np.where(es.eigenvalues > 0, peak / np.where(es.eigenvalues > 0, es.eigenvalues, 1.0), 0.0)
    return np.cumsum(terms)


# ---------------------------------------------------------------------------
# weights and norms


@dataclass(frozen=True)
class WeightFunction:
    """``eta(z) = sin(theta + omega z)``, positive on [0, 1].

    ``sigma`` is the decay constant attached to the weight by the owning
    problem (see :func:`loop_a_weight`, :func:`loop_b_weight`).
    """

    theta: float
    omega: float
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi:
            raise ValueError("theta must lie in (0, pi)")
        if not 0.0 <= self.omega < math.pi - self.theta:
            raise ValueError("omega must lie in [0, pi - theta)")
        if not self.sigma > 0.0:
            raise ValueError(f"weight decay sigma must be > 0 (got {self.sigma})")

    def __call__(self, z):
        return np.sin(self.theta + self.omega * np.asarray(z, dtype=float))

    def derivative(self, z):
        return self.omega * np.cos(self.theta + self.omega * np.asarray(z, dtype=float))

    def second_derivative(self, z):
        return -self.omega ** 2 * self(z)


def loop_a_weight(theta: float, K: float) -> WeightFunction:
    """Symmetric weight ``sin(theta + (pi - 2 theta) z)``, ``sigma = K + (pi - 2 theta)^2``."""
    if not 0.0 < theta < math.pi / 2:
        raise ValueError("loop-A weight needs theta in (0, pi/2)")
    omega = math.pi - 2.0 * theta
    return WeightFunction(theta, omega, K + omega ** 2)


def loop_b_weight(theta: float, omega: float, p: float, a: float) -> WeightFunction:
    """Weight ``sin(theta + omega z)`` with ``sigma = p omega^2 - a``."""
    return WeightFunction(theta, omega, p * omega ** 2 - a)


def weighted_sup_norm(u, z, eta: WeightFunction | Callable) -> float:
    """``max_i |u(z_i)| / eta(z_i)``; ``u`` may be 2-D with space on the last axis."""
    e = np.asarray(eta(np.asarray(z, dtype=float)))
    if np.any(e <= 0.0):
        raise ValueError("weight must be positive at every node")
    u = np.asarray(u, dtype=float)
    return np.max(np.abs(u) / e, axis=-1) if u.ndim > 1 else float(np.max(np.abs(u) / e))


# ---------------------------------------------------------------------------
# weight inequality


@dataclass(frozen=True)
class SLSpec:
    """Operator ``-(p f')' + q f`` with ``b1 f(0) + b2 f'(0) = a1 f(1) + a2 f'(1) = 0``."""

    p_coef: Callable
    q_coef: Callable
    b1: float
    b2: float
    a1: float
    a2: float
    p_prime: Callable | None = None

    def __post_init__(self):
        if abs(self.a1) + abs(self.a2) == 0 or abs(self.b1) + abs(self.b2) == 0:
            raise ValueError("boundary coefficients must not both vanish")
        if not (self.b2 > 0 or (self.b2 == 0 and self.b1 < 0)):
            raise ValueError("left boundary coefficients violate the sign normalisation")
        if not (self.a2 > 0 or (self.a2 == 0 and self.a1 > 0)):
            raise ValueError("right boundary coefficients violate the sign normalisation")

    @classmethod
    def loop_a(cls, K: float) -> "SLSpec":
        return cls(lambda z: np.ones_like(z), lambda z: np.full_like(z, K),
                   b1=-1.0, b2=0.0, a1=1.0, a2=0.0, p_prime=np.zeros_like)

    @classmethod
    def loop_b(cls, p: float, a: float, q: float) -> "SLSpec":
        return cls(lambda z: np.full_like(z, p), lambda z: np.full_like(z, -a),
                   b1=-1.0, b2=0.0, a1=-q, a2=1.0, p_prime=np.zeros_like)

    def dp(self, z):
        if self.p_prime is not None:
            return self.p_prime(z)
        h = 1e-6
        return (self.p_coef(z + h) - self.p_coef(z - h)) / (2 * h)


def check_H4(sl: SLSpec, eta: WeightFunction, sigma: float, n_grid: int = 1001) -> Certificate:
    """Check ``p eta'' + p' eta' - q eta <= -sigma eta`` and the boundary signs.

    The certificate has ``rhs = 0`` and ``lhs`` = the worst of: the largest
    differential residual (less a round-off allowance, the inequality is not
    strict), ``b1 eta(0) + b2 eta'(0)`` and ``-(a1 eta(1) + a2 eta'(1))``.
    """
    z = np.linspace(0.0, 1.0, n_grid)
    e, de, d2e = eta(z), eta.derivative(z), eta.second_derivative(z)
    p = sl.p_coef(z)
    terms = np.abs(p * d2e) + np.abs(sl.dp(z) * de) + np.abs(sl.q_coef(z) * e) + abs(sigma) * e
    resid = p * d2e + sl.dp(z) * de - sl.q_coef(z) * e + sigma * e
    tol = 1e-12 * max(1.0, float(np.max(terms)))
    left = sl.b1 * float(eta(0.0)) + sl.b2 * float(eta.derivative(0.0))
    right = sl.a1 * float(eta(1.0)) + sl.a2 * float(eta.derivative(1.0))
    worst_diff = float(np.max(resid))
    lhs = max(worst_diff - tol, left, -right)
    return Certificate(
        "H4", lhs=lhs, rhs=0.0,
        witnesses={"theta": eta.theta, "omega": eta.omega},
        details={"max_differential_residual": worst_diff, "left_boundary": left,
                 "right_boundary": right, "sigma": sigma},
    )
