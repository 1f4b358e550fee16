"""Small-gain certificates, weight witnesses, gain functions and ISS constants."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .certificate import Certificate
from .model import BacksteppingParams, LoopAParams, LoopBParams, WaveKVParams, kv_wave_to_loop_a
from .spectral import _robin_frequency, gauss_rule

PI2 = math.pi ** 2
log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# kernels


def row_integrals(kernel, z, n_panels: int = 16) -> np.ndarray:
    """``int_0^1 |b(z, s)| ds`` for each ``z`` (composite Gauss in ``s``)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if kernel.is_zero:
        return np.zeros_like(z)
    nodes, weights = gauss_rule(n_panels)
    return np.abs(kernel(z[:, None], nodes[None, :])) @ weights


def max_row_integral(kernel, n_z: int = 401) -> float:
    return float(np.max(row_integrals(kernel, np.linspace(0.0, 1.0, n_z))))


# ---------------------------------------------------------------------------
# loop A and the wave equation


def check_loop_a(params: LoopAParams) -> Certificate:
    """``|r a_tilde| < K + pi^2``."""
    notes = []
    if not params.b_tilde > 0:
        notes.append("hypothesis b_tilde > 0 violated; condition evaluated anyway")
    return Certificate("A-2.7", lhs=abs(params.coupling), rhs=params.K + PI2,
                       notes=tuple(notes), details={"r_times_a_tilde": params.coupling,
                                                    "b_tilde": params.b_tilde})


def check_wave_kv(wp: WaveKVParams) -> Certificate:
    """``2 c^2 < 2 mu sigma + sigma^2 pi^2``."""
    sigma, c, mu = wp.kv_sigma, wp.wave_speed, wp.viscous_mu
    return Certificate("KV-2.11", lhs=2.0 * c * c, rhs=2.0 * mu * sigma + sigma * sigma * PI2,
                       details={"s": wp.s})


def check_wave_via_loop_a(wp: WaveKVParams) -> Certificate:
    """Loop-A certificate of the mapped wave equation; its split is recorded."""
    la, scale = kv_wave_to_loop_a(wp)
    cert = check_loop_a(la)
    return Certificate(cert.condition_id, cert.lhs, cert.rhs,
                       witnesses={"r": la.r, "a_tilde": la.a_tilde},
                       notes=cert.notes, details={**cert.details, "time_scale": scale})


# ---------------------------------------------------------------------------
# loop B


def check_positive_spectrum(p: float, a: float, q: float) -> Certificate:
    """``p (pi - 2 b_1)^2 > 4 a``, i.e. the first Dirichlet-Robin eigenvalue is positive."""
    if q >= 1.0:
        raise ValueError("q must be < 1")
    omega1 = _robin_frequency(q, 1)
    b1 = math.pi / 2 - omega1
    return Certificate("B-2.19", lhs=4.0 * a, rhs=p * (math.pi - 2.0 * b1) ** 2,
                       details={"b_1": b1, "lambda_1": p * omega1 ** 2 - a})


def _witness_feasible(p, a, q, theta, omega) -> bool:
    if not (0.0 < theta < math.pi and 0.0 <= omega < math.pi - theta):
        return False
    return omega / math.tan(omega + theta) > q and p * omega * omega > a


def _loop_b_lhs(bound_z: np.ndarray, zg: np.ndarray, theta, omega) -> float:
    ratio = math.sin(theta + omega) / np.sin(theta + omega * zg)
    return float(np.max(ratio * bound_z))


def check_delay_independent(params: LoopBParams, theta: float, omega: float,
                            n_z: int = 401) -> Certificate:
    """The delay-independent small-gain condition at a fixed witness ``(theta, omega)``."""
    p, a, q = params.diffusion, params.reaction, params.robin_q
    zg = np.linspace(0.0, 1.0, n_z)
    bound = abs(params.boundary_gain) * row_integrals(params.kernel, zg)
    return _delay_certificate(p, a, q, bound, zg, theta, omega)


def _delay_certificate(p, a, q, bound, zg, theta, omega) -> Certificate:
    rhs = p * omega * omega - a
    w = {"theta": theta, "omega": omega}
    if not _witness_feasible(p, a, q, theta, omega):
        return Certificate("B-2.21", lhs=math.inf, rhs=rhs, witnesses=w,
                           notes=("witness violates omega*cot(omega+theta) > q or p*omega^2 > a",))
    return Certificate("B-2.21", lhs=_loop_b_lhs(bound, zg, theta, omega), rhs=rhs, witnesses=w)


def _margins(p, a, q, bound, zg, theta, omegas):
    """Delay-independent margins for one theta and a vector of omegas; infeasible -> -inf."""
    om = omegas[:, None]
    ratio = np.sin(theta + om) / np.sin(theta + om * zg[None, :])
    lhs = np.max(ratio * bound[None, :], axis=1)
    marg = p * omegas ** 2 - a - lhs
    with np.errstate(divide="ignore", invalid="ignore"):
        cot_ok = omegas / np.tan(omegas + theta) > q
    ok = cot_ok & (p * omegas ** 2 > a) & (omegas < math.pi - theta)
    return np.where(ok, marg, -np.inf)


def find_theta_omega(p: float, a: float, q: float, kernel_bound_fn: Callable,
                     n_grid: int = 401, n_z: int = 201,
                     refine_rounds: int = 3) -> tuple[float | None, float | None, Certificate]:
    """Search the witness ``(theta, omega)`` maximizing the delay-independent margin.

    ``kernel_bound_fn(z)`` must return ``|k| * int_0^1 |b(z, s)| ds``.  A
    ``n_grid x n_grid`` grid over ``theta in (0, pi)``, ``omega = u (pi - theta)``
    with ``u in [0, 1)`` is scanned, then refined locally.  Witnesses close to
    the first Robin frequency with small ``theta`` are always tried as well.
    """
    zg = np.linspace(0.0, 1.0, n_z)
    bound = np.asarray(kernel_bound_fn(zg), dtype=float) * np.ones_like(zg)
    thetas = math.pi * (np.arange(n_grid) + 1.0) / (n_grid + 1.0)
    us = np.arange(n_grid) / n_grid

    best = (-math.inf, None, None)

    def consider(theta, omegas):
        nonlocal best
        m = _margins(p, a, q, bound, zg, theta, omegas)
        i = int(np.argmax(m))
        if m[i] > best[0]:
            best = (float(m[i]), float(theta), float(omegas[i]))

    for th in thetas:
        consider(th, us * (math.pi - th))
    # seeds along the curve omega -> first Robin frequency, theta -> 0
    if q < 1.0:
        w1 = _robin_frequency(q, 1)
        for j in range(1, 9):
            om = w1 * (1.0 - 10.0 ** (-j))
            for th in 10.0 ** -np.arange(1, 11, dtype=float):
                if om < math.pi - th:
                    consider(th, np.array([om]))
    if best[1] is not None:
        d_th, d_u = math.pi / (n_grid + 1.0), 1.0 / n_grid
        for _ in range(refine_rounds):
            _, th0, om0 = best
            u0 = om0 / (math.pi - th0)
            for th in np.clip(th0 + d_th * np.linspace(-2, 2, 21), 1e-12, math.pi - 1e-12):
                u = np.clip(u0 + d_u * np.linspace(-2, 2, 21), 0.0, 1.0 - 1e-12)
                consider(th, u * (math.pi - th))
            d_th, d_u = d_th / 5.0, d_u / 5.0

    _, theta, omega = best
    if theta is None:
        return None, None, Certificate("B-2.21", lhs=math.inf, rhs=-math.inf,
                                       notes=("no feasible (theta, omega) found",))
    return theta, omega, _delay_certificate(p, a, q, bound, zg, theta, omega)


def certify_loop_b(params: LoopBParams, **kw) -> tuple[float | None, float | None, Certificate]:
    """Witness search for a loop-B parameter set."""
    k = abs(params.boundary_gain)
    return find_theta_omega(params.diffusion, params.reaction, params.robin_q,
                            lambda z: k * row_integrals(params.kernel, z), **kw)


def check_diffusion_robustness(bp: BacksteppingParams) -> tuple[Certificate, float]:
    """``2 p sqrt(|k| max_z int |l|) < v`` and the largest admissible diffusion ``p_max``."""
    m = abs(bp.gain) * max_row_integral(bp.kernel)
    lhs = 2.0 * bp.diffusion * math.sqrt(m)
    p_max = math.inf if m == 0.0 else bp.transport_v / (2.0 * math.sqrt(m))
    cert = Certificate("EX-2.28", lhs=lhs, rhs=bp.transport_v,
                       witnesses={"theta": math.pi / 2, "omega": 0.0}, details={"p_max": p_max})
    return cert, p_max


# ---------------------------------------------------------------------------
# magnification function


def gain_P_s(theta, s: float):
    """``P(theta) = |s| / ((pi - 2 theta)^2 - s)``; ``inf`` where the denominator is <= 0."""
    theta = np.asarray(theta, dtype=float)
    den = (math.pi - 2.0 * theta) ** 2 - s
    with np.errstate(divide="ignore"):
        out = np.where(den > 0.0, abs(s) / np.where(den > 0.0, den, 1.0), np.inf)
    return float(out) if out.ndim == 0 else out


def gain_P(theta: float, wp: WaveKVParams) -> float:
    """``|sigma mu - c^2| / (sigma mu - c^2 + sigma^2 (pi - 2 theta)^2)``."""
    sigma, c, mu = wp.kv_sigma, wp.wave_speed, wp.viscous_mu
    num = sigma * mu - c * c
    den = num + sigma * sigma * (math.pi - 2.0 * theta) ** 2
    if den <= 0.0:
        raise ValueError(f"theta={theta} outside the usable range (denominator {den} <= 0)")
    return abs(num) / den


def _g_objective(theta, s):
    theta = np.asarray(theta, dtype=float)
    P = gain_P_s(theta, s)
    bad = P >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 1.0 / (np.sin(theta) * (1.0 - np.sqrt(np.where(bad, 0.0, P))) ** 2)
    return np.where(bad, np.inf, val)


def g_theta_max(s: float) -> float:
    """Upper end of the theta interval in the definition of ``g``."""
    return 0.5 * (math.pi - math.sqrt(abs(s) - s))


@dataclass(frozen=True)
class GainReport:
    s: float
    theta_star: float | None
    g_value: float
    domain_empty: bool

    def to_json(self) -> dict:
        return {"s": self.s, "theta_star": self.theta_star,
                "g": self.g_value if math.isfinite(self.g_value) else "inf",
                "domain_empty": self.domain_empty}


def gain_g(s: float, n_scan: int = 2000) -> GainReport:
    """Infimum of ``1/(sin(theta)(1 - sqrt(P(theta)))^2)`` over the printed theta interval.

    A coarse scan locates the best cell, then golden-section search refines an
    interior minimum.  When the scan is best at the open right end the value
    there is the infimum (approached, not attained).
    """
    if abs(s) - s >= PI2:
        return GainReport(s, None, math.inf, True)
    hi = g_theta_max(s)
    thetas = hi * (np.arange(1, n_scan + 1)) / n_scan  # includes the end point
    vals = _g_objective(thetas, s)
    i = int(np.argmin(vals))
    if not np.isfinite(vals[i]):
        return GainReport(s, None, math.inf, True)
    if i == n_scan - 1:
        return GainReport(s, float(thetas[i]), float(vals[i]), False)
    lo = thetas[i - 1] if i > 0 else 0.5 * thetas[0]
    with np.errstate(invalid="ignore"):
        res = minimize_scalar(lambda t: float(_g_objective(t, s)),
                              bracket=(lo, thetas[i], thetas[i + 1]), method="golden", tol=1e-12)
    theta_star, g = float(res.x), float(res.fun)
    if vals[i] < g:
        theta_star, g = float(thetas[i]), float(vals[i])
    return GainReport(s, theta_star, g, False)


@dataclass
class GainCurve:
    s: np.ndarray
    g: np.ndarray

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.g))

    @property
    def nearest_zero(self) -> int:
        return int(np.argmin(np.abs(self.s)))

    def flanks_nondecreasing(self) -> bool:
        """``g`` nondecreasing in ``|s|`` on both sides of the grid point nearest 0."""
        i = self.nearest_zero
        right = self.g[i:]
        left = self.g[: i + 1][::-1]
        return bool(np.all(np.diff(right) >= 0.0) and np.all(np.diff(left) >= 0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "g"])
        for s, g in zip(self.s, self.g):
            w.writerow([f"{s:.16e}", f"{g:.16e}" if math.isfinite(g) else "inf"])
        return buf.getvalue()


def gain_curve(s_min: float, s_max: float, n_points: int) -> GainCurve:
    if n_points < 2 or not s_max > s_min:
        raise ValueError("need n_points >= 2 and s_max > s_min")
    s = np.linspace(s_min, s_max, n_points)
    return GainCurve(s, np.array([gain_g(float(v)).g_value for v in s]))


# ---------------------------------------------------------------------------
# ISS constants


@dataclass(frozen=True)
class IssConstantsA:
    theta: float
    epsilon: float
    zeta: float
    sigma: float
    L: float
    L_signed: float
    gamma: float
    coef_u1: float
    coef_u2: float
    kv_gain: float | None = None

    @property
    def small_gain(self) -> bool:
        return self.L < 1.0

    def certificate(self) -> Certificate:
        return Certificate("SG-L", lhs=self.L, rhs=1.0,
                           witnesses={"theta": self.theta, "omega": math.pi - 2 * self.theta,
                                      "epsilon": self.epsilon, "zeta": self.zeta},
                           details={"L_signed": self.L_signed, "gamma": self.gamma,
                                    "coef_u1": self.coef_u1, "coef_u2": self.coef_u2})

    def to_json(self) -> dict:
        from .certificate import _num
        return {k: _num(v) for k, v in self.__dict__.items()}


def kv_gain(theta: float, epsilon: float, s: float) -> float:
    """Magnification bound ``(1+eps) / (sin(theta) (1 - (1+eps) sqrt(P(theta)))^2)``."""
    P = gain_P_s(theta, s)
    root = (1.0 + epsilon) * math.sqrt(P) if math.isfinite(P) else math.inf
    if root >= 1.0:
        return math.inf
    return (1.0 + epsilon) / (math.sin(theta) * (1.0 - root) ** 2)


def iss_constants_loop_a(params: LoopAParams, theta: float, epsilon: float = 0.05,
                         zeta: float = 0.05, wave: WaveKVParams | None = None) -> IssConstantsA:
    """Loop gain ``L`` and the coefficients of the weighted ISS estimate.

    ``L`` uses ``|r a_tilde|``; the signed value is kept as ``L_signed``.  When
    ``L >= 1`` the small-gain argument fails and all coefficients are ``inf``.
    """
    if not 0.0 < theta < math.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    if not (epsilon > 0 and zeta > 0):
        raise ValueError("epsilon and zeta must be > 0")
    K, r, at, bt = params.K, params.r, params.a_tilde, params.b_tilde
    sigma = K + (math.pi - 2.0 * theta) ** 2
    if not sigma > 0:
        raise ValueError("K + (pi - 2 theta)^2 must be > 0")
    scale = (1.0 + zeta) * (1.0 + epsilon) ** 2 / sigma
    L, L_signed = scale * abs(r * at), scale * r * at
    e1 = 1.0 + epsilon
    if L < 1.0:
        inv = 1.0 / (1.0 - L)
        gamma = (e1 * abs(at) / bt + 1.0) * inv * e1 * (1.0 + 1.0 / zeta) / math.sin(theta)
        c1 = inv * (1.0 + e1 * abs(at) / bt)
        c2 = inv * (1.0 + e1 * abs(r) * bt * (1.0 + zeta) / sigma)
    else:
        gamma = c1 = c2 = math.inf
    kg = kv_gain(theta, epsilon, wave.s) if wave is not None else None
    return IssConstantsA(theta, epsilon, zeta, sigma, L, L_signed, gamma, c1, c2, kg)


def _theta_upper(params: LoopAParams, epsilon: float, zeta: float) -> float:
    """Supremum of the theta with ``L < 1`` and ``sigma > 0``."""
    t = max((1.0 + zeta) * (1.0 + epsilon) ** 2 * abs(params.r * params.a_tilde), 0.0) - params.K
    return math.pi / 2 if t <= 0.0 else 0.5 * (math.pi - math.sqrt(t))


def optimize_iss_loop_a(params: LoopAParams, epsilon: float = 0.05) -> IssConstantsA:
    """Minimize ``gamma`` over ``theta in (0, pi/2)`` and ``zeta > 0`` (nested Brent searches).

    Both searches run inside the region where ``L < 1``.  If no ``zeta > 0``
    is feasible for the requested ``epsilon`` (a certified set close to its
    edge) ``epsilon`` is shrunk to ``((K + pi^2)/|r a_tilde|)^(1/4) - 1``.
    Uncertified sets get the ``inf`` constants at ``theta = pi/4``.
    """
    K, m = params.K, abs(params.r * params.a_tilde)
    if not check_loop_a(params).passed or K + PI2 <= 0.0:
        return iss_constants_loop_a(params, math.pi / 4, epsilon, 0.05)
    if m > 0.0 and (1.0 + epsilon) ** 2 * m >= K + PI2:
        epsilon = ((K + PI2) / m) ** 0.25 - 1.0
        log.info("epsilon shrunk to %.3e so that L < 1 is reachable", epsilon)
    lz_hi = 12.0
    if m > 0.0:
        lz_hi = min(lz_hi, math.log((K + PI2) / ((1.0 + epsilon) ** 2 * m) - 1.0))

    def best_theta(zeta):
        hi = _theta_upper(params, epsilon, zeta)
        res = minimize_scalar(
            lambda th: iss_constants_loop_a(params, th, epsilon, zeta).gamma,
            bounds=(1e-9 * hi, hi * (1.0 - 1e-12)), method="bounded", options={"xatol": 1e-10})
        return res.x, res.fun

    res = minimize_scalar(lambda lz: best_theta(math.exp(lz))[1], bounds=(-12.0, lz_hi - 1e-9),
                          method="bounded", options={"xatol": 1e-8})
    zeta = math.exp(res.x)
    theta, _ = best_theta(zeta)
    return iss_constants_loop_a(params, theta, epsilon, zeta)


def minimize_kv_gain(wp: WaveKVParams, eps_min: float = 1e-12) -> tuple[float, float, float]:
    """Minimize the magnification bound over ``(theta, epsilon)``; returns ``(gain, theta, eps)``."""
    s = wp.s
    hi = g_theta_max(s) if abs(s) - s < PI2 else None
    if hi is None:
        return math.inf, math.nan, math.nan

    def inner(eps):
        res = minimize_scalar(lambda th: kv_gain(th, eps, s), bounds=(1e-9, hi),
                              method="bounded", options={"xatol": 1e-12})
        return res.x, min(res.fun, kv_gain(hi, eps, s))

    with np.errstate(invalid="ignore"):
        res = minimize_scalar(lambda le: inner(math.exp(le))[1],
                              bounds=(math.log(eps_min), 0.0), method="bounded")
        eps = math.exp(res.x)
        theta, val = inner(eps)
    return float(val), float(theta), eps


@dataclass(frozen=True)
class IssConstantsB:
    theta: float
    omega: float
    epsilon: float
    sigma: float
    B: float
    eta1: float
    product: float
    coef_u2: float
    coef_u1: float
    transport_factor: float

    @property
    def small_gain(self) -> bool:
        return self.product < 1.0

    def certificate(self) -> Certificate:
        return Certificate("SG-L", lhs=self.product, rhs=1.0,
                           witnesses={"theta": self.theta, "omega": self.omega,
                                      "epsilon": self.epsilon},
                           details={"B": self.B, "sigma": self.sigma,
                                    "coef_u1": self.coef_u1, "coef_u2": self.coef_u2})

    def to_json(self) -> dict:
        from .certificate import _num
        return {k: _num(v) for k, v in self.__dict__.items()}


def iss_constants_loop_b(params: LoopBParams, theta: float, omega: float,
                         epsilon: float = 0.05, n_z: int = 401) -> IssConstantsB:
    """Loop product ``(1+eps)^2 B |k| eta(1) / sigma`` and the coefficients of the estimate.

    ``coef_u2`` multiplies ``exp(1/c) ||u2_0||``; the factor ``exp(1/c)`` is
    reported separately as ``transport_factor``.
    """
    p, a = params.diffusion, params.reaction
    sigma = p * omega * omega - a
    if not sigma > 0:
        raise ValueError("p omega^2 - a must be > 0")
    zg = np.linspace(0.0, 1.0, n_z)
    eta = np.sin(theta + omega * zg)
    if np.any(eta <= 0):
        raise ValueError("weight not positive on [0, 1]")
    B = float(np.max(row_integrals(params.kernel, zg) / eta))
    eta1 = math.sin(theta + omega)
    e1 = 1.0 + epsilon
    k = abs(params.boundary_gain)
    product = e1 * e1 * B * k * eta1 / sigma
    if product < 1.0:
        inv = 1.0 / (1.0 - product)
        cu2, cu1 = inv * (e1 * B / sigma + 1.0), inv * (1.0 + e1 * k * eta1)
    else:
        cu2 = cu1 = math.inf
    return IssConstantsB(theta, omega, epsilon, sigma, B, eta1, product, cu2, cu1,
                         math.exp(1.0 / params.transport_speed))


@dataclass(frozen=True)
class CertifyReport:
    """Bundle of certificates for a run (used by the CLI)."""

    certificates: tuple[Certificate, ...]
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)
