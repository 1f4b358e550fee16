"""Empirical checks of the stability estimates against simulated trajectories."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .certificate import Certificate, _num
from .certify import (
    IssConstantsA,
    certify_loop_b,
    check_loop_a,
    check_wave_kv,
    gain_g,
    iss_constants_loop_a,
    optimize_iss_loop_a,
)
from .model import DisturbanceSignal, LoopAParams, LoopBParams, WaveKVParams, kv_wave_to_loop_a
from .solvers.grid import Grid, Trajectory
from .solvers.loop_a import simulate_loop_a
from .solvers.loop_b import simulate_loop_b
from .spectral import eigensystem_dirichlet_robin, loop_a_weight

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-300
PI2 = math.pi ** 2


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    M_hat: float
    delta_hat: float
    window: tuple[float, float]
    residual: float
    n_samples: int

    def envelope(self, t, norm0: float):
        return self.M_hat * np.exp(-self.delta_hat * np.asarray(t, dtype=float)) * norm0

    def to_json(self) -> dict:
        return {"M_hat": _num(self.M_hat), "delta_hat": _num(self.delta_hat),
                "window": [_num(self.window[0]), _num(self.window[1])],
                "residual": _num(self.residual), "n_samples": self.n_samples}


def fit_decay(data, which: str = "sum", *, window: tuple[float, float] | None = None,
              skip_fraction: float = 0.1, envelope: str = "running_max",
              min_samples: int = 20) -> DecayFit:
    """Exponential rate of a norm history by a log-linear least-squares fit.

    Parameters
    ----------
    data : Trajectory or (times, values)
        ``which`` selects the trajectory norm (see :meth:`Trajectory.norm`).
    window : (t_start, t_end), optional
        Fit window; default skips the first ``skip_fraction`` of the horizon.
    envelope : {"running_max", "none"}
        ``running_max`` fits the tightest nonincreasing upper envelope (robust
        to oscillation); ``none`` fits the raw values, which is what a growing
        history needs.

    Returns
    -------
    DecayFit
        ``M_hat`` is the smallest factor ``>= 1`` with
        ``norm(t) <= M_hat exp(-delta_hat t) norm(t_0)`` at every sample.
    """
    if isinstance(data, Trajectory):
        t, y = data.times, data.norm(which)
    else:
        t, y = (np.asarray(a, dtype=float) for a in data)
    y = np.maximum(np.abs(y), NORM_FLOOR)
    if window is None:
        window = (t[0] + skip_fraction * (t[-1] - t[0]), t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < min_samples:
        raise ValueError(f"only {int(sel.sum())} samples in the fit window (need {min_samples})")
    tw, yw = t[sel], y[sel]
    if envelope == "running_max":
        yw = np.maximum.accumulate(yw[::-1])[::-1]
    elif envelope != "none":
        raise ValueError(f"unknown envelope {envelope!r}")
    logy = np.log(yw)
    slope, icpt = np.polyfit(tw - tw[0], logy, 1)
    delta = -float(slope)
    if abs(delta) < 1e-12 * max(1.0, abs(icpt)):
        delta = 0.0
    resid = float(np.max(np.abs(logy - (icpt + slope * (tw - tw[0])))))
    y0 = y[0]
    with np.errstate(over="ignore"):
        M = float(np.max(y * np.exp(delta * (t - t[0]))) / y0)
    return DecayFit(max(1.0, M), delta, (float(window[0]), float(window[1])), resid, int(sel.sum()))


# ---------------------------------------------------------------------------
# estimate checks


@dataclass(frozen=True)
class BoundReport:
    name: str
    count: int
    max_excess: float
    min_slack: float
    n_checked: int

    @property
    def ok(self) -> bool:
        return self.count == 0

    def to_json(self) -> dict:
        return {"name": self.name, "count": self.count, "max_excess": _num(self.max_excess),
                "min_slack": _num(self.min_slack), "n_checked": self.n_checked}


def running_sup(d: DisturbanceSignal | None, times, per_interval: int = 20) -> np.ndarray:
    """``max_{0 <= s <= t} |d(s)|`` at each ``t`` (sampled finely between the times)."""
    times = np.asarray(times, dtype=float)
    if d is None or d.is_zero:
        return np.zeros_like(times)
    fine = np.linspace(0.0, times[-1], per_interval * max(1, len(times) - 1) + 1)
    fine = np.union1d(fine, times)
    run = np.maximum.accumulate(np.abs(d(fine)))
    return run[np.searchsorted(fine, times)]


def _compare(name, lhs, rhs, tol) -> BoundReport:
    excess = lhs - rhs
    bad = excess > tol * np.maximum(1.0, np.abs(rhs))
    slack = (rhs - lhs) / np.maximum(np.abs(rhs), NORM_FLOOR)
    return BoundReport(name, int(bad.sum()), float(np.max(excess)) if len(excess) else 0.0,
                       float(np.min(slack)) if len(slack) else 0.0, len(lhs))


def check_iss_bound(traj: Trajectory, decay: DecayFit, gamma: float = 0.0,
                    d: DisturbanceSignal | None = None, tol: float = 1e-10) -> BoundReport:
    """``||u1[t]|| + ||u2[t]|| <= M_hat exp(-delta t)(||u1_0|| + ||u2_0||) + gamma max|d|``.

    ``decay`` comes from the disturbance-free companion run; ``gamma`` is a
    certified disturbance gain (zero for loop B).
    """
    lhs = traj.sup_u1 + traj.sup_u2
    rhs = decay.envelope(traj.times - traj.times[0], lhs[0]) + gamma * running_sup(d, traj.times)
    return _compare("iss", lhs, rhs, tol)


def check_weighted_iss_bound(traj: Trajectory, consts: IssConstantsA, K: float,
                             d: DisturbanceSignal | None = None, tol: float = 1e-10) -> BoundReport:
    """Loop-A weighted estimate with the certified coefficients and no decay factor.

    ``||u1[t]||_eta + ||u2[t]||_eta <= c1 ||u1_0||_eta + c2 ||u2_0||_eta + gamma max|d|``.
    """
    tr = traj.with_weight(loop_a_weight(consts.theta, K))
    lhs = tr.wnorm_u1 + tr.wnorm_u2
    rhs = (consts.coef_u1 * tr.wnorm_u1[0] + consts.coef_u2 * tr.wnorm_u2[0]
           + consts.gamma * running_sup(d, tr.times))
    return _compare("weighted_iss", lhs, rhs, tol)


def check_parabolic_bound(traj: Trajectory, params: LoopAParams, theta: float,
                          d: DisturbanceSignal | None = None, tol: float = 1e-10) -> BoundReport:
    """Weighted maximum-principle estimate for the parabolic component of loop A.

    ``||u1[t]||_eta <= max(exp(-sigma t)||u1_0||_eta, max|d| / sin(theta))
    + max_s ||r b_tilde u2[s]||_eta / sigma`` with
    ``eta = sin(theta + (pi - 2 theta) z)`` and ``sigma = K + (pi - 2 theta)^2``.
    """
    eta = loop_a_weight(theta, params.K)
    tr = traj.with_weight(eta)
    w1 = tr.wnorm_u1
    f_run = np.maximum.accumulate(abs(params.r) * params.b_tilde * tr.wnorm_u2)
    first = np.maximum(np.exp(-eta.sigma * (tr.times - tr.times[0])) * w1[0],
                       running_sup(d, tr.times) / math.sin(theta))
    return _compare("parabolic", w1, first + f_run / eta.sigma, tol)


# ---------------------------------------------------------------------------
# sharpness


@dataclass(frozen=True)
class SharpnessMode:
    mu: float
    mode_ratio: float

    def dispersion_residual(self, params: LoopAParams) -> float:
        mu = self.mu
        return (mu + PI2 + params.K) * (mu + params.b_tilde) - params.r * params.b_tilde * params.a_tilde


def sharpness_mode(params: LoopAParams) -> SharpnessMode:
    """Largest ``mu`` with ``(mu + pi^2 + K)(mu + b_tilde) = r b_tilde a_tilde``.

    ``u1 = exp(mu t) sin(pi z)``, ``u2 = k exp(mu t) sin(pi z)`` with
    ``k = a_tilde / (mu + b_tilde)`` is then a solution with ``d = 0``.
    """
    if not params.b_tilde > 0:
        raise ValueError("b_tilde must be > 0")
    if params.coupling < params.K + PI2:
        raise ValueError("sharpness probe needs r*a_tilde >= K + pi^2")
    B = PI2 + params.K + params.b_tilde
    C = params.b_tilde * (PI2 + params.K - params.coupling)
    root = math.sqrt(B * B - 4.0 * C)
    mu = -2.0 * C / (B + root) if B > 0 else 0.5 * (-B + root)
    mu += 0.0  # no negative zero
    return SharpnessMode(mu, params.a_tilde / (mu + params.b_tilde))


@dataclass(frozen=True)
class SharpnessReport:
    mode: SharpnessMode
    max_rel_deviation: float
    fitted_mu: float
    trajectory: Trajectory = field(repr=False, compare=False)


def sharpness_probe(params: LoopAParams, grid: Grid | None = None) -> SharpnessReport:
    """Simulate from the mode's initial data and compare with ``exp(mu t)``."""
    grid = grid or Grid(n_z=101, dt=1e-3, T=1.0, modes=16)
    mode = sharpness_mode(params)
    traj = simulate_loop_a(params, lambda z: np.sin(np.pi * z),
                           lambda z: mode.mode_ratio * np.sin(np.pi * z), None, grid)
    ref = np.exp(mode.mu * traj.times) * traj.sup_u1[0]
    dev = float(np.max(np.abs(traj.sup_u1 / ref - 1.0)))
    fit = fit_decay(traj, "u1", window=(0.0, grid.T), envelope="none")
    return SharpnessReport(mode, dev, -fit.delta_hat, traj)


# ---------------------------------------------------------------------------
# delay independence


@dataclass(frozen=True)
class SweepRow:
    c: float
    fit: DecayFit
    falsified: bool

    def to_json(self) -> dict:
        return {"c": self.c, "decay_fit": self.fit.to_json(), "falsified": self.falsified}


@dataclass(frozen=True)
class DelaySweepReport:
    certificate: Certificate
    rows: tuple[SweepRow, ...]

    @property
    def falsified(self) -> bool:
        return any(r.falsified for r in self.rows)

    @property
    def all_decay(self) -> bool:
        return all(r.fit.delta_hat > 0 for r in self.rows)


def default_loop_b_data(params: LoopBParams):
    """First Dirichlet-Robin mode for ``u1`` and the compatible constant for ``u2``."""
    es = eigensystem_dirichlet_robin(params.diffusion, params.reaction, params.robin_q, 1)
    om, A = float(es.frequencies[0]), float(es.normalizers[0])
    end = A * math.sin(om)
    k = params.boundary_gain
    return (lambda z: A * np.sin(om * np.asarray(z, dtype=float)),
            lambda z: np.full_like(np.asarray(z, dtype=float), k * end))


def delay_independence_sweep(params: LoopBParams, c_list, grid: Grid | None = None,
                             u1_0=None, u2_0=None, which: str = "sum") -> DelaySweepReport:
    """Simulate loop B at each transport speed and fit the decay rate.

    A run that does not decay while the certificate passes is flagged as a
    falsification event and logged as an error.
    """
    grid = grid or Grid(n_z=101, dt=2e-3, T=8.0, modes=32)
    if u1_0 is None or u2_0 is None:
        u1_0, u2_0 = default_loop_b_data(params)
    _, _, cert = certify_loop_b(params)
    if not cert.passed:
        log.warning("delay sweep on a parameter set whose certificate fails")
    rows = []
    for c in c_list:
        traj = simulate_loop_b(params.with_speed(float(c)), u1_0, u2_0, grid, store_every=5)
        fit = fit_decay(traj, which)
        bad = cert.passed and not fit.delta_hat > 0
        if bad:
            log.error("falsification: certified loop B does not decay at c=%g", c)
        rows.append(SweepRow(float(c), fit, bad))
    return DelaySweepReport(cert, tuple(rows))


# ---------------------------------------------------------------------------
# magnification


@dataclass(frozen=True)
class MagnificationReport:
    empirical_gain: float
    g_bound: float
    gamma_bound: float
    theta: float

    @property
    def within_bounds(self) -> bool:
        return self.empirical_gain <= min(self.g_bound, self.gamma_bound) + 1e-9

    def to_json(self) -> dict:
        return {k: _num(v) for k, v in self.__dict__.items()}


def magnification_probe(wp: WaveKVParams, d: DisturbanceSignal, T: float,
                        dt: float = 1e-3, n_z: int = 101, modes: int = 32,
                        epsilon: float = 0.05) -> MagnificationReport:
    """Peak ``||u[t]||_inf / max|d|`` over ``[T/2, T]`` from rest, in the wave's own time.

    The bounds are ``g((c^2 - mu sigma)/sigma^2)`` and the certified loop-A
    gain at the witness that minimizes it.
    """
    if not check_wave_kv(wp).passed:
        raise ValueError("magnification probe needs a certified wave equation")
    la, scale = kv_wave_to_loop_a(wp)
    consts = optimize_iss_loop_a(la, epsilon)
    g = gain_g(wp.s).g_value
    if d.is_zero:
        return MagnificationReport(0.0, g, consts.gamma, consts.theta)
    tau_T = scale * T
    steps = max(1, int(round(tau_T / dt)))
    grid = Grid(n_z=n_z, dt=tau_T / steps, T=tau_T, modes=modes)
    d_tau = d.time_rescaled(scale)
    traj = simulate_loop_a(la, lambda z: np.zeros_like(z), None, d_tau, grid)
    late = traj.times >= 0.5 * tau_T - 1e-12
    gain = float(np.max(traj.sup_u1[late]) / d.sup(T))
    return MagnificationReport(gain, g, consts.gamma, consts.theta)


# ---------------------------------------------------------------------------
# loop-A soundness run


@dataclass(frozen=True)
class SoundnessReport:
    certificate: Certificate
    fit: DecayFit
    iss: BoundReport
    weighted: BoundReport
    constants: IssConstantsA

    @property
    def ok(self) -> bool:
        return self.fit.delta_hat > 0 and self.iss.ok and self.weighted.ok

    def to_json(self) -> dict:
        return {"certificate": self.certificate.to_json(), "decay_fit": self.fit.to_json(),
                "bound_violations": {"count": self.iss.count + self.weighted.count,
                                     "max_excess": _num(max(self.iss.max_excess,
                                                            self.weighted.max_excess))},
                "iss_bound": self.iss.to_json(), "weighted_bound": self.weighted.to_json(),
                "constants": self.constants.to_json()}


def verify_loop_a(params: LoopAParams, u1_0, u2_0, d: DisturbanceSignal, grid: Grid,
                  epsilon: float = 0.05, store_every: int = 1) -> SoundnessReport:
    """Certify, fit the free decay, then check both estimates on the driven run.

    ``u1_0`` must vanish at both ends and ``d(0) = 0`` so the same initial data
    serves the free and the driven run.
    """
    cert = check_loop_a(params)
    free = simulate_loop_a(params, u1_0, u2_0, None, grid, store_every=store_every)
    fit = fit_decay(free)
    if cert.passed and not fit.delta_hat > 0:
        log.error("falsification: certified loop A does not decay")
    consts = optimize_iss_loop_a(params, epsilon)
    driven = simulate_loop_a(params, u1_0, u2_0, d, grid, store_every=store_every)
    iss = check_iss_bound(driven, fit, consts.gamma, d)
    weighted = check_weighted_iss_bound(driven, consts, params.K, d)
    return SoundnessReport(cert, fit, iss, weighted, consts)
