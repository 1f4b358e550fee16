"""Parameter sets for the model families and the maps between them.

Families
--------
* ``ChemicalParams``  physical groundwater/sorption model, mapped to loop A.
* ``LoopAParams``     parabolic PDE coupled to a zero-speed transport PDE
                      (pointwise ODE) with a Dirichlet boundary disturbance.
* ``WaveKVParams``    wave equation with Kelvin-Voigt and viscous damping,
                      mapped to loop A after a time rescaling.
* ``LoopBParams``     parabolic PDE coupled to a transport PDE through a
                      non-local in-domain term and a boundary trace.
* ``BacksteppingParams`` hyperbolic loop with added diffusion, mapped to loop B.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .kernels import Kernel, ScaledKernel

PI2 = math.pi ** 2


def _finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class ChemicalParams:
    porosity: float
    velocity: float
    diffusion: float
    sorption_rate: float
    desorption_rate: float
    length: float
    source_conc: float = 1.0

    def __post_init__(self):
        _finite(**asdict(self))
        if not 0.0 < self.porosity < 1.0:
            raise ValueError("porosity must lie in (0, 1)")
        if self.velocity < 0.0:
            raise ValueError("velocity must be >= 0")
        for name in ("diffusion", "sorption_rate", "desorption_rate", "length", "source_conc"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ChemicalParams":
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class LoopAParams:
    K: float
    r: float
    a_tilde: float
    b_tilde: float

    def __post_init__(self):
        _finite(**asdict(self))

    @property
    def coupling(self) -> float:
        """The loop product ``r * a_tilde``."""
        return self.r * self.a_tilde

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "LoopAParams":
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class WaveKVParams:
    kv_sigma: float
    wave_speed: float
    viscous_mu: float = 0.0

    def __post_init__(self):
        _finite(**asdict(self))
        if self.kv_sigma <= 0.0 or self.wave_speed <= 0.0:
            raise ValueError("kv_sigma and wave_speed must be > 0")
        if self.viscous_mu < 0.0:
            raise ValueError("viscous_mu must be >= 0")

    @property
    def s(self) -> float:
        """Argument of the magnification curve, ``(c^2 - mu*sigma) / sigma^2``."""
        return (self.wave_speed ** 2 - self.viscous_mu * self.kv_sigma) / self.kv_sigma ** 2

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "WaveKVParams":
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class LoopBParams:
    diffusion: float
    transport_speed: float
    robin_q: float
    reaction: float
    boundary_gain: float
    kernel: Kernel | ScaledKernel = field(default_factory=Kernel)

    def __post_init__(self):
        _finite(diffusion=self.diffusion, transport_speed=self.transport_speed,
                robin_q=self.robin_q, reaction=self.reaction,
                boundary_gain=self.boundary_gain)
        if self.diffusion <= 0.0 or self.transport_speed <= 0.0:
            raise ValueError("diffusion and transport_speed must be > 0")
        if self.robin_q >= 1.0:
            raise ValueError("robin_q must be < 1")

    def with_speed(self, c: float) -> "LoopBParams":
        return LoopBParams(self.diffusion, c, self.robin_q, self.reaction,
                           self.boundary_gain, self.kernel)

    def to_json(self) -> dict:
        return {"diffusion": self.diffusion, "transport_speed": self.transport_speed,
                "robin_q": self.robin_q, "reaction": self.reaction,
                "boundary_gain": self.boundary_gain, "kernel": self.kernel.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "LoopBParams":
        doc = dict(doc)
        kernel = Kernel.from_json(doc.pop("kernel", {"kind": "expr", "name": "zero"}))
        return cls(kernel=kernel, **{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class BacksteppingParams:
    transport_v: float
    diffusion: float
    transport_c: float
    gain: float
    kernel: Kernel = field(default_factory=Kernel)

    def __post_init__(self):
        _finite(transport_v=self.transport_v, diffusion=self.diffusion,
                transport_c=self.transport_c, gain=self.gain)
        if min(self.transport_v, self.diffusion, self.transport_c) <= 0.0:
            raise ValueError("transport_v, diffusion and transport_c must be > 0")

    def to_json(self) -> dict:
        return {"transport_v": self.transport_v, "diffusion": self.diffusion,
                "transport_c": self.transport_c, "gain": self.gain,
                "kernel": self.kernel.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "BacksteppingParams":
        doc = dict(doc)
        kernel = Kernel.from_json(doc.pop("kernel", {"kind": "expr", "name": "zero"}))
        return cls(kernel=kernel, **{k: float(v) for k, v in doc.items()})


# ---------------------------------------------------------------------------
# transformations


def chemical_to_loop_a(cp: ChemicalParams) -> LoopAParams:
    """Dimensionless loop-A parameters of the groundwater model.

    ``r * a_tilde = a L^2 / D`` and ``K = L^2 v^2 phi^2 / (4 D^2) + a L^2 / D``,
    so ``r * a_tilde <= K`` for every valid parameter set.
    """
    phi, v, D = cp.porosity, cp.velocity, cp.diffusion
    a, b, L = cp.sorption_rate, cp.desorption_rate, cp.length
    scale = L * L * phi / D
    return LoopAParams(
        K=L * L * (v * v * phi * phi + 4.0 * a * D) / (4.0 * D * D),
        r=1.0 / phi,
        a_tilde=a * scale,
        b_tilde=b * scale,
    )


def chemical_time_scale(cp: ChemicalParams) -> float:
    """Physical time per unit of dimensionless time, ``L^2 phi / D``."""
    return cp.length ** 2 * cp.porosity / cp.diffusion


def equilibrium_profile(cp: ChemicalParams, xi):
    """Nominal dissolved and sorbed concentrations ``(c_eq, n_eq)`` at ``xi``.

    Evaluated as ``(1 - exp(alpha (xi - L))) / (1 - exp(-alpha L))`` with
    ``alpha = phi v / D``, which is overflow-free; ``v = 0`` uses the linear
    limit ``c0 (1 - xi / L)``.
    """
    xi_arr = np.asarray(xi, dtype=float)
    L = cp.length
    if np.any(xi_arr < 0.0) or np.any(xi_arr > L):
        raise ValueError(f"xi must lie in [0, {L}]")
    alpha = cp.porosity * cp.velocity / cp.diffusion
    if alpha == 0.0:
        shape = 1.0 - xi_arr / L
    else:
        shape = np.expm1(alpha * (xi_arr - L)) / np.expm1(-alpha * L)
    c_eq = cp.source_conc * shape
    n_eq = (cp.sorption_rate / cp.desorption_rate) * c_eq
    if np.ndim(xi) == 0:
        return float(c_eq), float(n_eq)
    return c_eq, n_eq


def kv_wave_to_loop_a(wp: WaveKVParams) -> tuple[LoopAParams, float]:
    """Map the damped wave equation onto loop A.

    With rescaled time ``tau = sigma * t`` the wave equation becomes the loop-A
    second-order form with ``b_tilde = c^2/sigma^2``,
    ``K = (mu sigma - c^2)/sigma^2`` and ``r * a_tilde = K``.  The split is
    ``r = 1, a_tilde = K`` (``a_tilde = 0`` when ``K = 0``; the loop is then a
    cascade).  Returns the parameters and the time scale ``sigma``.
    """
    sigma, c, mu = wp.kv_sigma, wp.wave_speed, wp.viscous_mu
    K = (mu * sigma - c * c) / (sigma * sigma)
    return LoopAParams(K=K, r=1.0, a_tilde=K, b_tilde=c * c / (sigma * sigma)), sigma


def kv_state_to_loop_a(wp: WaveKVParams, u, u_t, u_zz):
    """Loop-A state ``(u1, u2)`` of a wave-equation state.

    ``u2 = (u_t / sigma - u_zz + K u) / (r b_tilde)``; ``u_t`` is the physical
    time derivative.
    """
    la, sigma = kv_wave_to_loop_a(wp)
    u = np.asarray(u, dtype=float)
    u2 = (np.asarray(u_t) / sigma - np.asarray(u_zz) + la.K * u) / (la.r * la.b_tilde)
    return u, u2


def loop_a_state_to_kv(wp: WaveKVParams, u1, u2, u1_zz):
    """Inverse of :func:`kv_state_to_loop_a`: returns ``(u, u_t)``."""
    la, sigma = kv_wave_to_loop_a(wp)
    u1 = np.asarray(u1, dtype=float)
    u_t = sigma * (np.asarray(u1_zz) - la.K * u1 + la.r * la.b_tilde * np.asarray(u2))
    return u1, u_t


def backstepping_to_loop_b(bp: BacksteppingParams, *, trace_scaling: bool = False) -> LoopBParams:
    """Loop-B parameters of the diffusive backstepping loop.

    Uses ``u1 = exp(-v z / (2p)) w1``: ``q = -v/(2p)``, ``a = -v^2/(4p)`` and
    ``b(z, s) = p exp(-v z/(2p)) l(z, s)``; the gain is copied unchanged.

    The same change of variables turns ``w2(t,0) = k w1(t,1)`` into
    ``u2(t,0) = k exp(v/(2p)) u1(t,1)``.  Pass ``trace_scaling=True`` to carry
    that factor into the boundary gain.
    """
    v, p = bp.transport_v, bp.diffusion
    alpha = v / (2.0 * p)
    gain = bp.gain * math.exp(alpha) if trace_scaling else bp.gain
    kernel = bp.kernel.times(lambda z, _p=p, _al=alpha: _p * np.exp(-_al * z))
    return LoopBParams(
        diffusion=p,
        transport_speed=bp.transport_c,
        robin_q=-alpha,
        reaction=-v * v / (4.0 * p),
        boundary_gain=gain,
        kernel=kernel,
    )


# ---------------------------------------------------------------------------
# disturbances

DISTURBANCE_KINDS = ("zero", "constant", "sinusoid", "smoothed_step")


@dataclass(frozen=True)
class DisturbanceSignal:
    """Boundary input ``d(t)``; vectorised value and analytic derivative.

    ``sinusoid``: ``amplitude * sin(frequency * t + phase)`` (angular frequency).
    ``smoothed_step``: cubic ramp ``amplitude * (3x^2 - 2x^3)``, ``x = t/rise_time``
    clipped to [0, 1]; C^1 but not C^2 at the junctions.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    rise_time: float = 1.0

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}; "
                             f"expected one of {DISTURBANCE_KINDS}")
        _finite(amplitude=self.amplitude, frequency=self.frequency,
                phase=self.phase, rise_time=self.rise_time)
        if self.kind == "smoothed_step" and self.rise_time <= 0.0:
            raise ValueError("rise_time must be > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(t)
        elif self.kind == "constant":
            out = np.full_like(t, self.amplitude)
        elif self.kind == "sinusoid":
            out = self.amplitude * np.sin(self.frequency * t + self.phase)
        else:
            x = np.clip(t / self.rise_time, 0.0, 1.0)
            out = self.amplitude * x * x * (3.0 - 2.0 * x)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind in ("zero", "constant"):
            out = np.zeros_like(t)
        elif self.kind == "sinusoid":
            out = self.amplitude * self.frequency * np.cos(self.frequency * t + self.phase)
        else:
            x = np.clip(t / self.rise_time, 0.0, 1.0)
            out = self.amplitude * 6.0 * x * (1.0 - x) / self.rise_time
        return float(out) if out.ndim == 0 else out

    @property
    def initial_value(self) -> float:
        return self(0.0)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def sup(self, t_end: float) -> float:
        """``max |d(s)|`` over ``[0, t_end]`` (exact for every kind)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.amplitude)
        if self.kind == "smoothed_step":
            return abs(self(t_end))
        if self.frequency == 0.0:
            return abs(self(0.0))
        # a full half-period reaches the amplitude
        if abs(self.frequency) * t_end >= math.pi:
            return abs(self.amplitude)
        ts = np.linspace(0.0, t_end, 2001)
        return float(np.max(np.abs(self(ts))))

    def time_rescaled(self, factor: float) -> "DisturbanceSignal":
        """Signal ``d(tau / factor)``, i.e. expressed in time ``tau = factor * t``."""
        return DisturbanceSignal(self.kind, self.amplitude, self.frequency / factor,
                                 self.phase, self.rise_time * factor)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("constant", "sinusoid", "smoothed_step"):
            out["amplitude"] = self.amplitude
        if self.kind == "sinusoid":
            out["frequency"] = self.frequency
            out["phase"] = self.phase
        if self.kind == "smoothed_step":
            out["rise_time"] = self.rise_time
        return out


def make_disturbance(spec: dict | str | None) -> DisturbanceSignal:
    """Build a disturbance from a dict such as ``{"kind": "sinusoid", ...}``."""
    if spec is None:
        return DisturbanceSignal()
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = str(spec.pop("kind", "zero")).replace("-", "_")
    if "value" in spec and kind == "constant":
        spec["amplitude"] = spec.pop("value")
    if "rise" in spec:
        spec["rise_time"] = spec.pop("rise")
    allowed = {"amplitude", "frequency", "phase", "rise_time"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown disturbance fields: {sorted(unknown)}")
    return DisturbanceSignal(kind=kind, **{k: float(v) for k, v in spec.items()})


Profile = Callable[[np.ndarray], np.ndarray]
