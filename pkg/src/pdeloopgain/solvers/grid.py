from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from ..spectral import WeightFunction


@dataclass(frozen=True)
class Grid:
    """Uniform space grid ``z_i = i/(n_z-1)`` and time stepping ``dt`` up to ``T``."""

    n_z: int = 101
    dt: float = 1e-3
    T: float = 1.0
    modes: int = 64

    def __post_init__(self):
        if self.n_z < 3:
            raise ValueError("n_z must be >= 3")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be > 0")
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if abs(self.steps * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_z)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def to_json(self) -> dict:
        return {"n_z": self.n_z, "dt": self.dt, "T": self.T, "modes": self.modes}


@dataclass(frozen=True)
class ForcingTerm:
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, t, z):
        return np.broadcast_to(self.evaluator(t, np.asarray(z, dtype=float)), np.shape(z))


def as_profile(u, z_nodes: np.ndarray | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Turn ``None``, a callable or an array of nodal values into a callable profile."""
    if u is None:
        return lambda z: np.zeros_like(np.asarray(z, dtype=float))
    if callable(u):
        return lambda z, _u=u: np.broadcast_to(_u(np.asarray(z, dtype=float)),
                                               np.shape(z)).astype(float)
    vals = np.asarray(u, dtype=float)
    nodes = z_nodes if z_nodes is not None else np.linspace(0.0, 1.0, len(vals))
    return CubicSpline(nodes, vals)


@dataclass
class Trajectory:
    """Sampled solution ``(u1, u2)`` with per-step norms.

    ``u1``/``u2`` have shape ``(len(times), len(z))``.  When a weight is
    attached the weighted sup norms use it; otherwise they equal the sup norms.
    """

    times: np.ndarray
    z: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    weight: WeightFunction | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def sup_u1(self) -> np.ndarray:
        return np.max(np.abs(self.u1), axis=1)

    @property
    def sup_u2(self) -> np.ndarray:
        return np.max(np.abs(self.u2), axis=1)

    def _weighted(self, u):
        if self.weight is None:
            return np.max(np.abs(u), axis=1)
        return np.max(np.abs(u) / self.weight(self.z)[None, :], axis=1)

    @property
    def wnorm_u1(self) -> np.ndarray:
        return self._weighted(self.u1)

    @property
    def wnorm_u2(self) -> np.ndarray:
        return self._weighted(self.u2)

    def norm(self, which: str = "sum") -> np.ndarray:
        if which == "sum":
            return self.sup_u1 + self.sup_u2
        if which == "u1":
            return self.sup_u1
        if which == "u2":
            return self.sup_u2
        if which == "wsum":
            return self.wnorm_u1 + self.wnorm_u2
        raise ValueError(f"unknown norm {which!r}")

    def with_weight(self, weight: WeightFunction | None) -> "Trajectory":
        return Trajectory(self.times, self.z, self.u1, self.u2, weight, dict(self.metadata))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sup_u1", "sup_u2", "wnorm_u1", "wnorm_u2"])
        cols = (self.times, self.sup_u1, self.sup_u2, self.wnorm_u1, self.wnorm_u2)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def profiles_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "z", "u1", "u2"])
        for j, t in enumerate(self.times):
            for i, zi in enumerate(self.z):
                w.writerow([fmt(t), fmt(zi), fmt(self.u1[j, i]), fmt(self.u2[j, i])])
        return buf.getvalue()

    @classmethod
    def from_profiles_csv(cls, text: str, weight: WeightFunction | None = None) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["t", "z", "u1", "u2"]:
            raise ValueError("not a profile CSV")
        data = np.array(rows[1:], dtype=float)
        times = np.unique(data[:, 0])
        z = np.unique(data[:, 1])
        shape = (len(times), len(z))
        return cls(times, z, data[:, 2].reshape(shape), data[:, 3].reshape(shape), weight)


def read_summary_csv(text: str) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    data = np.array(rows[1:], dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}


def fmt(v: float) -> str:
    """17 significant digits, scientific notation."""
    return f"{float(v):.16e}"


class BoundaryTraceHistory:
    """Samples of the trace ``u1(t, 1)`` and its time derivative at ``t_j = j h``.

    Kept in a fixed-capacity ring buffer long enough to reach back one transit
    time ``1/c``; queries use cubic Hermite interpolation.
    """

    def __init__(self, h: float, span: float):
        self.h = h
        self.capacity = int(math.ceil(span / h)) + 4
        self._val = np.zeros(self.capacity)
        self._der = np.zeros(self.capacity)
        self.latest = -1

    def push(self, value: float, derivative: float) -> None:
        self.latest += 1
        slot = self.latest % self.capacity
        self._val[slot] = value
        self._der[slot] = derivative

    def overwrite_latest(self, value: float, derivative: float) -> None:
        slot = self.latest % self.capacity
        self._val[slot] = value
        self._der[slot] = derivative

    @property
    def oldest(self) -> int:
        return max(0, self.latest - self.capacity + 1)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.latest < 0:
            raise ValueError("empty trace history")
        x = s / self.h
        j = np.floor(x).astype(int)
        if np.any(j < self.oldest) or np.any(x > self.latest + 1e-9):
            raise ValueError("trace history underflow/overflow")
        j = np.minimum(j, max(self.latest - 1, self.oldest))
        if self.latest == self.oldest:
            return np.full_like(s, self._val[self.latest % self.capacity])
        th = x - j
        a, b = j % self.capacity, (j + 1) % self.capacity
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        return (h00 * self._val[a] + h10 * self.h * self._der[a]
                + h01 * self._val[b] + h11 * self.h * self._der[b])
