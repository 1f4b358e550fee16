"""Two-variable kernels ``b(z, s)`` on the unit square.

Kernels come either from a small catalog of closed-form expressions or from a
table of values on a uniform grid (bilinear interpolation).  The modelling
requirement that the kernel be C^1 is not enforced for tables; a coarse table
is only piecewise linear.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_CATALOG: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "zero": lambda z, s: np.zeros(np.broadcast(z, s).shape),
    "one": lambda z, s: np.ones(np.broadcast(z, s).shape),
    "exp_minus_z": lambda z, s: np.exp(-z) + 0.0 * s,
    "one_minus_z": lambda z, s: (1.0 - z) + 0.0 * s,
    "one_minus_s": lambda z, s: (1.0 - s) + 0.0 * z,
    "z_times_s": lambda z, s: z * s,
    "cos_pi_z_s": lambda z, s: np.cos(np.pi * z * s),
    "gaussian": lambda z, s: np.exp(-8.0 * ((z - 0.5) ** 2 + (s - 0.5) ** 2)),
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


@dataclass(frozen=True)
class Kernel:
    """A kernel on [0,1]^2, either a catalog expression or a uniform table.

    ``scale`` multiplies the catalog expression; tables carry their own values.
    """

    kind: str = "expr"
    name: str = "zero"
    scale: float = 1.0
    values: tuple[float, ...] = field(default=(), repr=False)
    grid_n: int = 0

    def __post_init__(self):
        if self.kind == "expr":
            if self.name not in _CATALOG:
                raise ValueError(f"unknown kernel expression {self.name!r}; "
                                 f"known: {', '.join(catalog_names())}")
            if not np.isfinite(self.scale):
                raise ValueError("kernel scale must be finite")
        elif self.kind == "table":
            if self.grid_n < 2 or len(self.values) != self.grid_n ** 2:
                raise ValueError("table kernel needs grid_n >= 2 and grid_n**2 values")
            if not np.all(np.isfinite(self.values)):
                raise ValueError("table kernel values must be finite")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def expr(cls, name: str, scale: float = 1.0) -> "Kernel":
        return cls(kind="expr", name=name, scale=float(scale))

    @classmethod
    def table(cls, values) -> "Kernel":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("table kernel must be a square 2-D array")
        return cls(kind="table", name="table", values=tuple(arr.ravel()),
                   grid_n=arr.shape[0])

    @classmethod
    def from_callable_table(cls, fn, grid_n: int = 65) -> "Kernel":
        """Tabulate ``fn(z, s)`` on a ``grid_n`` x ``grid_n`` uniform grid."""
        x = np.linspace(0.0, 1.0, grid_n)
        Z, S = np.meshgrid(x, x, indexing="ij")
        return cls.table(fn(Z, S))

    @property
    def is_zero(self) -> bool:
        if self.kind == "expr":
            return self.name == "zero" or self.scale == 0.0
        return not np.any(self.values)

    def __call__(self, z, s):
        z = np.asarray(z, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.kind == "expr":
            return self.scale * _CATALOG[self.name](z, s)
        n = self.grid_n
        tab = np.asarray(self.values).reshape(n, n)
        # bilinear interpolation, row index <-> z
        x = np.clip(z, 0.0, 1.0) * (n - 1)
        y = np.clip(s, 0.0, 1.0) * (n - 1)
        i = np.minimum(np.floor(x).astype(int), n - 2)
        j = np.minimum(np.floor(y).astype(int), n - 2)
        fx = x - i
        fy = y - j
        return ((1 - fx) * (1 - fy) * tab[i, j] + fx * (1 - fy) * tab[i + 1, j]
                + (1 - fx) * fy * tab[i, j + 1] + fx * fy * tab[i + 1, j + 1])

    def times(self, factor: Callable[[np.ndarray], np.ndarray]) -> "ScaledKernel":
        """Kernel ``factor(z) * self(z, s)``."""
        return ScaledKernel(self, factor)

    def to_json(self) -> dict:
        if self.kind == "expr":
            out = {"kind": "expr", "name": self.name}
            if self.scale != 1.0:
                out["scale"] = self.scale
            return out
        return {"kind": "table", "grid_n": self.grid_n, "values": list(self.values)}

    @classmethod
    def from_json(cls, doc: dict) -> "Kernel":
        kind = doc.get("kind")
        if kind == "expr":
            return cls.expr(doc["name"], doc.get("scale", 1.0))
        if kind == "table":
            n = int(doc["grid_n"])
            vals = [float(v) for v in doc["values"]]
            if len(vals) != n * n:
                raise ValueError(f"table kernel: expected {n * n} values, got {len(vals)}")
            return cls(kind="table", name="table", values=tuple(vals), grid_n=n)
        raise ValueError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class ScaledKernel:
    """``factor(z) * base(z, s)``; produced by the backstepping coordinate change."""

    base: Kernel
    factor: Callable[[np.ndarray], np.ndarray]

    @property
    def is_zero(self) -> bool:
        return self.base.is_zero

    def __call__(self, z, s):
        z = np.asarray(z, dtype=float)
        return self.factor(z) * self.base(z, s)

    def to_json(self) -> dict:
        raise TypeError("derived kernels are not serialisable; serialise the source model")
