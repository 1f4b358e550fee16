from __future__ import annotations

import math
from dataclasses import dataclass, field

CONDITION_IDS = ("A-2.7", "KV-2.11", "B-2.19", "B-2.21", "EX-2.28", "H4", "SG-L")


@dataclass(frozen=True)
class Certificate:
    """An evaluated strict inequality ``lhs < rhs``.

    ``passed`` is always ``margin > 0``; witnesses record the free constants
    (theta, omega, epsilon, zeta) the condition was evaluated at.
    """

    condition_id: str
    lhs: float
    rhs: float
    witnesses: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.condition_id not in CONDITION_IDS:
            raise ValueError(f"unknown condition id {self.condition_id!r}")

    @property
    def margin(self) -> float:
        if math.isinf(self.lhs) and math.isinf(self.rhs):
            return -math.inf
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin > 0.0

    def to_json(self) -> dict:
        w = {k: self.witnesses.get(k) for k in ("theta", "omega", "epsilon", "zeta")}
        w.update({k: v for k, v in self.witnesses.items() if k not in w})
        out = {
            "condition_id": self.condition_id,
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "margin": _num(self.margin),
            "witnesses": {k: _num(v) for k, v in w.items()},
            "pass": self.passed,
            "notes": list(self.notes),
        }
        if self.details:
            out["details"] = {k: _num(v) for k, v in self.details.items()}
        return out


def _num(v):
    """JSON-safe float: infinities and NaN become strings."""
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, (int, float)):
        v = float(v)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v
