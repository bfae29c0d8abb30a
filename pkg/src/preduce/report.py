from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Report):
        return value.to_dict()
    return value


@dataclass
class Report:
    """Outcome of a sampled check: verdict, worst residual and where it occurred."""

    name: str
    passed: bool
    worst_residual: float = 0.0
    witness: tuple[float, ...] | None = None
    details: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    skipped: bool = False

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "worst_residual": float(self.worst_residual),
            "witness": None if self.witness is None else [float(x) for x in self.witness],
            "details": _plain(self.details),
            "notes": list(self.notes),
        }


class Worst:
    """Running maximum of residuals with the point that produced it."""

    def __init__(self):
        self.value = 0.0
        self.witness: tuple[float, ...] | None = None

    def update(self, residual: float, point) -> None:
        residual = float(residual)
        if self.witness is None or not residual <= self.value:
            self.value = residual
            self.witness = tuple(float(x) for x in np.asarray(point, dtype=float).ravel())
