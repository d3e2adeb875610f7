"""Residual reports with a stable JSON shape."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class IdentityResidual:
    identity_name: str
    max_residual: float
    argmax_point: list[float]
    n_points: int
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual < self.tol)

    def to_dict(self) -> dict:
        return {
            "identity_name": self.identity_name,
            "max_residual": float(self.max_residual),
            "argmax_point": [float(v) for v in self.argmax_point],
            "n_points": int(self.n_points),
            "tol": float(self.tol),
            "pass": self.passed,
        }


@dataclass
class ResidualReport:
    """Per-identity maximum residuals over a sample of points."""

    example: str
    seed: int | None
    entries: list[IdentityResidual] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)

    def add(self, name: str, residuals, points, tol: float) -> IdentityResidual:
        residuals = np.atleast_1d(np.asarray(residuals, dtype=float))
        points = np.atleast_2d(points)
        if residuals.size == 0:
            entry = IdentityResidual(name, 0.0, [], 0, tol)
        else:
            bad = ~np.isfinite(residuals)
            i = int(np.argmax(bad)) if bad.any() else int(np.argmax(residuals))
            worst = float("inf") if bad.any() else float(residuals[i])
            entry = IdentityResidual(name, worst, points[i % len(points)].tolist(), len(points), tol)
        self.entries.append(entry)
        return entry

    def extend(self, other: "ResidualReport", prefix: str = "") -> None:
        for e in other.entries:
            self.entries.append(
                IdentityResidual(prefix + e.identity_name, e.max_residual, e.argmax_point, e.n_points, e.tol)
            )
        self.skipped.extend(other.skipped)
        self.diagnostics.extend({**d, "name": prefix + d["name"]} for d in other.diagnostics)

    def __getitem__(self, name: str) -> IdentityResidual:
        for e in self.entries:
            if e.identity_name == name:
                return e
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [e.identity_name for e in self.entries]

    @property
    def max_residual(self) -> float:
        return max((e.max_residual for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "example": self.example,
            "seed": self.seed,
            "pass": self.passed,
            "identities": [e.to_dict() for e in self.entries],
            "skipped": self.skipped,
            "meta": self.meta,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
