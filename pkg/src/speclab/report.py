"""Uniform pass/fail records for bound checks, plus stable CSV/JSON writers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one quantitative check: lhs <= rhs up to the stated slack."""

    check: str
    lhs: float
    rhs: float
    passed: bool
    params: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "passed": bool(self.passed),
            "params": _plain(self.params),
        }

    def __str__(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.check}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} margin={self.margin:.6g}"


def bound_report(check: str, lhs: float, rhs: float, slack: float = 0.0, **params) -> VerificationReport:
    return VerificationReport(
        check=check,
        lhs=float(lhs),
        rhs=float(rhs),
        passed=bool(lhs <= rhs + slack),
        params=params,
    )


def _plain(obj):
    """Coerce numpy scalars and arrays into JSON-friendly plain Python."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def format_float(x: float) -> str:
    """Canonical shortest-roundtrip float text, used for byte-stable CSV output."""
    return repr(float(x))


def write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    """Plain CSV writer with canonical float formatting and fixed row order."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(format_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
