"""Closed-form reference trajectories and escape conditions.

Deliberately free of imports from the integrator and field modules, so that a
bug there cannot validate itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class OracleResult:
    value: float
    formula: str
    inputs: tuple


def free_gaussian_trajectory(X0, V0, t):
    """sqrt(1 + t^2) (X0 + V0 atan t) for the spreading packet (hbar = 2m = sigma = 1)."""
    return math.sqrt(1.0 + t * t) * (X0 + V0 * math.atan(t))


def coherent_trajectory(X0, V0, a, t):
    """X0 + V0 t + a (cos t - 1) in the coherent state of amplitude a (hbar = m = omega = 1)."""
    return X0 + V0 * t + a * (math.cos(t) - 1.0)


@dataclass(frozen=True)
class EscapeVerdict:
    escapes: bool
    crossing_time: float | None
    threshold: float


def free_gaussian_escape(X0, V0):
    """Whether X(t)/sigma(t) eventually exceeds 1, and when.

    X/sigma = X0 + V0 atan t rises monotonically to X0 + V0 pi/2, so the
    particle leaves the unit-width bulk iff V0 > 2 (1 - X0) / pi.
    """
    if not (0.0 <= X0 < 1.0 and V0 > 0.0):
        raise DomainError("escape criterion stated for 0 <= X0 < 1 and V0 > 0")
    threshold = 2.0 * (1.0 - X0) / math.pi
    if V0 > threshold:
        return EscapeVerdict(True, math.tan((1.0 - X0) / V0), threshold)
    return EscapeVerdict(False, None, threshold)


def coherent_oscillation_center(X0, a):
    return X0 - a


def table(kind, rows):
    """OracleResult per input row; ``kind`` is 'free', 'coherent' or 'escape'."""
    out = []
    for row in rows:
        row = tuple(float(v) for v in row)
        if kind == "free":
            out.append(OracleResult(free_gaussian_trajectory(*row), "free_gaussian_trajectory", row))
        elif kind == "coherent":
            out.append(OracleResult(coherent_trajectory(*row), "coherent_trajectory", row))
        elif kind == "escape":
            verdict = free_gaussian_escape(*row)
            value = verdict.crossing_time if verdict.escapes else math.inf
            out.append(OracleResult(value, "free_gaussian_escape", row))
        else:
            raise ValueError(f"unknown oracle {kind!r}")
    return out
