"""Quintic smoothstep and the ramps built from it."""
from __future__ import annotations

import numpy as np

__all__ = ["smoothstep", "falling_ramp", "rising_ramp"]


def smoothstep(x, deriv: int = 0):
    """``6x^5 - 15x^4 + 10x^3`` clamped to [0, 1], or its first/second derivative."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if deriv == 0:
        return x**3 * (10 - 15 * x + 6 * x**2)
    if deriv == 1:
        return 30 * x**2 * (1 - x) ** 2
    if deriv == 2:
        return 60 * x * (1 - x) * (1 - 2 * x)
    raise ValueError("deriv must be 0, 1 or 2")


def falling_ramp(s, a: float, b: float, deriv: int = 0):
    """1 on ``s <= a``, 0 on ``s >= b``, C^2 in between."""
    w = b - a
    x = (np.asarray(s, dtype=float) - a) / w
    if deriv == 0:
        return 1.0 - smoothstep(x)
    return -smoothstep(x, deriv) / w**deriv


def rising_ramp(s, a: float, b: float, deriv: int = 0):
    """0 on ``s <= a``, 1 on ``s >= b``."""
    w = b - a
    x = (np.asarray(s, dtype=float) - a) / w
    return smoothstep(x, deriv) / w**deriv
