"""Small value types for first and second moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CovarianceState:
    """Symmetrised second moments ``(V_xx, V_xp, V_pp)`` in SI units."""

    v_xx: float
    v_xp: float
    v_pp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_xx, self.v_xp, self.v_pp], dtype=float)

    @classmethod
    def from_array(cls, x) -> "CovarianceState":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), float(x[2]))

    @classmethod
    def zero(cls) -> "CovarianceState":
        return cls(0.0, 0.0, 0.0)

    @property
    def determinant(self) -> float:
        """``V_xx V_pp - V_xp**2``, conserved by undamped evolution."""
        return self.v_xx * self.v_pp - self.v_xp**2

    def __add__(self, other: "CovarianceState") -> "CovarianceState":
        return CovarianceState(
            self.v_xx + other.v_xx, self.v_xp + other.v_xp, self.v_pp + other.v_pp
        )


@dataclass(frozen=True)
class MeanState:
    """Mean position (m) and momentum (kg m/s)."""

    x_mean: float
    p_mean: float

    def __post_init__(self):
        if not (np.isfinite(self.x_mean) and np.isfinite(self.p_mean)):
            raise ValueError("mean state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_mean, self.p_mean], dtype=float)

    @classmethod
    def from_array(cls, y) -> "MeanState":
        y = np.asarray(y, dtype=float)
        return cls(float(y[0]), float(y[1]))
