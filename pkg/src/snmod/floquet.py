"""Monodromy eigenvalues, stability classification and periodic fixed points."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NoFixedPointError
from .states import CovarianceState

TOL_UNIT = 1e-9
TOL_EQ = 1e-8
TOL_RANK = 1e-8


class Stability(str, enum.Enum):
    STABLE = "Stable"
    MARGINAL = "Marginal"
    UNSTABLE = "Unstable"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Stability":
        return _FROM_CODE[int(code)]


_CODES = {Stability.STABLE: 0, Stability.MARGINAL: 1, Stability.UNSTABLE: 2}
_FROM_CODE = {v: k for k, v in _CODES.items()}


@dataclass(frozen=True, eq=False)
class StabilityReport:
    eigenvalues: np.ndarray
    moduli: np.ndarray
    classification: Stability
    semisimple_boundary: bool
    spectral_radius: float

    def to_json(self) -> dict:
        return {
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "moduli": [float(m) for m in self.moduli],
            "classification": self.classification.value,
            "semisimple_boundary": bool(self.semisimple_boundary),
            "spectral_radius": float(self.spectral_radius),
        }


def _pair_conjugates(vals: np.ndarray) -> np.ndarray:
    # last axis holds the spectrum of one real matrix
    vals = np.array(vals, dtype=complex)
    scale = np.maximum(np.abs(vals).max(axis=-1, keepdims=True), 1.0)
    tiny = np.abs(vals.imag) <= 1e-14 * scale
    vals = np.where(tiny, vals.real + 0j, vals)
    flat = vals.reshape(-1, vals.shape[-1])
    for row in flat:
        used = np.zeros(len(row), dtype=bool)
        for i in range(len(row)):
            if used[i] or row[i].imag <= 0:
                continue
            cands = [j for j in range(len(row)) if not used[j] and j != i and row[j].imag < 0]
            if not cands:
                continue
            j = min(cands, key=lambda j: abs(row[j] - np.conj(row[i])))
            v = 0.5 * (row[i] + np.conj(row[j]))
            row[i], row[j] = v, np.conj(v)
            used[i] = used[j] = True
    return flat.reshape(vals.shape)


def eigenvalues_3x3(matrix) -> np.ndarray:
    """Eigenvalues of a real square matrix (n <= 4), conjugate pairs exact.

    Accepts a stack of matrices along leading axes.
    """
    A = np.asarray(matrix, dtype=float)
    return _pair_conjugates(np.linalg.eigvals(A))


def classify_codes(monodromies, tol_unit: float = TOL_UNIT) -> np.ndarray:
    """Vectorised three-way classification of a stack of monodromies."""
    rho = np.abs(np.linalg.eigvals(np.asarray(monodromies, dtype=float))).max(axis=-1)
    codes = np.full(rho.shape, Stability.MARGINAL.code, dtype=np.int8)
    codes[rho > 1 + tol_unit] = Stability.UNSTABLE.code
    codes[rho < 1 - tol_unit] = Stability.STABLE.code
    return codes


def _semisimple(A: np.ndarray, vals: np.ndarray, idx, tol_eq: float, tol_rank: float) -> bool:
    n = A.shape[0]
    normA = max(np.linalg.norm(A, 2), 1e-300)
    for i in idx:
        v = vals[i]
        alg = int(np.sum(np.abs(vals - v) <= tol_eq * max(1.0, abs(v))))
        sv = np.linalg.svd(A - v * np.eye(n), compute_uv=False)
        geo = int(np.sum(sv <= tol_rank * normA))
        if geo != alg:
            return False
    return True


def classify_stability(
    monodromy,
    tol_unit: float = TOL_UNIT,
    tol_eq: float = TOL_EQ,
    tol_rank: float = TOL_RANK,
) -> StabilityReport:
    """Stable if the spectral radius is below one, Unstable if above.

    Within ``tol_unit`` of the unit circle the result is Marginal and
    ``semisimple_boundary`` tells whether every unit-modulus eigenvalue has
    equal algebraic and geometric multiplicity. Away from the boundary it is
    vacuously true.
    """
    A = np.asarray(monodromy, dtype=float)
    vals = eigenvalues_3x3(A)
    mods = np.abs(vals)
    rho = float(mods.max())
    if rho > 1 + tol_unit:
        cls = Stability.UNSTABLE
    elif rho < 1 - tol_unit:
        cls = Stability.STABLE
    else:
        cls = Stability.MARGINAL
    on_circle = np.flatnonzero(np.abs(mods - 1) <= tol_unit)
    semisimple = _semisimple(A, vals, on_circle, tol_eq, tol_rank)
    return StabilityReport(vals, mods, cls, semisimple, rho)


def _matrix_of(cycle):
    return np.asarray(getattr(cycle, "matrix_M", cycle), dtype=float)


def fixed_point_covariance(cycle, tol_unit: float = TOL_UNIT):
    """Periodic steady state ``(I - M)^-1 d`` of the per-cycle affine map.

    Returns a :class:`~snmod.states.CovarianceState` for 3-component maps and
    a plain array otherwise.
    """
    M = _matrix_of(cycle)
    report = classify_stability(M, tol_unit=tol_unit)
    if report.classification is not Stability.STABLE:
        raise NoFixedPointError(
            f"cycle map is not a strict contraction (spectral radius {report.spectral_radius:.12g})",
            report,
        )
    x = np.linalg.solve(np.eye(M.shape[0]) - M, np.asarray(cycle.drive_d, dtype=float))
    return CovarianceState.from_array(x) if x.shape == (3,) else x


def neumann_partial_sum(cycle, n: int) -> np.ndarray:
    """``sum_{j=1}^{n} M^j`` by accumulating successive powers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = _matrix_of(cycle)
    power = X.copy()
    total = X.copy()
    for _ in range(n - 1):
        power = power @ X
        total += power
    return total
