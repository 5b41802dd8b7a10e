"""Physical parameters, the square-wave schedule and initial conditions.

All quantities are SI unless ``unit_mode == "dimensionless"``, in which case
``hbar = M = omega = 1`` exactly and everything else is measured in those
units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

from .errors import DomainError
from .states import CovarianceState, MeanState

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J/K
G_NEWTON = 6.674e-11  # m^3 / (kg s^2)

UnitMode = Literal["SI", "dimensionless"]


def compute_omega_sn(G_newton: float, m_atom: float, delta_x_zp: float) -> float:
    """Self-gravity frequency of a crystal with Gaussian-smeared lattice sites.

    ``sqrt(G m / (6 sqrt(pi) dx**3))`` in rad/s.
    """
    if not (m_atom > 0 and delta_x_zp > 0 and G_newton > 0):
        raise DomainError(
            "compute_omega_sn needs G_newton > 0, m_atom > 0 and delta_x_zp > 0, "
            f"got G={G_newton!r}, m={m_atom!r}, dx={delta_x_zp!r}"
        )
    return math.sqrt(G_newton * m_atom / (6.0 * math.sqrt(math.pi) * delta_x_zp**3))


def schedule_times(alpha: float, beta: float, omega: float, gamma_m: float):
    """Segment durations ``(t1, t2, tau)`` of the square-wave modulation.

    Each segment lasts ``alpha`` radians of the damped oscillation at the
    segment frequency (``omega`` first, then ``beta * omega``).
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError(f"alpha and beta must be positive, got {alpha!r}, {beta!r}")
    r1 = omega**2 - gamma_m**2 / 4.0
    r2 = beta**2 * omega**2 - gamma_m**2 / 4.0
    if not r1 > 0:
        raise DomainError(
            f"segment 1 is overdamped: omega^2 - gamma^2/4 = {r1!r} <= 0"
        )
    if not r2 > 0:
        raise DomainError(
            f"segment 2 is overdamped: beta^2 omega^2 - gamma^2/4 = {r2!r} <= 0"
        )
    t1 = alpha / math.sqrt(r1)
    t2 = alpha / math.sqrt(r2)
    return t1, t2, t1 + t2


@dataclass(frozen=True)
class PhysicalParams:
    """Oscillator, bath and self-gravity parameters.

    ``omega_sn`` may be given directly; otherwise it is derived from
    ``m_atom`` and ``delta_x_zp``. A directly supplied value wins.
    """

    M: float
    omega: float
    gamma_m: float = 0.0
    T_bath: float = 0.0
    m_atom: Optional[float] = None
    delta_x_zp: Optional[float] = None
    omega_sn: Optional[float] = None
    hbar: float = HBAR
    k_B: float = K_B
    G_newton: float = G_NEWTON
    unit_mode: UnitMode = "SI"

    def __post_init__(self):
        if self.unit_mode not in ("SI", "dimensionless"):
            raise DomainError(f"unknown unit_mode {self.unit_mode!r}")
        for name in ("M", "omega"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("gamma_m", "T_bath", "hbar", "k_B", "G_newton"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")
        if self.unit_mode == "dimensionless" and not (
            self.hbar == 1.0 and self.M == 1.0 and self.omega == 1.0
        ):
            raise DomainError("dimensionless mode requires hbar = M = omega = 1")
        if not self.omega**2 > self.gamma_m**2 / 4.0:
            raise DomainError(
                f"oscillator is not underdamped: omega={self.omega!r}, gamma_m={self.gamma_m!r}"
            )
        if self.omega_sn is None:
            missing = [n for n in ("m_atom", "delta_x_zp") if getattr(self, n) is None]
            if missing:
                raise DomainError(
                    "omega_sn is not given and cannot be derived; missing "
                    + ", ".join(["omega_sn"] + missing)
                )
            object.__setattr__(
                self, "omega_sn", compute_omega_sn(self.G_newton, self.m_atom, self.delta_x_zp)
            )
        elif not (math.isfinite(self.omega_sn) and self.omega_sn >= 0):
            raise DomainError(f"omega_sn must be finite and >= 0, got {self.omega_sn!r}")
        for name in ("m_atom", "delta_x_zp"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be > 0 when given, got {v!r}")

    def with_omega_sn(self, omega_sn: float) -> "PhysicalParams":
        return replace(self, omega_sn=float(omega_sn))

    def without_sn(self) -> "PhysicalParams":
        return replace(self, omega_sn=0.0)

    def ground_state(self) -> CovarianceState:
        """Ground-state covariance of the unmodulated trap at ``omega``."""
        return CovarianceState(
            self.hbar / (2 * self.M * self.omega), 0.0, self.hbar * self.M * self.omega / 2
        )

    def thermal_variance(self, omega_eff: Optional[float] = None) -> float:
        """``k_B T / (M omega^2)``, the classical equilibrium position variance."""
        w = self.omega if omega_eff is None else omega_eff
        return self.k_B * self.T_bath / (self.M * w**2)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "omega": self.omega,
            "gamma_m": self.gamma_m,
            "T_bath": self.T_bath,
            "m_atom": self.m_atom,
            "delta_x_zp": self.delta_x_zp,
            "omega_sn": self.omega_sn,
            "hbar": self.hbar,
            "k_B": self.k_B,
            "G_newton": self.G_newton,
            "unit_mode": self.unit_mode,
        }

    @classmethod
    def dimensionless(cls, omega_sn: float = 0.0, gamma_m: float = 0.0, T_bath: float = 0.0, k_B: float = 1.0):
        return cls(
            M=1.0, omega=1.0, hbar=1.0, gamma_m=gamma_m, T_bath=T_bath,
            k_B=k_B, omega_sn=omega_sn, unit_mode="dimensionless",
        )


def reference_params() -> PhysicalParams:
    """Magnetically levitated millimetre ferromagnet at 10 K.

    ``omega_sn`` is derived from the atomic mass and zero-point spread
    (about 0.117 rad/s, often rounded to 0.12).
    """
    return PhysicalParams(
        M=1e-5,
        omega=5 * 2 * math.pi,
        gamma_m=1e-1,
        T_bath=10.0,
        m_atom=9.3e-26,
        delta_x_zp=3.5e-12,
    )


@dataclass(frozen=True)
class ModulationSchedule:
    alpha: float
    beta: float
    t1: float
    t2: float
    tau: float

    @classmethod
    def for_params(cls, alpha: float, beta: float, params: PhysicalParams) -> "ModulationSchedule":
        t1, t2, tau = schedule_times(alpha, beta, params.omega, params.gamma_m)
        return cls(float(alpha), float(beta), t1, t2, tau)

    def segment_omega(self, params: PhysicalParams, segment: int) -> float:
        """Trap frequency during ``segment`` (1 or 2)."""
        if segment == 1:
            return params.omega
        if segment == 2:
            return self.beta * params.omega
        raise ValueError(f"segment must be 1 or 2, got {segment!r}")

    def segment_duration(self, segment: int) -> float:
        if segment == 1:
            return self.t1
        if segment == 2:
            return self.t2
        raise ValueError(f"segment must be 1 or 2, got {segment!r}")


@dataclass(frozen=True)
class InitialConditions:
    mean0: MeanState = field(default_factory=lambda: MeanState(0.0, 0.0))
    cov0: Optional[CovarianceState] = None
    trap_halfwidth: float = 1e-3

    def __post_init__(self):
        if not self.trap_halfwidth > 0:
            raise DomainError("trap_halfwidth must be > 0")

    def covariance(self, params: PhysicalParams) -> CovarianceState:
        """Initial covariance; the ground state of ``params`` when unset.

        Raises :class:`DomainError` if the state violates the uncertainty
        relation.
        """
        cov = params.ground_state() if self.cov0 is None else self.cov0
        check_physical_covariance(cov, params.hbar)
        return cov


def check_physical_covariance(cov: CovarianceState, hbar: float, rtol: float = 1e-12) -> None:
    if cov.v_xx < 0 or cov.v_pp < 0:
        raise DomainError(f"variances must be non-negative: {cov}")
    bound = hbar**2 / 4
    if cov.determinant < bound * (1 - rtol):
        raise DomainError(
            f"covariance violates the uncertainty relation: det={cov.determinant!r} < {bound!r}"
        )
