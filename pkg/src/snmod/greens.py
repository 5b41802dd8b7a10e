"""Green's functions of the damped oscillator on one constant-frequency segment.

Used as an independent route to the noise-induced covariance of the mean.
The momentum response is ``M * dG/dt`` because ``p = M dx/dt``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureError
from .params import PhysicalParams


@dataclass(frozen=True)
class GreensPair:
    M: float
    omega: float
    gamma_m: float

    @property
    def rates(self):
        """``(Gamma_+, Gamma_-)`` as complex numbers."""
        r = np.sqrt(complex(self.gamma_m**2 - 4 * self.omega**2))
        return -self.gamma_m / 2 + r / 2, -self.gamma_m / 2 - r / 2

    def __call__(self, t):
        """``(G1, G2, dG1/dt, dG2/dt)`` at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        g, M = self.gamma_m, self.M
        r = np.sqrt(complex(g**2 - 4 * self.omega**2))
        gp, gm = self.rates
        ep, em = np.exp(gp * t), np.exp(gm * t)
        G1 = (g * (ep - em) + r * (ep + em)) / (2 * r)
        G2 = (ep - em) / (M * r)
        dG1 = (g * (gp * ep - gm * em) + r * (gp * ep + gm * em)) / (2 * r)
        dG2 = (gp * ep - gm * em) / (M * r)
        # magnitude bounds of each expression, for the cancellation check
        a = np.abs(ep) + np.abs(em)
        ar, ag = abs(r), abs(gp) + abs(gm)
        bounds = (
            (g + ar) * a / (2 * ar),
            a / (M * ar),
            (g + ar) * ag * a / (2 * ar),
            ag * a / (M * ar),
        )
        out = []
        for z, b in zip((G1, G2, dG1, dG2), bounds):
            if np.any(np.abs(z.imag) > 1e-12 * b):
                raise ArithmeticError("Green's function has a non-negligible imaginary part")
            out.append(z.real)
        return tuple(out)


def eval_greens(params: PhysicalParams, omega_seg: float, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return GreensPair(params.M, omega_seg, params.gamma_m)(t)


def thermal_integrals(params: PhysicalParams, omega_seg: float, t: float, rtol: float = 1e-12):
    """Covariance of the mean accumulated from rest over ``[0, t]``.

    ``(I_xx, I_xp, I_pp)`` with the response functions ``G2`` and ``M dG2/dt``
    integrated by adaptive quadrature.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    strength = 2 * params.M * params.gamma_m * params.k_B * params.T_bath
    if t == 0 or strength == 0:
        return 0.0, 0.0, 0.0
    gp = GreensPair(params.M, omega_seg, params.gamma_m)
    M = params.M

    def g2(s):
        return gp(s)[1]

    def pdot(s):
        return M * gp(s)[3]

    # natural magnitudes, for absolute tolerances
    var_x = params.k_B * params.T_bath / (M * omega_seg**2)
    scales = (var_x, var_x * M * omega_seg, var_x * (M * omega_seg) ** 2)
    integrands = (
        lambda s: g2(s) ** 2,
        lambda s: g2(s) * pdot(s),
        lambda s: pdot(s) ** 2,
    )
    n_osc = omega_seg * t / np.pi
    limit = int(max(200, 50 * n_osc))
    out = []
    for f, sc in zip(integrands, scales):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(
                    f, 0.0, t, epsabs=1e-12 * sc / strength, epsrel=rtol, limit=limit
                )
            except integrate.IntegrationWarning as exc:
                val, err = integrate.quad(f, 0.0, t, limit=limit)
                raise QuadratureError(f"quadrature did not converge: {exc}", strength * val) from exc
        if err > max(1e-12 * sc / strength, 10 * rtol * abs(val)):
            raise QuadratureError("quadrature error estimate above tolerance", strength * val)
        out.append(strength * val)
    return tuple(out)
