"""Deterministic mean motion under the modulated trap.

The self-gravity force cancels on the centre of mass, so nothing here depends
on ``omega_sn``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._csv import write_rows
from .params import ModulationSchedule, PhysicalParams
from .propagator import DEFAULT_SUBSTEPS, expm
from .states import MeanState

MEAN_CSV_COLUMNS = ("t", "x_mean", "p_mean", "envelope")


def build_A(M: float, omega_eff: float, gamma_m: float) -> np.ndarray:
    """Generator of ``d/dt (<x>, <p>)`` at constant frequency."""
    return np.array([[0.0, 1.0 / M], [-M * omega_eff**2, -gamma_m]])


def _segment_maps(params: PhysicalParams, schedule: ModulationSchedule, segment: int, durations):
    s = np.array([1.0, params.M * params.omega])
    A = build_A(params.M, schedule.segment_omega(params, segment), params.gamma_m)
    As = A * s[None, :] / s[:, None]
    durations = np.atleast_1d(np.asarray(durations, dtype=float))
    E = expm(As[None] * durations[:, None, None])
    return E * s[None, :, None] / s[None, None, :]


def first_moment_cycle(params: PhysicalParams, schedule: ModulationSchedule) -> np.ndarray:
    """Per-cycle linear map on the mean, segment 2 after segment 1."""
    E1 = _segment_maps(params, schedule, 1, [schedule.t1])[0]
    E2 = _segment_maps(params, schedule, 2, [schedule.t2])[0]
    return E2 @ E1


def analytic_eigenvalues_gamma0(alpha: float, beta: float):
    """Closed-form eigenvalues of the undamped mean monodromy.

    They depend only on ``alpha`` and ``beta``. The square root is taken in
    the complex plane, so inside stability bands the pair lies on the unit
    circle.
    """
    c2 = math.cos(2 * alpha)
    root = np.sqrt(complex(-2 * (beta + 1) ** 2 * c2 + 2 * (beta - 6) * beta + 2))
    abs_sin = abs(math.sin(alpha))
    lam1 = (
        -2 * (beta**2 + 1) * math.sin(alpha) ** 2
        + 4 * beta * math.cos(alpha) ** 2
        + (beta + 1) * root * abs_sin
    ) / (4 * beta)
    lam2 = -(-((beta + 1) ** 2) * c2 + (beta + 1) * root * abs_sin + (beta - 1) ** 2) / (4 * beta)
    return complex(lam1), complex(lam2)


@dataclass(frozen=True, eq=False)
class MeanSeries:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray

    @property
    def envelope_flag(self) -> np.ndarray:
        """True at local maxima of ``|x|``."""
        a = np.abs(self.x)
        flag = np.zeros(len(a), dtype=bool)
        if len(a) >= 3:
            flag[1:-1] = (a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])
        return flag

    def write_csv(self, path) -> None:
        flag = self.envelope_flag
        rows = (
            [float(t), float(x), float(p), int(f)]
            for t, x, p, f in zip(self.t, self.x, self.p, flag)
        )
        write_rows(path, MEAN_CSV_COLUMNS, rows)


class _CycleSampler:
    """Sample the mean inside one cycle from its starting state."""

    def __init__(self, params, schedule, substeps):
        ns = int(substeps)
        if ns < 1:
            raise ValueError("substeps must be >= 1")
        k = np.arange(1, ns + 1)
        self.ns = ns
        self.schedule = schedule
        self.m1 = _segment_maps(params, schedule, 1, schedule.t1 * k / ns)
        self.m2 = _segment_maps(params, schedule, 2, schedule.t2 * k / ns)
        self.full1 = _segment_maps(params, schedule, 1, [schedule.t1])[0]
        self.full2 = _segment_maps(params, schedule, 2, [schedule.t2])[0]
        self.offsets = np.concatenate([schedule.t1 * k / ns, schedule.t1 + schedule.t2 * k / ns])
        self.offsets[ns - 1] = schedule.t1
        self.offsets[-1] = schedule.tau

    def cycle(self, y):
        """Samples within the cycle starting at ``y`` and the next start."""
        mid = self.full1 @ y
        nxt = self.full2 @ mid
        s1 = self.m1 @ y
        s2 = self.m2 @ mid
        s1[-1] = mid
        s2[-1] = nxt
        return np.concatenate([s1, s2]), nxt


def mean_trajectory(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    mean0: MeanState,
    n_cycles: int,
    substeps: int = DEFAULT_SUBSTEPS,
) -> MeanSeries:
    sampler = _CycleSampler(params, schedule, substeps)
    y = mean0.as_array()
    ts, xs = [np.zeros(1)], [y[None, :]]
    for n in range(int(n_cycles)):
        samples, y = sampler.cycle(y)
        ts.append(n * schedule.tau + sampler.offsets)
        xs.append(samples)
    t = np.concatenate(ts)
    Y = np.concatenate(xs)
    return MeanSeries(t, Y[:, 0], Y[:, 1])


def trap_exit_time(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    mean0: MeanState,
    trap_halfwidth: float,
    t_max: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> Optional[float]:
    """First sample time with ``|<x>| > trap_halfwidth``; ``None`` if the mean
    stays confined up to ``t_max``."""
    if not trap_halfwidth > 0:
        raise ValueError("trap_halfwidth must be > 0")
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    y = mean0.as_array()
    if abs(y[0]) > trap_halfwidth:
        return 0.0
    sampler = _CycleSampler(params, schedule, substeps)
    n = 0
    while n * schedule.tau < t_max:
        samples, y_next = sampler.cycle(y)
        times = n * schedule.tau + sampler.offsets
        hit = np.flatnonzero((np.abs(samples[:, 0]) > trap_halfwidth) & (times <= t_max))
        if hit.size:
            return float(times[hit[0]])
        y = y_next
        n += 1
    return None
