"""Experiment drivers built on the propagators.

Envelopes of the position variance, the with/without self-gravity difference,
its asymptotic value, (alpha, beta) stability maps and the validity monitor.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._csv import write_rows
from .errors import NoFixedPointError
from .floquet import Stability, classify_codes, classify_stability, fixed_point_covariance
from .params import InitialConditions, ModulationSchedule, PhysicalParams
from .propagator import (
    DEFAULT_SUBSTEPS,
    FTerms,
    MomentSeries,
    SecondMomentSystem,
    cycle_map,
    expm,
    induced_action,
    mean_generators,
    propagate_second_moments,
)

INVALID_CELL = -1
DEFAULT_ALPHA_RANGE = (0.05, math.pi)
DEFAULT_BETA_RANGE = (0.25, 4.0)
DEFAULT_RESOLUTION = 400
MAP_CHUNK = 8192
DELTA_CSV_COLUMNS = ("t", "v_xx_total_0", "v_xx_total_sn", "env_0", "env_sn", "delta_v_xx", "delta_env")


# -- envelopes ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvelopeSeries:
    """Upper envelope through the local maxima, linearly interpolated.

    Before the first maximum the envelope equals the first maximum, after the
    last it equals the last.
    """

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def extract_envelope(t, v) -> EnvelopeSeries:
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(v) < 3:
        raise ValueError("series too short or monotone")
    starts = np.r_[0, np.flatnonzero(np.diff(v) != 0) + 1]
    vals = v[starts]
    if len(starts) == 1:
        return EnvelopeSeries(t[:1].copy(), v[:1].copy())
    inner = np.arange(1, len(starts) - 1)
    is_max = (vals[inner] > vals[inner - 1]) & (vals[inner] > vals[inner + 1])
    idx = starts[inner[is_max]]
    if idx.size == 0:
        raise ValueError("series too short or monotone")
    return EnvelopeSeries(t[idx], v[idx])


def envelope_or_series(t, v):
    """Envelope of ``v``, or ``v`` itself when it does not oscillate.

    Returns ``(values_on_t, oscillating)``.
    """
    try:
        return extract_envelope(t, v)(t), True
    except ValueError:
        return np.asarray(v, dtype=float).copy(), False


def oscillation_frequency(t, v) -> float:
    """Angular frequency of the dominant oscillation in a uniformly sampled
    series: periodogram peak refined by a sinusoid least-squares fit."""
    from scipy.optimize import least_squares

    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    dt = t[1] - t[0]
    y = v - v.mean()
    n = len(y)
    pad = 8 * n
    spec = np.abs(np.fft.rfft(y * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, dt) * 2 * np.pi
    k = int(np.argmax(spec[1:]) + 1)
    w0 = freqs[k]

    def resid(q):
        a, b, c, w = q
        return a + b * np.cos(w * t) + c * np.sin(w * t) - v

    def fit_lin(w):
        X = np.stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)], axis=1)
        return np.linalg.lstsq(X, v, rcond=None)[0]

    a, b, c = fit_lin(w0)
    scale = max(np.abs(y).max(), 1e-300)
    sol = least_squares(lambda q: resid(q) / scale, [a, b, c, w0], x_scale=[scale, scale, scale, w0])
    return float(sol.x[3])


# -- with/without self-gravity -----------------------------------------------


@dataclass(frozen=True, eq=False)
class DeltaEnvelope:
    """Envelopes of ``V_xx`` without (``0``) and with (``sn``) self-gravity
    on the common sample grid ``t``, and ``delta = env0 - env_sn``."""

    t: np.ndarray
    series0: MomentSeries
    series_sn: MomentSeries
    env0: np.ndarray
    env_sn: np.ndarray
    oscillating: tuple = (True, True)

    @property
    def delta(self) -> np.ndarray:
        return self.env0 - self.env_sn

    @property
    def delta_raw(self) -> np.ndarray:
        n = min(len(self.series0.t), len(self.series_sn.t))
        return self.series0.v_xx_total[:n] - self.series_sn.v_xx_total[:n]

    def write_csv(self, path) -> None:
        n = len(self.t)
        v0 = self.series0.v_xx_total[:n]
        vs = self.series_sn.v_xx_total[:n]
        rows = (
            [float(a), float(b), float(c), float(d), float(e), float(b - c), float(d - e)]
            for a, b, c, d, e in zip(self.t, v0, vs, self.env0, self.env_sn)
        )
        write_rows(path, DELTA_CSV_COLUMNS, rows)


def run_pair(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    n_cycles: int,
    initial: Optional[InitialConditions] = None,
    substeps: int = DEFAULT_SUBSTEPS,
    f_terms: FTerms = "neglected",
):
    """The same schedule and initial state, without and with self-gravity."""
    initial = initial or InitialConditions()
    sys0 = SecondMomentSystem.pure(initial.covariance(params))
    s0 = propagate_second_moments(sys0, params, schedule, False, n_cycles, substeps, f_terms)
    s1 = propagate_second_moments(sys0, params, schedule, True, n_cycles, substeps, f_terms)
    return s0, s1


def delta_envelope(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    n_cycles: int,
    initial: Optional[InitialConditions] = None,
    substeps: int = DEFAULT_SUBSTEPS,
    f_terms: FTerms = "neglected",
) -> DeltaEnvelope:
    s0, s1 = run_pair(params, schedule, n_cycles, initial, substeps, f_terms)
    n = min(len(s0.t), len(s1.t))
    t = s0.t[:n]
    e0, osc0 = envelope_or_series(t, s0.v_xx_total[:n])
    e1, osc1 = envelope_or_series(t, s1.v_xx_total[:n])
    return DeltaEnvelope(t, s0, s1, e0, e1, (osc0, osc1))


def cycles_for_duration(schedule: ModulationSchedule, t_end: float) -> int:
    return int(math.ceil(t_end / schedule.tau - 1e-9))


# -- asymptotic difference ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class AsymptoticDelta:
    delta: float
    env0: float
    env_sn: float
    fixed0: SecondMomentSystem
    fixed_sn: SecondMomentSystem
    reports: dict = field(default_factory=dict)


def _fixed_system(params, schedule, include_sn, f_terms):
    reports = {}
    states = {}
    for block in ("quantum", "classical"):
        cyc = cycle_map(params, schedule, block, include_sn, f_terms)
        reports[block] = classify_stability(cyc.matrix_M)
        states[block] = fixed_point_covariance(cyc)
    return SecondMomentSystem(states["quantum"], states["classical"]), reports


def fixed_point_envelope(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    include_sn: bool,
    f_terms: FTerms = "neglected",
    substeps: int = DEFAULT_SUBSTEPS,
):
    """Maximum of ``V_xx`` over one period of the periodic steady state."""
    system, reports = _fixed_system(params, schedule, include_sn, f_terms)
    one = propagate_second_moments(system, params, schedule, include_sn, 1, substeps, f_terms)
    return float(one.v_xx_total.max()), system, reports


def asymptotic_delta(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    f_terms: FTerms = "neglected",
    substeps: int = DEFAULT_SUBSTEPS,
) -> AsymptoticDelta:
    """Difference of the steady-state envelopes without and with self-gravity.

    Raises :class:`NoFixedPointError` carrying the cycle-map reports of both
    variants when either is not strictly stable.
    """
    reports = {}
    for label, sn in (("no_sn", False), ("sn", True)):
        for block in ("quantum", "classical"):
            cyc = cycle_map(params, schedule, block, sn, f_terms)
            reports[(label, block)] = classify_stability(cyc.matrix_M)
    if any(r.classification is not Stability.STABLE for r in reports.values()):
        raise NoFixedPointError("both variants must be strictly stable", reports)
    e0, f0, _ = fixed_point_envelope(params, schedule, False, f_terms, substeps)
    e1, f1, _ = fixed_point_envelope(params, schedule, True, f_terms, substeps)
    return AsymptoticDelta(e0 - e1, e0, e1, f0, f1, reports)


# -- stability maps ----------------------------------------------------------


def monodromy_batch(params: PhysicalParams, alphas, betas, omega_sn: float):
    """Homogeneous quantum-block cycle maps for arrays of ``(alpha, beta)``.

    Returns ``(maps, valid)``; ``valid`` is False where a segment would be
    overdamped. Maps are in the scaled coordinates ``(V_xx, V_xp/s, V_pp/s^2)``
    with ``s = M omega``, which leaves eigenvalues unchanged.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    w, g, M = params.omega, params.gamma_m, params.M
    r1 = w**2 - g**2 / 4
    r2 = betas**2 * w**2 - g**2 / 4
    valid = (r2 > 0) & (r1 > 0) & (alphas > 0) & (betas > 0)
    t1 = np.where(valid, alphas / np.sqrt(abs(r1)), 0.0)
    t2 = np.where(valid, alphas / np.sqrt(np.where(r2 > 0, r2, 1.0)), 0.0)
    s = M * w
    wq1 = np.full(alphas.shape, math.hypot(w, omega_sn))
    wq2 = np.hypot(betas * w, omega_sn)
    S1 = expm(mean_generators(M, wq1, g, s) * t1[:, None, None])
    S2 = expm(mean_generators(M, wq2, g, s) * t2[:, None, None])
    return induced_action(S2 @ S1), valid


@dataclass(frozen=True, eq=False)
class StabilityMap:
    """Classification codes per cell for the four variants.

    ``codes[(gamma, with_sn)]`` has shape ``(len(alphas), len(betas))`` with
    the :class:`Stability` codes, or ``INVALID_CELL`` where the schedule is
    undefined. For the damped variant with self-gravity the noise-driven
    non-periodic terms are left out of the monodromy.
    """

    alphas: np.ndarray
    betas: np.ndarray
    gammas: tuple
    omega_sn: float
    codes: dict
    f_terms_neglected: bool = True

    def bounded(self, gamma, with_sn) -> np.ndarray:
        c = self.codes[(gamma, with_sn)]
        return (c == Stability.STABLE.code) | (c == Stability.MARGINAL.code)

    def differs(self, gamma) -> np.ndarray:
        """Cells where exactly one of the two variants is bounded."""
        ok = (self.codes[(gamma, False)] != INVALID_CELL) & (self.codes[(gamma, True)] != INVALID_CELL)
        return ok & (self.bounded(gamma, False) != self.bounded(gamma, True))

    def rows(self):
        names = {INVALID_CELL: "Invalid", **{s.code: s.value for s in Stability}}
        for g in self.gammas:
            flags = "f_terms_neglected" if (g > 0 and self.f_terms_neglected) else ""
            c0, c1 = self.codes[(g, False)], self.codes[(g, True)]
            for i, a in enumerate(self.alphas):
                for j, b in enumerate(self.betas):
                    yield [float(a), float(b), names[int(c0[i, j])], names[int(c1[i, j])], float(g), flags]

    def write_csv(self, path) -> None:
        write_rows(path, ("alpha", "beta", "class_no_sn", "class_sn", "gamma", "flags"), self.rows())

    def to_json(self) -> dict:
        return {
            "alpha": {"min": float(self.alphas[0]), "max": float(self.alphas[-1]), "n": len(self.alphas)},
            "beta": {"min": float(self.betas[0]), "max": float(self.betas[-1]), "n": len(self.betas)},
            "omega_sn": self.omega_sn,
            "gammas": list(self.gammas),
            "f_terms_neglected": self.f_terms_neglected,
            "legend": {str(INVALID_CELL): "Invalid", **{str(s.code): s.value for s in Stability}},
            "layout": "codes[variant][i_alpha][i_beta]",
            "variants": [
                {"gamma": g, "with_sn": sn, "codes": self.codes[(g, sn)].tolist()}
                for g in self.gammas
                for sn in (False, True)
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def _classify_cells(params, alphas, betas, omega_sn):
    maps, valid = monodromy_batch(params, alphas, betas, omega_sn)
    codes = np.full(len(alphas), INVALID_CELL, dtype=np.int8)
    if valid.any():
        codes[valid] = classify_codes(maps[valid])
    return codes


def stability_map(
    params: PhysicalParams,
    omega_sn: float,
    gamma: float,
    alpha_range: Sequence[float] = DEFAULT_ALPHA_RANGE,
    beta_range: Sequence[float] = DEFAULT_BETA_RANGE,
    resolution: int | Sequence[int] = DEFAULT_RESOLUTION,
    threads: Optional[int] = None,
) -> StabilityMap:
    """Classify every ``(alpha, beta)`` cell for ``omega_sn in {0, omega_sn}``
    and ``gamma_m in {0, gamma}``; grid endpoints are the range endpoints."""
    na, nb = (resolution, resolution) if np.isscalar(resolution) else resolution
    if na < 1 or nb < 1:
        raise ValueError("resolution must be positive")
    alphas = np.linspace(alpha_range[0], alpha_range[1], int(na))
    betas = np.linspace(beta_range[0], beta_range[1], int(nb))
    A, B = np.meshgrid(alphas, betas, indexing="ij")
    a_flat, b_flat = A.ravel(), B.ravel()
    bounds = [(i, min(i + MAP_CHUNK, a_flat.size)) for i in range(0, a_flat.size, MAP_CHUNK)]
    codes = {}
    gammas = (0.0, float(gamma))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for g in gammas:
            pg = replace(params, gamma_m=g)
            for sn in (False, True):
                w_sn = float(omega_sn) if sn else 0.0
                parts = pool.map(
                    lambda ab: _classify_cells(pg, a_flat[ab[0]:ab[1]], b_flat[ab[0]:ab[1]], w_sn),
                    bounds,
                )
                codes[(g, sn)] = np.concatenate(list(parts)).reshape(A.shape)
    return StabilityMap(alphas, betas, gammas, float(omega_sn), codes)


# -- validity ----------------------------------------------------------------


def check_validity(t, v_xx, delta_x_zp: float) -> Optional[float]:
    """First time the position spread reaches the lattice zero-point spread,
    or ``None`` if ``sqrt(V_xx) < delta_x_zp`` throughout."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v_xx, dtype=float)
    if v.size == 0:
        raise ValueError("series is empty")
    bad = np.flatnonzero(~(np.sqrt(np.maximum(v, 0.0)) < delta_x_zp))
    return float(t[bad[0]]) if bad.size else None
