"""Piecewise-constant second-moment dynamics.

The observable covariance is split into two blocks that are propagated
independently and summed:

* ``quantum`` -- fluctuations about the mean. Feels ``omega_q`` when the
  self-gravity term is on, damping, no drive.
* ``classical`` (``W``) -- the noise-induced covariance of the mean. Feels
  the bare trap frequency, damping and the thermal drive. Its components are
  the ``F`` terms, ``F_xp = W_xx`` and ``F_pp = W_xp``.

With ``f_terms="neglected"`` the classical block is instead driven at
``omega_q``, which is the same as dropping the ``F`` terms from the coupled
three-component equations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.linalg

from ._csv import write_rows
from .errors import DomainError
from .params import ModulationSchedule, PhysicalParams
from .states import CovarianceState

Block = Literal["quantum", "classical"]
FTerms = Literal["exact", "neglected"]

CSV_COLUMNS = (
    "t", "v_xx", "v_xp", "v_pp", "w_xx", "w_xp", "w_pp", "v_xx_total", "cycle_index",
)
DEFAULT_SUBSTEPS = 64


def build_P(M: float, omega_eff: float, gamma_m: float) -> np.ndarray:
    """Generator of ``d/dt (V_xx, V_xp, V_pp)`` at constant frequency."""
    w2 = omega_eff**2
    return np.array(
        [
            [0.0, 2.0 / M, 0.0],
            [-M * w2, -gamma_m, 1.0 / M],
            [0.0, -2.0 * M * w2, -2.0 * gamma_m],
        ]
    )


def expm(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(A t)``; ``A`` may carry leading batch axes."""
    A = np.asarray(A, dtype=float)
    if A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expm needs square matrices, got shape {A.shape}")
    if not (np.all(np.isfinite(A)) and np.isfinite(t)):
        raise DomainError("expm received non-finite entries")
    return scipy.linalg.expm(A * t)


def _unit_scaling(params: PhysicalParams) -> np.ndarray:
    # diag(1, s, s^2) with s = M omega makes every entry of P of order omega
    s = params.M * params.omega
    return np.array([1.0, s, s * s])


def affine_propagators(P: np.ndarray, c: np.ndarray, durations, scale: np.ndarray):
    """``exp(P t)`` and the affine response to a constant drive ``c``.

    Computed from the exponential of the augmented matrix ``[[P, c], [0, 0]]``
    in the coordinates ``x / scale``. Returns arrays of shape ``(k, 3, 3)`` and
    ``(k, 3)`` for ``k`` durations.
    """
    durations = np.atleast_1d(np.asarray(durations, dtype=float))
    Ps = P * scale[None, :] / scale[:, None]
    cs = c / scale
    aug = np.zeros((4, 4))
    aug[:3, :3] = Ps
    aug[:3, 3] = cs
    E = expm(aug[None, :, :] * durations[:, None, None])
    mats = E[:, :3, :3] * scale[None, :, None] / scale[None, None, :]
    if np.any(c != 0):
        drives = E[:, :3, 3] * scale[None, :]
    else:
        drives = np.zeros((len(durations), 3))
    return mats, drives


def mean_generators(M: float, omega_eff, gamma_m: float, s: float) -> np.ndarray:
    """Generators of the mean ``(<x>, <p>/s)`` for an array of frequencies."""
    w2 = np.atleast_1d(np.asarray(omega_eff, dtype=float)) ** 2
    A = np.zeros((len(w2), 2, 2))
    A[:, 0, 1] = s / M
    A[:, 1, 0] = -M * w2 / s
    A[:, 1, 1] = -gamma_m
    return A


def induced_action(S: np.ndarray) -> np.ndarray:
    """3x3 matrices of ``V -> S V S^T`` on ``(V_xx, V_xp, V_pp)``.

    Built this way the map scales ``det V`` by exactly ``det(S)**2``, so the
    uncertainty product does not drift over many cycles.
    """
    a, b = S[..., 0, 0], S[..., 0, 1]
    c, d = S[..., 1, 0], S[..., 1, 1]
    out = np.empty(S.shape[:-2] + (3, 3))
    out[..., 0, :] = np.stack([a * a, 2 * a * b, b * b], axis=-1)
    out[..., 1, :] = np.stack([a * c, a * d + b * c, b * d], axis=-1)
    out[..., 2, :] = np.stack([c * c, 2 * c * d, d * d], axis=-1)
    return out


def second_moment_maps(params: PhysicalParams, omega_eff: float, durations) -> np.ndarray:
    """``exp(P t)`` for each duration, as the induced action of the mean
    propagator."""
    durations = np.atleast_1d(np.asarray(durations, dtype=float))
    scale = _unit_scaling(params)
    A = mean_generators(params.M, omega_eff, params.gamma_m, scale[1])[0]
    S = expm(A[None] * durations[:, None, None])
    return induced_action(S) * scale[None, :, None] / scale[None, None, :]


def _segment_affine(params, omega_eff, block, durations):
    mats = second_moment_maps(params, omega_eff, durations)
    c = block_drive(params, block)
    if np.any(c != 0):
        _, drives = affine_propagators(build_P(params.M, omega_eff, params.gamma_m), c, durations, _unit_scaling(params))
    else:
        drives = np.zeros((len(mats), 3))
    return mats, drives


@dataclass(frozen=True, eq=False)
class SegmentPropagator:
    """Affine map ``x -> matrix_M @ x + drive_d`` over ``duration`` seconds."""

    matrix_M: np.ndarray
    drive_d: np.ndarray
    duration: float
    frequency_used: Optional[float] = None

    def apply(self, x) -> np.ndarray:
        return self.matrix_M @ np.asarray(x, dtype=float) + self.drive_d

    def then(self, other: "SegmentPropagator") -> "SegmentPropagator":
        """Composition: ``self`` first, then ``other``."""
        return SegmentPropagator(
            other.matrix_M @ self.matrix_M,
            other.matrix_M @ self.drive_d + other.drive_d,
            self.duration + other.duration,
            None,
        )

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix_M))


def block_frequency(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    segment: int,
    block: Block,
    include_sn: bool,
    f_terms: FTerms = "exact",
) -> float:
    """Effective frequency seen by ``block`` during ``segment``."""
    w_t = schedule.segment_omega(params, segment)
    w_q = float(np.hypot(w_t, params.omega_sn)) if include_sn else w_t
    if block == "quantum":
        return w_q
    if block == "classical":
        return w_t if f_terms == "exact" else w_q
    raise ValueError(f"unknown block {block!r}")


def block_drive(params: PhysicalParams, block: Block) -> np.ndarray:
    if block == "classical":
        return np.array([0.0, 0.0, 2.0 * params.M * params.gamma_m * params.k_B * params.T_bath])
    return np.zeros(3)


def _check_f_terms(f_terms: str) -> None:
    if f_terms not in ("exact", "neglected"):
        raise ValueError(f"f_terms must be 'exact' or 'neglected', got {f_terms!r}")


def segment_propagator(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    segment_index: int,
    block: Block,
    include_sn: bool,
    f_terms: FTerms = "exact",
) -> SegmentPropagator:
    _check_f_terms(f_terms)
    w = block_frequency(params, schedule, segment_index, block, include_sn, f_terms)
    dur = schedule.segment_duration(segment_index)
    mats, drives = _segment_affine(params, w, block, [dur])
    return SegmentPropagator(mats[0], drives[0], dur, w)


def cycle_map(
    params: PhysicalParams,
    schedule: ModulationSchedule,
    block: Block,
    include_sn: bool,
    f_terms: FTerms = "exact",
) -> SegmentPropagator:
    """One full period: segment 1 followed by segment 2."""
    s1 = segment_propagator(params, schedule, 1, block, include_sn, f_terms)
    s2 = segment_propagator(params, schedule, 2, block, include_sn, f_terms)
    out = s1.then(s2)
    return SegmentPropagator(out.matrix_M, out.drive_d, schedule.tau, None)


@dataclass(frozen=True)
class SecondMomentSystem:
    quantum: CovarianceState
    classical: CovarianceState

    @property
    def total(self) -> CovarianceState:
        return self.quantum + self.classical

    @classmethod
    def pure(cls, cov: CovarianceState) -> "SecondMomentSystem":
        """Pure initial state: no noise-induced spread of the mean yet."""
        return cls(cov, CovarianceState.zero())


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Sampled evolution of both covariance blocks.

    ``quantum`` and ``classical`` have shape ``(N, 3)``; ``t`` and
    ``cycle_index`` have shape ``(N,)``. ``status`` is ``"ok"`` or
    ``"diverged"``; in the latter case the arrays stop at the last fully
    finite cycle.
    """

    t: np.ndarray
    quantum: np.ndarray
    classical: np.ndarray
    cycle_index: np.ndarray
    status: str = "ok"

    @property
    def total(self) -> np.ndarray:
        return self.quantum + self.classical

    @property
    def v_xx_total(self) -> np.ndarray:
        return self.quantum[:, 0] + self.classical[:, 0]

    @property
    def cycle_boundaries(self) -> np.ndarray:
        """Indices of the samples taken exactly at ``t = n tau``."""
        return np.flatnonzero(np.r_[True, np.diff(self.cycle_index) != 0])

    @property
    def final_system(self) -> SecondMomentSystem:
        return SecondMomentSystem(
            CovarianceState.from_array(self.quantum[-1]),
            CovarianceState.from_array(self.classical[-1]),
        )

    def rows(self):
        tot = self.v_xx_total
        for i in range(len(self.t)):
            q, w = self.quantum[i].tolist(), self.classical[i].tolist()
            yield [float(self.t[i]), *q, *w, float(tot[i]), int(self.cycle_index[i])]

    def write_csv(self, path, header_only: bool = False) -> None:
        write_rows(path, CSV_COLUMNS, [] if header_only else self.rows())


def _segment_tables(params, schedule, segment, block, include_sn, f_terms, ns):
    w = block_frequency(params, schedule, segment, block, include_sn, f_terms)
    dur = schedule.segment_duration(segment)
    return _segment_affine(params, w, block, dur * np.arange(1, ns + 1) / ns)


def propagate_second_moments(
    system0: SecondMomentSystem,
    params: PhysicalParams,
    schedule: ModulationSchedule,
    include_sn: bool,
    n_cycles: int,
    substeps_per_segment: int = DEFAULT_SUBSTEPS,
    f_terms: FTerms = "exact",
) -> MomentSeries:
    """Evolve both covariance blocks for ``n_cycles`` periods.

    Samples are taken at ``substeps_per_segment`` equally spaced points in each
    segment, plus ``t = 0``. Cycle-boundary states are obtained from the
    full-segment maps only, so they do not depend on the substep count.
    """
    _check_f_terms(f_terms)
    if n_cycles < 0:
        raise ValueError("n_cycles must be >= 0")
    ns = int(substeps_per_segment)
    if ns < 1:
        raise ValueError("substeps_per_segment must be >= 1")

    blocks = ("quantum", "classical")
    full = {
        b: (
            segment_propagator(params, schedule, 1, b, include_sn, f_terms),
            segment_propagator(params, schedule, 2, b, include_sn, f_terms),
        )
        for b in blocks
    }
    x0 = {"quantum": system0.quantum.as_array(), "classical": system0.classical.as_array()}

    # cycle-start and mid-cycle states, sequentially
    starts = {b: np.empty((n_cycles + 1, 3)) for b in blocks}
    mids = {b: np.empty((n_cycles, 3)) for b in blocks}
    for b in blocks:
        starts[b][0] = x0[b]
    done = n_cycles
    status = "ok"
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_cycles):
            finite = True
            for b in blocks:
                s1, s2 = full[b]
                mid = s1.apply(starts[b][n])
                nxt = s2.apply(mid)
                mids[b][n] = mid
                starts[b][n + 1] = nxt
                finite &= bool(np.all(np.isfinite(nxt)) and np.all(np.isfinite(mid)))
            if not finite:
                done, status = n, "diverged"
                break

    tables = {
        b: (
            _segment_tables(params, schedule, 1, b, include_sn, f_terms, ns),
            _segment_tables(params, schedule, 2, b, include_sn, f_terms, ns),
        )
        for b in blocks
    }
    k = np.arange(1, ns + 1)
    per_cycle = 2 * ns
    N = 1 + done * per_cycle
    t = np.empty(N)
    cyc = np.empty(N, dtype=np.int64)
    t[0], cyc[0] = 0.0, 0
    n_idx = np.arange(done)
    starts_t = n_idx * schedule.tau
    t_cyc = np.concatenate(
        [
            starts_t[:, None] + (schedule.t1 * k / ns)[None, :],
            starts_t[:, None] + schedule.t1 + (schedule.t2 * k / ns)[None, :],
        ],
        axis=1,
    )
    t_cyc[:, ns - 1] = starts_t + schedule.t1
    t_cyc[:, -1] = (n_idx + 1) * schedule.tau
    t[1:] = t_cyc.ravel()
    c_cyc = np.repeat(n_idx[:, None], per_cycle, axis=1)
    c_cyc[:, -1] += 1
    cyc[1:] = c_cyc.ravel()

    out = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for b in blocks:
            (m1, d1), (m2, d2) = tables[b]
            arr = np.empty((N, 3))
            arr[0] = x0[b]
            if done:
                xs = starts[b][:done]
                xm = mids[b][:done]
                seg1 = np.einsum("kij,nj->nki", m1, xs) + d1[None]
                seg2 = np.einsum("kij,nj->nki", m2, xm) + d2[None]
                seg1[:, -1] = xm
                seg2[:, -1] = starts[b][1 : done + 1]
                arr[1:] = np.concatenate([seg1, seg2], axis=1).reshape(-1, 3)
            out[b] = arr
    return MomentSeries(t, out["quantum"], out["classical"], cyc, status)


def coupled_rhs(params: PhysicalParams, schedule: ModulationSchedule, include_sn: bool):
    """Right-hand side of the six-component ODE ``(V, W)`` in which ``V`` is the
    observable covariance with explicit ``F`` terms and ``W`` supplies them.

    Intended for independent checks with a general-purpose integrator.
    """
    M, g = params.M, params.gamma_m
    wsn2 = params.omega_sn**2 if include_sn else 0.0
    thermal = 2 * M * g * params.k_B * params.T_bath

    def rhs(t, y):
        phase = t % schedule.tau
        w_t = params.omega if phase < schedule.t1 else schedule.beta * params.omega
        wq2 = w_t**2 + wsn2
        vxx, vxp, vpp, wxx, wxp, wpp = y
        return [
            2 * vxp / M,
            vpp / M - M * wq2 * vxx - g * vxp + M * wsn2 * wxx,
            -2 * M * wq2 * vxp - 2 * g * vpp + thermal + 2 * M * wsn2 * wxp,
            2 * wxp / M,
            wpp / M - M * w_t**2 * wxx - g * wxp,
            -2 * M * w_t**2 * wxp - 2 * g * wpp + thermal,
        ]

    return rhs
