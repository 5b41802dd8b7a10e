"""Monte Carlo ensemble of the Langevin dynamics, for end-to-end checks.

Each trajectory carries the noisy mean ``(<x>, <p>)``; the quantum
fluctuations are Gaussian and noise-free, so their covariance is stepped once
with the same one-step map. The estimate is the quantum covariance plus the
sample covariance of the means across trajectories.

Trajectories are grouped in fixed-size chunks with independent Philox streams
spawned from the seed, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._csv import write_rows
from .errors import TrajectoryError
from .params import InitialConditions, ModulationSchedule, PhysicalParams

ORACLE_CSV_COLUMNS = (
    "t", "v_xx_hat", "v_xx_stderr", "v_xp_hat", "v_xp_stderr", "v_pp_hat", "v_pp_stderr",
    "n_traj", "seed",
)
CHUNK_SIZE = 1000


@dataclass(frozen=True)
class EnsembleSpec:
    n_trajectories: int
    dt: float
    seed: int
    params: PhysicalParams
    schedule: ModulationSchedule
    include_sn: bool = True
    n_cycles: int = 20
    outputs_per_segment: int = 8
    threads: Optional[int] = None

    def __post_init__(self):
        if self.n_trajectories < 100:
            raise ValueError("n_trajectories must be >= 100")
        limit = min(self.schedule.t1, self.schedule.t2) / 200
        if not 0 < self.dt <= limit * (1 + 1e-12):
            raise ValueError(f"dt must be in (0, min(t1, t2)/200 = {limit:.6g}]")
        if self.n_cycles < 0 or self.outputs_per_segment < 1:
            raise ValueError("n_cycles must be >= 0 and outputs_per_segment >= 1")

    @classmethod
    def default_dt(cls, schedule: ModulationSchedule) -> float:
        return min(schedule.t1, schedule.t2) / 2000


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    t: np.ndarray
    v_hat: np.ndarray
    stderr: np.ndarray
    quantum: np.ndarray
    n_traj: int
    seed: int

    def write_csv(self, path) -> None:
        rows = (
            [float(t), *[float(z) for pair in zip(v, e) for z in pair], self.n_traj, self.seed]
            for t, v, e in zip(self.t, self.v_hat, self.stderr)
        )
        write_rows(path, ORACLE_CSV_COLUMNS, rows)


def _step_matrix(M, w, gamma, h):
    # semi-implicit Euler: momentum first, then position with the new momentum
    return np.array(
        [[1 - w * w * h * h, h * (1 - gamma * h) / M], [-M * w * w * h, 1 - gamma * h]]
    )


def _segment_plan(spec: EnsembleSpec):
    """Per segment: (trap frequency, step size, steps per output)."""
    plan = []
    n_out = spec.outputs_per_segment
    for seg in (1, 2):
        dur = spec.schedule.segment_duration(seg)
        per_out = max(1, math.ceil(dur / (n_out * spec.dt)))
        h = dur / (n_out * per_out)
        plan.append((spec.schedule.segment_omega(spec.params, seg), h, per_out))
    return plan


def _output_times(spec: EnsembleSpec) -> np.ndarray:
    s, n_out = spec.schedule, spec.outputs_per_segment
    k = np.arange(1, n_out + 1)
    offs = np.concatenate([s.t1 * k / n_out, s.t1 + s.t2 * k / n_out])
    offs[n_out - 1] = s.t1
    offs[-1] = s.tau
    n = np.arange(spec.n_cycles)
    cyc = n[:, None] * s.tau + offs[None, :]
    cyc[:, -1] = (n + 1) * s.tau
    return np.concatenate([[0.0], cyc.ravel()])


def _run_chunk(spec, plan, mean0, n, seed_seq):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    p = spec.params
    M = p.M
    sigma = math.sqrt(2 * M * p.gamma_m * p.k_B * p.T_bath)
    x = np.full(n, mean0[0])
    v = np.full(n, mean0[1])
    out = np.empty((1 + spec.n_cycles * 2 * spec.outputs_per_segment, 2, n))
    out[0, 0], out[0, 1] = x, v
    k = 1
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(spec.n_cycles):
            for w, h, per_out in plan:
                kick = sigma * math.sqrt(h)
                a = M * w * w * h
                damp = 1 - p.gamma_m * h
                for _ in range(spec.outputs_per_segment):
                    for _ in range(per_out):
                        v = v * damp - a * x
                        if kick:
                            v += kick * rng.standard_normal(n)
                        x = x + (h / M) * v
                        step += 1
                    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                        raise TrajectoryError(f"non-finite trajectory at step {step}", step)
                    out[k, 0], out[k, 1] = x, v
                    k += 1
    return out


def _quantum_path(spec, plan, cov0, include_sn):
    p = spec.params
    Q = np.array([[cov0.v_xx, cov0.v_xp], [cov0.v_xp, cov0.v_pp]])
    out = [Q.copy()]
    for _ in range(spec.n_cycles):
        for w, h, per_out in plan:
            wq = math.hypot(w, p.omega_sn) if include_sn else w
            S = _step_matrix(p.M, wq, p.gamma_m, h)
            S_out = np.linalg.matrix_power(S, per_out)
            for _ in range(spec.outputs_per_segment):
                Q = S_out @ Q @ S_out.T
                out.append(Q.copy())
    Qs = np.array(out)
    return np.stack([Qs[:, 0, 0], Qs[:, 0, 1], Qs[:, 1, 1]], axis=1)


def _jackknife_cov(a: np.ndarray, b: np.ndarray):
    """Sample covariance along the last axis and its leave-one-out jackknife
    standard error."""
    n = a.shape[-1]
    da = a - a.mean(axis=-1, keepdims=True)
    db = b - b.mean(axis=-1, keepdims=True)
    prod = da * db
    S = prod.sum(axis=-1)
    cov = S / (n - 1)
    loo = (S[..., None] - n / (n - 1) * prod) / (n - 2)
    dev = loo - loo.mean(axis=-1, keepdims=True)
    se = np.sqrt((n - 1) / n * (dev * dev).sum(axis=-1))
    return cov, se


def run_ensemble(spec: EnsembleSpec, initial: InitialConditions) -> EnsembleResult:
    plan = _segment_plan(spec)
    mean0 = initial.mean0.as_array()
    n_chunks = math.ceil(spec.n_trajectories / CHUNK_SIZE)
    sizes = [min(CHUNK_SIZE, spec.n_trajectories - i * CHUNK_SIZE) for i in range(n_chunks)]
    streams = np.random.SeedSequence(spec.seed).spawn(n_chunks)
    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        parts = list(pool.map(lambda a: _run_chunk(spec, plan, mean0, *a), zip(sizes, streams)))
    samples = np.concatenate(parts, axis=-1)
    xs, ps = samples[:, 0], samples[:, 1]
    c_xx, e_xx = _jackknife_cov(xs, xs)
    c_xp, e_xp = _jackknife_cov(xs, ps)
    c_pp, e_pp = _jackknife_cov(ps, ps)
    quantum = _quantum_path(spec, plan, initial.covariance(spec.params), spec.include_sn)
    v_hat = quantum + np.stack([c_xx, c_xp, c_pp], axis=1)
    stderr = np.stack([e_xx, e_xp, e_pp], axis=1)
    return EnsembleResult(_output_times(spec), v_hat, stderr, quantum, spec.n_trajectories, spec.seed)
