import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from snmod.firstmoments import (
    analytic_eigenvalues_gamma0,
    build_A,
    first_moment_cycle,
    mean_trajectory,
    trap_exit_time,
)
from snmod.params import ModulationSchedule, PhysicalParams, reference_params
from snmod.states import MeanState

# independent adaptive-RK value for the reference instability scenario
TRAP_EXIT_REFERENCE = 32.506761552568946


def test_build_A():
    np.testing.assert_array_equal(build_A(2.0, 3.0, 0.5), [[0, 0.5], [-18.0, -0.5]])


@given(st.floats(0.1, 3.0), st.floats(0.4, 3.0), st.floats(0.0, 0.5))
def test_cycle_determinant(a, b, g):
    p = PhysicalParams.dimensionless(gamma_m=g)
    s = ModulationSchedule.for_params(a, b, p)
    assert np.linalg.det(first_moment_cycle(p, s)) == pytest.approx(math.exp(-g * s.tau), rel=1e-10)


@given(st.floats(0.1, 3.0), st.floats(0.4, 3.0))
def test_analytic_eigenvalues(a, b):
    p = PhysicalParams.dimensionless()
    s = ModulationSchedule.for_params(a, b, p)
    num = np.linalg.eigvals(first_moment_cycle(p, s))
    ana = np.array(analytic_eigenvalues_gamma0(a, b))
    for lam in ana:
        assert np.min(np.abs(num - lam)) <= 1e-9 * max(1.0, abs(lam))


def test_independent_of_omega_sn():
    p = reference_params()
    s = ModulationSchedule.for_params(1.911, 2.0, p)
    np.testing.assert_array_equal(first_moment_cycle(p, s), first_moment_cycle(p.without_sn(), s))


def test_trajectory_matches_ode():
    p = PhysicalParams.dimensionless(gamma_m=0.1)
    s = ModulationSchedule.for_params(1.2, 1.8, p)
    series = mean_trajectory(p, s, MeanState(1.0, 0.0), 4, 8)

    def rhs(t, y):
        w = 1.0 if (t % s.tau) < s.t1 else s.beta
        return [y[1], -w * w * y[0] - 0.1 * y[1]]

    y = np.array([1.0, 0.0])
    for k in range(4):
        for a, b in ((k * s.tau, k * s.tau + s.t1), (k * s.tau + s.t1, (k + 1) * s.tau)):
            mid = 0.5 * (a + b)
            y = solve_ivp(lambda t, z: rhs(mid, z), (a, b), y, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    np.testing.assert_allclose([series.x[-1], series.p[-1]], y, rtol=1e-9, atol=1e-12)
    assert series.t[-1] == 4 * s.tau


def test_envelope_flag_and_csv(tmp_path):
    p = PhysicalParams.dimensionless()
    s = ModulationSchedule.for_params(1.0, 1.0, p)
    series = mean_trajectory(p, s, MeanState(1.0, 0.0), 6, 16)
    flags = series.envelope_flag
    assert flags.sum() >= 3
    assert np.allclose(np.abs(series.x[flags]), 1.0, atol=1e-2)
    path = tmp_path / "m.csv"
    series.write_csv(path)
    assert path.read_text().splitlines()[0] == "t,x_mean,p_mean,envelope"


def test_trap_exit_confined_and_immediate():
    p = PhysicalParams.dimensionless(gamma_m=0.1)
    s = ModulationSchedule.for_params(1.0, 1.0, p)
    assert trap_exit_time(p, s, MeanState(0.1, 0.0), 1.0, 50.0) is None
    assert trap_exit_time(p, s, MeanState(2.0, 0.0), 1.0, 50.0) == 0.0
    with pytest.raises(ValueError):
        trap_exit_time(p, s, MeanState(0.1, 0.0), 0.0, 50.0)


def test_trap_exit_reference_scenario_against_rk():
    p = reference_params()
    s = ModulationSchedule.for_params(1.910625, 2.0, p)
    t_exit = trap_exit_time(p, s, MeanState(1e-5, 1e-9), 1e-3, 60.0)
    assert t_exit == pytest.approx(TRAP_EXIT_REFERENCE, abs=s.tau)

    # solve_ivp on the same piecewise ODE, detecting the crossing by event
    M, g, w = p.M, p.gamma_m, p.omega
    y = np.array([1e-5, 1e-9])
    t0 = 0.0
    hit = None
    k = 0
    while hit is None and t0 < 60.0:
        for dur, ww in ((s.t1, w), (s.t2, s.beta * w)):
            ev = lambda t, z: abs(z[0]) - 1e-3
            sol = solve_ivp(
                lambda t, z, ww=ww: [z[1] / M, -M * ww * ww * z[0] - g * z[1]],
                (t0, t0 + dur), y, rtol=1e-11, atol=[1e-16, 1e-20], method="DOP853",
                events=ev, dense_output=True,
            )
            if sol.t_events[0].size:
                hit = sol.t_events[0][0]
                break
            y, t0 = sol.y[:, -1], t0 + dur
        k += 1
    assert hit == pytest.approx(t_exit, abs=s.tau / 32)
