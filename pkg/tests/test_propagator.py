import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from snmod.errors import DomainError
from snmod.params import ModulationSchedule, PhysicalParams, reference_params
from snmod.propagator import (
    CSV_COLUMNS,
    SecondMomentSystem,
    affine_propagators,
    block_frequency,
    build_P,
    coupled_rhs,
    cycle_map,
    expm,
    propagate_second_moments,
    segment_propagator,
)
from snmod.states import CovarianceState

alphas = st.floats(0.1, 3.0)
betas = st.floats(0.4, 3.0)
omega_sns = st.floats(0.0, 0.8)
gammas = st.floats(0.0, 0.4)


def dimless(omega_sn=0.3, gamma=0.0, T=0.0):
    return PhysicalParams.dimensionless(omega_sn=omega_sn, gamma_m=gamma, T_bath=T)


def test_build_P_entries():
    P = build_P(2.0, 3.0, 0.5)
    expected = [[0, 1.0, 0], [-18.0, -0.5, 0.5], [0, -36.0, -1.0]]
    np.testing.assert_array_equal(P, expected)
    assert np.trace(P) == -1.5


def test_expm_rejects_bad_input():
    with pytest.raises(DomainError):
        expm(np.full((3, 3), np.nan))
    with pytest.raises(DomainError):
        expm(np.zeros((2, 3)))


@given(st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.floats(0.01, 5.0))
def test_expm_matches_ode(w, g, t):
    P = build_P(1.0, w, g)
    x0 = np.array([0.7, -0.2, 1.3])
    sol = solve_ivp(lambda _, x: P @ x, (0, t), x0, rtol=1e-12, atol=1e-14, method="DOP853")
    np.testing.assert_allclose(expm(P, t) @ x0, sol.y[:, -1], rtol=1e-8, atol=1e-10)


@given(st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_semigroup(w, g, t1, t2):
    P = build_P(1.0, w, g)
    c = np.array([0.0, 0.0, 0.3])
    s = np.ones(3)
    (m1, m2, m12), (d1, d2, d12) = affine_propagators(P, c, [t1, t2, t1 + t2], s)
    np.testing.assert_allclose(m2 @ m1, m12, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(m2 @ d1 + d2, d12, rtol=1e-10, atol=1e-12)


@given(st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.floats(0.05, 4.0))
def test_drive_matches_quadrature(w, g, t):
    P = build_P(1.0, w, g)
    c = np.array([0.0, 0.0, 1.0])
    _, d = affine_propagators(P, c, [t], np.ones(3))
    ref = [quad(lambda s, i=i: (expm(P, s) @ c)[i], 0, t, epsabs=1e-13, epsrel=1e-12)[0] for i in range(3)]
    np.testing.assert_allclose(d[0], ref, rtol=1e-9, atol=1e-12)


def test_scaled_coordinates_si():
    p = reference_params()
    s = ModulationSchedule.for_params(1.911, 2.0, p)
    seg = segment_propagator(p, s, 1, "classical", True)
    # unscaled exponential of the augmented matrix as reference
    P = build_P(p.M, p.omega, p.gamma_m)
    ref = expm(P, s.t1)
    np.testing.assert_allclose(seg.matrix_M, ref, rtol=1e-9, atol=0)
    assert seg.determinant == pytest.approx(math.exp(-3 * p.gamma_m * s.t1), rel=1e-10)


@given(alphas, betas, omega_sns, gammas)
def test_cycle_determinant(a, b, wsn, g):
    p = dimless(wsn, g)
    s = ModulationSchedule.for_params(a, b, p)
    for block in ("quantum", "classical"):
        c = cycle_map(p, s, block, True)
        assert c.determinant == pytest.approx(math.exp(-3 * g * s.tau), rel=1e-10)


def test_block_frequency():
    p = dimless(0.3)
    s = ModulationSchedule.for_params(1.0, 2.0, p)
    assert block_frequency(p, s, 2, "quantum", True) == pytest.approx(math.hypot(2, 0.3))
    assert block_frequency(p, s, 2, "quantum", False) == 2.0
    assert block_frequency(p, s, 2, "classical", True) == 2.0
    assert block_frequency(p, s, 2, "classical", True, "neglected") == pytest.approx(math.hypot(2, 0.3))
    with pytest.raises(ValueError):
        block_frequency(p, s, 1, "other", True)
    with pytest.raises(ValueError):
        segment_propagator(p, s, 1, "quantum", True, "approx")


@pytest.mark.parametrize("wsn", [0.0, 0.3])
def test_decomposition_matches_coupled_equations(wsn):
    p = dimless(wsn, gamma=0.2, T=1.5)
    s = ModulationSchedule.for_params(1.3, 1.7, p)
    cov0 = p.ground_state()
    n = 4
    series = propagate_second_moments(SecondMomentSystem.pure(cov0), p, s, True, n, 16)
    y0 = np.r_[cov0.as_array(), np.zeros(3)]
    rhs = coupled_rhs(p, s, True)
    # integrate segment by segment so the integrator never straddles a switch
    y = y0
    edges = [0.0]
    for k in range(n):
        edges += [k * s.tau + s.t1, (k + 1) * s.tau]
    ref = [y0[:3]]
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        f = lambda t, x, mid=mid: rhs(mid, x)
        y = solve_ivp(f, (a, b), y, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
        ref.append(y[:3])
    got = series.total[series.cycle_boundaries]
    mids = series.total[np.searchsorted(series.t, edges[1::2])]
    np.testing.assert_allclose(got, np.array(ref)[::2], rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(mids, np.array(ref)[1::2], rtol=1e-8, atol=1e-12)


def test_neglected_equals_dropping_f_terms():
    p = dimless(0.3, gamma=0.2, T=1.5)
    s = ModulationSchedule.for_params(1.3, 1.7, p)
    cov0 = p.ground_state()
    series = propagate_second_moments(SecondMomentSystem.pure(cov0), p, s, True, 3, 8, "neglected")
    M, g = 1.0, 0.2

    def rhs(t, v):
        phase = t % s.tau
        w2 = (1.0 if phase < s.t1 else s.beta**2) + 0.09
        return [2 * v[1] / M, v[2] / M - M * w2 * v[0] - g * v[1], -2 * M * w2 * v[1] - 2 * g * v[2] + 2 * M * g * 1.5]

    y = cov0.as_array()
    for k in range(3):
        for a, b in ((k * s.tau, k * s.tau + s.t1), (k * s.tau + s.t1, (k + 1) * s.tau)):
            mid = 0.5 * (a + b)
            y = solve_ivp(lambda t, x: rhs(mid, x), (a, b), y, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    np.testing.assert_allclose(series.total[-1], y, rtol=1e-8)


def test_sampling_grid_and_columns():
    p = dimless()
    s = ModulationSchedule.for_params(1.0, 2.0, p)
    series = propagate_second_moments(SecondMomentSystem.pure(p.ground_state()), p, s, True, 3, 5)
    assert len(series.t) == 1 + 3 * 10
    assert np.all(np.diff(series.t) > 0)
    assert series.t[-1] == 3 * s.tau
    np.testing.assert_array_equal(series.cycle_boundaries, [0, 10, 20, 30])
    assert list(series.cycle_index[series.cycle_boundaries]) == [0, 1, 2, 3]
    assert CSV_COLUMNS[-1] == "cycle_index"


@given(st.integers(1, 40), st.integers(1, 40))
def test_substep_independence(n1, n2):
    p = dimless(0.3, gamma=0.1, T=0.5)
    s = ModulationSchedule.for_params(1.2, 1.5, p)
    sys0 = SecondMomentSystem.pure(p.ground_state())
    a = propagate_second_moments(sys0, p, s, True, 5, n1)
    b = propagate_second_moments(sys0, p, s, True, 5, n2)
    np.testing.assert_array_equal(a.total[a.cycle_boundaries], b.total[b.cycle_boundaries])


def test_zero_cycles_and_bad_args(tmp_path):
    p = dimless()
    s = ModulationSchedule.for_params(1.0, 2.0, p)
    sys0 = SecondMomentSystem.pure(p.ground_state())
    series = propagate_second_moments(sys0, p, s, True, 0)
    assert len(series.t) == 1 and series.status == "ok"
    path = tmp_path / "h.csv"
    series.write_csv(path, header_only=True)
    assert path.read_text().strip() == ",".join(CSV_COLUMNS)
    with pytest.raises(ValueError):
        propagate_second_moments(sys0, p, s, True, -1)
    with pytest.raises(ValueError):
        propagate_second_moments(sys0, p, s, True, 1, 0)


def test_divergence_keeps_partial_output():
    p = dimless(0.0)
    # deep inside the first instability tongue
    s = ModulationSchedule.for_params(1.5, 3.0, p)
    sys0 = SecondMomentSystem.pure(p.ground_state())
    series = propagate_second_moments(sys0, p, s, True, 5000, 2)
    assert series.status == "diverged"
    assert np.all(np.isfinite(series.total))
    assert 0 < series.cycle_index[-1] < 5000


@given(alphas, betas, omega_sns)
def test_uncertainty_determinant_conserved(a, b, wsn):
    p = dimless(wsn)
    s = ModulationSchedule.for_params(a, b, p)
    series = propagate_second_moments(SecondMomentSystem.pure(p.ground_state()), p, s, True, 20, 4)
    q = series.quantum
    D = q[:, 0] * q[:, 2] - q[:, 1] ** 2
    scale = (q[:, 0] * q[:, 2]).max()
    assert np.max(np.abs(D - 0.25)) <= 1e-10 * max(scale, 1.0)


def test_thermal_equilibrium_is_fixed_point():
    p = dimless(0.0, gamma=0.3, T=2.0)
    s = ModulationSchedule.for_params(1.0, 1.0, p)
    w_eq = CovarianceState(p.thermal_variance(), 0.0, p.M * p.k_B * p.T_bath)
    seg = segment_propagator(p, s, 1, "classical", False)
    np.testing.assert_allclose(seg.apply(w_eq.as_array()), w_eq.as_array(), rtol=1e-12, atol=1e-14)


def test_final_system():
    p = dimless()
    s = ModulationSchedule.for_params(1.0, 2.0, p)
    series = propagate_second_moments(SecondMomentSystem.pure(p.ground_state()), p, s, True, 2, 3)
    fs = series.final_system
    np.testing.assert_array_equal(fs.total.as_array(), series.total[-1])
