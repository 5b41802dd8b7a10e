import json
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from snmod.errors import QuadratureError
from snmod.greens import GreensPair, eval_greens, thermal_integrals
from snmod.params import ModulationSchedule, PhysicalParams, reference_params
from snmod.propagator import segment_propagator

SAMPLES = json.loads((Path(__file__).parent / "fixtures" / "greens_samples.json").read_text())


@pytest.mark.parametrize("row", SAMPLES, ids=lambda r: f"M{r['M']}-w{r['omega']:.3g}-g{r['gamma']}-t{r['t']}")
def test_against_fixture(row):
    got = GreensPair(row["M"], row["omega"], row["gamma"])(row["t"])
    ref = [row[k] for k in ("G1", "G2", "dG1", "dG2")]
    scale = max(abs(v) for v in ref)
    for a, b in zip(got, ref):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12 * scale)


@given(st.floats(0.1, 5.0), st.floats(0.2, 4.0), st.floats(0.0, 1.0))
def test_initial_values(M, w, g):
    G1, G2, dG1, dG2 = GreensPair(M, w, g)(0.0)
    assert G1 == pytest.approx(1.0)
    assert G2 == pytest.approx(0.0, abs=1e-15)
    assert dG1 == pytest.approx(0.0, abs=1e-12)
    assert dG2 == pytest.approx(1.0 / M)


def test_rates_sum_and_product():
    gp, gm = GreensPair(1.0, 2.0, 0.5).rates
    assert gp + gm == pytest.approx(-0.5)
    assert gp * gm == pytest.approx(4.0)


def test_array_input_and_negative_time():
    p = PhysicalParams.dimensionless()
    G1, *_ = eval_greens(p, 1.0, np.linspace(0, 1, 5))
    assert G1.shape == (5,)
    with pytest.raises(ValueError):
        eval_greens(p, 1.0, -0.1)
    with pytest.raises(ValueError):
        thermal_integrals(p, 1.0, -0.1)


def test_zero_cases():
    p = PhysicalParams.dimensionless()
    assert thermal_integrals(p, 1.0, 2.0) == (0.0, 0.0, 0.0)
    q = PhysicalParams.dimensionless(gamma_m=0.1, T_bath=1.0)
    assert thermal_integrals(q, 1.0, 0.0) == (0.0, 0.0, 0.0)


@given(st.floats(0.3, 3.0), st.floats(0.05, 0.5), st.floats(0.1, 8.0))
def test_integrals_match_classical_block(beta, g, t):
    p = PhysicalParams.dimensionless(gamma_m=g, T_bath=1.3)
    s = ModulationSchedule(1.0, beta, t, t, 2 * t)
    seg = segment_propagator(p, s, 2, "classical", False)
    ref = seg.drive_d
    got = np.array(thermal_integrals(p, beta, t))
    np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())


def test_integrals_reference_scale():
    p = reference_params()
    s = ModulationSchedule.for_params(1.911, 2.0, p)
    got = np.array(thermal_integrals(p, p.omega, s.t1))
    ref = segment_propagator(p, s, 1, "classical", True).drive_d
    np.testing.assert_allclose(got, ref, rtol=1e-9)


def test_quadrature_error_carries_estimate(monkeypatch):
    real_quad = integrate.quad

    def noisy(f, a, b, **kw):
        if "epsabs" in kw:
            warnings.warn("roundoff", integrate.IntegrationWarning)
        return real_quad(f, a, b, **kw)

    monkeypatch.setattr(integrate, "quad", noisy)
    p = PhysicalParams.dimensionless(gamma_m=0.1, T_bath=1.0)
    with pytest.raises(QuadratureError) as exc:
        thermal_integrals(p, 1.0, 2.0)
    assert math.isfinite(exc.value.estimate) and exc.value.estimate > 0
