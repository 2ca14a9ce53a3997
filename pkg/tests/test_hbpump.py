import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qxparam.circuit import Capacitor
from qxparam.fdcore import assemble_linear
from qxparam.hbpump import PumpNotConverged, PumpSpec, jj_cos_spectrum, jj_current_spectrum, solve_pump
from qxparam.jtwpa import build_uniform_jtwpa, reduced_uniform

from conftest import GHZ

WP = 7.12 * GHZ


@pytest.fixture(scope="module")
def line40():
    return build_uniform_jtwpa(reduced_uniform(40))


@pytest.fixture(scope="module")
def pump40(line40):
    return solve_pump(line40, PumpSpec(WP, 3.7e-6))


def test_zero_phase_zero_current():
    assert np.all(jj_current_spectrum(np.zeros(9)) == 0)


def test_spectrum_matches_bessel():
    # φ(t) = a·cos ωt  ->  sin φ has coefficient J1(a) at ω (one-sided: J1(a))
    from scipy.special import jv

    a = 0.7
    ph = np.zeros(8, complex)
    ph[1] = a / 2
    c = jj_current_spectrum(ph)
    assert c[1].real == pytest.approx(jv(1, a), abs=1e-13)
    assert c[3].real == pytest.approx(-jv(3, a), abs=1e-13)
    k = jj_cos_spectrum(ph, 4)
    assert k[0].real == pytest.approx(jv(0, a), abs=1e-13)
    assert k[2].real == pytest.approx(-jv(2, a), abs=1e-13)


def test_zero_pump(line40):
    sol = solve_pump(line40, PumpSpec(WP, 0.0))
    assert sol.iterations <= 1
    assert np.all(sol.node_voltages == 0)


def test_weak_pump_is_linear(line40):
    ip = 3.4e-8  # Ic/100
    sol = solve_pump(line40, PumpSpec(WP, ip))
    sys_ = assemble_linear(line40, WP)
    lin = sys_.factorize().solve(sys_.port_vector(1)) * ip
    n = sol.layout.n_nodes
    err = np.abs(2 * sol.node_voltages[:n, 1] - lin[:n]).max() / np.abs(lin[:n]).max()
    assert err < 1e-2


def test_residual_and_determinism(line40, pump40):
    assert pump40.residual_norm < 1e-9
    again = solve_pump(line40, PumpSpec(WP, 3.7e-6))
    assert np.array_equal(again.node_voltages, pump40.node_voltages)


def test_power_balance_lossless(pump40):
    inc = pump40.incident_amplitude**2 / 2
    out = sum((np.abs(pump40.pump_wave(p)) ** 2).sum() / 2 for p in (1, 2))
    assert out == pytest.approx(inc, rel=1e-8)


def test_power_balance_lossy():
    c = build_uniform_jtwpa(replace(reduced_uniform(40), tan_delta=1e-3))
    sol = solve_pump(c, PumpSpec(WP, 3.7e-6))
    inc = sol.incident_amplitude**2 / 2
    out = sum((np.abs(sol.pump_wave(p)) ** 2).sum() / 2 for p in (1, 2))
    # the balance goes to the capacitor loss
    lay = sol.layout
    lost = 0.0
    for el in c.of_type(Capacitor):
        for n in range(1, sol.harmonics + 1, 2):
            v = lambda name: 0 if name == "0" else sol.node_voltages[lay.row(name), n]  # noqa: E731
            dv = 2 * (v(el.n1) - v(el.n2))
            y = 1j * n * WP * el.C / (1 + 1j * el.tan_delta)
            lost += 0.5 * abs(dv) ** 2 * y.real
    assert out + lost == pytest.approx(inc, rel=1e-6)
    assert lost > 0


def test_continuation_consistent(line40, pump40):
    ramp = solve_pump(line40, PumpSpec(WP, 3.7e-6), continuation=True)
    scale = np.abs(pump40.node_voltages).max()
    assert np.abs(ramp.node_voltages - pump40.node_voltages).max() < 1e-8 * scale


def test_real_waveforms(pump40):
    w = pump40.waveform(5)
    assert np.isrealobj(w)
    assert np.abs(pump40.node_voltages[:, 0]).max() == 0  # no DC
    assert np.abs(pump40.junction_phases[:, 2::2]).max() < 1e-14 * np.abs(pump40.junction_phases).max()


def test_harmonic_decay(pump40):
    # line RMS of each odd harmonic; single junctions can sit on standing-wave nodes
    rms = np.sqrt((np.abs(pump40.junction_phases[:, 1::2]) ** 2).mean(axis=0))
    assert np.all(rms[1:] / rms[:-1] < 1)


def test_overdrive_flag_and_failure(line40):
    with pytest.raises(PumpNotConverged) as exc:
        solve_pump(line40, PumpSpec(WP, 40e-6), max_iter=8)
    assert exc.value.best is not None


def test_spec_validation():
    with pytest.raises(ValueError):
        PumpSpec(0.0, 1e-6)
    with pytest.raises(ValueError):
        PumpSpec(WP, 1e-6, harmonics=2)


def test_json(pump40):
    import json

    d = json.loads(pump40.to_json())
    assert d["harmonics"] == 8
    assert len(d["junction_phases"]) == 40


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(-0.3, 0.3))
def test_spectrum_reconstructs_sine(a1, b1, a3):
    ph = np.zeros(6, complex)
    ph[1] = complex(a1, b1) / 2
    ph[3] = a3 / 2
    t = np.arange(4096) / 4096 * 2 * math.pi
    phi = 2 * np.real(ph[1] * np.exp(1j * t) + ph[3] * np.exp(3j * t))
    # dense direct quadrature of the one-sided coefficients
    direct = np.array([np.mean(2.0 * np.sin(phi) * np.exp(-1j * n * t)) for n in range(6)])
    c = jj_current_spectrum(ph, ic=2.0)
    assert np.abs(c - direct).max() < 1e-9
    assert abs(c[2]) < 1e-12
