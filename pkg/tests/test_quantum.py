import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qxparam.circuit import Circuit, Port, Resistor, attach_multiport
from qxparam.constants import HBAR
from qxparam.hbpump import PumpSpec, solve_pump
from qxparam.quantum import (
    NoiseReport,
    QuantumXMatrix,
    analyze,
    commutation_residuals,
    from_quantum,
    lossy_commutation_residuals,
    noise_ratio,
    normalized_qe,
    normalized_qe_with_loss,
    qe_ideal,
    qe_matrix,
    qe_with_loss,
    quantum_efficiency,
    to_quantum,
    transimpedance,
)
from qxparam.touchstone import LinearMultiport
from qxparam.xparams import LinearizedSystem, ModeSet, XMatrix, mode_frequencies

from conftest import GHZ, TD_PUMP_CURRENT, TD_PUMP_GHZ, attenuator


def amp_matrix(G: float) -> QuantumXMatrix:
    """Ideal single-port two-mode amplifier: signal k=0, idler k=-1 at negative frequency."""
    ms = ModeSet(6 * GHZ, 7 * GHZ, 2)
    r = math.acosh(math.sqrt(G))
    c, s = math.cosh(r), math.sinh(r)
    return QuantumXMatrix(ms, np.array([[c, s], [s, c]], complex), np.array([50.0]))


def test_to_quantum_example():
    ms = ModeSet(3 * GHZ, 4.5 * GHZ, 3)  # modes at -6, 3, 12 GHz
    data = np.zeros((3, 3), complex)
    X = XMatrix(ms, data, np.array([50.0]))
    X.data[X.index(1, 0), X.index(1, 1)] = 0.5
    x = to_quantum(X)
    assert x.entry(1, 0, 1, 1) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(from_quantum(x).data, X.data)


def test_squeezer_residual():
    for r in (0.1, 1.0, 3.0):
        ms = ModeSet(6 * GHZ, 7 * GHZ, 2)
        x = QuantumXMatrix(ms, np.array([[math.cosh(r), math.sinh(r)], [math.sinh(r), math.cosh(r)]], complex), np.array([50.0]))
        assert np.abs(commutation_residuals(x)).max() < 1e-12 * math.cosh(r) ** 2


def test_qe_ideal_values():
    assert qe_ideal(1.0) == 1.0
    assert qe_ideal(100.0) == pytest.approx(0.50251256281407, rel=1e-12)
    assert qe_ideal(1e12) == pytest.approx(0.5, rel=1e-9)
    assert qe_ideal(0.3) == 1.0
    with pytest.raises(ValueError):
        qe_ideal(-1)


def test_ideal_amplifier_qe():
    x = amp_matrix(2.0)
    q = quantum_efficiency(x, out=(1, 0), inp=(1, 0))
    assert q == pytest.approx(2 / 3, rel=1e-12)
    assert normalized_qe(x, out=(1, 0), inp=(1, 0)) == pytest.approx(1.0, rel=1e-12)


def test_qe_with_extra_noise_quantum():
    x = amp_matrix(2.0)
    rep = NoiseReport(x.modes, 0.0, (1, 0), np.zeros((1, 2)), 1.0, np.ones((1, 2)), np.zeros(2), ["R"], np.ones((1, 2)))
    assert qe_with_loss(x, rep, out=(1, 0), inp=(1, 0)) == pytest.approx(0.5, rel=1e-12)
    zero = NoiseReport(x.modes, 0.0, (1, 0), np.zeros((1, 2)), 1.0, np.zeros((1, 2)), np.zeros(2), [], np.zeros((0, 2)))
    assert qe_with_loss(x, zero, out=(1, 0), inp=(1, 0)) == quantum_efficiency(x, out=(1, 0), inp=(1, 0))


def test_qe_rows_sum_to_one():
    x = amp_matrix(5.0)
    assert qe_matrix(x).sum(axis=1) == pytest.approx([1.0, 1.0])


def test_isolated_output_raises():
    ms = ModeSet(6 * GHZ, 7 * GHZ, 2)
    x = QuantumXMatrix(ms, np.zeros((2, 2), complex), np.array([50.0]))
    with pytest.raises(ZeroDivisionError):
        quantum_efficiency(x, out=(1, 0), inp=(1, 0))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=4, max_size=4), st.floats(1e-3, 1e3))
def test_qe_row_scale_invariance(vals, scale):
    ms = ModeSet(6 * GHZ, 7 * GHZ, 2)
    d = np.array(vals, complex).reshape(2, 2)
    if abs(d[1]).sum() == 0:
        return
    x = QuantumXMatrix(ms, d, np.array([50.0]))
    y = QuantumXMatrix(ms, d * np.array([[1], [scale]]), np.array([50.0]))
    assert quantum_efficiency(y, (1, 0), (1, -1)) == pytest.approx(quantum_efficiency(x, (1, 0), (1, -1)), rel=1e-10)


# -- noise and dissipation -----------------------------------------------


@pytest.mark.parametrize("eta", [0.9, 0.5, 0.1])
@pytest.mark.parametrize("T", [0.0, 0.05])
def test_attenuator_noise(eta, T):
    ls = LinearizedSystem(attenuator(eta), None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 4))
    rep = noise_ratio(ls, temperature=T)
    assert rep.ratio[1, ls.modes.position(0)] == pytest.approx(1 - eta, abs=1e-6)
    x = to_quantum(ls.xmatrix())
    assert np.abs(lossy_commutation_residuals(x, rep)).max() < 1e-12
    # without the loss channels the sum rule is off by the lost fraction
    assert np.abs(commutation_residuals(x)).max() == pytest.approx(1 - eta, abs=1e-9)


def test_noise_power_units():
    ls = LinearizedSystem(attenuator(0.5), None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 2))
    rep = noise_ratio(ls, temperature=0.0)
    assert rep.p_in == pytest.approx(HBAR * 6 * GHZ / 2)
    assert rep.p_dut[1, 1] == pytest.approx(0.5 * HBAR * 6 * GHZ / 2)
    d = json.loads(rep.to_json())
    assert set(d["devices"]) == {"R1", "R2", "R3"}


def test_lossless_noise_zero(short_line):
    ls = LinearizedSystem(short_line, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 4))
    rep = noise_ratio(ls)
    assert rep.lossless
    assert np.all(rep.ratio == 0)


def test_lossy_multiport_channels():
    # matched attenuator as tabulated S data: N = 1 − η from the I − SS† channels
    t = math.sqrt(0.7)
    mp = LinearMultiport(np.array([1e9, 100e9]), np.array([[[0, t], [t, 0]]] * 2, complex))
    base = Circuit((Resistor("Rbig1", "a", "0", 1e12), Resistor("Rbig2", "b", "0", 1e12)), (Port(1, "a"), Port(2, "b")))
    c = attach_multiport(base, mp, ["a", "b"])
    ls = LinearizedSystem(c, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 4))
    rep = noise_ratio(ls)
    assert rep.ratio[1, ls.modes.position(0)] == pytest.approx(0.3, abs=1e-6)
    x = to_quantum(ls.xmatrix())
    assert np.abs(lossy_commutation_residuals(x, rep)).max() < 1e-9


def test_transimpedance_resistor_across_port():
    R = 80.0
    c = Circuit((Resistor("R1", "1", "0", R),), (Port(1, "1"),))
    ls = LinearizedSystem(c, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 4))
    z = transimpedance(ls, "R1", 0, 1, 0)
    assert z == pytest.approx(R * 50 / (R + 50), rel=1e-12)
    assert transimpedance(ls, ("1", "0"), -1, 1, -1) == pytest.approx(R * 50 / (R + 50), rel=1e-12)
    assert transimpedance(ls, "R1", 0, 1, -1) == 0


def test_transimpedance_reciprocity(short_line):
    # pump off, reciprocal network: current in at port-1 node read at port 2 equals the reverse
    ls = LinearizedSystem(short_line, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 2))
    z_fwd = transimpedance(ls, ("40", "0"), 0, 2, 0)
    z_rev = transimpedance(ls, ("201", "0"), 0, 1, 0)
    z_cross = transimpedance(ls, ("1", "0"), 0, 2, 0)
    assert z_cross == pytest.approx(z_rev, rel=1e-10)
    assert abs(z_fwd) > 0
    with pytest.raises(KeyError):
        transimpedance(ls, "nope", 0, 1, 0)


def test_pumped_lossy_commutation(lossy_line):
    wp = TD_PUMP_GHZ * GHZ
    pump = solve_pump(lossy_line, PumpSpec(wp, TD_PUMP_CURRENT, harmonics=16))
    for m in (2, 6, 10):
        op = analyze(lossy_line, pump, mode_frequencies(5.9 * GHZ, wp, m))
        assert op.noise is not None
        assert op.comm_residual_max < 1e-6
        assert op.noise_ratio > 0
        assert op.qe < quantum_efficiency(op.x)
        assert normalized_qe_with_loss(op.x, op.noise) == pytest.approx(op.qe_normalized)


def test_thermal_noise_grows(lossy_line):
    wp = TD_PUMP_GHZ * GHZ
    pump = solve_pump(lossy_line, PumpSpec(wp, TD_PUMP_CURRENT, harmonics=16))
    ls = LinearizedSystem(lossy_line, pump, mode_frequencies(5.9 * GHZ, wp, 4))
    cold = noise_ratio(ls, 0.0)
    warm = noise_ratio(ls, 0.2)
    assert np.all(warm.p_dut >= cold.p_dut)
    assert warm.p_in > cold.p_in


def test_operating_point(short_line, short_pump):
    op = analyze(short_line, short_pump, mode_frequencies(5.9 * GHZ, TD_PUMP_GHZ * GHZ, 6))
    assert op.noise is None
    assert op.noise_ratio == 0.0
    assert op.gain_db > 1
    assert op.idler_gain_db < op.gain_db
    assert 0.5 < op.qe_normalized <= 1 + 1e-12
    assert op.comm_residual_max < 1e-6
