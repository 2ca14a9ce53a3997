import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qxparam.circuit import Capacitor, Circuit, Port, attach_multiport
from qxparam.fdcore import solve_linear_sparams
from qxparam.hbpump import PumpSpec, solve_pump
from qxparam.jtwpa import build_uniform_jtwpa, reduced_uniform
from qxparam.quantum import commutation_residuals, to_quantum
from qxparam.touchstone import LinearMultiport
from qxparam.xparams import (
    LinearizedSystem,
    ModeSetError,
    XMatrix,
    idler_gain,
    input_match,
    linearized_xmatrix,
    mode_frequencies,
    signal_gain,
)

from conftest import GHZ, TD_PUMP_GHZ


def test_mode_frequency_example():
    ms = mode_frequencies(6 * GHZ, 7.12 * GHZ, 4)
    assert list(ms.k) == [-2, -1, 0, 1]
    assert ms.omegas / GHZ == pytest.approx([-22.48, -8.24, 6.0, 20.24])


def test_two_modes_are_signal_and_idler():
    ms = mode_frequencies(6 * GHZ, 7.12 * GHZ, 2)
    assert ms.omegas == pytest.approx([6 * GHZ - 2 * 7.12 * GHZ, 6 * GHZ])


@pytest.mark.parametrize("ws,m", [(7.12, 4), (7.12, 2), (14.24, 6), (21.36, 4)])
def test_commensurate_rejected(ws, m):
    with pytest.raises(ModeSetError, match="perturb"):
        mode_frequencies(ws * GHZ, 7.12 * GHZ, m)


def test_bad_mode_inputs():
    with pytest.raises(ModeSetError):
        mode_frequencies(-1.0, 7.12 * GHZ, 4)
    with pytest.raises(ModeSetError):
        mode_frequencies(6 * GHZ, 7.12 * GHZ, 1)
    with pytest.raises(IndexError):
        mode_frequencies(6 * GHZ, 7.12 * GHZ, 4).position(2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(1.0, 15.0), st.integers(2, 12))
def test_mode_layout_property(fs, fp, m):
    try:
        ms = mode_frequencies(fs * GHZ, fp * GHZ, m)
    except ModeSetError:
        return
    assert len(ms.k) == m
    assert ms.omegas[ms.position(0)] == fs * GHZ
    assert np.allclose(np.diff(ms.omegas), 2 * fp * GHZ)


@pytest.fixture(scope="module")
def line():
    return build_uniform_jtwpa(reduced_uniform(60))


@pytest.mark.parametrize("m", [2, 5, 10])
def test_pump_off_reduction(line, m):
    ms = mode_frequencies(6 * GHZ, 7.12 * GHZ, m)
    X = linearized_xmatrix(line, None, ms)
    for p in (1, 2):
        for q in (1, 2):
            blk = X.block(p, q)
            assert np.abs(blk - np.diag(np.diag(blk))).max() == 0
    for j, w in enumerate(ms.omegas):
        S = solve_linear_sparams(line, abs(w))
        if w < 0:
            S = S.conj()
        got = np.array([[X.block(p, q)[j, j] for q in (1, 2)] for p in (1, 2)])
        assert np.abs(got - S).max() < 1e-10


def test_pump_off_idler_zero_and_zero_current_pump(line):
    ms = mode_frequencies(6 * GHZ, 7.12 * GHZ, 4)
    X = linearized_xmatrix(line, None, ms)
    assert X.entry(2, -1, 1, 0) == 0
    assert idler_gain(X) == -math.inf
    pump0 = solve_pump(line, PumpSpec(7.12 * GHZ, 0.0))
    X0 = linearized_xmatrix(line, pump0, ms)
    assert np.array_equal(X0.data, X.data)


def test_matched_line_gain_zero_db():
    # a single 50 Ω thru multiport between the two ports
    thru = LinearMultiport(np.array([1e9, 100e9]), np.array([[[0, 1], [1, 0]]] * 2, complex))
    base = Circuit((Capacitor("C1", "a", "0", 1e-30), Capacitor("C2", "b", "0", 1e-30)), (Port(1, "a"), Port(2, "b")))
    c = attach_multiport(base, thru, ["a", "b"])
    X = linearized_xmatrix(c, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 4))
    assert signal_gain(X) == pytest.approx(0.0, abs=1e-6)
    assert input_match(X) < -100


def test_pumped_sum_rule_and_two_mode_row(short_line, short_pump):
    wp = TD_PUMP_GHZ * GHZ
    for m in (2, 4, 10):
        X = linearized_xmatrix(short_line, short_pump, mode_frequencies(5.9 * GHZ, wp, m))
        x = to_quantum(X)
        assert np.abs(commutation_residuals(x)).max() < 1e-6
    X = linearized_xmatrix(short_line, short_pump, mode_frequencies(5.9 * GHZ, wp, 2))
    x = to_quantum(X)
    row = np.abs(x.data[x.index(2, 0)]) ** 2
    s = np.sign(x.signed_frequencies)
    assert (row * s).sum() == pytest.approx(1.0, abs=1e-9)
    assert signal_gain(X) > 0.5


def test_determinism(short_line, short_pump):
    ms = mode_frequencies(5.9 * GHZ, TD_PUMP_GHZ * GHZ, 6)
    a = linearized_xmatrix(short_line, short_pump, ms)
    b = linearized_xmatrix(short_line, short_pump, ms)
    assert np.array_equal(a.data, b.data)


def test_pump_mode_mismatch(short_line, short_pump):
    with pytest.raises(ModeSetError):
        LinearizedSystem(short_line, short_pump, mode_frequencies(5.9 * GHZ, 7.0 * GHZ, 4))


def test_serialization(line):
    X = linearized_xmatrix(line, None, mode_frequencies(6 * GHZ, 7.12 * GHZ, 3))
    back = XMatrix.from_json(X.to_json())
    assert np.array_equal(back.data, X.data)
    assert back.modes == X.modes
    rows = X.to_csv().splitlines()
    assert rows[0] == "port_out,mode_out,f_out_Hz,port_in,mode_in,f_in_Hz,real,imag"
    assert len(rows) == 1 + (2 * 3) ** 2
    first = rows[1].split(",")
    assert first[:2] == ["1", "-1"] and float(first[2]) == pytest.approx((6 - 14.24) * 1e9)
