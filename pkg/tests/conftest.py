import math
from dataclasses import replace

import pytest

from qxparam.circuit import Capacitor, Circuit, Inductor, Port, Resistor
from qxparam.hbpump import PumpSpec, solve_pump
from qxparam.jtwpa import build_uniform_jtwpa, reduced_uniform

GHZ = 2 * math.pi * 1e9

# acceptance lines, printed in the terminal summary so they show without -s
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def lc_ladder(cells: int, L: float = 2e-10, C: float = 8e-14, z0: float = 50.0) -> Circuit:
    """Lossless low-pass ladder: series L, shunt C at every node."""
    els = []
    for i in range(1, cells + 1):
        els.append(Inductor(f"L{i}", str(i), str(i + 1), L))
        els.append(Capacitor(f"C{i}", str(i + 1), "0", C))
    els.append(Capacitor("C0", "1", "0", C))
    return Circuit(tuple(els), (Port(1, "1", "0", z0), Port(2, str(cells + 1), "0", z0)))


def attenuator(eta: float, z0: float = 50.0) -> Circuit:
    """Matched T attenuator with power transmission eta."""
    k = math.sqrt(eta)
    r1 = z0 * (1 - k) / (1 + k)
    r2 = 2 * z0 * k / (1 - k * k)
    els = (Resistor("R1", "1", "m", r1), Resistor("R2", "m", "0", r2), Resistor("R3", "m", "2", r1))
    return Circuit(els, (Port(1, "1", "0", z0), Port(2, "2", "0", z0)))


# short pumped line used across modules: 200 cells, no resonators
TD_CELLS = 200
TD_PUMP_GHZ = 7.12
TD_PUMP_CURRENT = 5.5e-6


@pytest.fixture(scope="session")
def short_line():
    return build_uniform_jtwpa(reduced_uniform(TD_CELLS, period=0))


@pytest.fixture(scope="session")
def short_pump(short_line):
    return solve_pump(short_line, PumpSpec(TD_PUMP_GHZ * GHZ, TD_PUMP_CURRENT, harmonics=16))


@pytest.fixture(scope="session")
def lossy_line():
    d = replace(reduced_uniform(TD_CELLS, period=0), tan_delta=1e-3)
    return build_uniform_jtwpa(d)
