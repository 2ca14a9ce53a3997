"""Harmonic-balance X-parameter and quantum-efficiency simulation of pumped Josephson circuits."""

__version__ = "0.1.0"

from .circuit import Capacitor, Circuit, CircuitError, Inductor, JosephsonJunction, Port, Resistor, Source
from .hbpump import PumpNotConverged, PumpSolution, PumpSpec, solve_pump
from .jtwpa import FLOQUET, PRESETS, UNIFORM
from .netlist import parse_netlist, read_netlist
from .quantum import analyze, noise_ratio, quantum_efficiency, qe_ideal, to_quantum
from .xparams import LinearizedSystem, XMatrix, linearized_xmatrix, mode_frequencies

__all__ = [
    "Capacitor",
    "Circuit",
    "CircuitError",
    "FLOQUET",
    "Inductor",
    "JosephsonJunction",
    "LinearizedSystem",
    "PRESETS",
    "Port",
    "PumpNotConverged",
    "PumpSolution",
    "PumpSpec",
    "Resistor",
    "Source",
    "UNIFORM",
    "XMatrix",
    "analyze",
    "linearized_xmatrix",
    "mode_frequencies",
    "noise_ratio",
    "parse_netlist",
    "qe_ideal",
    "quantum_efficiency",
    "read_netlist",
    "solve_pump",
    "to_quantum",
]
