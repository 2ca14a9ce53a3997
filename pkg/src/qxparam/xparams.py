"""Double-sided X-parameter sensitivity matrices of a pumped circuit.

Small signals live on the modes ω_k = ω_s + 2kω_P. Around the pump, each
junction's current responds as δI(t) = Ic·cos φ_pump(t)·δφ(t), which
couples mode k into mode j through the Fourier coefficient of Ic·cos φ_pump
at 2(j − k)ω_P. Scattered waves follow from the port voltages,
b = (V − Z0 I)/2√Z0, for unit Norton excitations a = I_s √Z0 / 2.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .constants import PHI0_RED
from .fdcore import AdmittanceSystem, Factorization, Layout, SingularSystemError, assemble
from .hbpump import PumpSolution

COMMENSURATE_TOL = 1e-9


class ModeSetError(ValueError):
    pass


class ParametricInstability(SingularSystemError):
    """The linearized system is singular (at or above oscillation threshold)."""


@dataclass(frozen=True)
class ModeSet:
    signal: float  # rad/s
    pump: float  # rad/s
    m: int

    @property
    def k(self) -> np.ndarray:
        return np.arange(-(self.m // 2), (self.m - 1) // 2 + 1)

    @property
    def omegas(self) -> np.ndarray:
        return 2 * self.k * self.pump + self.signal

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.omegas)

    def position(self, k: int) -> int:
        """Array position of mode label ``k`` (ω_k = ω_s + 2kω_P)."""
        lo = -(self.m // 2)
        if not lo <= k <= (self.m - 1) // 2:
            raise IndexError(f"mode {k} not in {list(self.k)}")
        return k - lo


def mode_frequencies(omega_s: float, omega_p: float, m: int) -> ModeSet:
    if not (omega_s > 0 and omega_p > 0):
        raise ModeSetError("signal and pump frequencies must be positive")
    if m < 2:
        raise ModeSetError("need at least two modes")
    ms = ModeSet(float(omega_s), float(omega_p), int(m))
    r = ms.omegas / omega_p
    bad = np.abs(r - np.round(r)) < COMMENSURATE_TOL
    if bad.any():
        k = int(ms.k[np.argmax(bad)])
        raise ModeSetError(
            f"mode k={k} lands on a pump harmonic or DC (ω_k/ω_P = {r[bad][0]:.6g}); "
            "perturb the signal frequency slightly"
        )
    return ms


@dataclass
class XMatrix:
    """Classical sensitivity matrix; row/column (p, k) sits at (p−1)·m + position(k)."""

    modes: ModeSet
    data: np.ndarray
    z0: np.ndarray

    @property
    def nports(self) -> int:
        return self.data.shape[0] // self.modes.m

    def index(self, p: int, k: int) -> int:
        return (p - 1) * self.modes.m + self.modes.position(k)

    def entry(self, p: int, kj: int, q: int, kk: int) -> complex:
        return complex(self.data[self.index(p, kj), self.index(q, kk)])

    def block(self, p: int, q: int) -> np.ndarray:
        m = self.modes.m
        return self.data[(p - 1) * m : p * m, (q - 1) * m : q * m]

    @property
    def signed_frequencies(self) -> np.ndarray:
        """Signed frequency of every row/column, ports stacked (rad/s)."""
        return np.tile(self.modes.omegas, self.nports)

    def records(self):
        """(p, k_out, f_out_Hz, q, k_in, f_in_Hz, value) for every entry."""
        m, ks, w = self.modes.m, self.modes.k, self.modes.omegas
        for r in range(self.data.shape[0]):
            for c in range(self.data.shape[1]):
                yield (
                    r // m + 1,
                    int(ks[r % m]),
                    w[r % m] / (2 * math.pi),
                    c // m + 1,
                    int(ks[c % m]),
                    w[c % m] / (2 * math.pi),
                    complex(self.data[r, c]),
                )

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["port_out", "mode_out", "f_out_Hz", "port_in", "mode_in", "f_in_Hz", "real", "imag"])
        for p, kj, fj, q, kk, fk, v in self.records():
            wr.writerow([p, kj, repr(float(fj)), q, kk, repr(float(fk)), repr(v.real), repr(v.imag)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "signal_hz": self.modes.signal / (2 * math.pi),
                "pump_hz": self.modes.pump / (2 * math.pi),
                "m": self.modes.m,
                "modes": [int(k) for k in self.modes.k],
                "frequencies_hz": [float(w / (2 * math.pi)) for w in self.modes.omegas],
                "z0": [float(z) for z in self.z0],
                "real": self.data.real.tolist(),
                "imag": self.data.imag.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "XMatrix":
        d = json.loads(text)
        ms = ModeSet(2 * math.pi * d["signal_hz"], 2 * math.pi * d["pump_hz"], d["m"])
        return cls(ms, np.array(d["real"]) + 1j * np.array(d["imag"]), np.array(d["z0"]))


def conversion_tensor(layout: Layout, modes: ModeSet, pump: PumpSolution | None) -> np.ndarray:
    """Junction coupling admittances [d, j, k] on the mode set."""
    m = modes.m
    v2phi = 1 / (PHI0_RED * 1j * modes.omegas)
    offsets = 2 * (modes.k[:, None] - modes.k[None, :])
    nj = layout.jj_ic.size
    if pump is None or pump.spec.current == 0 and not np.any(pump.junction_phases):
        G = np.zeros((nj, m, m), complex)
        G[:, offsets == 0] = layout.jj_ic[:, None]
    else:
        nmax = 2 * pump.harmonics
        g = pump.conversion_coefficients(nmax)
        idx = np.clip(np.abs(offsets), 0, nmax)
        G = np.where(offsets[None] >= 0, g[:, idx], np.conj(g[:, idx]))
        G[:, np.abs(offsets) > nmax] = 0
    return G * v2phi[None, None, :]


class LinearizedSystem:
    """Factorized small-signal system on a mode set.

    Holds the adjoint solutions for every port output, so X-parameters and
    transimpedances from any injection are inner products.
    """

    def __init__(self, circuit: Circuit, pump: PumpSolution | None, modes: ModeSet, layout: Layout | None = None):
        if layout is None:
            layout = pump.layout if pump is not None else Layout(circuit)
        self.circuit, self.pump, self.modes, self.layout = circuit, pump, modes, layout
        if pump is not None and not math.isclose(pump.spec.frequency, modes.pump, rel_tol=1e-12):
            raise ModeSetError("mode set and pump solution disagree on the pump frequency")
        P = len(layout.ports)
        if P == 0:
            raise ValueError("circuit has no ports")
        coupling = conversion_tensor(layout, modes, pump)
        self.system: AdmittanceSystem = assemble(layout, modes.omegas, coupling)
        try:
            self.factorization = Factorization(self.system)
        except SingularSystemError as exc:
            raise ParametricInstability(f"linearized system is singular: {exc}", exc.nodes) from None
        m = modes.m
        n = self.system.matrix.shape[0]
        E = np.zeros((n, P * m), complex)
        for p in range(1, P + 1):
            for j in range(m):
                E[:, (p - 1) * m + j] = self.system.port_vector(p, j)
        # adjoint: W[:, (p, j)]ᵀ r = port-p voltage at mode j for injection r
        self.adjoint = self.factorization.solve(E, trans="T")
        if not np.all(np.isfinite(self.adjoint)):
            raise ParametricInstability("non-finite small-signal response")

    @property
    def xmatrix_frequencies(self) -> np.ndarray:
        return np.tile(self.modes.omegas, len(self.layout.ports))

    def response(self, rhs: np.ndarray) -> np.ndarray:
        """Port voltages at every (p, j) for injection vector(s) ``rhs``."""
        return self.adjoint.T @ rhs

    def injection_response(self, a: np.ndarray, b: np.ndarray, mode: int) -> np.ndarray:
        """Port voltages per unit current injected into rows ``a``, out of ``b``.

        ``a``/``b`` are unknown indices (−1 = ground); returns (P·m, len(a)).
        """
        m = self.modes.m
        W = self.adjoint
        out = np.zeros((W.shape[1], len(a)), complex)
        ka, kb = a >= 0, b >= 0
        out[:, ka] += W[a[ka] * m + mode].T
        out[:, kb] -= W[b[kb] * m + mode].T
        return out

    def xmatrix(self) -> XMatrix:
        lay, m = self.layout, self.modes.m
        P = len(lay.ports)
        cols = []
        for q in range(P):
            for k in range(m):
                cols.append(self.injection_response(lay.port_a[q : q + 1], lay.port_b[q : q + 1], k)[:, 0])
        V = np.stack(cols, axis=1)
        d = np.repeat(1 / np.sqrt(lay.port_z0), m)
        X = 2 * d[:, None] * V * d[None, :] - np.eye(P * m)
        return XMatrix(self.modes, X, lay.port_z0.copy())


def linearized_xmatrix(circuit: Circuit, pump: PumpSolution | None, modes: ModeSet) -> XMatrix:
    return LinearizedSystem(circuit, pump, modes).xmatrix()


def _db_power(x: complex) -> float:
    a = abs(x) ** 2
    return 10 * math.log10(a) if a > 0 else -math.inf


def signal_gain(X: XMatrix, out_port: int = 2, in_port: int = 1) -> float:
    """10·log10 |X_{2,ω0;1,ω0}|²."""
    return _db_power(X.entry(out_port, 0, in_port, 0))


def idler_gain(X: XMatrix, out_port: int = 2, in_port: int = 1) -> float:
    """10·log10 |X_{2,ω−1;1,ω0}|², the primary idler conversion gain."""
    return _db_power(X.entry(out_port, -1, in_port, 0))


def input_match(X: XMatrix, port: int = 1) -> float:
    """20·log10 |X_{1,ω0;1,ω0}| (signal S11)."""
    return _db_power(X.entry(port, 0, port, 0))
