"""Photon-flux (quantum) X-parameters, commutation checks, QE and added noise.

Quantum X-parameters rescale the power-wave matrix by √|ω_k/ω_j| so that
squared magnitudes count photons. Dissipative elements are treated as
extra input channels: each one adds a photon flux to an output mode, which
enters the QE denominator (as the noise ratio N) and the commutation sum
rule (with the sign of the channel's frequency).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, _node
from .constants import HBAR
from .fdcore import coth_factor, noise_sources
from .hbpump import PumpSolution
from .xparams import LinearizedSystem, ModeSet, XMatrix


class QuantumXMatrix(XMatrix):
    """Same indexing as :class:`XMatrix`; entries in photon-flux normalization."""


def _scale(X: XMatrix) -> np.ndarray:
    w = X.signed_frequencies
    if np.any(w == 0):
        raise ValueError("zero mode frequency")
    return np.sqrt(np.abs(w[None, :] / w[:, None]))


def to_quantum(X: XMatrix) -> QuantumXMatrix:
    return QuantumXMatrix(X.modes, X.data * _scale(X), X.z0)


def from_quantum(x: QuantumXMatrix) -> XMatrix:
    return XMatrix(x.modes, x.data / _scale(x), x.z0)


def commutation_residuals(x: QuantumXMatrix) -> np.ndarray:
    """Σ_{q,k} sgn(ω_k)|x_{pj;qk}|² − sgn(ω_j) for every row (p, j)."""
    s = np.sign(x.signed_frequencies)
    return np.abs(x.data) ** 2 @ s - s


def qe_ideal(G: float) -> float:
    """Quantum limit 1/(2 − 1/G) of a phase-insensitive amplifier with gain G."""
    if G < 0:
        raise ValueError("gain must be non-negative")
    return 1.0 / (2.0 - 1.0 / G) if G >= 1 else 1.0


def quantum_efficiency(x: QuantumXMatrix, out=(2, 0), inp=(1, 0), noise: float = 0.0) -> float:
    """|x_out,in|² / (Σ_{q,k} |x_out;q,k|² + noise)."""
    row = np.abs(x.data[x.index(*out)]) ** 2
    den = row.sum() + noise
    if not den > 0:
        raise ZeroDivisionError(f"output {out} is isolated from every input")
    return float(row[x.index(*inp)] / den)


def qe_matrix(x: QuantumXMatrix, report: "NoiseReport | None" = None) -> np.ndarray:
    """All QE entries; row (p, n) over inputs (q, l)."""
    a = np.abs(x.data) ** 2
    den = a.sum(axis=1)
    if report is not None:
        den = den + report.ratio.ravel()
    if np.any(den <= 0):
        raise ZeroDivisionError("isolated output mode")
    return a / den[:, None]


def normalized_qe(x: QuantumXMatrix, out=(2, 0), inp=(1, 0), noise: float = 0.0) -> float:
    """QE divided by the ideal limit at the same entry's power gain."""
    G = abs(x.entry(*out, *inp)) ** 2
    return quantum_efficiency(x, out, inp, noise) / qe_ideal(G)


# -- dissipation ----------------------------------------------------------


@dataclass
class _Channels:
    """Loss channels: element name, source mode, signed frequency and output flux."""

    names: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    flux: list = field(default_factory=list)  # (P·m,) photon flux into each output per unit occupancy
    omegas: list = field(default_factory=list)


def _loss_channels(ls: LinearizedSystem) -> _Channels:
    lay, modes = ls.layout, ls.modes
    m = modes.m
    z0 = np.repeat(lay.port_z0, m)
    if np.any(z0 <= 0):
        raise ValueError("non-physical port impedance (Re Z0 <= 0)")
    w_out = ls.xmatrix_frequencies
    ch = _Channels()
    devs = noise_sources(ls.circuit)
    if devs:
        a = np.array([lay.row(d.n1) for d in devs], int)
        b = np.array([lay.row(d.n2) for d in devs], int)
        for k, wk in enumerate(modes.omegas):
            Z = ls.injection_response(a, b, k)  # (P·m, nd)
            rey = np.array([d.admittance(wk).real for d in devs])
            flux = 4 * rey[None, :] * np.abs(Z) ** 2 / z0[:, None] * np.abs(wk / w_out)[:, None]
            for i, d in enumerate(devs):
                ch.names.append(d.element)
                ch.modes.append(k)
                ch.flux.append(flux[:, i])
                ch.omegas.append(wk)
    # lossy multiports: internal noise waves with ⟨cc†⟩ ∝ I − SS†
    for mp, _, _, aux in lay.multiports:
        for k, wk in enumerate(modes.omegas):
            S = mp.network.s_at(wk)
            lam, U = np.linalg.eigh(np.eye(S.shape[0]) - S @ S.conj().T)
            lam = np.clip(lam, 0, None)
            # unit noise wave c_i enters the aux constraint row with weight 2
            R = 2 * ls.adjoint[aux * m + k].T  # (P·m, nports)
            V = R @ U
            for c in range(lam.size):
                if lam[c] <= 0:
                    continue
                flux = lam[c] * np.abs(V[:, c]) ** 2 / z0 * np.abs(wk / w_out)
                ch.names.append(f"{mp.name}#{c + 1}")
                ch.modes.append(k)
                ch.flux.append(flux)
                ch.omegas.append(wk)
    return ch


@dataclass
class NoiseReport:
    """Added noise referred to each output (p, ω_n).

    ``p_dut`` is the noise power per unit bandwidth (W/Hz) delivered to the
    port; ``ratio`` is N in photon units relative to the reference input's
    available noise ``p_in``. ``signed_flux`` is the loss-channel photon flux
    weighted by sgn(ω_k), used by the lossy commutation relation.
    """

    modes: ModeSet
    temperature: float
    reference: tuple
    p_dut: np.ndarray  # (P, m)
    p_in: float
    ratio: np.ndarray  # (P, m)
    signed_flux: np.ndarray  # (P·m,)
    device_names: list
    device_ratio: np.ndarray  # (n_devices, P·m), summed over source modes

    @property
    def lossless(self) -> bool:
        return not self.device_names

    def to_json(self) -> str:
        ks = [int(k) for k in self.modes.k]
        return json.dumps(
            {
                "temperature_K": self.temperature,
                "reference": list(self.reference),
                "modes": ks,
                "frequencies_hz": [float(w / (2 * math.pi)) for w in self.modes.omegas],
                "p_in_W_per_Hz": self.p_in,
                "p_dut_W_per_Hz": self.p_dut.tolist(),
                "noise_ratio": self.ratio.tolist(),
                "devices": {n: r.tolist() for n, r in zip(self.device_names, self.device_ratio)},
            }
        )


def noise_ratio(ls: LinearizedSystem, temperature: float = 0.0, reference=(1, 0)) -> NoiseReport:
    """Noise ratio N for every output mode from every dissipative element."""
    modes = ls.modes
    P, m = len(ls.layout.ports), modes.m
    w_out = ls.xmatrix_frequencies
    w_ref = modes.omegas[modes.position(reference[1])]
    coth_ref = coth_factor(w_ref, temperature)
    ch = _loss_channels(ls)
    names = sorted(set(ch.names), key=ch.names.index)
    pos = {n: i for i, n in enumerate(names)}
    per_dev = np.zeros((len(names), P * m))
    signed = np.zeros(P * m)
    for name, w, flux in zip(ch.names, ch.omegas, ch.flux):
        per_dev[pos[name]] += flux * coth_factor(w, temperature) / coth_ref
        signed += np.sign(w) * flux
    ratio = per_dev.sum(axis=0)
    # back to W/Hz: N · P_in · |ω_n/ω_l|
    p_in = HBAR / 2 * abs(w_ref) * coth_ref
    p_dut = ratio * p_in * np.abs(w_out / w_ref)
    return NoiseReport(
        modes,
        float(temperature),
        tuple(reference),
        p_dut.reshape(P, m),
        float(p_in),
        ratio.reshape(P, m),
        signed,
        names,
        per_dev,
    )


def qe_with_loss(x: QuantumXMatrix, report: NoiseReport, out=(2, 0), inp=(1, 0)) -> float:
    return quantum_efficiency(x, out, inp, noise=float(report.ratio[out[0] - 1, x.modes.position(out[1])]))


def normalized_qe_with_loss(x: QuantumXMatrix, report: NoiseReport, out=(2, 0), inp=(1, 0)) -> float:
    G = abs(x.entry(*out, *inp)) ** 2
    return qe_with_loss(x, report, out, inp) / qe_ideal(G)


def lossy_commutation_residuals(x: QuantumXMatrix, report: NoiseReport | None) -> np.ndarray:
    """Sum rule with every loss channel counted as an extra input port."""
    r = commutation_residuals(x)
    if report is not None:
        r = r + report.signed_flux
    return r


def transimpedance(ls: LinearizedSystem, device, k: int, p: int, n: int) -> complex:
    """∂v_{p,n}/∂i_{d,k}: port-p voltage at mode n per unit current across ``device``.

    ``device`` is an element name or a (node+, node−) pair; current flows
    into node+ and out of node−. Mode labels ``k``/``n`` follow ω_k = ω_s + 2kω_P.
    """
    if isinstance(device, str):
        el = next((e for e in ls.circuit.elements if e.name == device), None)
        if el is None or not hasattr(el, "n2"):
            raise KeyError(f"no two-terminal element {device!r}")
        n1, n2 = el.n1, el.n2
    else:
        n1, n2 = device
    lay, modes = ls.layout, ls.modes
    a = np.array([lay.row(_node(n1))])
    b = np.array([lay.row(_node(n2))])
    Z = ls.injection_response(a, b, modes.position(k))[:, 0]
    return complex(Z[(p - 1) * modes.m + modes.position(n)])


@dataclass
class OperatingPoint:
    """All metrics at one signal frequency."""

    X: XMatrix
    x: QuantumXMatrix
    noise: NoiseReport | None

    @property
    def gain_db(self) -> float:
        G = abs(self.X.entry(2, 0, 1, 0)) ** 2
        return 10 * math.log10(G) if G > 0 else -math.inf

    @property
    def idler_gain_db(self) -> float:
        G = abs(self.X.entry(2, -1, 1, 0)) ** 2
        return 10 * math.log10(G) if G > 0 else -math.inf

    @property
    def s11_db(self) -> float:
        g = abs(self.X.entry(1, 0, 1, 0))
        return 20 * math.log10(g) if g > 0 else -math.inf

    @property
    def noise_ratio(self) -> float:
        return 0.0 if self.noise is None else float(self.noise.ratio[1, self.X.modes.position(0)])

    @property
    def qe(self) -> float:
        return quantum_efficiency(self.x, noise=self.noise_ratio)

    @property
    def qe_normalized(self) -> float:
        return normalized_qe(self.x, noise=self.noise_ratio)

    @property
    def comm_residual_max(self) -> float:
        return float(np.max(np.abs(lossy_commutation_residuals(self.x, self.noise))))


def analyze(
    circuit: Circuit,
    pump: PumpSolution | None,
    modes: ModeSet,
    temperature: float = 0.0,
    layout=None,
) -> OperatingPoint:
    ls = LinearizedSystem(circuit, pump, modes, layout=layout)
    X = ls.xmatrix()
    x = to_quantum(X)
    report = noise_ratio(ls, temperature)
    return OperatingPoint(X, x, None if report.lossless else report)

