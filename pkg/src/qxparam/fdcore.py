"""Frequency-domain modified nodal analysis.

Unknowns are node voltages plus one branch current per linear inductor and
one port current per multiport terminal pair. A *modal* system stacks the
same unknowns at several (signed) frequencies; unknown ``u`` at mode ``k``
lives at row ``u * m + k``. Negative frequencies use the conjugate
admittance of the positive one, so a real time-domain waveform is described
by coefficients of ``exp(+i ω t)`` at both signs of ω.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .circuit import (
    Capacitor,
    Circuit,
    Inductor,
    JosephsonJunction,
    Resistor,
    Source,
    TouchstoneMultiport,
)
from .constants import HBAR, K_B, PHI0_RED
from .touchstone import BandError

PIVOT_RTOL = 1e-13


class SingularSystemError(RuntimeError):
    def __init__(self, msg, nodes=()):
        self.nodes = list(nodes)
        super().__init__(f"{msg}; offending unknowns: {self.nodes[:8]}" if self.nodes else msg)


def capacitor_admittance(C, tan_delta, omega):
    """jωC / (1 + j·tanδ), conjugated for ω < 0; zero at DC."""
    omega = np.asarray(omega, dtype=float)
    sgn = np.sign(omega)
    return 1j * omega * C / (1 + 1j * sgn * tan_delta)


def coth_factor(omega, T):
    """coth(ħ|ω| / 2kT), equal to 1 at T = 0."""
    if T <= 0:
        return np.ones_like(np.asarray(omega, dtype=float))
    x = HBAR * np.abs(omega) / (2 * K_B * T)
    return 1 / np.tanh(x)


@dataclass(frozen=True)
class NoiseSource:
    """Thermal/vacuum current noise in parallel with a dissipative element."""

    element: str
    n1: str
    n2: str
    kind: str  # "capacitor" | "resistor"
    value: float
    tan_delta: float = 0.0

    def admittance(self, omega):
        if self.kind == "capacitor":
            return capacitor_admittance(self.value, self.tan_delta, omega)
        return np.full(np.shape(omega), 1 / self.value, dtype=complex)

    def spectral_density(self, omega, T=0.0):
        """⟨i_n²⟩ = 4 (ħ|ω|/2) coth(ħ|ω|/2kT) Re Y(ω) in A²/Hz."""
        return 4 * (HBAR * np.abs(omega) / 2) * coth_factor(omega, T) * np.real(self.admittance(omega))


def noise_sources(circuit: Circuit) -> list[NoiseSource]:
    out = []
    for el in circuit.elements:
        if isinstance(el, Capacitor) and el.tan_delta > 0:
            out.append(NoiseSource(el.name, el.n1, el.n2, "capacitor", el.C, el.tan_delta))
        elif isinstance(el, Resistor):
            out.append(NoiseSource(el.name, el.n1, el.n2, "resistor", el.R))
        elif isinstance(el, Source) and math.isfinite(el.impedance):
            out.append(NoiseSource(el.name, el.n1, el.n2, "resistor", el.impedance))
    return out


class Layout:
    """Unknown numbering and vectorized element tables for a circuit."""

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self._idx = circuit.node_index
        self.node_names = circuit.nodes[1:]
        self.n_nodes = len(self.node_names)
        row = self.row
        caps = circuit.of_type(Capacitor)
        self.cap_a = np.array([row(c.n1) for c in caps], dtype=int)
        self.cap_b = np.array([row(c.n2) for c in caps], dtype=int)
        self.cap_C = np.array([c.C for c in caps])
        self.cap_tand = np.array([c.tan_delta for c in caps])

        # real conductances: resistors, port terminations, source impedances
        ga, gb, gv = [], [], []
        for r in circuit.of_type(Resistor):
            ga.append(row(r.n1)), gb.append(row(r.n2)), gv.append(1 / r.R)
        for s in circuit.of_type(Source):
            if math.isfinite(s.impedance):
                ga.append(row(s.n1)), gb.append(row(s.n2)), gv.append(1 / s.impedance)
        for p in circuit.ports:
            ga.append(row(p.n1)), gb.append(row(p.n2)), gv.append(1 / p.Z0)
        self.g_a, self.g_b, self.g_val = np.array(ga, int), np.array(gb, int), np.array(gv, float)

        inds = circuit.of_type(Inductor)
        nxt = self.n_nodes
        self.ind_a = np.array([row(i.n1) for i in inds], dtype=int)
        self.ind_b = np.array([row(i.n2) for i in inds], dtype=int)
        self.ind_L = np.array([i.L for i in inds])
        self.ind_row = np.arange(nxt, nxt + len(inds))
        nxt += len(inds)

        self.multiports = []
        for mp in circuit.of_type(TouchstoneMultiport):
            a = np.array([row(t[0]) for t in mp.terminals], dtype=int)
            b = np.array([row(t[1]) for t in mp.terminals], dtype=int)
            aux = np.arange(nxt, nxt + len(a))
            nxt += len(a)
            self.multiports.append((mp, a, b, aux))

        jjs = circuit.junctions
        self.jj_names = [j.name for j in jjs]
        self.jj_a = np.array([row(j.n1) for j in jjs], dtype=int)
        self.jj_b = np.array([row(j.n2) for j in jjs], dtype=int)
        self.jj_ic = np.array([j.Ic for j in jjs])

        self.ports = list(circuit.ports)
        self.port_a = np.array([row(p.n1) for p in self.ports], dtype=int)
        self.port_b = np.array([row(p.n2) for p in self.ports], dtype=int)
        self.port_z0 = np.array([p.Z0 for p in self.ports])
        self.size = nxt

    def row(self, n):
        return self._idx[n] - 1  # ground -> -1

    def unknown_name(self, u: int) -> str:
        if u < self.n_nodes:
            return self.node_names[u]
        for mp, _, _, aux in self.multiports:
            if u in aux:
                return f"{mp.name}.i{int(np.where(aux == u)[0][0]) + 1}"
        j = u - self.n_nodes
        return f"{self.circuit.of_type(Inductor)[j].name}.i"

    def check_band(self, omegas):
        for mp, *_ in self.multiports:
            f = np.abs(np.asarray(omegas)) / (2 * np.pi)
            if not mp.network.covers(f):
                raise BandError(f"{mp.name}: analysis frequencies leave the tabulated band {mp.network.band} Hz")


def _pair_stamp(a, b, y, m):
    """COO triplets of a two-terminal admittance y (shape (n, m)) at every mode."""
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    sign = np.concatenate([np.ones_like(a), np.ones_like(a), -np.ones_like(a), -np.ones_like(a)])
    vals = np.concatenate([y, y, y, y]) * sign[:, None]
    keep = (rows >= 0) & (cols >= 0)
    k = np.arange(m)
    r = (rows[keep, None] * m + k).ravel()
    c = (cols[keep, None] * m + k).ravel()
    return r, c, vals[keep].ravel()


def linear_triplets(layout: Layout, omegas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """COO triplets of all linear stamps (junctions excluded) at ``omegas``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    m = omegas.size
    R, C, V = [], [], []
    if layout.cap_C.size:
        y = capacitor_admittance(layout.cap_C[:, None], layout.cap_tand[:, None], omegas[None, :])
        for t, arr in zip((R, C, V), _pair_stamp(layout.cap_a, layout.cap_b, y, m)):
            t.append(arr)
    if layout.g_val.size:
        y = np.repeat(layout.g_val[:, None], m, axis=1).astype(complex)
        for t, arr in zip((R, C, V), _pair_stamp(layout.g_a, layout.g_b, y, m)):
            t.append(arr)
    if layout.ind_L.size:
        k = np.arange(m)
        br = layout.ind_row
        for node, s in ((layout.ind_a, 1.0), (layout.ind_b, -1.0)):
            keep = node >= 0
            rr = (node[keep, None] * m + k).ravel()
            cc = (br[keep, None] * m + k).ravel()
            R += [rr, cc]
            C += [cc, rr]
            V += [np.full(rr.size, s, complex), np.full(rr.size, s, complex)]
        R.append((br[:, None] * m + k).ravel())
        C.append((br[:, None] * m + k).ravel())
        V.append((-1j * omegas[None, :] * layout.ind_L[:, None]).ravel())
    for mp, a, b, aux in layout.multiports:
        net = mp.network
        sq = math.sqrt(net.z0)
        n = len(a)
        eye = np.eye(n)
        for k, w in enumerate(omegas):
            s = net.s_at(w)
            for i in range(n):
                ri = aux[i] * m + k
                for node, sg in ((a[i], 1.0), (b[i], -1.0)):
                    if node >= 0:
                        R.append(np.array([node * m + k]))
                        C.append(np.array([ri]))
                        V.append(np.array([sg], complex))
                for j in range(n):
                    cv = (eye[i, j] - s[i, j]) / sq
                    ci = -(eye[i, j] + s[i, j]) * sq
                    for node, sg in ((a[j], 1.0), (b[j], -1.0)):
                        if node >= 0:
                            R.append(np.array([ri]))
                            C.append(np.array([node * m + k]))
                            V.append(np.array([sg * cv]))
                    R.append(np.array([ri]))
                    C.append(np.array([aux[j] * m + k]))
                    V.append(np.array([ci]))
    if not R:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, complex)
    return np.concatenate(R), np.concatenate(C), np.concatenate(V)


def junction_triplets(layout: Layout, coupling: np.ndarray):
    """COO triplets of junction admittance blocks.

    ``coupling[d, j, k]`` is the current of junction ``d`` at mode ``j`` per
    unit branch voltage at mode ``k``.
    """
    nj, m, _ = coupling.shape
    if nj == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, complex)
    jj, kk = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    R, C, V = [], [], []
    a, b = layout.jj_a, layout.jj_b
    for rn, cn, s in ((a, a, 1), (b, b, 1), (a, b, -1), (b, a, -1)):
        keep = (rn >= 0) & (cn >= 0)
        R.append((rn[keep, None, None] * m + jj[None]).ravel())
        C.append((cn[keep, None, None] * m + kk[None]).ravel())
        V.append((s * coupling[keep]).ravel())
    return np.concatenate(R), np.concatenate(C), np.concatenate(V)


def linear_junction_coupling(layout: Layout, omegas) -> np.ndarray:
    """Junctions as inductors Φ0/(2π Ic): diagonal coupling 1/(jωL_J)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    m = omegas.size
    out = np.zeros((layout.jj_ic.size, m, m), complex)
    with np.errstate(divide="ignore"):
        y = layout.jj_ic[:, None] / (PHI0_RED * 1j * omegas[None, :])
    idx = np.arange(m)
    out[:, idx, idx] = y
    return out


@dataclass
class AdmittanceSystem:
    """Assembled (modal) MNA matrix with its unknown layout."""

    layout: Layout
    omegas: np.ndarray
    matrix: sp.csc_matrix

    @property
    def m(self) -> int:
        return self.omegas.size

    @property
    def frequency(self) -> float:
        return float(self.omegas[0])

    def index(self, unknown: int, mode: int = 0) -> int:
        return unknown * self.m + mode

    def port_vector(self, p: int, mode: int = 0) -> np.ndarray:
        """Unit current injected into port ``p`` (1-based) at ``mode``."""
        v = np.zeros(self.matrix.shape[0], complex)
        a, b = self.layout.port_a[p - 1], self.layout.port_b[p - 1]
        if a >= 0:
            v[a * self.m + mode] += 1
        if b >= 0:
            v[b * self.m + mode] -= 1
        return v

    def factorize(self) -> "Factorization":
        return Factorization(self)

    def dump(self, path) -> None:
        """Write the matrix in Matrix Market coordinate format."""
        scipy.io.mmwrite(str(path), self.matrix.tocoo(), comment=f"omegas={list(self.omegas)}")


class Factorization:
    def __init__(self, system: AdmittanceSystem):
        self.system = system
        A = system.matrix
        try:
            self.lu = splu(A, permc_spec="COLAMD", diag_pivot_thresh=0.1)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular system: {exc}") from None
        d = np.abs(self.lu.U.diagonal())
        bad = np.nonzero(d <= PIVOT_RTOL * d.max())[0] if d.size else []
        if len(bad) or not np.all(np.isfinite(d)):
            # U is factored over A[:, perm_c]; map pivots back to columns
            cols = self.lu.perm_c[bad] if len(bad) else []
            m = system.m
            names = sorted({system.layout.unknown_name(int(c) // m) for c in cols})
            raise SingularSystemError("singular system (ideal resonance or floating subcircuit)", names)

    def solve(self, rhs, trans: str = "N"):
        return self.lu.solve(np.asarray(rhs, dtype=complex), trans=trans)


def assemble(layout: Layout, omegas, coupling=None) -> AdmittanceSystem:
    """Modal system at ``omegas`` with an optional junction coupling tensor."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    layout.check_band(omegas)
    m = omegas.size
    r, c, v = linear_triplets(layout, omegas)
    if coupling is not None:
        r2, c2, v2 = junction_triplets(layout, coupling)
        r, c, v = np.concatenate([r, r2]), np.concatenate([c, c2]), np.concatenate([v, v2])
    n = layout.size * m
    A = sp.csc_matrix((v, (r, c)), shape=(n, n))
    return AdmittanceSystem(layout, omegas, A)


def assemble_linear(circuit: Circuit, omega: float, jj_as: str = "linear", layout: Layout | None = None) -> AdmittanceSystem:
    """Single-frequency MNA system; junctions open or as inductors L_J.

    At ω = 0 capacitors are open; junction inductances have no nodal stamp
    there, so DC assembly requires ``jj_as="open"``.
    """
    layout = layout or Layout(circuit)
    if jj_as not in ("linear", "open"):
        raise ValueError("jj_as must be 'linear' or 'open'")
    coupling = None
    if jj_as == "linear" and layout.jj_ic.size:
        if omega == 0:
            raise SingularSystemError("junctions as inductors at DC", layout.jj_names)
        coupling = linear_junction_coupling(layout, [omega])
    return assemble(layout, [omega], coupling)


def port_voltages(system: AdmittanceSystem, solution: np.ndarray, mode: int = 0) -> np.ndarray:
    lay, m = system.layout, system.m
    sol = np.atleast_2d(solution.T).T if solution.ndim == 1 else solution

    def node_v(rows):
        out = np.zeros((rows.size,) + sol.shape[1:], complex)
        ok = rows >= 0
        out[ok] = sol[rows[ok] * m + mode]
        return out

    return node_v(lay.port_a) - node_v(lay.port_b)


def solve_linear_sparams(circuit: Circuit, omega: float, layout: Layout | None = None) -> np.ndarray:
    """Port S matrix from power waves a = (V + Z0 I)/2√Z0, b = (V − Z0 I)/2√Z0.

    Negative ``omega`` returns the conjugate (negative-frequency) response.
    """
    sys_ = assemble_linear(circuit, omega, layout=layout)
    lay = sys_.layout
    P = len(lay.ports)
    if P == 0:
        raise ValueError("circuit has no ports")
    fac = sys_.factorize()
    rhs = np.stack([sys_.port_vector(q) for q in range(1, P + 1)], axis=1)
    sol = fac.solve(rhs)
    Z = port_voltages(sys_, sol)  # Z[p, q] = V_p per unit current into q
    d = 1 / np.sqrt(lay.port_z0)
    return 2 * d[:, None] * Z * d[None, :] - np.eye(P)


def input_impedance(circuit: Circuit, omega: float, port: int = 1) -> complex:
    """Impedance seen looking into ``port`` with its own termination removed."""
    S = solve_linear_sparams(circuit, omega)
    z0 = circuit.ports[port - 1].Z0
    others = [p for p in range(len(circuit.ports)) if p != port - 1]
    if others:
        raise ValueError("input_impedance is defined here for 1-port circuits")
    g = S[0, 0]
    return z0 * (1 + g) / (1 - g)
