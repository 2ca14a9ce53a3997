"""Single-tone harmonic balance for the strong-pump steady state.

Node voltages are expanded as v(t) = Σ_n V_n exp(i n ω_P t) over n = −N..N
with V_{−n} = conj(V_n). Junction phases follow from φ_n = V_n / (i n ω_P
Φ0/2π). With no DC bias and odd-symmetric junctions, a drive at ω_P only
excites odd harmonics, so Newton runs on the odd harmonics and even ones
(and DC) are identically zero.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .circuit import Circuit, Source
from .constants import PHI0_RED
from .fdcore import AdmittanceSystem, Factorization, Layout, SingularSystemError, junction_triplets, linear_triplets

log = logging.getLogger(__name__)

OVERDRIVE_PHASE = math.pi / 2
# Newton budget from the full-drive linear guess before falling back to a ramp
DIRECT_ITERATIONS = 8


class PumpNotConverged(RuntimeError):
    def __init__(self, msg, best=None, history=()):
        self.best = best
        self.history = list(history)
        super().__init__(msg)


@dataclass(frozen=True)
class PumpSpec:
    frequency: float  # rad/s
    current: float  # peak amperes of the Norton source behind the port Z0
    port: int = 1
    harmonics: int = 8
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("pump frequency must be positive")
        if self.harmonics < 3:
            raise ValueError("need at least 3 pump harmonics")
        if self.current < 0:
            raise ValueError("pump current must be non-negative")


def available_power(current: float, z0: float = 50.0) -> float:
    """Available power (W) of a Norton source of peak ``current`` behind ``z0``."""
    return current**2 * z0 / 8


def _nsamples(nmax: int) -> int:
    # 4x Nyquist on the highest harmonic that is needed
    return max(64, 1 << math.ceil(math.log2(8 * nmax)))


def _to_time(coeffs: np.ndarray, ns: int) -> np.ndarray:
    """Real waveform samples from one-sided coefficients c_0..c_N (last axis)."""
    spec = np.zeros(coeffs.shape[:-1] + (ns // 2 + 1,), complex)
    spec[..., : coeffs.shape[-1]] = coeffs * ns
    spec[..., 0] = coeffs[..., 0].real * ns
    return np.fft.irfft(spec, n=ns, axis=-1)


def _to_coeffs(samples: np.ndarray, nmax: int) -> np.ndarray:
    ns = samples.shape[-1]
    return np.fft.rfft(samples, axis=-1)[..., : nmax + 1] / ns


def jj_current_spectrum(phases, ic=1.0, nsamples: int | None = None) -> np.ndarray:
    """Fourier coefficients of Ic·sin φ(t).

    ``phases[..., n]`` is the coefficient of exp(i n ω t) for n = 0..N; the
    result has the same shape and convention.
    """
    phases = np.asarray(phases, dtype=complex)
    n = phases.shape[-1] - 1
    ns = nsamples or _nsamples(max(n, 1))
    phi = _to_time(phases, ns)
    return _scale(ic, _to_coeffs(np.sin(phi), n))


def jj_cos_spectrum(phases, nmax: int, ic=1.0, nsamples: int | None = None) -> np.ndarray:
    """Coefficients 0..nmax of Ic·cos φ(t): the small-signal conversion terms ∂I/∂φ."""
    phases = np.asarray(phases, dtype=complex)
    n = phases.shape[-1] - 1
    ns = nsamples or _nsamples(max(nmax, n, 1))
    phi = _to_time(phases, ns)
    return _scale(ic, _to_coeffs(np.cos(phi), nmax))


def _scale(ic, coeffs):
    ic = np.asarray(ic, dtype=float)
    return ic[..., None] * coeffs if ic.ndim else ic * coeffs


@dataclass
class PumpSolution:
    """Converged pump state.

    ``node_voltages[u, n]`` and ``junction_phases[d, n]`` are one-sided
    coefficients for n = 0..N_h (peak amplitude of harmonic n is 2|c_n|).
    """

    spec: PumpSpec
    layout: Layout
    node_voltages: np.ndarray
    junction_phases: np.ndarray
    residual_norm: float
    iterations: int
    residual_history: list = field(default_factory=list)
    overdriven: list = field(default_factory=list)

    @property
    def harmonics(self) -> int:
        return self.spec.harmonics

    def conversion_coefficients(self, nmax: int | None = None) -> np.ndarray:
        """Ic·cos φ_pump(t) coefficients at offsets 0..nmax (default 2·N_h)."""
        nmax = 2 * self.harmonics if nmax is None else nmax
        return jj_cos_spectrum(self.junction_phases, nmax, self.layout.jj_ic)

    def port_voltage(self, p: int) -> np.ndarray:
        a, b = self.layout.port_a[p - 1], self.layout.port_b[p - 1]
        va = self.node_voltages[a] if a >= 0 else 0
        vb = self.node_voltages[b] if b >= 0 else 0
        return va - vb

    def pump_wave(self, p: int | None = None) -> np.ndarray:
        """Scattered power-wave phasors b_{p,nω_P} (peak-amplitude convention, √W)."""
        p = p or self.spec.port
        z0 = self.layout.port_z0[p - 1]
        b = 2 * self.port_voltage(p) / math.sqrt(z0)  # peak phasors
        if p == self.spec.port:
            # driven port: b = V/√Z0 − Is·√Z0/2
            b[1] -= self.spec.current * np.exp(1j * self.spec.phase) * math.sqrt(z0) / 2
        return b

    @property
    def incident_amplitude(self) -> float:
        """|A^pump|: incident pump power-wave amplitude at the pump port (√W, peak)."""
        z0 = self.layout.port_z0[self.spec.port - 1]
        return self.spec.current * math.sqrt(z0) / 2

    def waveform(self, u: int, ns: int = 256) -> np.ndarray:
        return _to_time(self.node_voltages[u], ns)

    def to_json(self) -> str:
        def cplx(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(a)]

        return json.dumps(
            {
                "pump_frequency_hz": self.spec.frequency / (2 * math.pi),
                "pump_current_a": self.spec.current,
                "port": self.spec.port,
                "harmonics": self.spec.harmonics,
                "residual_norm": self.residual_norm,
                "iterations": self.iterations,
                "overdriven": self.overdriven,
                "nodes": list(self.layout.node_names),
                "node_voltages": cplx(self.node_voltages[: self.layout.n_nodes]),
                "junctions": self.layout.jj_names,
                "junction_phases": cplx(self.junction_phases),
            }
        )


class _HBProblem:
    def __init__(self, circuit: Circuit, spec: PumpSpec, layout: Layout | None):
        self.layout = lay = layout or Layout(circuit)
        self.spec = spec
        self.h = np.arange(1, spec.harmonics + 1, 2)  # odd harmonics
        self.modes = np.concatenate([-self.h[::-1], self.h])
        self.m = m = self.modes.size
        self.omegas = self.modes * spec.frequency
        lay.check_band(self.omegas)
        r, c, v = linear_triplets(lay, self.omegas)
        n = lay.size * m
        self.A = sp.csc_matrix((v, (r, c)), shape=(n, n))
        self.b = np.zeros(n, complex)
        pos = int(np.nonzero(self.modes == 1)[0][0])
        neg = int(np.nonzero(self.modes == -1)[0][0])

        def inject(node, amp):
            if node >= 0:
                self.b[node * m + pos] += amp
                self.b[node * m + neg] += np.conj(amp)

        if spec.current:
            p = spec.port
            if not 1 <= p <= len(lay.ports):
                raise ValueError(f"pump port {p} does not exist")
            amp = spec.current / 2 * np.exp(1j * spec.phase)
            inject(lay.port_a[p - 1], amp)
            inject(lay.port_b[p - 1], -amp)
        for s in circuit.of_type(Source):
            if not math.isclose(s.frequency, spec.frequency, rel_tol=1e-12):
                raise ValueError(f"{s.name}: sources off the pump frequency need multi-tone balance")
            amp = s.amplitude / 2 * np.exp(1j * s.phase)
            # SPICE convention: current leaves n1, enters n2 through the source
            inject(lay.row(s.n2), amp)
            inject(lay.row(s.n1), -amp)
        self.b_scale = np.abs(self.b).max()
        # per-junction branch-voltage → phase factor at each mode
        self.v2phi = 1 / (PHI0_RED * 1j * self.omegas)
        self.offsets = self.modes[:, None] - self.modes[None, :]
        self.nmax = int(2 * self.h.max())
        self.ns = _nsamples(self.nmax)

    def symmetrize(self, x):
        """Project onto real waveforms: the −n column mirrors conj(+n)."""
        X = x.reshape(-1, self.m)
        half = self.m // 2
        pos = 0.5 * (X[:, half:] + np.conj(X[:, :half][:, ::-1]))
        return np.concatenate([np.conj(pos[:, ::-1]), pos], axis=1).ravel()

    def branch(self, x):
        X = x.reshape(-1, self.m)
        lay = self.layout
        va = np.where(lay.jj_a[:, None] >= 0, X[np.maximum(lay.jj_a, 0)], 0)
        vb = np.where(lay.jj_b[:, None] >= 0, X[np.maximum(lay.jj_b, 0)], 0)
        return va - vb

    def phases(self, x) -> np.ndarray:
        """One-sided junction phase coefficients (nJJ, N_h+1)."""
        phi_modes = self.branch(x) * self.v2phi
        out = np.zeros((self.layout.jj_ic.size, self.spec.harmonics + 1), complex)
        pos = self.modes > 0
        out[:, self.modes[pos]] = phi_modes[:, pos]
        return out

    def _stamp_currents(self, ij_modes):
        F = np.zeros((self.layout.size, self.m), complex)
        lay = self.layout
        ka, kb = lay.jj_a >= 0, lay.jj_b >= 0
        np.add.at(F, lay.jj_a[ka], ij_modes[ka])
        np.add.at(F, lay.jj_b[kb], -ij_modes[kb])
        return F.ravel()

    def residual(self, x, scale=1.0):
        lay = self.layout
        phi = self.phases(x)
        t = _to_time(phi, self.ns)
        ic = lay.jj_ic[:, None]
        cur = ic * _to_coeffs(np.sin(t), self.spec.harmonics)
        ij = np.zeros((lay.jj_ic.size, self.m), complex)
        pos = self.modes > 0
        ij[:, pos] = cur[:, self.modes[pos]]
        ij[:, ~pos] = np.conj(cur[:, -self.modes[~pos]])
        g = ic * _to_coeffs(np.cos(t), self.nmax)
        return self.A @ x + self._stamp_currents(ij) - scale * self.b, g

    def jacobian(self, g):
        # G at offset n: n >= 0 from g, n < 0 by conjugation
        off = self.offsets
        G = np.where(off[None] >= 0, g[:, np.abs(off)], np.conj(g[:, np.abs(off)]))
        coupling = G * self.v2phi[None, None, :]
        r, c, v = junction_triplets(self.layout, coupling)
        J = self.A + sp.csc_matrix((v, (r, c)), shape=self.A.shape)
        return J

    def factor(self, J):
        return Factorization(AdmittanceSystem(self.layout, self.omegas, J.tocsc()))


def _newton(prob: _HBProblem, x, scale, tol, max_iter, history):
    f, g = prob.residual(x, scale)
    target = tol * max(prob.b_scale * scale, 1e-300)
    norm = np.abs(f).max()
    history.append(norm / max(prob.b_scale * scale, 1e-300))
    for it in range(max_iter):
        if norm <= target:
            return x, True, it
        try:
            fac = prob.factor(prob.jacobian(g))
        except SingularSystemError:
            return x, False, it
        dx = prob.symmetrize(fac.solve(f))
        step = 1.0
        for _ in range(12):
            xn = x - step * dx
            fn, gn = prob.residual(xn, scale)
            nn = np.abs(fn).max()
            if nn < norm or nn <= target:
                break
            step /= 2
        else:
            return x, False, it
        x, f, g, norm = xn, fn, gn, nn
        history.append(norm / max(prob.b_scale * scale, 1e-300))
    return x, norm <= target, max_iter


def solve_pump(
    circuit: Circuit,
    spec: PumpSpec,
    tol: float = 1e-9,
    max_iter: int = 30,
    layout: Layout | None = None,
    continuation: bool | None = None,
) -> PumpSolution:
    """Pump steady state by Newton on the harmonic-balance residual.

    Starts from the linear solution at full drive; if that fails, ramps the
    drive from zero, halving the ramp step whenever Newton stalls.
    ``continuation=True`` forces the ramp.
    """
    prob = _HBProblem(circuit, spec, layout)
    lay = prob.layout
    n = lay.size * prob.m
    history: list[float] = []
    iters = 0

    def finish(x):
        phi = prob.phases(x)
        f, _ = prob.residual(x)
        X = x.reshape(lay.size, prob.m)
        V = np.zeros((lay.size, spec.harmonics + 1), complex)
        pos = prob.modes > 0
        V[:, prob.modes[pos]] = X[:, pos]
        rel = float(np.abs(f).max() / prob.b_scale) if prob.b_scale else 0.0
        over = [lay.jj_names[i] for i in np.nonzero(2 * np.abs(phi[:, 1]) >= OVERDRIVE_PHASE)[0]]
        if over:
            log.warning("%d junctions exceed the phase validity bound", len(over))
        return PumpSolution(spec, lay, V, phi, rel, iters, history, over)

    if prob.b_scale == 0:
        return finish(np.zeros(n, complex))

    x0 = np.zeros(n, complex)
    if not continuation:
        # linear initial guess at full amplitude
        _, g0 = prob.residual(x0)
        try:
            x_lin = prob.symmetrize(prob.factor(prob.jacobian(g0)).solve(prob.b))
            x, ok, it = _newton(prob, x_lin, 1.0, tol, min(max_iter, DIRECT_ITERATIONS), history)
            iters += it
            if ok:
                return finish(x)
        except SingularSystemError:
            pass
        log.info("direct Newton failed; ramping pump amplitude")

    s, ds, x = 0.0, 0.25, x0
    best = x0
    while s < 1.0:
        s_new = min(1.0, s + ds)
        guess = x * (s_new / s) if s > 0 else x
        xn, ok, it = _newton(prob, guess, s_new, tol, max_iter, history)
        iters += it
        if ok:
            s, x, best = s_new, xn, xn
            ds = min(ds * 1.5, 0.5)
        else:
            ds /= 2
            if ds < 1e-4:
                raise PumpNotConverged(
                    f"harmonic balance stalled at {s:.4f} of full pump drive",
                    best=finish(best),
                    history=history,
                )
    return finish(x)
