"""Reference time-domain integrator for small Josephson circuits.

Node fluxes Φ (V = dΦ/dt) are the state, so junction phases are simply
(Φ_a − Φ_b)/Φ0_red. KCL reads C Φ'' + G Φ' + K Φ + Ic sin(Φ/Φ0_red) = I_s(t)
and is integrated with the trapezoidal rule and Newton iterations on a
banded (RCM-ordered) Jacobian. Each output interval is sub-stepped so that
no junction phase moves by more than ``max_phase_step`` per step.

Several runs that differ only in their drives can be integrated in
lockstep: they share every step size, so differences between them carry
no step-control noise. This is what the three-run gain extraction relies on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.linalg.lapack import dgbtrf, dgbtrs
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .circuit import Capacitor, Circuit, Inductor, JosephsonJunction, Resistor, Source, TouchstoneMultiport
from .constants import PHI0_RED

MAX_NEWTON = 25
NEWTON_TOL = 1e-11  # rad
SETTLE_TOL = 1e-4


class TransientError(RuntimeError):
    pass


class StepUnderflow(TransientError):
    pass


class SettlingError(TransientError):
    pass


@dataclass(frozen=True)
class Drive:
    """Norton current i(t) = amplitude·cos(ω t + phase) behind a port's Z0."""

    frequency: float  # rad/s
    amplitude: float  # A peak
    phase: float = 0.0
    port: int = 1


@dataclass(frozen=True)
class TransientConfig:
    stop_time: float
    max_phase_step: float = 0.01
    drives: tuple = ()
    decimation: int = 1
    output_step: float | None = None  # default: 1/32 of the fastest drive period
    ramp_time: float = 0.0  # sin² turn-on of every drive and source
    max_nodes: int = 400
    min_step: float = 1e-18

    def check(self):
        if not 0 < self.max_phase_step <= math.pi / 5:
            raise ValueError("max_phase_step must lie in (0, π/5]")
        if not self.stop_time > 0:
            raise ValueError("stop_time must be positive")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.drives:
            slowest = min(d.frequency for d in self.drives)
            if self.stop_time < 50 * 2 * math.pi / slowest:
                raise ValueError("stop_time must cover at least 50 periods of every drive")


@dataclass
class TransientResult:
    times: np.ndarray
    node_names: list
    flux: np.ndarray  # (nt, n)
    voltage: np.ndarray  # (nt, n)
    ports: list
    steps: int = 0
    rejected: int = 0

    def node_voltage(self, name: str) -> np.ndarray:
        if name in ("0", "gnd", "GND"):
            return np.zeros_like(self.times)
        return self.voltage[:, self.node_names.index(name)]

    def port_voltage(self, p: int) -> np.ndarray:
        port = self.ports[p - 1]
        return self.node_voltage(port.n1) - self.node_voltage(port.n2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s"] + [f"V({n})" for n in self.node_names])
        for t, row in zip(self.times, self.voltage):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _to_band(M: sp.spmatrix, bw: int) -> np.ndarray:
    """LAPACK gbtrf storage (bw extra rows on top for fill-in)."""
    M = M.tocoo()
    ab = np.zeros((3 * bw + 1, M.shape[0]))
    np.add.at(ab, (2 * bw + M.row - M.col, M.col), M.data)
    return ab


class _Integrator:
    """Lockstep trapezoidal integration of R runs sharing one circuit."""

    def __init__(self, circuit: Circuit, config: TransientConfig, drive_sets: list):
        config.check()
        for el in circuit.elements:
            if isinstance(el, TouchstoneMultiport):
                raise TransientError("tabulated multiports are not supported in the time domain")
            if isinstance(el, Capacitor) and el.tan_delta:
                raise TransientError("lossy capacitors are not supported in the time domain")
        names = list(circuit.nodes[1:])
        n = len(names)
        if n > config.max_nodes:
            raise TransientError(f"circuit has {n} nodes; the oracle is capped at {config.max_nodes}")
        self.circuit, self.config, self.names = circuit, config, names
        idx = {name: i for i, name in enumerate(names)}
        row = lambda node: idx.get(node, -1)  # noqa: E731

        def stamp(pairs, vals):
            r, c, v = [], [], []
            for (a, b), y in zip(pairs, vals):
                for i, j, s in ((a, a, 1), (b, b, 1), (a, b, -1), (b, a, -1)):
                    if i >= 0 and j >= 0:
                        r.append(i), c.append(j), v.append(s * y)
            return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()

        caps = circuit.of_type(Capacitor)
        C = stamp([(row(e.n1), row(e.n2)) for e in caps], [e.C for e in caps])
        gp, gv = [], []
        for e in circuit.of_type(Resistor):
            gp.append((row(e.n1), row(e.n2))), gv.append(1 / e.R)
        for e in circuit.of_type(Source):
            if math.isfinite(e.impedance):
                gp.append((row(e.n1), row(e.n2))), gv.append(1 / e.impedance)
        for p in circuit.ports:
            gp.append((row(p.n1), row(p.n2))), gv.append(1 / p.Z0)
        G = stamp(gp, gv)
        inds = circuit.of_type(Inductor)
        K = stamp([(row(e.n1), row(e.n2)) for e in inds], [1 / e.L for e in inds])
        jjs = circuit.of_type(JosephsonJunction)
        J = stamp([(row(e.n1), row(e.n2)) for e in jjs], [1.0] * len(jjs))

        pattern = (abs(C) + abs(G) + abs(K) + abs(J) + sp.eye(n)).tocsr()
        perm = reverse_cuthill_mckee(pattern, symmetric_mode=True)
        inv = np.empty(n, int)
        inv[perm] = np.arange(n)
        self.perm, self.inv = perm, inv
        P = sp.eye(n, format="csr")[perm]
        C, G, K = (P @ M @ P.T for M in (C, G, K))
        pc = (P @ pattern @ P.T).tocoo()
        self.bw = bw = int(np.max(np.abs(pc.row - pc.col))) if n > 1 else 0
        # the oracle is capped at a few hundred nodes, where dense products are cheapest
        self.C, self.G, self.K = C.toarray(), G.toarray(), K.toarray()
        self._mh = {}
        self.Cb, self.Gb, self.Kb = (_to_band(M, bw) for M in (C, G, K))
        self.n = n

        prow = lambda node: inv[row(node)] if row(node) >= 0 else -1  # noqa: E731
        ja = np.array([prow(e.n1) for e in jjs], int)
        jb = np.array([prow(e.n2) for e in jjs], int)
        self.ic = np.array([e.Ic for e in jjs])
        # junction incidence: branch flux = D Φ, node currents = Dᵀ i
        r_, c_, v_ = [], [], []
        for d, (a, b) in enumerate(zip(ja, jb)):
            if a >= 0:
                r_.append(d), c_.append(a), v_.append(1.0)
            if b >= 0:
                r_.append(d), c_.append(b), v_.append(-1.0)
        self.D = sp.csr_matrix((v_, (r_, c_)), shape=(len(jjs), n)).toarray()
        self.DT = np.ascontiguousarray(self.D.T)
        # flat positions of the junction Jacobian stamps in the band array
        fi, fj, fs = [], [], []
        for d, (a, b) in enumerate(zip(ja, jb)):
            for i, j, s in ((a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)):
                if i >= 0 and j >= 0:
                    fi.append((2 * bw + i - j) * n + j), fj.append(d), fs.append(s)
        self.jflat, self.jdev, self.jsign = np.array(fi, int), np.array(fj, int), np.array(fs)

        # drives: (node+, node−, amplitude, ω, phase) per run
        self.R = len(drive_sets)
        src = []
        for e in circuit.of_type(Source):
            src.append((prow(e.n2), prow(e.n1), e.amplitude, e.frequency, e.phase))
        self.sources = []
        for drives in drive_sets:
            lst = list(src)
            for d in drives:
                if not 1 <= d.port <= len(circuit.ports):
                    raise ValueError(f"drive port {d.port} does not exist")
                port = circuit.ports[d.port - 1]
                lst.append((prow(port.n1), prow(port.n2), d.amplitude, d.frequency, d.phase))
            self.sources.append(lst)

        self.t = 0.0
        self.phi = np.zeros((n, self.R))
        self.v = np.zeros((n, self.R))
        self.rhs_prev = np.zeros((n, self.R))
        self.steps = self.rejected = 0
        self.nsub = 1

    # -- element evaluation -------------------------------------------------

    def _ramp(self, t):
        tr = self.config.ramp_time
        return 1.0 if tr <= 0 or t >= tr else math.sin(math.pi * t / (2 * tr)) ** 2

    def source_current(self, t) -> np.ndarray:
        out = np.zeros((self.n, self.R))
        env = self._ramp(t)
        for r, lst in enumerate(self.sources):
            for a, b, amp, w, ph in lst:
                i = env * amp * math.cos(w * t + ph)
                if a >= 0:
                    out[a, r] += i
                if b >= 0:
                    out[b, r] -= i
        return out

    def _branch(self, phi):
        return (self.D @ phi) / PHI0_RED

    def jj_current(self, phi) -> tuple[np.ndarray, np.ndarray]:
        """Node currents leaving through junctions and the junction phases."""
        ph = self._branch(phi)
        return self.DT @ (self.ic[:, None] * np.sin(ph)), ph

    # -- stepping -----------------------------------------------------------

    def _factor(self, lin, ph):
        """Band LU of the Jacobian at the first run's junction phases."""
        gj = self.ic * np.cos(ph[:, 0]) / PHI0_RED
        ab = lin.copy()
        ab.ravel()[:] += np.bincount(self.jflat, weights=self.jsign * gj[self.jdev], minlength=ab.size)
        lu, piv, info = dgbtrf(ab, self.bw, self.bw)
        if info:
            raise TransientError("singular transient Jacobian")
        return lu, piv

    def step(self, h) -> float:
        """One trapezoidal step of size ``h``; returns the largest junction phase change.

        Chord Newton: the Jacobian is factored once per step (refreshed if
        convergence slows) and shared by all lockstep runs.
        """
        t1 = self.t + h
        is1 = self.source_current(t1)
        phi0, v0, r0 = self.phi, self.v, self.rhs_prev
        phi = phi0 + h * v0
        if h not in self._mh:
            self._mh = {h: ((2 / h) * self.C + self.G, (4 / h**2) * self.Cb + (2 / h) * self.Gb + self.Kb)}
        Mh, lin = self._mh[h]
        base = (2 / h) * (self.C @ v0)
        lu = None
        for it in range(MAX_NEWTON):
            v1 = 2 * (phi - phi0) / h - v0
            f, ph = self.jj_current(phi)
            # (2/h)C(V1 − V0) + G V1 + K Φ1 + f(Φ1) − I_s1 − R0
            F = Mh @ v1 - base + self.K @ phi + f - is1 - r0
            if lu is None or it % 4 == 3:
                lu, piv = self._factor(lin, ph)
            dphi, info = dgbtrs(lu, self.bw, self.bw, F, piv)
            phi = phi - dphi
            if np.max(np.abs(dphi)) / PHI0_RED < NEWTON_TOL:
                break
        else:
            raise TransientError(f"Newton failed at t={t1:.6g}s")
        v1 = 2 * (phi - phi0) / h - v0
        dmax = float(np.max(np.abs(self._branch(phi) - self._branch(phi0)))) if self.ic.size else 0.0
        self._pending = (t1, phi, v1, is1)
        return dmax

    def _commit(self):
        t1, phi, v1, is1 = self._pending
        f, _ = self.jj_current(phi)
        self.rhs_prev = is1 - self.G @ v1 - self.K @ phi - f
        self.t, self.phi, self.v = t1, phi, v1
        self.steps += 1

    def advance(self, h_out: float):
        """Integrate one output interval, sub-stepping to honour the phase limit."""
        saved = (self.t, self.phi, self.v, self.rhs_prev, self.steps)
        limit = self.config.max_phase_step
        while True:
            h = h_out / self.nsub
            if h < self.config.min_step:
                raise StepUnderflow(f"step fell below {self.config.min_step:g}s at t={self.t:.6g}s")
            worst = 0.0
            ok = True
            for _ in range(self.nsub):
                try:
                    d = self.step(h)
                except TransientError:
                    ok = False
                    break
                if d > limit:
                    ok = False
                    break
                worst = max(worst, d)
                self._commit()
            if ok:
                break
            self.t, self.phi, self.v, self.rhs_prev, self.steps = saved
            self.rejected += 1
            self.nsub *= 2
        if worst < limit / 3 and self.nsub > 1:
            self.nsub //= 2


def _output_step(config: TransientConfig, circuit: Circuit) -> float:
    if config.output_step:
        return config.output_step
    ws = [d.frequency for d in config.drives] + [s.frequency for s in circuit.of_type(Source)]
    return 2 * math.pi / max(ws) / 32 if ws else config.stop_time / 1000


def transient_lockstep(circuit: Circuit, config: TransientConfig, drive_sets: list) -> list[TransientResult]:
    """Integrate one run per drive set on a shared step sequence."""
    h_out = _output_step(config, circuit)
    integ = _Integrator(circuit, config, drive_sets)
    nt = int(round(config.stop_time / h_out))
    rec = list(range(0, nt + 1, config.decimation))
    times = np.array(rec) * h_out
    flux = np.zeros((len(rec), integ.n, integ.R))
    volt = np.zeros_like(flux)
    k = 0
    for i in range(nt + 1):
        if i:
            integ.advance(h_out)
        if i % config.decimation == 0:
            flux[k], volt[k] = integ.phi[integ.inv], integ.v[integ.inv]
            k += 1
    return [
        TransientResult(times, integ.names, flux[:, :, r], volt[:, :, r], list(circuit.ports), integ.steps, integ.rejected)
        for r in range(integ.R)
    ]


def transient_solve(circuit: Circuit, config: TransientConfig) -> TransientResult:
    return transient_lockstep(circuit, config, [config.drives])[0]


# -- gain extraction --------------------------------------------------------


def project(x: np.ndarray, t: np.ndarray, omega: float) -> complex:
    """Complex peak amplitude A·e^{iθ} of the A·cos(ωt + θ) component over a whole-period window."""
    return complex(2 * np.mean(x * np.exp(-1j * omega * t)))


@dataclass
class TDGain:
    frequency: float  # rad/s
    x: complex  # b_out(ω_s) / a_in(ω_s)
    y: complex  # b_out(ω_s) / conj(a_in) (phase-conjugate part, ~0 off degeneracy)
    drift: float
    steps: int
    rejected: int
    stop_time: float

    @property
    def gain_db(self) -> float:
        return 20 * math.log10(abs(self.x))


def common_period(omega_s: float, omega_p: float | None, max_den: int = 64) -> float:
    """Shortest window holding whole periods of both tones."""
    if omega_p is None:
        return 2 * math.pi / omega_s
    r = Fraction(omega_s / omega_p).limit_denominator(max_den)
    if abs(float(r) - omega_s / omega_p) > 1e-9 * omega_s / omega_p:
        raise ValueError("signal and pump must be commensurate (ratio p/q with q ≤ 64) for window projection")
    return r.denominator * 2 * math.pi / omega_p


def extract_gain_td(
    circuit: Circuit,
    pump,
    omega_s: float,
    signal_current: float | None = None,
    in_port: int = 1,
    out_port: int = 2,
    max_phase_step: float = 0.01,
    ramp_periods: float = 30,
    settle_periods: float = 60,
    window_periods: int = 10,
    max_periods: float = 1000,
    samples_per_period: int = 32,
) -> TDGain:
    """Complex signal gain from three lockstep runs (pump only, pump + signal at 0 and 90°).

    ``pump`` needs ``frequency`` (rad/s), ``current`` (A peak), ``port`` and
    ``phase``; pass ``None`` for an unpumped circuit. The default signal is
    60 dB below the pump in power.
    """
    wp = pump.frequency if pump is not None and pump.current else None
    ref = wp or omega_s
    Tp = 2 * math.pi / ref
    Tc = common_period(omega_s, wp)
    h_out = Tp / samples_per_period
    per_c = int(round(Tc / h_out))
    win = per_c * max(1, math.ceil(window_periods * Tp / Tc))
    if signal_current is None:
        signal_current = 1e-3 * (pump.current if wp else 1e-6)
    base = [] if wp is None else [Drive(wp, pump.current, pump.phase, pump.port)]
    sets = [
        base,
        base + [Drive(omega_s, signal_current, 0.0, in_port)],
        base + [Drive(omega_s, signal_current, math.pi / 2, in_port)],
    ]
    cfg = TransientConfig(
        stop_time=max_periods * Tp,
        max_phase_step=max_phase_step,
        drives=tuple(sets[1]),
        output_step=h_out,
        ramp_time=ramp_periods * Tp,
    )
    cfg.check()
    integ = _Integrator(circuit, cfg, sets)
    port = circuit.ports[out_port - 1]
    rows = [integ.inv[integ.names.index(n)] if n != "0" else -1 for n in (port.n1, port.n2)]
    z0 = port.Z0
    zin = circuit.ports[in_port - 1].Z0

    buf_t, buf_v = [], []
    n_settle = int(round((ramp_periods + settle_periods) * Tp / h_out))
    n_max = int(round(max_periods * Tp / h_out))
    i = 0
    drift = math.inf

    def out_voltage():
        v = np.zeros(integ.R)
        for s, r in zip((1, -1), rows):
            if r >= 0:
                v += s * integ.v[r]
        return v

    while i < n_max:
        integ.advance(h_out)
        i += 1
        if i > n_settle - 2 * win:
            buf_t.append(integ.t)
            buf_v.append(out_voltage())
        if i >= n_settle and len(buf_t) >= 2 * win and (len(buf_t) % win == 0):
            t = np.array(buf_t[-2 * win :])
            v = np.array(buf_v[-2 * win :])
            d = v[:, 1:] - v[:, :1]  # subtract the pump-only run
            b1 = np.array([[project(d[:win, r], t[:win], omega_s) for r in range(2)]])
            b2 = np.array([[project(d[win:, r], t[win:], omega_s) for r in range(2)]])
            drift = float(np.max(np.abs(b2 - b1)) / np.max(np.abs(b2)))
            if drift < SETTLE_TOL:
                break
    else:
        raise SettlingError(f"signal projections still drift by {drift:.2e} after {max_periods} pump periods")

    b = b2[0] / math.sqrt(z0)
    a = np.array([1, 1j]) * signal_current * math.sqrt(zin) / 2
    M = np.array([[a[0], np.conj(a[0])], [a[1], np.conj(a[1])]])
    x, y = np.linalg.solve(M, b)
    return TDGain(omega_s, complex(x), complex(y), drift, integ.steps, integ.rejected, integ.t)
