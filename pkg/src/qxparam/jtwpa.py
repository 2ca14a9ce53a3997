"""Parametric JTWPA circuit generators and design presets.

The ladder has ``junction_count`` series junctions (each shunted by a
junction capacitance) between ``junction_count + 1`` line nodes. Every line
node has a capacitor to ground; the two end nodes carry half of it and the
two ports. Phase-matching resonators (coupling capacitor into a parallel LC
tank to ground) hang off internal node ``i`` whenever
``i % period == period // 2``, and that node's ground capacitor is reduced
by the coupling capacitance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .circuit import Capacitor, Circuit, CircuitError, Inductor, JosephsonJunction, Port


@dataclass(frozen=True)
class JtwpaDesign:
    junction_count: int
    ic: float
    cg: float
    cj: float
    resonator_period: int = 0
    cc: float = 0.0
    cr: float = 0.0
    lr: float = 0.0
    tan_delta: float = 0.0
    z0: float = 50.0
    #: cell index (1-based) -> critical current; None means uniform ``ic``
    ic_profile: Callable[[int], float] | None = field(default=None, compare=False)
    name: str = "jtwpa"

    def check(self):
        if self.junction_count < 1:
            raise CircuitError("junction_count must be positive")
        if not (self.ic > 0 and self.cg > 0 and self.cj >= 0):
            raise CircuitError("ic and cg must be positive, cj non-negative")
        if self.resonator_period < 0:
            raise CircuitError("resonator_period must be non-negative")
        if self.resonator_period > self.junction_count:
            raise CircuitError("resonator_period exceeds the number of cells")
        if self.resonator_period:
            if not (self.cc > 0 and self.cr > 0 and self.lr > 0):
                raise CircuitError("resonators need positive cc, cr and lr")
            if self.cc >= self.cg:
                raise CircuitError("coupling capacitance must be below the node capacitance")

    def cell_ic(self, i: int) -> float:
        ic = self.ic if self.ic_profile is None else float(self.ic_profile(i))
        if not ic > 0:
            raise CircuitError(f"Ic_profile({i}) = {ic} is not positive")
        return ic


def resonator_nodes(junction_count: int, period: int) -> list[int]:
    if period <= 0:
        return []
    return [i for i in range(2, junction_count + 1) if i % period == period // 2]


def expected_counts(junction_count: int, period: int, with_cj: bool = True) -> dict:
    """Element and node counts implied by the generator recipe."""
    n_res = len(resonator_nodes(junction_count, period))
    return {
        "junctions": junction_count,
        "capacitors": junction_count * with_cj + (junction_count + 1) + 2 * n_res,
        "inductors": n_res,
        "resonators": n_res,
        "elements": junction_count * (1 + with_cj) + (junction_count + 1) + 3 * n_res,
        "nodes": junction_count + 1 + n_res,
    }


def _build(d: JtwpaDesign, scale_caps: bool) -> Circuit:
    d.check()
    n = d.junction_count
    ics = [d.cell_ic(i) for i in range(1, n + 1)]
    res = set(resonator_nodes(n, d.resonator_period))
    tand = d.tan_delta

    def node_scale(i):
        # line node i sits between cells i-1 and i
        if not scale_caps:
            return 1.0
        # L_J ∝ 1/Ic, so C ∝ 1/Ic keeps √(L_J/C) fixed
        nb = [d.ic / ics[j - 1] for j in (i - 1, i) if 1 <= j <= n]
        return sum(nb) / len(nb)

    els = []
    for i in range(1, n + 2):
        sc = node_scale(i)
        cg, cc = d.cg * sc, d.cc * sc
        if i in (1, n + 1):
            cg = cg / 2
        if i in res:
            els.append(Capacitor(f"Cg{i}", str(i), "0", cg - cc, tand))
            els.append(Capacitor(f"Cc{i}", str(i), f"r{i}", cc, tand))
            els.append(Capacitor(f"Cr{i}", f"r{i}", "0", d.cr, tand))
            els.append(Inductor(f"Lr{i}", f"r{i}", "0", d.lr))
        else:
            els.append(Capacitor(f"Cg{i}", str(i), "0", cg, tand))
        if i <= n:
            els.append(JosephsonJunction(f"J{i}", str(i), str(i + 1), ics[i - 1]))
            if d.cj > 0:
                cj = d.cj * (ics[i - 1] / d.ic if scale_caps else 1.0)
                els.append(Capacitor(f"Cj{i}", str(i), str(i + 1), cj, tand))
    ports = (Port(1, "1", "0", d.z0), Port(2, str(n + 1), "0", d.z0))
    return Circuit(tuple(els), ports, name=d.name, provenance="generated")


def build_uniform_jtwpa(design: JtwpaDesign) -> Circuit:
    return _build(replace(design, ic_profile=None), scale_caps=False)


def build_floquet_jtwpa(design: JtwpaDesign) -> Circuit:
    """Ladder with the design's Ic profile applied per cell.

    Node and coupling capacitances scale as ic/Ic, which keeps every cell's
    characteristic impedance; junction capacitances scale as Ic/ic, which
    keeps the plasma frequency.
    """
    return _build(design, scale_caps=True)


def gaussian_ic_profile(n: int, ic_min: float, ic_max: float, edge_ratio: float | None = None):
    """Ic(i) tapering from ``ic_max`` at both ends to ``ic_min`` mid-line.

    The nonlinearity (∝ 1/Ic) follows a Gaussian in cell position; values
    are affinely pinned so the extremes are exactly ``ic_min``/``ic_max``.
    """
    if not 0 < ic_min <= ic_max:
        raise ValueError("need 0 < ic_min <= ic_max")
    r = edge_ratio if edge_ratio is not None else ic_min / ic_max
    if n == 1 or ic_min == ic_max:
        return lambda i: ic_min
    sigma = 1.0 / math.sqrt(2 * math.log(1 / r)) if r < 1 else 1.0
    x = (np.arange(1, n + 1) - (n + 1) / 2) / ((n - 1) / 2)
    inv_w = np.exp(x**2 / (2 * sigma**2))
    vals = ic_min + (ic_max - ic_min) * (inv_w - inv_w.min()) / (inv_w.max() - inv_w.min())
    vals = tuple(float(v) for v in vals)
    return lambda i: vals[i - 1]


@dataclass(frozen=True)
class Preset:
    design: JtwpaDesign
    pump_frequency: float  # rad/s
    pump_current: float  # peak A behind the port impedance
    floquet: bool = False
    sourced: bool = False  # element values taken from the published design

    def build(self) -> Circuit:
        return build_floquet_jtwpa(self.design) if self.floquet else build_uniform_jtwpa(self.design)


UNIFORM = Preset(
    JtwpaDesign(
        junction_count=2047,
        ic=3.4e-6,
        cg=45e-15,
        cj=55e-15,
        resonator_period=4,
        cc=30e-15,
        cr=2.8153e-12,
        lr=1.70e-10,
        name="uniform",
    ),
    pump_frequency=2 * math.pi * 7.12e9,
    pump_current=3.70e-6,
    sourced=True,
)

# Cell capacitances and resonator values are placeholders; only the
# junction count, Ic range and pump point are published.
FLOQUET = Preset(
    JtwpaDesign(
        junction_count=3998,
        ic=3.50e-6,
        cg=39e-15,
        cj=55e-15,
        resonator_period=4,
        cc=30e-15,
        cr=2.45e-12,
        lr=1.50e-10,
        ic_profile=gaussian_ic_profile(3998, 3.50e-6, 21.21e-6),
        name="floquet",
    ),
    pump_frequency=2 * math.pi * 7.90e9,
    pump_current=4.00e-6,
    floquet=True,
)

PRESETS = {"uniform": UNIFORM, "floquet": FLOQUET}


def reduced_uniform(cells: int = 100, period: int = 4) -> JtwpaDesign:
    """A short uniform ladder with the uniform preset's cell values."""
    return replace(UNIFORM.design, junction_count=cells, resonator_period=period, name=f"uniform{cells}")
