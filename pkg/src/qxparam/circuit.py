"""Circuit data model.

A :class:`Circuit` is an immutable collection of two-terminal elements,
Josephson junctions, tabulated multiports and ports. Terminals are named
nodes; ``"0"`` is ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

from .touchstone import LinearMultiport

GROUND = "0"
_GROUND_ALIASES = {"0", "gnd", "GND"}


class CircuitError(ValueError):
    pass


def _node(name) -> str:
    name = str(name)
    return GROUND if name in _GROUND_ALIASES else name


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: str
    n2: str
    C: float
    tan_delta: float = 0.0

    def check(self):
        if not self.C > 0:
            raise CircuitError(f"{self.name}: capacitance must be positive")
        if not 0 <= self.tan_delta < 1:
            raise CircuitError(f"{self.name}: tan_delta must lie in [0, 1)")


@dataclass(frozen=True)
class Inductor:
    name: str
    n1: str
    n2: str
    L: float

    def check(self):
        if not self.L > 0:
            raise CircuitError(f"{self.name}: inductance must be positive")


@dataclass(frozen=True)
class Resistor:
    name: str
    n1: str
    n2: str
    R: float

    def check(self):
        if not self.R > 0:
            raise CircuitError(f"{self.name}: resistance must be positive")


@dataclass(frozen=True)
class JosephsonJunction:
    """Lossless junction, I = Ic sin(phase)."""

    name: str
    n1: str
    n2: str
    Ic: float

    def check(self):
        if not self.Ic > 0:
            raise CircuitError(f"{self.name}: critical current must be positive")


@dataclass(frozen=True)
class Source:
    """Sinusoidal current source i(t) = amplitude·cos(ω t + phase), n1 → n2
    through the source, with an optional parallel source impedance."""

    name: str
    n1: str
    n2: str
    amplitude: float
    frequency: float  # rad/s
    phase: float = 0.0
    impedance: float = math.inf

    def check(self):
        if self.amplitude < 0:
            raise CircuitError(f"{self.name}: amplitude must be non-negative")
        if not self.frequency > 0:
            raise CircuitError(f"{self.name}: frequency must be positive")
        if not self.impedance > 0:
            raise CircuitError(f"{self.name}: source impedance must be positive")


@dataclass(frozen=True)
class TouchstoneMultiport:
    """Tabulated linear N-port; ``terminals`` holds one (n+, n-) pair per port."""

    name: str
    network: LinearMultiport
    terminals: tuple[tuple[str, str], ...]

    def check(self):
        if len(self.terminals) != self.network.nports:
            raise CircuitError(
                f"{self.name}: {self.network.nports}-port network mapped to "
                f"{len(self.terminals)} terminal pairs"
            )

    @property
    def nodes(self):
        return [n for pair in self.terminals for n in pair]


Element = Union[Capacitor, Inductor, Resistor, JosephsonJunction, Source, TouchstoneMultiport]


@dataclass(frozen=True)
class Port:
    index: int
    n1: str
    n2: str = GROUND
    Z0: float = 50.0


def element_nodes(el) -> list[str]:
    if isinstance(el, TouchstoneMultiport):
        return el.nodes
    return [el.n1, el.n2]


@dataclass(frozen=True)
class Circuit:
    elements: tuple
    ports: tuple = ()
    name: str = ""
    provenance: str = ""
    nodes: tuple = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        elements = tuple(_normalize(e) for e in self.elements)
        ports = tuple(
            replace(p, n1=_node(p.n1), n2=_node(p.n2)) for p in sorted(self.ports, key=lambda p: p.index)
        )
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "ports", ports)
        if not elements:
            raise CircuitError("no elements")
        names = set()
        order: dict[str, None] = {}
        for el in elements:
            el.check()
            if el.name in names:
                raise CircuitError(f"duplicate element name {el.name!r}")
            names.add(el.name)
            for n in element_nodes(el):
                if n != GROUND:
                    order.setdefault(n)
        for p in ports:
            if not p.Z0 > 0 or not math.isfinite(p.Z0):
                raise CircuitError(f"port {p.index}: Z0 must be real and positive")
            for n in (p.n1, p.n2):
                if n != GROUND and n not in order:
                    raise CircuitError(f"port {p.index}: dangling node {n!r}")
            if p.n1 == p.n2:
                raise CircuitError(f"port {p.index}: both terminals on node {p.n1!r}")
        idx = [p.index for p in ports]
        if len(set(idx)) != len(idx):
            raise CircuitError("duplicate port index")
        if idx != list(range(1, len(idx) + 1)):
            raise CircuitError("port indices must be contiguous starting at 1")
        object.__setattr__(self, "nodes", (GROUND, *order))
        self._check_connected()

    def _check_connected(self):
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for el in self.elements:
            ns = element_nodes(el)
            for other in ns[1:]:
                parent[find(other)] = find(ns[0])
        for p in self.ports:
            parent[find(p.n1)] = find(p.n2)
        root = find(GROUND)
        floating = [n for n in self.nodes if find(n) != root]
        if floating:
            raise CircuitError(f"nodes not connected to ground: {floating[:5]}")

    @property
    def node_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def of_type(self, kind) -> list:
        return [e for e in self.elements if isinstance(e, kind)]

    @property
    def junctions(self) -> list[JosephsonJunction]:
        return self.of_type(JosephsonJunction)

    def with_tan_delta(self, tan_delta: float) -> "Circuit":
        """Copy with every capacitor's loss tangent overridden."""
        els = tuple(replace(e, tan_delta=tan_delta) if isinstance(e, Capacitor) else e for e in self.elements)
        return replace(self, elements=els)


def _normalize(el):
    if isinstance(el, TouchstoneMultiport):
        return replace(el, terminals=tuple((_node(a), _node(b)) for a, b in el.terminals))
    return replace(el, n1=_node(el.n1), n2=_node(el.n2))


def attach_multiport(circuit: Circuit, mp: LinearMultiport, node_map, name: str = "X1") -> Circuit:
    """Return a copy of ``circuit`` with ``mp`` connected at ``node_map``.

    ``node_map`` lists one entry per multiport port, either a node name
    (referenced to ground) or an explicit ``(n+, n-)`` pair. Nodes that are
    not yet in the circuit are created.
    """
    terms = []
    for entry in node_map:
        if isinstance(entry, (tuple, list)):
            terms.append((str(entry[0]), str(entry[1])))
        else:
            terms.append((str(entry), GROUND))
    if len(terms) != mp.nports:
        raise CircuitError(f"{mp.nports}-port network but {len(terms)} node-map entries")
    el = TouchstoneMultiport(name, mp, tuple(terms))
    return replace(circuit, elements=circuit.elements + (el,))


def insert_multiport(circuit: Circuit, mp: LinearMultiport, port_index: int, name: str | None = None) -> Circuit:
    """Insert a 2-port network between port ``port_index`` and the device.

    Port 1 of ``mp`` faces the external port and port 2 faces the node the
    port was attached to; the port moves to a fresh node.
    """
    if mp.nports != 2:
        raise CircuitError("insert_multiport needs a 2-port network")
    port = next((p for p in circuit.ports if p.index == port_index), None)
    if port is None:
        raise CircuitError(f"no port {port_index}")
    name = name or f"X_p{port_index}"
    outer = f"{name}_ext"
    ports = tuple(replace(p, n1=outer) if p.index == port_index else p for p in circuit.ports)
    el = TouchstoneMultiport(name, mp, ((outer, port.n2), (port.n1, port.n2)))
    return replace(circuit, elements=circuit.elements + (el,), ports=ports)
