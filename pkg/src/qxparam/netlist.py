"""Line-oriented netlist format.

One element per line::

    <name> <node+> <node-> <value> [key=value ...]

The first letter of ``name`` selects the kind: ``C`` (``tan_delta=``),
``L``, ``R``, ``J``/``B`` (Josephson junction, value = Ic), ``I`` (current
source; ``freq=`` in Hz or ``w=`` in rad/s, ``phase=``, ``rs=``), ``P<k>``
(port k, value = Z0, default 50) and ``X`` (``X<name> <file.sNp> <nodes>``,
one node per port referenced to ground, or one pair per port). Values
accept the suffixes f p n u m k M G. ``#`` starts a comment; ``#@ key:
value`` lines carry circuit metadata (name, provenance).
"""

from __future__ import annotations

import math
import re
from pathlib import Path

from .circuit import (
    Capacitor,
    Circuit,
    CircuitError,
    Inductor,
    JosephsonJunction,
    Port,
    Resistor,
    Source,
    TouchstoneMultiport,
)
from .touchstone import read_touchstone

_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9}
_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([fpnumkMG]?)$")


class NetlistError(ValueError):
    def __init__(self, msg: str, line: int = 0, column: int = 0):
        self.line, self.column = line, column
        super().__init__(f"line {line}, column {column}: {msg}" if line else msg)


def parse_value(text: str) -> float:
    m = _VALUE_RE.match(text)
    if not m:
        raise ValueError(f"bad value {text!r}")
    return float(m.group(1)) * _SUFFIX.get(m.group(2), 1.0)


def _tokens(line: str):
    """Split on whitespace, returning (token, 1-based column) pairs."""
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_netlist(text: str, base_dir=None) -> Circuit:
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    elements, ports, meta = [], [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if stripped.startswith("#@"):
            key, _, val = stripped[2:].partition(":")
            meta[key.strip()] = val.strip()
            continue
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        name, col = toks[0]
        kind = name[0].upper()
        try:
            if kind == "X":
                elements.append(_parse_multiport(name, toks, base, lineno))
                continue
            if len(toks) < 3:
                raise NetlistError("expected <name> <node+> <node-> [value]", lineno, col)
            n1, n2 = toks[1][0], toks[2][0]
            rest = toks[3:]
            positional = [t for t in rest if "=" not in t[0]]
            opts = {}
            for tok, c in rest:
                if "=" in tok:
                    k, _, v = tok.partition("=")
                    if not v:
                        raise NetlistError(f"empty option {k!r}", lineno, c)
                    opts[k.lower()] = (v, c)
            if len(positional) > 1:
                raise NetlistError("too many positional values", lineno, positional[1][1])

            def value(required=True, default=None):
                if not positional:
                    if required:
                        raise NetlistError("missing value", lineno, len(line.rstrip()) + 1)
                    return default
                tok, c = positional[0]
                try:
                    return parse_value(tok)
                except ValueError as exc:
                    raise NetlistError(str(exc), lineno, c) from None

            def option(key, default):
                if key not in opts:
                    return default
                tok, c = opts.pop(key)
                try:
                    return parse_value(tok)
                except ValueError as exc:
                    raise NetlistError(str(exc), lineno, c) from None

            if kind == "C":
                el = Capacitor(name, n1, n2, value(), option("tan_delta", 0.0))
            elif kind == "L":
                el = Inductor(name, n1, n2, value())
            elif kind == "R":
                el = Resistor(name, n1, n2, value())
            elif kind in "JB":
                el = JosephsonJunction(name, n1, n2, value())
            elif kind == "I":
                if "w" in opts:
                    w = option("w", None)
                elif "freq" in opts:
                    w = 2 * math.pi * option("freq", None)
                else:
                    raise NetlistError("source needs freq= or w=", lineno, col)
                el = Source(name, n1, n2, value(), w, option("phase", 0.0), option("rs", math.inf))
            elif kind == "P":
                try:
                    index = int(name[1:])
                except ValueError:
                    raise NetlistError(f"port name {name!r} must be P<k>", lineno, col) from None
                z0 = value(required=False, default=None)
                z0 = option("z0", 50.0 if z0 is None else z0)
                ports.append(Port(index, n1, n2, z0))
                el = None
            else:
                raise NetlistError(f"unknown element kind {name!r}", lineno, col)
            if opts:
                k, (_, c) = next(iter(opts.items()))
                raise NetlistError(f"unknown option {k!r} for {name}", lineno, c)
            if el is not None:
                el.check()
                elements.append(el)
        except CircuitError as exc:
            raise NetlistError(str(exc), lineno, col) from None
    try:
        return Circuit(
            tuple(elements),
            tuple(ports),
            name=meta.get("name", ""),
            provenance=meta.get("provenance", ""),
        )
    except CircuitError as exc:
        raise NetlistError(str(exc)) from None


def _parse_multiport(name, toks, base: Path, lineno):
    if len(toks) < 3:
        raise NetlistError("expected X<name> <file.sNp> <nodes...>", lineno, toks[0][1])
    fname, fcol = toks[1]
    path = Path(fname)
    if not path.is_absolute():
        path = base / path
    try:
        mp = read_touchstone(path)
    except (OSError, ValueError) as exc:
        raise NetlistError(f"cannot load {fname!r}: {exc}", lineno, fcol) from None
    mp.path = fname
    nodes = [t for t, _ in toks[2:]]
    n = mp.nports
    if len(nodes) == n:
        terms = tuple((a, "0") for a in nodes)
    elif len(nodes) == 2 * n:
        terms = tuple(zip(nodes[::2], nodes[1::2]))
    else:
        raise NetlistError(f"{n}-port network needs {n} or {2 * n} nodes", lineno, toks[2][1])
    return TouchstoneMultiport(name, mp, terms)


def _num(x: float) -> str:
    return repr(float(x))


def emit_netlist(circuit: Circuit) -> str:
    out = []
    if circuit.name:
        out.append(f"#@ name: {circuit.name}")
    if circuit.provenance:
        out.append(f"#@ provenance: {circuit.provenance}")
    for p in circuit.ports:
        out.append(f"P{p.index} {p.n1} {p.n2} {_num(p.Z0)}")
    for el in circuit.elements:
        if isinstance(el, Capacitor):
            out.append(f"{el.name} {el.n1} {el.n2} {_num(el.C)} tan_delta={_num(el.tan_delta)}")
        elif isinstance(el, Inductor):
            out.append(f"{el.name} {el.n1} {el.n2} {_num(el.L)}")
        elif isinstance(el, Resistor):
            out.append(f"{el.name} {el.n1} {el.n2} {_num(el.R)}")
        elif isinstance(el, JosephsonJunction):
            out.append(f"{el.name} {el.n1} {el.n2} {_num(el.Ic)}")
        elif isinstance(el, Source):
            line = f"{el.name} {el.n1} {el.n2} {_num(el.amplitude)} w={_num(el.frequency)} phase={_num(el.phase)}"
            if math.isfinite(el.impedance):
                line += f" rs={_num(el.impedance)}"
            out.append(line)
        elif isinstance(el, TouchstoneMultiport):
            if not el.network.path:
                raise NetlistError(f"{el.name}: multiport has no file path to emit")
            nodes = " ".join(f"{a} {b}" for a, b in el.terminals)
            out.append(f"{el.name} {el.network.path} {nodes}")
    return "\n".join(out) + "\n"


def read_netlist(path) -> Circuit:
    path = Path(path)
    return parse_netlist(path.read_text(), base_dir=path.parent)
