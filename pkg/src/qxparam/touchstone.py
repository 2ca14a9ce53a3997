"""Touchstone v1 reader/writer and the interpolating linear multiport.

Only scattering-parameter files are supported. The ``#`` option line may
carry a frequency unit (Hz/kHz/MHz/GHz), the parameter letter (S), the data
format (RI, MA, DB) and a reference impedance ``R <z0>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")


class TouchstoneError(ValueError):
    pass


class BandError(ValueError):
    """A frequency outside the tabulated band of a multiport was requested."""


@dataclass(eq=False)
class LinearMultiport:
    """Tabulated N-port scattering data with magnitude/phase interpolation.

    ``freqs`` are in Hz and strictly increasing; ``s`` has shape
    ``(len(freqs), n, n)``; ``z0`` is the (real) reference impedance.
    """

    freqs: np.ndarray
    s: np.ndarray
    z0: float = 50.0
    path: str | None = None
    _mag: np.ndarray = field(init=False, repr=False)
    _phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.s = np.asarray(self.s, dtype=complex)
        if self.s.ndim != 3 or self.s.shape[1] != self.s.shape[2]:
            raise TouchstoneError("S data must have shape (nf, n, n)")
        if self.s.shape[0] != self.freqs.size or self.freqs.size == 0:
            raise TouchstoneError("frequency grid and S data disagree in length")
        if np.any(np.diff(self.freqs) <= 0):
            raise TouchstoneError("frequencies must be strictly increasing")
        if not self.z0 > 0:
            raise TouchstoneError("reference impedance must be positive")
        self._mag = np.abs(self.s)
        self._phase = np.unwrap(np.angle(self.s), axis=0)

    @property
    def nports(self) -> int:
        return self.s.shape[1]

    @property
    def band(self) -> tuple[float, float]:
        return float(self.freqs[0]), float(self.freqs[-1])

    def covers(self, f_hz) -> bool:
        f = np.abs(np.atleast_1d(f_hz))
        lo, hi = self.band
        return bool(np.all((f >= lo * (1 - 1e-12)) & (f <= hi * (1 + 1e-12))))

    def s_at(self, omega: float) -> np.ndarray:
        """S matrix at angular frequency ``omega`` (negative: conjugate)."""
        f = abs(omega) / (2 * np.pi)
        lo, hi = self.band
        if not self.covers(f):
            raise BandError(
                f"{f / 1e9:.6g} GHz is outside the multiport band "
                f"[{lo / 1e9:.6g}, {hi / 1e9:.6g}] GHz"
            )
        f = min(max(f, lo), hi)
        if self.freqs.size == 1:
            s = self.s[0].copy()
        else:
            i = int(np.clip(np.searchsorted(self.freqs, f) - 1, 0, self.freqs.size - 2))
            t = (f - self.freqs[i]) / (self.freqs[i + 1] - self.freqs[i])
            mag = (1 - t) * self._mag[i] + t * self._mag[i + 1]
            ph = (1 - t) * self._phase[i] + t * self._phase[i + 1]
            s = mag * np.exp(1j * ph)
        return s.conj() if omega < 0 else s

    def __eq__(self, other):
        if not isinstance(other, LinearMultiport):
            return NotImplemented
        return (
            self.path == other.path
            and self.z0 == other.z0
            and np.array_equal(self.freqs, other.freqs)
            and np.array_equal(self.s, other.s)
        )

    __hash__ = None


def _nports_from_name(name: str) -> int | None:
    m = re.search(r"\.s(\d+)p$", name.lower())
    return int(m.group(1)) if m else None


def parse_touchstone(text: str, nports: int, path: str | None = None) -> LinearMultiport:
    unit, fmt, z0 = "GHZ", "MA", 50.0
    seen_option = False
    tokens: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if seen_option:
                continue  # v1: only the first option line counts
            seen_option = True
            opts = line[1:].upper().split()
            i = 0
            while i < len(opts):
                tok = opts[i]
                if tok in _UNITS:
                    unit = tok
                elif tok in _FORMATS:
                    fmt = tok
                elif tok == "S":
                    pass
                elif tok in ("Y", "Z", "H", "G"):
                    raise TouchstoneError(f"line {lineno}: only S-parameter files are supported")
                elif tok == "R":
                    try:
                        z0 = float(opts[i + 1])
                    except (IndexError, ValueError):
                        raise TouchstoneError(f"line {lineno}: bad reference impedance") from None
                    i += 1
                else:
                    raise TouchstoneError(f"line {lineno}: unknown option {tok!r}")
                i += 1
            continue
        tokens.extend(line.split())

    per_point = 1 + 2 * nports * nports
    if not tokens:
        raise TouchstoneError("no data")
    if len(tokens) % per_point:
        raise TouchstoneError(
            f"{len(tokens)} data values is not a multiple of {per_point} for a {nports}-port"
        )
    try:
        data = np.array(tokens, dtype=float).reshape(-1, per_point)
    except ValueError as exc:
        raise TouchstoneError(f"non-numeric data: {exc}") from None
    freqs = data[:, 0] * _UNITS[unit]
    a, b = data[:, 1::2], data[:, 2::2]
    if fmt == "RI":
        vals = a + 1j * b
    elif fmt == "MA":
        vals = a * np.exp(1j * np.deg2rad(b))
    else:
        vals = 10 ** (a / 20) * np.exp(1j * np.deg2rad(b))
    s = vals.reshape(-1, nports, nports)
    if nports == 2:
        # 2-port files list S11 S21 S12 S22
        s = s.transpose(0, 2, 1)
    return LinearMultiport(freqs, s, z0=z0, path=path)


def read_touchstone(path, nports: int | None = None) -> LinearMultiport:
    path = Path(path)
    n = nports or _nports_from_name(path.name)
    if n is None:
        raise TouchstoneError(f"cannot infer port count from {path.name!r}")
    return parse_touchstone(path.read_text(), n, path=str(path))


def format_touchstone(mp: LinearMultiport, fmt: str = "RI", unit: str = "GHz") -> str:
    fmt = fmt.upper()
    scale = _UNITS[unit.upper()]
    n = mp.nports
    lines = [f"# {unit} S {fmt} R {mp.z0:g}"]
    for f, s in zip(mp.freqs, mp.s):
        m = s.T if n == 2 else s
        vals = []
        for z in m.ravel():
            if fmt == "RI":
                vals += [z.real, z.imag]
            elif fmt == "MA":
                vals += [abs(z), np.degrees(np.angle(z))]
            else:
                vals += [20 * np.log10(max(abs(z), 1e-300)), np.degrees(np.angle(z))]
        row = [f"{f / scale:.17g}"] + [f"{v:.17g}" for v in vals]
        # at most four complex values per line
        head, rest = row[:9], row[9:]
        lines.append(" ".join(head))
        for k in range(0, len(rest), 8):
            lines.append(" ".join(rest[k : k + 8]))
    return "\n".join(lines) + "\n"


def write_touchstone(mp: LinearMultiport, path, fmt: str = "RI") -> None:
    Path(path).write_text(format_touchstone(mp, fmt))
