"""Pump-depletion gain compression, G(P_s) = G_0 / (1 + 2 G_0 P_s / P_p)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

ONE_DB = 10**0.1


class CompressionError(ValueError):
    pass


def dbm_to_watts(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, float) / 10)


def watts_to_dbm(p):
    return 10 * np.log10(np.asarray(p, float) / 1e-3)


def pump_depletion_gain(g0, ps, pp):
    """Linear gain at signal input power ``ps`` for pump power ``pp`` (watts)."""
    if np.any(np.asarray(g0) < 1) or np.any(np.asarray(ps) < 0) or np.any(np.asarray(pp) <= 0):
        raise ValueError("need G_0 >= 1, P_s >= 0, P_p > 0")
    return g0 / (1 + 2 * g0 * np.asarray(ps, float) / pp)


def p1db_closed_form(g0: float, pp: float) -> float:
    return pp * (ONE_DB - 1) / (2 * g0)


@dataclass
class CompressionCurve:
    g0: float  # linear
    pp: float  # W, available pump power
    ps: np.ndarray = field(default_factory=lambda: np.zeros(0))  # W
    gain: np.ndarray = field(default_factory=lambda: np.zeros(0))  # linear
    analytic: bool = False

    @classmethod
    def from_model(cls, g0: float, pp: float, ps=None) -> "CompressionCurve":
        if ps is None:
            p1 = p1db_closed_form(g0, pp)
            ps = np.geomspace(p1 * 1e-3, p1 * 1e2, 101)
        ps = np.asarray(ps, float)
        return cls(g0, pp, ps, pump_depletion_gain(g0, ps, pp), analytic=True)

    def gain_at(self, ps):
        if self.analytic:
            return pump_depletion_gain(self.g0, ps, self.pp)
        return 10 ** (self._interp()(np.log10(ps)) / 10)

    def _interp(self) -> PchipInterpolator:
        order = np.argsort(self.ps)
        return PchipInterpolator(np.log10(self.ps[order]), 10 * np.log10(self.gain[order]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# g0_dB", repr(10 * math.log10(self.g0)), "pump_dBm", repr(float(watts_to_dbm(self.pp)))])
        w.writerow(["p_signal_dBm", "gain_dB"])
        for p, g in zip(self.ps, self.gain):
            w.writerow([repr(float(watts_to_dbm(p))), repr(10 * math.log10(g))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CompressionCurve":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        head = rows[0]
        if not head[0].startswith("#"):
            raise CompressionError("missing '# g0_dB' header line")
        g0 = 10 ** (float(head[1]) / 10)
        pp = float(dbm_to_watts(float(head[3])))
        data = np.array([[float(v) for v in r] for r in rows[2:]])
        if data.size == 0:
            raise CompressionError("no samples")
        return cls(g0, pp, dbm_to_watts(data[:, 0]), 10 ** (data[:, 1] / 10))


def p1db(curve: CompressionCurve) -> float:
    """Input power (W) at which the gain has dropped 1 dB below G_0."""
    target_db = 10 * math.log10(curve.g0) - 1
    if curve.analytic:
        f = lambda lp: 10 * math.log10(pump_depletion_gain(curve.g0, 10**lp, curve.pp)) - target_db  # noqa: E731
        lo = math.log10(p1db_closed_form(curve.g0, curve.pp)) - 6
        hi = lo + 12
        return 10 ** brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if curve.ps.size < 2:
        raise CompressionError("need at least two samples")
    interp = curve._interp()
    x = interp.x
    y = interp(x) - target_db
    cross = np.nonzero(np.sign(y[:-1]) != np.sign(y[1:]))[0]
    if not cross.size:
        raise CompressionError("gain never crosses G_0 − 1 dB in the sampled range")
    i = cross[0]
    return 10 ** brentq(lambda lp: interp(lp) - target_db, x[i], x[i + 1], xtol=1e-14)
