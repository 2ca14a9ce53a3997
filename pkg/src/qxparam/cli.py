"""``simulate`` command line: presets, frequency sweeps, mode convergence, compression.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
On failure a JSON object ``{"error", "message", "exit_code"}`` is printed to
stderr (and written to ``<out>/error.json`` when an output directory exists).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .circuit import CircuitError
from .compression import CompressionCurve, CompressionError, dbm_to_watts, p1db, watts_to_dbm
from .fdcore import SingularSystemError
from .hbpump import PumpNotConverged, PumpSpec, solve_pump
from .jtwpa import PRESETS
from .netlist import NetlistError, read_netlist
from .quantum import analyze
from .xparams import ModeSetError, mode_frequencies

log = logging.getLogger("qxparam")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
CSV_COLUMNS = [
    "f_signal_GHz",
    "gain_dB",
    "idler_gain_dB",
    "s11_dB",
    "qe",
    "qe_normalized",
    "noise_ratio",
    "comm_residual_max",
]


class ConfigError(ValueError):
    pass


@dataclass
class SweepConfig:
    preset: str | None = "uniform"
    netlist: str | None = None
    pump_frequency_ghz: float | None = None  # default: the preset's
    pump_current_ua: float | None = None
    pump_power_dbm: float | None = None
    pump_port: int = 1
    pump_harmonics: int = 8
    pump_off: bool = False
    pump_rescale: float = 0.0  # pump current × (1 + pump_rescale·tan_delta)
    f_start_ghz: float = 3.5
    f_stop_ghz: float = 9.5
    f_count: int = 131
    modes: int = 10
    tan_delta: float | None = None
    temperature_k: float = 0.0
    workers: int = 1
    export_xmatrix: bool = False
    export_noise: bool = False

    def check(self):
        if (self.preset is None) == (self.netlist is None):
            raise ConfigError("give exactly one of preset or netlist")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.netlist is not None and not Path(self.netlist).is_file():
            raise ConfigError(f"netlist {self.netlist!r} does not exist")
        if self.f_count < 1:
            raise ConfigError("grid count must be >= 1")
        if not 0 < self.f_start_ghz <= self.f_stop_ghz:
            raise ConfigError("need 0 < f_start <= f_stop")
        if self.modes < 2:
            raise ConfigError("modes must be >= 2")
        if self.tan_delta is not None and self.tan_delta < 0:
            raise ConfigError("tan_delta must be non-negative")
        if self.temperature_k < 0:
            raise ConfigError("temperature must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.pump_current_ua is not None and self.pump_power_dbm is not None:
            raise ConfigError("give pump current or pump power, not both")
        if self.netlist is not None and not self.pump_off:
            if self.pump_frequency_ghz is None or (self.pump_current_ua is None and self.pump_power_dbm is None):
                raise ConfigError("netlist circuits need pump frequency and current or power")
        return self

    # nested document <-> flat dataclass
    _SECTIONS = {
        "circuit": {"preset": "preset", "netlist": "netlist"},
        "pump": {
            "frequency_ghz": "pump_frequency_ghz",
            "current_ua": "pump_current_ua",
            "power_dbm": "pump_power_dbm",
            "port": "pump_port",
            "harmonics": "pump_harmonics",
            "off": "pump_off",
            "rescale": "pump_rescale",
        },
        "grid": {"start_ghz": "f_start_ghz", "stop_ghz": "f_stop_ghz", "count": "f_count"},
        "export": {"xmatrix": "export_xmatrix", "noise": "export_noise"},
    }
    _TOP = ("modes", "tan_delta", "temperature_k", "workers")

    @classmethod
    def from_mapping(cls, doc: dict) -> "SweepConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        kw = {}
        for key, val in doc.items():
            if key in cls._SECTIONS:
                if not isinstance(val, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                for k, v in val.items():
                    if k not in cls._SECTIONS[key]:
                        raise ConfigError(f"unknown key {key}.{k}")
                    kw[cls._SECTIONS[key][k]] = v
            elif key in cls._TOP:
                kw[key] = val
            else:
                raise ConfigError(f"unknown key {key!r}")
        if "netlist" in kw and "preset" not in kw:
            kw["preset"] = None
        try:
            cfg = cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg._coerce()

    def _coerce(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            t = f.type
            try:
                if "bool" in t:
                    if not isinstance(v, bool):
                        raise ValueError
                elif "int" in t:
                    if isinstance(v, bool) or float(v) != int(v):
                        raise ValueError
                    setattr(self, f.name, int(v))
                elif "float" in t:
                    setattr(self, f.name, float(v))
                elif "str" in t:
                    setattr(self, f.name, str(v))
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {f.name}: {v!r}") from None
        return self

    def to_mapping(self) -> dict:
        doc = {}
        for sec, keys in self._SECTIONS.items():
            doc[sec] = {k: getattr(self, attr) for k, attr in keys.items()}
        for k in self._TOP:
            doc[k] = getattr(self, k)
        return doc

    def canonical_json(self) -> str:
        return json.dumps(self.to_mapping(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @property
    def frequencies_ghz(self) -> np.ndarray:
        return np.linspace(self.f_start_ghz, self.f_stop_ghz, self.f_count)


def load_config(path) -> SweepConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return SweepConfig.from_mapping(doc)


def header_lines(cfg: SweepConfig) -> list[str]:
    return [
        f"# qxparam {__version__}",
        f"# config_sha256: {cfg.digest()}",
        f"# config: {cfg.canonical_json()}",
    ]


def config_from_header(text: str) -> SweepConfig:
    """Recover the SweepConfig recorded in a result file header."""
    for line in text.splitlines():
        if line.startswith("# config: "):
            return SweepConfig.from_mapping(json.loads(line[len("# config: ") :]))
    raise ConfigError("no config line in header")


# -- building the operating point ------------------------------------------


def build_circuit(cfg: SweepConfig):
    if cfg.preset is not None:
        circ = PRESETS[cfg.preset].build()
    else:
        try:
            circ = read_netlist(cfg.netlist)
        except NetlistError as exc:
            raise ConfigError(f"{cfg.netlist}: {exc}") from None
    if cfg.tan_delta is not None:
        circ = circ.with_tan_delta(cfg.tan_delta)
    return circ


def pump_spec(cfg: SweepConfig, circuit) -> PumpSpec | None:
    if cfg.pump_off:
        return None
    preset = PRESETS.get(cfg.preset) if cfg.preset else None
    f = cfg.pump_frequency_ghz
    w = 2 * math.pi * f * 1e9 if f is not None else preset.pump_frequency
    if cfg.pump_current_ua is not None:
        ip = cfg.pump_current_ua * 1e-6
    elif cfg.pump_power_dbm is not None:
        z0 = circuit.ports[cfg.pump_port - 1].Z0
        ip = math.sqrt(8 * float(dbm_to_watts(cfg.pump_power_dbm)) / z0)
    else:
        ip = preset.pump_current
    ip *= 1 + cfg.pump_rescale * (cfg.tan_delta or 0.0)
    try:
        return PumpSpec(w, ip, cfg.pump_port, cfg.pump_harmonics)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def pump_frequency(cfg: SweepConfig) -> float:
    if cfg.pump_frequency_ghz is not None:
        return 2 * math.pi * cfg.pump_frequency_ghz * 1e9
    if cfg.preset:
        return PRESETS[cfg.preset].pump_frequency
    return 2 * math.pi * 7e9  # pump off on a netlist: only sets the mode spacing


def _point(args):
    circuit, pump, wp, f_ghz, m, temperature = args
    try:
        modes = mode_frequencies(2 * math.pi * f_ghz * 1e9, wp, m)
        op = analyze(circuit, pump, modes, temperature)
    except (ModeSetError, SingularSystemError) as exc:
        return f_ghz, None, f"{type(exc).__name__}: {exc}"
    row = [op.gain_db, op.idler_gain_db, op.s11_db, op.qe, op.qe_normalized, op.noise_ratio, op.comm_residual_max]
    extra = {"xmatrix": op.X.to_json(), "noise": op.noise.to_json() if op.noise else None}
    return f_ghz, row, extra


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    pump_seconds: float = 0.0
    wall_seconds: float = 0.0
    pump_iterations: int = 0

    def csv_text(self, cfg: SweepConfig) -> str:
        buf = io.StringIO()
        buf.write("\n".join(header_lines(cfg)) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for f, vals in self.rows:
            w.writerow([_fmt(f)] + [_fmt(v) for v in vals])
        return buf.getvalue()


def run_sweep(cfg: SweepConfig, out_dir=None) -> SweepResult:
    """Pump once, then X-matrix and metrics at every grid frequency."""
    cfg.check()
    t0 = time.perf_counter()
    circuit = build_circuit(cfg)
    spec = pump_spec(cfg, circuit)
    wp = spec.frequency if spec is not None else pump_frequency(cfg)
    pump = solve_pump(circuit, spec) if spec is not None and spec.current > 0 else None
    res = SweepResult(pump_seconds=time.perf_counter() - t0)
    if pump is not None:
        res.pump_iterations = pump.iterations
    jobs = [(circuit, pump, wp, float(f), cfg.modes, cfg.temperature_k) for f in cfg.frequencies_ghz]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            outs = list(ex.map(_point, jobs))  # map keeps grid order
    else:
        outs = [_point(j) for j in jobs]
    extras = []
    for f, row, extra in outs:
        if row is None:
            res.failures.append({"f_signal_GHz": f, "error": extra})
            res.rows.append((f, [math.nan] * (len(CSV_COLUMNS) - 1)))
        else:
            res.rows.append((f, row))
            extras.append((f, extra))
    res.wall_seconds = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gain.csv").write_text(res.csv_text(cfg))
        summary = {
            "version": __version__,
            "config_sha256": cfg.digest(),
            "config": cfg.to_mapping(),
            "points": len(res.rows),
            "failures": res.failures,
            "pump_seconds": res.pump_seconds,
            "wall_seconds": res.wall_seconds,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        if cfg.export_xmatrix or cfg.export_noise:
            for f, extra in extras:
                if cfg.export_xmatrix:
                    (out / f"xmatrix_{f:.6f}GHz.json").write_text(extra["xmatrix"])
                if cfg.export_noise and extra["noise"]:
                    (out / f"noise_{f:.6f}GHz.json").write_text(extra["noise"])
    return res


@dataclass
class ConvergenceRow:
    m: int
    qe: float
    qe_normalized: float
    delta: float  # change of normalized QE from the previous m
    converged: bool


def report_convergence(cfg: SweepConfig, m_list, f_signal_ghz: float = 6.0, tol: float = 1e-3) -> list[ConvergenceRow]:
    """Normalized QE at one signal frequency for each mode count."""
    m_list = [int(m) for m in m_list]
    if m_list != sorted(m_list) or any(m < 2 for m in m_list):
        raise ConfigError("mode list must be ascending and >= 2")
    cfg.check()
    circuit = build_circuit(cfg)
    spec = pump_spec(cfg, circuit)
    wp = spec.frequency if spec is not None else pump_frequency(cfg)
    pump = solve_pump(circuit, spec) if spec is not None and spec.current > 0 else None
    rows, prev = [], None
    for m in m_list:
        try:
            modes = mode_frequencies(2 * math.pi * f_signal_ghz * 1e9, wp, m)
        except ModeSetError as exc:
            raise ConfigError(str(exc)) from None
        op = analyze(circuit, pump, modes, cfg.temperature_k)
        q = op.qe_normalized
        d = math.nan if prev is None else abs(q - prev)
        rows.append(ConvergenceRow(m, op.qe, q, d, prev is not None and d < tol))
        prev = q
    return rows


# -- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML sweep configuration")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--netlist", help="circuit netlist (instead of a preset)")
    p.add_argument("--tan-delta", type=float, dest="tan_delta")
    p.add_argument("--temperature", type=float, dest="temperature_k", help="kelvin (default 0)")
    p.add_argument("--pump-ghz", type=float, dest="pump_frequency_ghz")
    p.add_argument("--pump-ua", type=float, dest="pump_current_ua", help="peak pump current behind Z0 (µA)")
    p.add_argument("--pump-dbm", type=float, dest="pump_power_dbm", help="available pump power (dBm)")
    p.add_argument("--pump-rescale", type=float, dest="pump_rescale", help="scale pump by 1 + c·tan_delta")
    p.add_argument("--pump-off", action="store_true", default=None, dest="pump_off")
    p.add_argument("--harmonics", type=int, dest="pump_harmonics")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qxparam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="gain/QE/noise versus signal frequency")
    _common(sw)
    sw.add_argument("--modes", type=int)
    sw.add_argument("--start-ghz", type=float, dest="f_start_ghz")
    sw.add_argument("--stop-ghz", type=float, dest="f_stop_ghz")
    sw.add_argument("--count", type=int, dest="f_count")
    sw.add_argument("--workers", type=int)
    sw.add_argument("--export-xmatrix", action="store_true", default=None, dest="export_xmatrix")
    sw.add_argument("--export-noise", action="store_true", default=None, dest="export_noise")

    cv = sub.add_parser("convergence", help="QE versus number of modes at one frequency")
    _common(cv)
    cv.add_argument("--modes", default="2,4,6,8,10", help="comma-separated ascending list")
    cv.add_argument("--f-ghz", type=float, default=6.0, dest="f_signal_ghz")

    cp = sub.add_parser("compression", help="pump-depletion compression curve and P1dB")
    cp.add_argument("--g0-db", type=float, required=True)
    cp.add_argument("--pump-dbm", type=float, required=True)
    cp.add_argument("--curve", help="CSV of a measured/simulated curve (instead of the analytic model)")
    cp.add_argument("--out", default=None)
    cp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config_from_args(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    over = {}
    for f in dataclasses.fields(SweepConfig):
        if f.name == "modes" and args.command == "convergence":
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            over[f.name] = v
    if args.netlist is not None and args.preset is not None:
        raise ConfigError("give --preset or --netlist, not both")
    if args.netlist is not None:
        over["preset"] = None
    if args.preset is not None:
        over["netlist"] = None
    return dataclasses.replace(cfg, **over)._coerce()


def _fail(code: int, exc: BaseException, out: str | None) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    text = json.dumps(doc)
    print(text, file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    res = run_sweep(cfg, args.out)
    if args.out is None:
        sys.stdout.write(res.csv_text(cfg))
    log.info("sweep: %d points, pump %.2fs, total %.2fs", len(res.rows), res.pump_seconds, res.wall_seconds)
    print(f"# wall_seconds: {res.wall_seconds:.3f}", file=sys.stderr)
    if res.failures:
        print(json.dumps({"error": "PartialSweep", "failures": res.failures, "exit_code": EXIT_SOLVER}), file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_convergence(args) -> int:
    cfg = _config_from_args(args)
    try:
        ms = [int(s) for s in args.modes.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad mode list {args.modes!r}") from None
    rows = report_convergence(cfg, ms, args.f_signal_ghz)
    buf = io.StringIO()
    buf.write("\n".join(header_lines(cfg)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "qe", "qe_normalized", "delta", "converged"])
    for r in rows:
        w.writerow([r.m, _fmt(r.qe), _fmt(r.qe_normalized), _fmt(r.delta), int(r.converged)])
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "convergence.csv").write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _cmd_compression(args) -> int:
    g0 = 10 ** (args.g0_db / 10)
    pp = float(dbm_to_watts(args.pump_dbm))
    if args.curve:
        try:
            curve = CompressionCurve.from_csv(Path(args.curve).read_text())
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{args.curve}: {exc}") from None
    else:
        if g0 < 1:
            raise ConfigError("small-signal gain must be >= 0 dB")
        curve = CompressionCurve.from_model(g0, pp)
    p = p1db(curve)
    doc = {"g0_dB": args.g0_db, "pump_dBm": args.pump_dbm, "p1db_dBm": float(watts_to_dbm(p))}
    print(json.dumps(doc))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "compression.csv").write_text(curve.to_csv())
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = getattr(args, "out", None)
    cmd = {"sweep": _cmd_sweep, "convergence": _cmd_convergence, "compression": _cmd_compression}[args.command]
    try:
        return cmd(args)
    except (ConfigError, CircuitError, NetlistError, CompressionError) as exc:
        return _fail(EXIT_CONFIG, exc, out)
    except (PumpNotConverged, SingularSystemError) as exc:
        return _fail(EXIT_SOLVER, exc, out)
    except OSError as exc:
        return _fail(EXIT_IO, exc, out)


if __name__ == "__main__":
    sys.exit(main())
