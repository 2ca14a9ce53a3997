import csv
import dataclasses
import io
import json
import math

import pytest

from qxparam.cli import (
    CSV_COLUMNS,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    ConfigError,
    build_circuit,
    SweepConfig,
    config_from_header,
    header_lines,
    load_config,
    main,
    report_convergence,
    run_sweep,
)
from qxparam.fdcore import solve_linear_sparams
from qxparam.jtwpa import build_uniform_jtwpa, reduced_uniform
from qxparam.netlist import emit_netlist


@pytest.fixture()
def netlist(tmp_path):
    p = tmp_path / "line.net"
    p.write_text(emit_netlist(build_uniform_jtwpa(reduced_uniform(40))))
    return p


def small_cfg(netlist, **kw):
    base = dict(
        preset=None,
        netlist=str(netlist),
        pump_frequency_ghz=7.12,
        pump_current_ua=3.7,
        f_start_ghz=5.0,
        f_stop_ghz=6.0,
        f_count=3,
        modes=4,
    )
    base.update(kw)
    return SweepConfig(**base)


def data_rows(text):
    return [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]


def test_sweep_outputs(netlist, tmp_path):
    out = tmp_path / "out"
    res = run_sweep(small_cfg(netlist, export_xmatrix=True, export_noise=True, tan_delta=1e-3), out)
    assert not res.failures
    rows = data_rows((out / "gain.csv").read_text())
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["points"] == 3 and summary["wall_seconds"] > 0
    assert len(list(out.glob("xmatrix_*.json"))) == 3
    assert len(list(out.glob("noise_*.json"))) == 3


def test_pump_off_single_point(netlist):
    res = run_sweep(small_cfg(netlist, pump_off=True, f_count=1, f_start_ghz=6.0, f_stop_ghz=6.0))
    assert len(res.rows) == 1
    f, vals = res.rows[0]
    assert abs(vals[0]) < 0.5  # gain_dB: passive line ripple
    assert vals[1] == -math.inf
    # pump off: the only leak is reflection back into the output port
    S = solve_linear_sparams(build_circuit(small_cfg(netlist)), 2 * math.pi * 6e9)
    passive = abs(S[1, 0]) ** 2 / (abs(S[1, 0]) ** 2 + abs(S[1, 1]) ** 2)
    assert vals[3] == pytest.approx(passive, abs=1e-12)
    assert vals[4] == pytest.approx(passive, abs=1e-12)


def test_determinism(netlist, tmp_path):
    cfg = small_cfg(netlist)
    a = run_sweep(cfg, tmp_path / "a")
    b = run_sweep(cfg, tmp_path / "b")
    assert a.csv_text(cfg) == b.csv_text(cfg)
    assert (tmp_path / "a" / "gain.csv").read_bytes() == (tmp_path / "b" / "gain.csv").read_bytes()


def test_workers_keep_order(netlist):
    cfg = small_cfg(netlist, f_count=4)
    seq = run_sweep(cfg)
    par = run_sweep(dataclasses.replace(cfg, workers=2))
    assert [f for f, _ in par.rows] == [f for f, _ in seq.rows]
    assert par.csv_text(cfg) == seq.csv_text(cfg)


def test_header_round_trip(netlist):
    cfg = small_cfg(netlist, tan_delta=1e-4, pump_rescale=125.0)
    text = "\n".join(header_lines(cfg))
    back = config_from_header(text)
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_yaml_config(tmp_path, netlist):
    p = tmp_path / "c.yaml"
    p.write_text(
        f"circuit:\n  netlist: {netlist}\npump:\n  frequency_ghz: 7.12\n  current_ua: 3.7\n"
        "grid:\n  start_ghz: 5\n  stop_ghz: 6\n  count: 3\nmodes: 4\n"
    )
    cfg = load_config(p)
    assert cfg == small_cfg(netlist)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        SweepConfig(preset="nope").check()
    with pytest.raises(ConfigError):
        SweepConfig(modes=1).check()
    with pytest.raises(ConfigError):
        SweepConfig(pump_current_ua=1, pump_power_dbm=-90).check()
    with pytest.raises(ConfigError):
        SweepConfig.from_mapping({"bogus": 1})


def test_convergence_pump_off(netlist):
    rows = report_convergence(small_cfg(netlist, pump_off=True), [2, 4, 6])
    assert rows[0].qe_normalized > 0.9999
    assert all(r.qe_normalized == pytest.approx(rows[0].qe_normalized, abs=1e-12) for r in rows)
    assert rows[-1].converged


def test_exit_ok(netlist, tmp_path, capsys):
    code = main(["sweep", "--netlist", str(netlist), "--pump-ghz", "7.12", "--pump-ua", "3.7",
                 "--count", "2", "--start-ghz", "5", "--stop-ghz", "6", "--modes", "4", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert (tmp_path / "o" / "gain.csv").exists()


def test_exit_config(tmp_path, capsys):
    code = main(["sweep", "--netlist", str(tmp_path / "missing.net"), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == EXIT_CONFIG
    assert json.loads((tmp_path / "o" / "error.json").read_text())["error"] == "ConfigError"


def test_exit_solver(netlist, tmp_path, capsys):
    code = main(["sweep", "--netlist", str(netlist), "--pump-ghz", "7.12", "--pump-ua", "60",
                 "--count", "1", "--modes", "4", "--out", str(tmp_path / "o")])
    assert code == EXIT_SOLVER
    assert json.loads((tmp_path / "o" / "error.json").read_text())["error"] == "PumpNotConverged"


def test_exit_io(netlist, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["sweep", "--netlist", str(netlist), "--pump-ghz", "7.12", "--pump-ua", "3.7",
                 "--count", "1", "--modes", "4", "--out", str(blocker)])
    assert code == EXIT_IO


def test_compression_command(capsys, tmp_path):
    assert main(["compression", "--g0-db", "26.4", "--pump-dbm", "-69.17", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["p1db_dBm"] == pytest.approx(-104.5, abs=1.5)
    assert (tmp_path / "compression.csv").exists()
    assert main(["compression", "--g0-db", "26.4", "--pump-dbm", "-69.17", "--curve", str(tmp_path / "compression.csv")]) == EXIT_OK
    assert main(["compression", "--g0-db", "-3", "--pump-dbm", "-69.17"]) == EXIT_CONFIG


def test_convergence_command(netlist, capsys):
    code = main(["convergence", "--netlist", str(netlist), "--pump-off", "--modes", "2,4"])
    assert code == EXIT_OK
    rows = data_rows(capsys.readouterr().out)
    assert rows[0] == ["m", "qe", "qe_normalized", "delta", "converged"]
    assert len(rows) == 3
    assert main(["convergence", "--netlist", str(netlist), "--pump-off", "--modes", "4,2"]) == EXIT_CONFIG
