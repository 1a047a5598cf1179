import csv
import io

import pytest

from stochcool.cli import (SWEEP_COLUMNS, TRAJECTORY_COLUMNS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK,
                           EXIT_VALIDATION, convert_temperature, main)
from stochcool.config import ConfigError, parse_config
from stochcool.units import PhysicalConfig

MINIMAL = "physical.frequency_hz = 500\nphysical.mass_u = 22.98976928\nN_tot = 1e4\n"


def write(tmp_path, text, name="run.conf"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    w = cfg.window()
    assert (w.x_center, w.y_center, w.x_half_width, w.y_half_width) == (0.0, 0.0, 0.5, 0.5)
    assert cfg["feedback.sigma_policy"] == "optimal"
    assert cfg["numerics.strategy"] == "series"
    assert cfg.N_tot == 1e4


def test_shifted_window_key():
    cfg = parse_config(MINIMAL + "window.x_center = 5.0  # dashed curve\n")
    assert cfg.window().x_center == 5.0


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError, match=r"line 4: duplicate key 'N_tot' \(first set on line 3\)"):
        parse_config(MINIMAL + "N_tot = 5\n")


@pytest.mark.parametrize("text, pattern", [
    ("physical.frequency_hz = 500\nN_tot = 1e4\nwindow.z_center = 1\n", "line 3: unknown key"),
    ("physical.frequency_hz = 500\nN_tot = lots\n", "line 2: bad value"),
    ("physical.frequency_hz = 500\n", "missing required key 'N_tot'"),
    ("physical.frequency_hz = 500\nN_tot = 10\nsweep.points = 2.5\n", "line 3: bad value"),
    ("physical.frequency_hz = 500\nN_tot 10\n", "line 2: expected 'key = value'"),
    ("physical.frequency_hz = -5\nN_tot = 10\n", r"physical.frequency_hz \(line 1\): must be positive"),
    (MINIMAL + "feedback.sigma_policy = fixed\n", "feedback.sigma"),
])
def test_config_errors(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text)


def test_convert_round_trip():
    phys = PhysicalConfig.from_frequency(500.0)
    trap = convert_temperature(7.6, "microK", "trap", phys)
    assert trap == pytest.approx(316.71661086863745499, rel=1e-13)
    assert convert_temperature(trap, "trap", "nK", phys) == pytest.approx(7600.0, rel=1e-13)
    assert convert_temperature(1.0, "T0", "microK", phys, N_tot=1e6) == pytest.approx(2.256841582874272645,
                                                                                       rel=1e-12)


def test_sweep_empty_grid_is_header_only(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "sweep.points = 0\n")
    assert main(["sweep", "--config", cfg]) == EXIT_OK
    assert capsys.readouterr().out == ",".join(SWEEP_COLUMNS) + "\n"


def test_sweep_rows_and_two_windows(tmp_path):
    cfg = write(tmp_path, MINIMAL + "sweep.points = 3\nsweep.T_min = 1.5\nsweep.T_max = 2.5\n"
                "sweep.x_centers = 0, 5\n")
    out = tmp_path / "fig2.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--threads", "1"]) == EXIT_OK
    for name in ("fig2_x0.csv", "fig2_x5.csv"):
        rows = list(csv.DictReader(open(tmp_path / name)))
        assert len(rows) == 3
        assert all(float(r["dE_over_E0"]) < 0 for r in rows)
        for r in rows:
            terms = sum(float(r[k]) for k in SWEEP_COLUMNS[3:7])
            assert terms == pytest.approx(float(r["dE_over_E0"]), rel=1e-12)


def test_sweep_is_deterministic_across_threads(tmp_path):
    cfg = write(tmp_path, MINIMAL + "sweep.points = 4\nsweep.spacing = log\n")
    outs = []
    for threads in ("1", "3", "1"):
        path = tmp_path / f"s{len(outs)}.csv"
        assert main(["sweep", "--config", cfg, "--out", str(path), "--threads", threads]) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_sweep_capacity_failure_exit_code(tmp_path):
    cfg = write(tmp_path, MINIMAL + "cutoff.n_max = 10\nsweep.points = 2\n")
    assert main(["sweep", "--config", cfg]) == EXIT_NUMERIC


def test_bad_config_exit_code(tmp_path):
    cfg = write(tmp_path, MINIMAL + "bogus = 1\n")
    assert main(["sweep", "--config", cfg]) == EXIT_CONFIG
    assert main(["sweep"]) == EXIT_CONFIG
    assert main(["sweep", "--config", str(tmp_path / "missing.conf")]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_trajectory_start_below_target(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "trajectory.T_start = 0.3\ntrajectory.T_target = 0.4\n")
    assert main(["trajectory", "--config", cfg, "--mode", "exact"]) == EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == 2 and rows[1][0] == "0"


def test_trajectory_grid_mode(tmp_path):
    cfg = write(tmp_path, "physical.frequency_hz = 500\nN_tot = 1000\ntrajectory.T_unit = T0\n"
                "trajectory.T_start = 1.5\ntrajectory.T_target = 1.3\ntrajectory.max_records = 50\n")
    out = tmp_path / "traj.csv"
    assert main(["trajectory", "--config", cfg, "--mode", "grid", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out)))
    assert 2 <= len(rows) <= 50
    T = [float(r["T_trap"]) for r in rows]
    assert T == sorted(T, reverse=True)
    assert int(rows[-1]["step"]) > 1000


def test_validate_passes_and_detects_fault(tmp_path):
    cfg = write(tmp_path, MINIMAL + "validate.toy_systems = 4\n")
    report = tmp_path / "report.txt"
    assert main(["validate", "--config", cfg, "--out", str(report)]) == EXIT_OK
    lines = report.read_text().splitlines()
    assert all(line.startswith("PASS") for line in lines)
    assert any("projector.decrease_n12_n24" in line for line in lines)
    assert main(["validate", "--config", cfg, "--out", str(report), "--inject-fault", "sextic-sign"]) \
        == EXIT_VALIDATION
    failed = [line for line in report.read_text().splitlines() if line.startswith("FAIL")]
    assert any(line.startswith("FAIL oracle.system_") for line in failed)


def test_tc_report(tmp_path, capsys):
    cfg = write(tmp_path, "physical.frequency_hz = 500\nN_tot = 1000\n")
    assert main(["tc", "--config", cfg]) == EXIT_OK
    report = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(report["T0_trap"]) == pytest.approx(9.4050, abs=1e-3)
    assert 0.9 < float(report["crossover_over_T0"]) < 1.0


def test_convert_command(capsys):
    assert main(["convert", "7.6", "--from", "microK", "--to", "trap"]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(316.71661086863745499, rel=1e-13)
