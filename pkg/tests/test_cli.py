import csv
import io

import numpy as np
import pytest

from uav_aircomp.acceptance import oracle_trajectory, random_trajectory_instance
from uav_aircomp.cli import main, parse_values
from uav_aircomp.outputs import SUMMARY_COLUMNS, csv_body, write_csv, write_trace
from uav_aircomp.scenario import ConfigError
from uav_aircomp.trajectory_admm import solve_trajectory

SCENARIO = """
slot_length_s: 0.2
mission_duration_s: 4
uav_altitude_m: 100
uav_initial_m: [200, 0]
uav_max_speed: 20
ref_channel_gain_db: -40
noise_power_dbm: -80
bounds_m: [[0, 400], [0, 400]]
clusters:
  - {center0_m: [180, 60], radius_m: 20, member_count: 3, peak_power_dbm: 10, heading: 1.0, speed: 5}
  - {center0_m: [260, 90], radius_m: 10, member_count: 2, peak_power_dbm: 7, heading: 2.0, speed: 3}
"""


def _rows(path):
    body = csv_body(path).decode("utf-8")
    return list(csv.reader(io.StringIO(body)))


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(SCENARIO)
    return path


def test_solve_writes_schema(tmp_path, scenario_file):
    out = tmp_path / "res"
    assert main(["solve", "--scenario", str(scenario_file), "--strategy", "bcd-admm", "--out", str(out)]) == 0
    assert _rows(out / "trajectory.csv")[0] == ["n", "x", "y"]
    assert len(_rows(out / "trajectory.csv")) == 1 + 21
    assert _rows(out / "powers.csv")[0] == ["k", "n", "watts"]
    assert len(_rows(out / "powers.csv")) == 1 + 5 * 20
    assert _rows(out / "mse_per_iter.csv")[0] == ["iteration", "mse"]
    summary = _rows(out / "summary.csv")
    assert tuple(summary[0]) == SUMMARY_COLUMNS
    assert summary[1][0] == "bcd-admm"
    raw = (out / "trajectory.csv").read_bytes()
    assert raw.startswith(b"# ") and b"\r" not in raw
    mse = [float(r[1]) for r in _rows(out / "mse_per_iter.csv")[1:]]
    assert np.all(np.diff(mse) <= 1e-9)


def test_solve_is_byte_reproducible(tmp_path, scenario_file):
    for run in ("a", "b"):
        assert main(["solve", "--scenario", str(scenario_file), "--strategy", "all", "--seed", "4",
                     "--out", str(tmp_path / run)]) == 0
    for strategy in ("bcd-admm", "static", "fly-hover", "to-wo-pc"):
        for name in ("trajectory", "mse_per_iter", "powers", "summary"):
            a = tmp_path / "a" / strategy / f"{name}.csv"
            assert csv_body(a) == csv_body(tmp_path / "b" / strategy / f"{name}.csv")


def test_seed_changes_output(tmp_path, scenario_file):
    for seed in ("1", "2"):
        main(["solve", "--scenario", str(scenario_file), "--strategy", "static", "--seed", seed,
              "--out", str(tmp_path / seed)])
    assert csv_body(tmp_path / "1" / "powers.csv") != csv_body(tmp_path / "2" / "powers.csv")


def test_sweep_rows(tmp_path, scenario_file):
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", str(scenario_file), "--param", "noise_dbm", "--values", "-90:-60:15",
                 "--strategies", "static,fly-hover", "--out", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    assert tuple(rows[0]) == ("param", "value") + SUMMARY_COLUMNS
    assert [(r[2], float(r[1])) for r in rows[1:]] == [
        (s, v) for s in ("static", "fly-hover") for v in (-90.0, -75.0, -60.0)]
    for strategy in ("static", "fly-hover"):
        mse = [float(r[7]) for r in rows[1:] if r[2] == strategy]
        assert mse == sorted(mse)
    timing = _rows(out / "sweep_timing.csv")
    assert timing[0] == ["param", "value", "strategy", "wall_seconds"] and len(timing) == 7


def test_sweep_builtin_num_sensors(tmp_path):
    out = tmp_path / "k"
    assert main(["sweep", "--scenario", "desk", "--param", "num_sensors", "--values", "4,6",
                 "--strategy", "static", "--out", str(out)]) == 0
    assert [r[4] for r in _rows(out / "sweep.csv")[1:]] == ["4", "6"]


def test_parse_values():
    assert parse_values("-90:-60:10") == [-90.0, -80.0, -70.0, -60.0]
    assert parse_values("1,2.5") == [1.0, 2.5]
    for bad in ("1:0:1", "a,b", "1:2:0"):
        with pytest.raises(ConfigError):
            parse_values(bad)


def test_trace_outer_nonincreasing(tmp_path, scenario_file):
    assert main(["trace", "--scenario", str(scenario_file), "--level", "outer", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "trace_outer.csv")
    assert rows[0] == ["iteration", "objective"]
    obj = [float(r[1]) for r in rows[1:]]
    assert np.all(np.diff(obj) <= 1e-9)


def test_trace_inner_without_oracle_has_two_columns(tmp_path, scenario_file):
    assert main(["trace", "--scenario", str(scenario_file), "--level", "inner", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "trace_inner.csv")
    assert rows[0] == ["iteration", "objective"] and rows[1][0] == "1"
    assert all(len(r) == 2 for r in rows)


def test_trace_inner_with_oracle(tmp_path, scenario_file):
    assert main(["trace", "--scenario", str(scenario_file), "--level", "inner", "--oracle",
                 "--out", str(tmp_path)]) == 0
    assert _rows(tmp_path / "trace_inner.csv")[0] == ["iteration", "objective", "relative_error"]


def test_desk_sized_trace_reaches_oracle(tmp_path):
    sc, theta, q0 = random_trajectory_instance(np.random.default_rng(11), 100, 10)
    res = solve_trajectory(theta, sc, q0, record=True)
    _, ref = oracle_trajectory(theta, sc, q0)
    path = write_trace(tmp_path / "t.csv", [h[1] for h in res.history], ref, start=1)
    err = np.array([float(r[2]) for r in _rows(path)[1:]])
    assert err[-1] <= 1e-3
    # mostly decreasing: the tail is far below the start
    assert err[len(err) // 2:].max() < err[:10].max()


def test_write_csv_format(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b", "c"), [(0.1, True, 3)], comment="hello", stamp=False)
    assert path.read_bytes() == b"# hello\na,b,c\n0.10000000000000001,1,3\n"


def test_validate_selected_criteria(tmp_path, capsys):
    assert main(["validate", "--suite", "acceptance", "--criteria", "1,7", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] 1." in out and "[PASS] 7." in out and "2/2 criteria passed" in out
    assert len(_rows(tmp_path / "acceptance.csv")) == 3


@pytest.mark.parametrize("argv", [
    ["solve", "--scenario", "missing.yaml"],
    ["solve", "--strategy", "nope"],
    ["sweep", "--param", "noise_dbm", "--values", "x:y:z"],
    ["sweep", "--param", "not_a_field", "--values", "1"],
    ["validate", "--criteria", "12"],
    ["validate", "--suite", "other"],
    ["solve", "--jobs", "0"],
])
def test_config_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_malformed_file_exit_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("slot_length: [unclosed\n")
    assert main(["solve", "--scenario", str(path), "--out", str(tmp_path)]) == 2


def test_argparse_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--values", "1"])
    assert exc.value.code == 2


def test_infeasible_scenario_exit_3(tmp_path):
    path = tmp_path / "escape.yaml"
    path.write_text(SCENARIO.replace("mission_duration_s: 4", "mission_duration_s: 200"))
    assert main(["solve", "--scenario", str(path), "--strategy", "static", "--out", str(tmp_path)]) == 3


def test_cap_hit_is_a_column_not_an_error(tmp_path, scenario_file):
    text = scenario_file.read_text() + "max_bcd_iters: 1\n"
    scenario_file.write_text(text)
    out = tmp_path / "cap"
    assert main(["solve", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    row = dict(zip(*_rows(out / "summary.csv")))
    assert row["cap_hit"] == "1" and row["converged"] == "0"


def test_log_level_from_environment(tmp_path, scenario_file, monkeypatch, caplog):
    monkeypatch.setenv("AIRCOMP_LOG", "debug")
    assert main(["solve", "--scenario", str(scenario_file), "--strategy", "static", "--out", str(tmp_path)]) == 0
