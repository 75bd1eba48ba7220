import json
import math

import numpy as np
import pytest

from udnrate import cli
from udnrate.figures import run_figure
from udnrate.tables import ResultTable, read_csv, read_json, write_table


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- tables ------------------------------------------------------------------------

def test_table_rejects_ragged_columns():
    with pytest.raises(ValueError, match="equal length"):
        ResultTable({"a": [1, 2], "b": [1]})


def test_csv_and_json_round_trip_identically(tmp_path):
    table = ResultTable(
        {"x": [0.1, 1 / 3, 2.0], "n": [1, 2, 3], "flag": [True, False, True], "r": [math.inf, 0.5, None]},
        {"seed": 3},
    )
    write_table(table, tmp_path / "t.csv", "csv")
    write_table(table, tmp_path / "t.json", "json")
    a, b = read_csv(tmp_path / "t.csv"), read_json(tmp_path / "t.json")
    assert a.columns == b.columns == table.columns
    assert a.metadata == b.metadata == {"seed": 3}


def test_floats_survive_csv_exactly(tmp_path):
    values = list(np.random.default_rng(0).random(50))
    write_table(ResultTable({"v": values}), tmp_path / "v.csv", "csv")
    assert read_csv(tmp_path / "v.csv").columns["v"] == values


def test_run_info_goes_to_sidecar(tmp_path):
    table = ResultTable({"a": [1]}, {"k": 1}, {"wall_time_s": 0.25})
    paths = write_table(table, tmp_path / "t.json", "json")
    assert [p.name for p in paths] == ["t.json", "t.json.run.json"]
    assert "wall_time_s" not in (tmp_path / "t.json").read_text()


# -- argument handling ----------------------------------------------------------

def test_theta0_db_suffix():
    assert cli.parse_theta0("-6dB") == pytest.approx(10**-0.6)
    assert cli.parse_theta0("0 dB") == 1.0
    assert cli.parse_theta0("0.5") == 0.5


def test_sweep_parsing():
    assert cli.parse_sweep("tau=0.1,1", cli._ANALYZE_PARAMS) == ("tau", [0.1, 1.0])
    name, values = cli.parse_sweep("theta0=-6dB,0dB", cli._ANALYZE_PARAMS)
    assert values == pytest.approx([10**-0.6, 1.0])
    with pytest.raises(cli.DomainError, match="unknown parameter"):
        cli.parse_sweep("gamma=1", cli._ANALYZE_PARAMS)
    with pytest.raises(cli.DomainError, match="no values"):
        cli.parse_sweep("tau=", cli._ANALYZE_PARAMS)


# -- commands ----------------------------------------------------------------------

def test_analyze_single_row(capsys):
    code, out, _ = run(capsys, "analyze", "--tau", "1", "--theta0", "0dB", "--n", "5", "--at", "0.1")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == "x,value,lower"
    assert float(row.split(",")[1]) == pytest.approx(0.2496, abs=1e-4)


def test_analyze_sweep_json(capsys):
    code, out, _ = run(
        capsys, "analyze", "--theta0", "0dB", "--at", "0.1", "--sweep", "n=1,5,10", "--format", "json"
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["columns"]["n"] == [1, 5, 10]
    np.testing.assert_allclose(payload["columns"]["value"], [0.4944, 0.2496, 0.1432], atol=1e-4)
    assert payload["metadata"]["parameters"]["theta0"] == 1.0


def test_analyze_pmf(capsys):
    code, out, _ = run(capsys, "analyze", "--quantity", "tagged_load_pmf", "--tau", "1", "--at", "0")
    assert code == 0
    assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(0.3227, abs=5e-5)


def test_validation_errors_exit_2(capsys):
    code, _, err = run(capsys, "analyze", "--tau", "-1", "--at", "0.1")
    assert code == 2 and "tau" in err
    code, _, err = run(capsys, "analyze", "--sweep", "bogus=1", "--at", "0.1")
    assert code == 2 and "sweep" in err
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--format", "xml"])
    assert exc.value.code == 2


def test_optimize_anchor(capsys):
    r0 = math.log2(1 + 10**-0.6) / 5
    code, out, _ = run(capsys, "optimize", "--r0", repr(r0), "--tau", "1", "--n-max", "32")
    assert code == 0
    row = dict(zip(*[line.split(",") for line in out.strip().splitlines()]))
    assert row["n_star"] == "5" and row["n_star_lb"] == "5"


def test_optimize_infeasible_exit_3(capsys):
    code, out, err = run(capsys, "optimize", "--r0", "5", "--tau-high", "10", "--n-max", "4")
    assert code == 3
    assert "false" in out and "infeasible" in err


def test_optimize_large_epsilon_warns(capsys):
    code, out, err = run(capsys, "optimize", "--r0", "0.1", "--epsilon", "0.5", "--tau", "1", "--n-max", "8")
    assert code == 0
    assert "epsilon=0.5" in err


def test_invariant_violation_exit_4(capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise cli.NonMonotoneObjective("synthetic")

    monkeypatch.setattr(cli, "tau_min_search", broken)
    code, _, err = run(capsys, "optimize", "--r0", "0.1")
    assert code == 4 and "synthetic" in err


def test_simulate_is_reproducible_byte_for_byte(tmp_path, capsys):
    argv = ["simulate", "--n", "1,5", "--scheme", "both", "--drops", "30", "--seed", "4", "--theta0", "0dB"]
    assert cli.main(argv + ["--out", str(tmp_path / "a.csv")]) == 0
    assert cli.main(argv + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_bytes() == (tmp_path / "b.csv.meta.json").read_bytes()
    assert (tmp_path / "a.csv.run.json").exists()


def test_simulate_single_drop(capsys):
    code, out, _ = run(capsys, "simulate", "--drops", "1", "--at", "0,0.1")
    assert code == 0
    assert len(out.strip().splitlines()) == 3


def test_simulate_window_error(capsys):
    code, _, err = run(capsys, "simulate", "--window-radius", "3", "--drops", "1")
    assert code == 2 and "truncation bias" in err


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    assert cli.main(["figure", "fig2", "--format", "json"]) == 0
    assert (tmp_path / "fig2.json").exists()


# -- figures -----------------------------------------------------------------------

def test_figure_unknown_override(capsys):
    code, _, err = run(capsys, "figure", "fig2", "--set", "gamma=1")
    assert code == 2 and "gamma" in err


def test_fig2_values_flow_from_analytics():
    t = run_figure("fig2", {"n_values": [1, 2]})
    assert t.columns["p:fdma_tdma:tau=1"][0] == pytest.approx(1 - (3.5 / 4.5) ** 3.5)


def test_fig4_analytical_anchor_and_overlay():
    t = run_figure("fig4", {"r_values": [0.1], "taus": [1.0], "n_drops": 50})
    assert t.columns["F_R:fdma_tdma:tau=1,n=5"][0] == pytest.approx(0.2496, abs=1e-4)
    assert "F_R_sim:tdma:tau=1,n=10" in t.columns


def test_fig5_uses_fifth_of_rate_floor():
    t = run_figure("fig5", {"n_values": list(range(1, 16))})
    assert t.metadata["parameters"]["r0"] == pytest.approx(0.3233 / 5, abs=1e-4)
    col = t.columns["F_R:fdma_tdma:tau=1"]
    assert 1 + int(np.argmin(col)) == 5


def test_fig7_blind_design_degrades():
    t = run_figure("fig7", {"theta0_db": [-10.0, 0.0], "n_max": 32})
    blind = t.columns["F_R_blind:fdma_tdma"]
    tuned = t.columns["F_R:fdma_tdma"]
    assert blind[0] == pytest.approx(tuned[0], abs=1e-3)
    assert blind[1] > tuned[1] + 0.05


def test_fig8_small_grid():
    t = run_figure("fig8", {"r0_values": [0.02], "n_max": 64})
    fd, td = t.columns["tau_min:fdma_tdma"][0], t.columns["tau_min:tdma"][0]
    assert 1.2 <= td / fd <= 1.8
    assert t.columns["tau_min:conventional_tdma"][0] > td
