"""
Tests de la ligne de commande (main) de bout en bout
"""

import json
import os

import numpy as np
import pytest

from config.constants import (
    ERROR_FILE,
    EXIT_CONFIG_ERROR,
    EXIT_FAILURE,
    EXIT_OK,
    KEPLER_CHECK_FILE,
    METADATA_FILE,
    REPORT_FILE,
    SCATTER_FILE,
    STATUS_OK,
    STATUS_SINGULAR,
    SUMMARY_FILE,
    SWEEP_FILE,
    TRAJECTORY_FILE,
    TRAJECTORY_RECORDS_FILE,
)
from main import main
from utils.save_manager import SaveManager

TRIANGLE = {"mode": "manifold", "masses": [1.0, 1.0, 1.0], "d": 2, "h": 0.5}


def run(command, config_path, out):
    return main([command, "--config", config_path, "--out", str(out)])


def test_simulate_kepler_to_equilibrium(write_config, tmp_path):
    out = tmp_path / "out"
    assert run("simulate", write_config({"mode": "kepler"}), out) == EXIT_OK
    manager = SaveManager(str(out))
    table = manager.read_trajectory(str(out / TRAJECTORY_FILE))
    assert table.masses == (2.0, 2.0)
    assert table.rho[-1] < 1e-9
    assert np.all(np.isfinite(table.t))
    metadata = manager.read_json(str(out / METADATA_FILE))
    assert metadata["mode"] == "kepler"
    assert metadata["equilibrium"]["v0"] == pytest.approx(2.0, rel=1e-6)
    assert metadata["growth_witness"] > 0
    assert [a["filename"] for a in metadata["artifacts"]] == [TRAJECTORY_FILE, TRAJECTORY_RECORDS_FILE]
    assert all(a["size"] > 0 for a in metadata["artifacts"])
    records = manager.read_trajectory_records(str(out / TRAJECTORY_RECORDS_FILE))
    np.testing.assert_array_equal(records.tau, table.tau)
    np.testing.assert_array_equal(records.w, table.w)


def test_simulate_on_infinity_manifold(write_config, tmp_path):
    out = tmp_path / "out"
    config = write_config({**TRIANGLE, "manifold": {"rho1": 0.0}, "tau_span": [0.0, 4.0]})
    assert run("simulate", config, out) == EXIT_OK
    table = SaveManager(str(out)).read_trajectory(str(out / TRAJECTORY_FILE))
    np.testing.assert_array_equal(table.rho, 0.0)
    assert np.all(np.isnan(table.t))
    assert table.tau[-1] - table.tau[0] == pytest.approx(4.0)
    records = SaveManager(str(out)).read_jsonl(str(out / TRAJECTORY_RECORDS_FILE))
    assert all(r["t"] is None for r in records[1:])


@pytest.mark.parametrize("data, field", [
    ({"mode": "orbit"}, "mode"),
    ({"workers": 0}, "workers"),
    ({"sweep": {"fd_step": -1.0}}, "sweep.fd_step"),
    ({"colour": "bleu"}, "colour"),
])
def test_invalid_config_exits_with_code_2(write_config, tmp_path, capsys, data, field):
    assert run("simulate", write_config(data), tmp_path / "out") == EXIT_CONFIG_ERROR
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError"
    assert record["field"] == field
    assert record["exit_code"] == EXIT_CONFIG_ERROR


def test_missing_config_file(tmp_path, capsys):
    assert run("scatter", str(tmp_path / "absent.json"), tmp_path / "out") == EXIT_CONFIG_ERROR
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["field"] == "config"


def test_scatter_on_infinity_manifold(write_config, tmp_path):
    out = tmp_path / "out"
    assert run("scatter", write_config({**TRIANGLE, "manifold": {"rho1": 0.0}}), out) == EXIT_OK
    [record] = SaveManager.read_jsonl(str(out / SCATTER_FILE))
    assert record["status"] == STATUS_OK
    assert record["index"] == 0
    np.testing.assert_allclose(record["A_future"], record["A_past"])
    np.testing.assert_allclose(record["future"]["s0"], -np.array(record["past"]["s0"]))


def test_scatter_from_collision_configuration(write_config, tmp_path):
    out = tmp_path / "out"
    manifold = {
        "s0": [[1.0, 0.0], [1.0, 0.0], [-2.0, 0.0]],
        "s1": [[0.0, 1.0], [0.0, -1.0], [0.0, 0.0]],
        "rho1": 1e-3,
    }
    assert run("scatter", write_config({**TRIANGLE, "manifold": manifold}), out) == EXIT_OK
    [record] = SaveManager.read_jsonl(str(out / SCATTER_FILE))
    assert record["status"] == STATUS_SINGULAR
    assert record["future"] is None
    assert record["A_future"] is None


def test_cartesian_failure_writes_error_record(write_config, tmp_path, capsys):
    out = tmp_path / "out"
    config = write_config({
        "mode": "cartesian",
        "masses": [1.0, 1.0, 1.0],
        "cartesian": {"q": [[-1.0, 0.0], [1.0, 0.0], [0.0, 5.0]], "xi": [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]},
        "tolerances": {"collision": 1e-3},
        "tau_budget": 5.0,
    })
    assert run("scatter", config, out) == EXIT_FAILURE
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == EXIT_FAILURE
    assert SaveManager.read_json(str(out / ERROR_FILE)) == record


def test_empty_sweep(write_config, tmp_path):
    out = tmp_path / "out"
    assert run("sweep", write_config({**TRIANGLE, "sweep": {"rho1_values": []}}), out) == EXIT_OK
    assert SaveManager.read_jsonl(str(out / SWEEP_FILE)) == []
    summary = SaveManager.read_json(str(out / SUMMARY_FILE))
    assert summary["seeds"] == 0
    assert summary["jacobian"] is None
    assert "note" in summary
    assert summary["near_infinity"]["great_circle_K"] > 0
    assert "R" not in summary["near_infinity"]
    assert [a["filename"] for a in summary["artifacts"]] == [SWEEP_FILE]


def test_sweep_near_infinity_filter_on_empty_grid(write_config, tmp_path):
    out = tmp_path / "out"
    config = write_config({**TRIANGLE, "sweep": {"rho1_values": [], "R": 100.0, "K": 5.0}})
    assert run("sweep", config, out) == EXIT_OK
    near = SaveManager.read_json(str(out / SUMMARY_FILE))["near_infinity"]
    assert near["R"] == 100.0
    assert near["K"] == 5.0
    assert near["seeds"] == 0
    assert np.isnan(near["dispersion"])


def test_verify_selected_criterion(write_config, tmp_path):
    out = tmp_path / "out"
    config = write_config({"verify": {"criteria": ["linearization"], "random_equilibria": 3}})
    assert run("verify", config, out) == EXIT_OK
    report = SaveManager.read_json(str(out / REPORT_FILE))
    assert report["passed"] is True
    assert [c["name"] for c in report["criteria"]] == ["linearization"]
    assert report["full_pass"] is False
    assert report["reduced"] == ["linearization"]


def test_verify_unknown_criterion_fails(write_config, tmp_path):
    out = tmp_path / "out"
    assert run("verify", write_config({"verify": {"criteria": ["nope"]}}), out) == EXIT_FAILURE
    assert os.path.exists(out / ERROR_FILE)


@pytest.mark.slow
def test_verify_reports_injected_fault(write_config, tmp_path):
    out = tmp_path / "out"
    config = write_config({"verify": {"criteria": ["chazy_b_law"], "inject": {"b_sign": -1}}})
    assert run("verify", config, out) == EXIT_FAILURE
    assert SaveManager.read_json(str(out / REPORT_FILE))["failed"] == ["chazy_b_law"]


@pytest.mark.slow
def test_kepler_check_report(write_config, tmp_path):
    out = tmp_path / "out"
    code = run("kepler-check", write_config({"mode": "kepler"}), out)
    report = SaveManager.read_json(str(out / KEPLER_CHECK_FILE))
    assert code == (EXIT_OK if report["passed"] else EXIT_FAILURE)
    assert report["exact"]["angle"] == pytest.approx(np.arccos(0.5))
    assert report["metrics"]["past_A_error"] < 1e-5
    assert report["metrics"]["future_A_error"] < 1e-5
