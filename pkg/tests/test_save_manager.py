"""
Tests du gestionnaire de fichiers et des fonctions utilitaires
"""

import json

import numpy as np
import pytest

from config.tolerances import ToleranceSet
from core.blowup import infinity_flow
from core.errors import ConfigError
from core.integrator import integrate
from core.kepler import kepler_blowup_state
from core.scattering import ScatteringResult, infinity_scattering
from utils.helpers import format_duration, format_file_size, format_float, to_jsonable
from utils.save_manager import CSV_MAGIC, SaveManager, trajectory_columns


@pytest.fixture
def manager(tmp_path):
    return SaveManager(str(tmp_path / "out"))


def test_creates_output_directory(tmp_path):
    target = tmp_path / "a" / "b"
    SaveManager(str(target))
    assert target.is_dir()


def test_trajectory_round_trip(manager, kepler_orbit, tol):
    sys = kepler_orbit.mass_system()
    traj = integrate(kepler_blowup_state(kepler_orbit, 0.0), (0.0, 0.5), tol, sys)
    path = manager.write_trajectory(traj)
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        columns = f.readline().strip().split(",")
    assert header.startswith(CSV_MAGIC)
    assert "masses=2;2" in header
    assert columns == trajectory_columns(4)
    table = manager.read_trajectory(path)
    assert len(table) == len(traj)
    assert table.masses == (2.0, 2.0)
    assert table.d == 2
    np.testing.assert_array_equal(table.tau, traj.tau)
    np.testing.assert_array_equal(table.t, traj.t)
    np.testing.assert_array_equal(table.rho, traj.rho)
    np.testing.assert_array_equal(table.s, traj.s)
    np.testing.assert_array_equal(table.w, traj.w)


def test_infinity_trajectory_keeps_nan_time(manager, equilateral_seed):
    sys, p, eta = equilateral_seed
    traj = integrate(infinity_flow(-p.s0, eta, 0.5, -1.0, sys), (-1.0, 0.0), ToleranceSet(), sys)
    table = manager.read_trajectory(manager.write_trajectory(traj, "inf.csv"))
    assert np.all(np.isnan(table.t))
    np.testing.assert_array_equal(table.rho, 0.0)


def test_rejects_foreign_or_future_files(manager, kepler_orbit, tol):
    foreign = manager.path("foreign.csv")
    with open(foreign, "w", encoding="utf-8") as f:
        f.write("tau,t\n0,0\n")
    with pytest.raises(ValueError):
        manager.read_trajectory(foreign)
    traj = integrate(kepler_blowup_state(kepler_orbit, 0.0), (0.0, 0.1), tol, kepler_orbit.mass_system())
    path = manager.write_trajectory(traj)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    with open(path, "w", encoding="utf-8") as f:
        f.write(text.replace("version=1", "version=9", 1))
    with pytest.raises(ValueError):
        manager.read_trajectory(path)


def test_jsonl_records(manager, equilateral_seed):
    sys, p, eta = equilateral_seed
    res = infinity_scattering(p, eta, sys).with_index(0)
    path = manager.write_jsonl("scatter.jsonl", [res, {"b": np.float64(1.5), "a": np.arange(2)}])
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert len(lines) == 2
    assert lines[1] == '{"a": [0, 1], "b": 1.5}'
    records = manager.read_jsonl(path)
    assert ScatteringResult.from_dict(records[0]).to_dict() == to_jsonable(res)


def test_empty_jsonl(manager):
    path = manager.write_jsonl("empty.jsonl", [])
    assert manager.read_jsonl(path) == []


def test_error_records(manager):
    record = SaveManager.error_record(ConfigError("sweep.fd_step", "valeur 0 hors domaine"), 2)
    assert record == {
        "error": "ConfigError",
        "message": "sweep.fd_step: valeur 0 hors domaine",
        "exit_code": 2,
        "field": "sweep.fd_step",
    }
    assert "field" not in SaveManager.error_record(ValueError("x"), 1)
    path = manager.write_error(record)
    assert manager.read_json(path) == record


def test_trajectory_records_round_trip(manager, kepler_orbit, tol):
    sys = kepler_orbit.mass_system()
    traj = integrate(kepler_blowup_state(kepler_orbit, 0.0), (0.0, 0.5), tol, sys)
    path = manager.write_trajectory_records(traj)
    header, *samples = manager.read_jsonl(path)
    assert header["masses"] == [2.0, 2.0]
    assert len(samples) == len(traj)
    assert sorted(samples[0]) == ["rho", "s", "t", "tau", "v", "w"]
    table = manager.read_trajectory_records(path)
    assert table.d == 2
    np.testing.assert_array_equal(table.tau, traj.tau)
    np.testing.assert_array_equal(table.t, traj.t)
    np.testing.assert_array_equal(table.v, traj.v)
    np.testing.assert_array_equal(table.s, traj.s)
    np.testing.assert_array_equal(table.w, traj.w)


def test_trajectory_records_keep_missing_time(manager, equilateral_seed):
    sys, p, eta = equilateral_seed
    traj = integrate(infinity_flow(-p.s0, eta, 0.5, -1.0, sys), (-1.0, 0.0), ToleranceSet(), sys)
    path = manager.write_trajectory_records(traj, "inf.jsonl")
    assert all(r["t"] is None for r in manager.read_jsonl(path)[1:])
    assert np.all(np.isnan(manager.read_trajectory_records(path).t))
    with pytest.raises(ValueError):
        manager.read_trajectory_records(manager.write_jsonl("foreign.jsonl", [{"tau": 0.0}]))


def test_output_inventory(manager):
    paths = [manager.write_json("a.json", {"x": 1}), manager.write_jsonl("b.jsonl", [{"y": 2}])]
    files = SaveManager.inventory(paths)
    assert [f["filename"] for f in files] == ["a.json", "b.jsonl"]
    assert all(f["size"] > 0 for f in files)
    assert files[0]["size_formatted"].endswith(" B")


def test_format_float_round_trips(rng):
    for value in rng.normal(size=20) * 10.0 ** rng.integers(-20, 20, size=20):
        assert float(format_float(value)) == value
    assert format_float(float("nan")) == "nan"
    assert format_float(0.1) == "0.10000000000000001"


def test_format_helpers():
    assert format_duration(0.42) == "0.42s"
    assert format_duration(125.3) == "2m 5.3s"
    assert format_duration(3725.0) == "1h 2m 5s"
    assert format_duration(-1.0) == "0s"
    assert format_file_size(512) == "512 B"
    assert format_file_size(2048) == "2.0 KB"
    assert format_file_size(3 * 1024**2) == "3.0 MB"
    assert format_file_size(5 * 1024**3) == "5120.0 MB"


def test_to_jsonable():
    data = to_jsonable({"a": np.array([1.0, 2.0]), "b": np.int64(3), "c": (np.bool_(True), None)})
    assert data == {"a": [1.0, 2.0], "b": 3, "c": [True, None]}
    assert json.dumps(data)
