"""
Test the experiment catalog, config validation, runs and the command line.
"""
import json
from pathlib import Path

import numpy as np
import pytest

import carlemanlab
from carlemanlab.cli import main
from carlemanlab.experiment import (EXPERIMENTS, RUN_ERRORS, ExperimentConfig, errors_decreasing, compare_golden,
                                    list_experiments, load_document, load_golden, parse_overrides, validate)
from carlemanlab.helper import read_csv

SMALL_RUN = {"experiment": "obstruction_demo", "resolution": 12, "n_t": 5}

SMOKE = {"resolution": 12, "n_t": 5, "s_max": 16.0, "s_count": 4, "seeds": [0, 1], "condition_samples": 4}

GOLDEN = Path(__file__).parent / "golden"

CATALOG_NAMES = ["carleman_thm1", "carleman_lemmas", "appendix_check", "continuation_sweep", "inverse_source_i",
                 "inverse_source_ii", "proposition1", "obstruction_demo", "condition_report"]


def test_catalog():
    assert len(EXPERIMENTS) == 9
    assert EXPERIMENTS[0].name == "carleman_estimate"
    assert EXPERIMENTS["obstruction_demo"].tier == "D1"
    assert EXPERIMENTS["continuation_sweep"].tier == "D"
    assert "condition_report" in EXPERIMENTS
    with pytest.raises(IndexError):
        EXPERIMENTS["navier_stokes"]
    assert set(list_experiments()[0]) == {"name", "alias", "tier", "anchor", "description"}
    assert EXPERIMENTS["carleman_thm1"].name == "carleman_estimate"
    assert EXPERIMENTS["proposition1"] is EXPERIMENTS["inverse_source_compact"]
    assert "appendix_check" in EXPERIMENTS
    assert EXPERIMENTS.canonical("inverse_source_ii") == "inverse_source_field"
    assert EXPERIMENTS.canonical("condition_report") == "condition_report"
    assert list(EXPERIMENTS)[0] == "carleman_estimate"


def test_validate():
    assert validate({}).valid
    assert validate({}).config == ExperimentConfig()
    assert validate({"sigmas": [1e-3, 1e-2]}).errors == {"sigmas": "noise levels must be strictly decreasing"}
    assert validate({"colour": "red"}).errors == {"colour": "unknown key"}
    assert validate({"resolution": True}).errors == {"resolution": "expected int"}
    assert validate({"resolution": 12.5}).errors == {"resolution": "expected int"}
    assert validate({"delta": 1}).valid
    assert "s_max" in validate({"s_min": 8, "s_max": 4}).errors
    assert "sigmas" in validate({"experiment": "continuation_sweep", "sigmas": [1e-2, 1e-3]}).errors
    assert "experiment" in validate({"experiment": "navier_stokes"}).errors

    with pytest.raises(carlemanlab.ConfigError) as info:
        ExperimentConfig.from_dict({"colour": "red", "alpha": -1.0})
    assert info.value.keys == ["alpha", "colour"]


def test_overrides(tmp_path):
    assert parse_overrides(["resolution=32", "preset=rect2d_corner", "sigmas=[0.1, 0.01]"]) == \
        {"resolution": 32, "preset": "rect2d_corner", "sigmas": [0.1, 0.01]}
    with pytest.raises(carlemanlab.ConfigError):
        parse_overrides(["resolution"])

    path = tmp_path / "config.json"
    path.write_text(json.dumps({"experiment": "slice_integration", "n_t": 7}))
    assert load_document(path, ["n_t=5"]) == {"experiment": "slice_integration", "n_t": 5}
    path.write_text("[1, 2]")
    with pytest.raises(carlemanlab.ConfigError):
        load_document(path)


def test_run_is_reproducible(tmp_path):
    first = carlemanlab.run(SMALL_RUN, out_dir=tmp_path / "a")
    assert first.status == 0
    assert first.summary["checks"] == {"datasets_identical": True, "rot_F_below_tolerance": True}
    assert first.directory.name.startswith("obstruction_demo_")

    manifest = (first.directory / "MANIFEST").read_text().splitlines()
    assert manifest[0] == "experiment obstruction_demo"
    assert manifest[1] == "config_hash {}".format(first.summary["config_hash"])
    assert any(line.startswith("file summary.json ") for line in manifest)
    assert any(line.startswith("file obstruction_demo.csv ") for line in manifest)

    second = carlemanlab.run(SMALL_RUN, out_dir=tmp_path / "b")
    assert second.directory.name == first.directory.name
    for name in ("summary.json", "obstruction_demo.csv", "MANIFEST"):
        assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes()


def test_run_failure(tmp_path):
    outcome = carlemanlab.run(dict(SMALL_RUN, resolution=8), out_dir=tmp_path)
    assert outcome.status == 1
    assert outcome.summary["error"].startswith("ResolutionError")
    assert (outcome.directory / "MANIFEST").exists()


def test_cli(tmp_path, capsys):
    assert main(["list"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 9

    assert main(["validate", "--set", "sigmas=[0.001, 0.01]"]) == 1
    assert json.loads(capsys.readouterr().out)["valid"] is False

    assert main(["run", "--set", "colour=red"]) == 1
    assert "colour" in capsys.readouterr().err

    status = main(["run", "obstruction_demo", "--set", "resolution=12", "--set", "n_t=5", "--out", str(tmp_path)])
    assert status == 0
    assert json.loads(capsys.readouterr().out)["status"] == 0


def test_catalog_names_validate():
    for name in CATALOG_NAMES:
        report = validate({"experiment": name})
        assert report.valid, name
        assert report.config.experiment in EXPERIMENTS
    assert validate({"experiment": "inverse_source_i"}).config == validate(
        {"experiment": "inverse_source_rotation"}).config
    assert "sigmas" in validate({"experiment": "continuation_sweep", "sigmas": [1e-2, 1e-3]}).errors


def test_errors_decreasing():
    # errors that flatten out at the noise-free floor
    rows = [[1e-2, 0.01785], [1e-3, 0.00293], [1e-4, 0.0024047], [1e-5, 0.0024055], [0.0, 0.0024063]]
    assert errors_decreasing(rows, 1)
    assert not errors_decreasing([[1e-2, 0.1], [1e-3, 0.01], [1e-4, 0.02], [1e-5, 0.005], [0.0, 0.004]], 1)
    assert errors_decreasing([[1e-2, 0.2], [1e-3, 0.1]], 1)
    assert not errors_decreasing([[1e-2, 0.1], [1e-3, 0.2]], 1)
    assert not errors_decreasing([[1e-2, 0.1], [1e-3, float("nan")], [1e-4, 0.01]], 1)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_every_experiment_runs(tmp_path, name):
    outcome = carlemanlab.run(dict(SMOKE, experiment=name), out_dir=tmp_path)
    assert "error" not in outcome.summary
    assert outcome.status in (0, 1, 2)
    assert outcome.summary["checks"]
    assert outcome.summary["experiment"] == EXPERIMENTS[name].name
    assert (outcome.directory / "summary.json").exists()
    assert (outcome.directory / "MANIFEST").exists()


def test_carleman_estimate_table(tmp_path):
    outcome = carlemanlab.run({"experiment": "carleman_thm1", "resolution": 12, "n_t": 5}, out_dir=tmp_path)
    header, rows = read_csv(outcome.directory / "carleman_estimate.csv")
    assert len(rows) == 8
    assert header[:2] == ["s", "offset"]
    assert header[-3:] == ["lhs_total", "rhs_total", "rho"]
    assert {"lhs_time_derivative", "lhs_laplacian", "lhs_gradient", "lhs_zero_order"} <= set(header)
    assert outcome.summary["checks"]["finite_ratios"]


def test_golden_summary(tmp_path):
    golden = load_golden(GOLDEN / "obstruction_demo.json")
    outcome = carlemanlab.run(SMALL_RUN, out_dir=tmp_path)
    assert compare_golden(outcome.summary, golden) == []
    stored = json.loads((outcome.directory / "summary.json").read_text())
    assert compare_golden(stored, golden) == []

    changed = dict(golden, status=2, recovered_rot_F_norm=1e-3, tier="D")
    assert len(compare_golden(outcome.summary, changed)) == 3
    assert compare_golden({"rows": [1.0]}, {"rows": [1.0, 2.0]}) == ["rows: expected a list of 2 items"]
    assert compare_golden({}, {"checks": {}}) == ["checks: missing"]
    assert compare_golden({"x": 1.0 + 1e-3}, {"x": 1.0}, rtol=1e-2) == []

    path = tmp_path / "broken.json"
    path.write_text("[]")
    with pytest.raises(carlemanlab.ConfigError):
        load_golden(path)


def test_numerical_errors_are_reported():
    assert issubclass(ValueError, RUN_ERRORS)
    assert issubclass(np.linalg.LinAlgError, RUN_ERRORS)
    assert issubclass(carlemanlab.SolverError, RUN_ERRORS)


def test_cli_golden_and_missing_files(tmp_path, capsys):
    run_args = ["run", "obstruction_demo", "--set", "resolution=12", "--set", "n_t=5", "--out", str(tmp_path)]
    assert main(run_args + ["--golden", str(GOLDEN / "obstruction_demo.json")]) == 0
    assert json.loads(capsys.readouterr().out)["golden_mismatches"] == 0

    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"status": 2}))
    assert main(run_args + ["--golden", str(wrong)]) == 1
    assert "golden mismatch: status" in capsys.readouterr().err

    assert main(run_args + ["--golden", str(tmp_path / "absent.json")]) == 1
    assert "cannot read golden summary" in capsys.readouterr().err

    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert "cannot read configuration" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
