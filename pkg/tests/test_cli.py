import yaml

from oecsim.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from oecsim.config import ScenarioConfig


def _cfg(tmp_path, **changes):
    p = tmp_path / "scenario.yaml"
    p.write_text(ScenarioConfig(runs=2, horizon_s=5.0).replace(**changes).dump())
    return p


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_cfg(tmp_path)), "--out", str(out), "--seed", "9", "--runs", "3"]) == EXIT_OK
    assert len((out / "runs.csv").read_text().splitlines()) == 4
    assert "master_seed: 9" in (out / "meta.txt").read_text()
    assert "oec: 3 runs" in capsys.readouterr().out


def test_compare_writes_table(tmp_path):
    out = tmp_path / "cmp"
    args = ["compare", "--config", str(_cfg(tmp_path)), "--deployments", "cloud,fog", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert (out / "comparison.csv").read_text().startswith("metric,cloud,fog")


def test_compare_unknown_kind(tmp_path):
    args = ["compare", "--config", str(_cfg(tmp_path)), "--deployments", "cloud,moon", "--out", str(tmp_path)]
    assert main(args) == EXIT_INVALID


def test_validate_ok_and_invalid(tmp_path, capsys):
    assert main(["validate", "--config", str(_cfg(tmp_path))]) == EXIT_OK
    assert "deployment: oec" in capsys.readouterr().out
    bad = tmp_path / "bad.yaml"
    bad.write_text("zones: 2\nzonez: 3\n")
    assert main(["validate", "--config", str(bad)]) == EXIT_INVALID
    assert "zonez" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_IO
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", "--config", str(_cfg(tmp_path)), "--out", str(blocker / "x")]) == EXIT_IO


def test_bad_override_is_validation_error(tmp_path):
    assert main(["run", "--config", str(_cfg(tmp_path)), "--runs", "0", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_missing_option_is_validation_error(tmp_path):
    assert main(["run", "--config", str(_cfg(tmp_path))]) == EXIT_INVALID


def test_calibrate_prints_and_updates_config(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    assert main(["calibrate", "--n", "20", "--reps", "5", "--config", str(cfg)]) == EXIT_OK
    assert "factorization_time_ms" in capsys.readouterr().out
    service = yaml.safe_load(cfg.read_text())["service"]
    assert service["solve_time_ms"] > 0 and service["factorization_time_ms"] > 0
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK


def test_calibrate_rejects_bad_reps():
    assert main(["calibrate", "--n", "10", "--reps", "2"]) == EXIT_INVALID


def test_calibrate_from_matrix_file(tmp_path):
    m = tmp_path / "m.txt"
    m.write_text("2 2\n1 1 4.0\n2 2 5.0\n")
    assert main(["calibrate", "--reps", "5", "--matrix", str(m)]) == EXIT_OK
    assert main(["calibrate", "--reps", "5", "--matrix", str(tmp_path / "none")]) == EXIT_IO
