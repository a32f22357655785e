import json
import os
from pathlib import Path

import strange_reservoir
from strange_reservoir.__version__ import __version__
from strange_reservoir.storage.persistence import load
from strange_reservoir.utils.output import dump_to_file
from tests.const import MINIMAL_CONFIG
from tests.reader import get_config_path


def minimal_config(**changes):
    data = json.loads(MINIMAL_CONFIG)
    data.update(changes)
    return json.dumps(data, indent=2)


def passing_config(name="minimal"):
    return minimal_config(name=name, thresholds={"explained_ratio": 0.0})


PASSING_CONFIG = passing_config()
FAILING_CONFIG = minimal_config(thresholds={"explained_ratio": 1.0})


def test_reconstruct_config(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["reconstruct", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
        )
        assert result.exit_code == 0
        assert "passed minimal" in result.stderr
        assert "All done!" in result.stderr
        assert "1 run passed." in result.stderr
    finally:
        os.unlink(tmp_file)
    assert (tmp_path / "minimal" / "projected.csv").is_file()
    assert (tmp_path / "minimal" / "reservoir.srj").is_file()


def test_missed_threshold(runner, tmp_path):
    tmp_file = Path(dump_to_file(FAILING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["reconstruct", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
        )
        assert result.exit_code == 2
        assert "failed minimal: explained_ratio" in result.stderr
        assert "1 run missed a threshold." in result.stderr
        assert "Oh no!" in result.stderr
    finally:
        os.unlink(tmp_file)


def test_verbose_lists_metrics(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            [
                "--verbose",
                "reconstruct",
                "-c",
                str(tmp_file),
                "--out-dir",
                str(tmp_path),
            ],
        )
        assert result.exit_code == 0
        assert "post_washout_samples = 300" in result.stderr
        assert "explained_ratio = " in result.stderr
    finally:
        os.unlink(tmp_file)


def test_quiet(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            [
                "-q",
                "reconstruct",
                "-c",
                str(tmp_file),
                "--out-dir",
                str(tmp_path),
            ],
        )
        assert result.exit_code == 0
        assert "All done!" not in result.stderr
        assert "passed minimal" not in result.stderr
    finally:
        os.unlink(tmp_file)


def test_seed_from_environment(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["reconstruct", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
            env={"STRANGE_RESERVOIR_SEED": "5"},
        )
        assert result.exit_code == 0
    finally:
        os.unlink(tmp_file)
    assert load(tmp_path / "minimal" / "reservoir.srj").seed == 5


def test_seed_option_wins_over_the_config(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            [
                "reconstruct",
                "-c",
                str(tmp_file),
                "--seed",
                "8",
                "--out-dir",
                str(tmp_path),
            ],
        )
        assert result.exit_code == 0
    finally:
        os.unlink(tmp_file)
    assert load(tmp_path / "minimal" / "reservoir.srj").seed == 8


def test_config_directory(runner, tmp_path):
    configs = tmp_path / "configs"
    (configs / "build").mkdir(parents=True)
    (configs / "first.json").write_text(passing_config("first"))
    nested = configs / "more"
    nested.mkdir()
    (nested / "second.json").write_text(passing_config("second"))
    (nested / "notes.txt").write_text("not a config")
    (configs / "build" / "broken.json").write_text("{")
    result = runner.invoke(
        strange_reservoir.main,
        [
            "reconstruct",
            "-c",
            str(configs),
            "--out-dir",
            str(tmp_path / "out"),
        ],
    )
    assert result.exit_code == 0
    assert "2 runs passed." in result.stderr
    assert (tmp_path / "out" / "first" / "summary.json").is_file()
    assert (tmp_path / "out" / "second" / "summary.json").is_file()


def test_invalid_config(runner, tmp_path):
    path = get_config_path("unknown_key", valid=False)
    result = runner.invoke(
        strange_reservoir.main,
        ["reconstruct", "-c", str(path), "--out-dir", str(tmp_path)],
    )
    assert result.exit_code == 1
    assert "error: cannot run" in result.stderr
    assert "sigma" in result.stderr
    assert "1 run failed with errors." in result.stderr


def test_non_numeric_initial_condition(runner, tmp_path):
    tmp_file = Path(dump_to_file(minimal_config(initial_condition=["a", 5])))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["reconstruct", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
        )
    finally:
        os.unlink(tmp_file)
    assert result.exit_code == 1
    assert "invalid initial condition" in result.stderr
    assert "1 run failed with errors." in result.stderr


def test_kind_mismatch(runner, tmp_path):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["forecast", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
        )
        assert result.exit_code == 1
        assert "cannot run as forecast" in result.stderr
    finally:
        os.unlink(tmp_file)
    assert not (tmp_path / "minimal").exists()


def test_preset_choices(runner):
    tmp_file = Path(dump_to_file(PASSING_CONFIG))
    try:
        for preset in ("desk", "paper"):
            result = runner.invoke(
                strange_reservoir.main,
                ["forecast", "-c", str(tmp_file), "--preset", preset],
            )
            # accepted, then refused because the config reconstructs
            assert result.exit_code == 1
            assert "cannot run as forecast" in result.stderr
        result = runner.invoke(
            strange_reservoir.main,
            ["forecast", "-c", str(tmp_file), "--preset", "full"],
        )
        assert result.exit_code == 2
        assert "Invalid value for '--preset'" in result.stderr
    finally:
        os.unlink(tmp_file)


def test_diagnose(runner, tmp_path):
    config = minimal_config(reservoir={"recipe": "takens_shift", "n": 5})
    tmp_file = Path(dump_to_file(config))
    try:
        result = runner.invoke(
            strange_reservoir.main,
            ["diagnose", "-c", str(tmp_file), "--out-dir", str(tmp_path)],
        )
        assert result.exit_code in (0, 2)
    finally:
        os.unlink(tmp_file)
    lines = (tmp_path / "minimal" / "diagnostics.txt").read_text()
    assert len(lines.splitlines()) == 5
    assert "PASS reachability" in lines
    assert "PASS echo_state_property" in lines


def test_vdp_sweep_config(runner, tmp_path):
    result = runner.invoke(
        strange_reservoir.main,
        [
            "vdp-sweep",
            "-c",
            str(get_config_path("vdp_small")),
            "--out-dir",
            str(tmp_path),
        ],
    )
    assert result.exit_code in (0, 2)
    assert (tmp_path / "vdp_small" / "loops.csv").is_file()


def test_missing_config_file(runner):
    result = runner.invoke(
        strange_reservoir.main, ["reconstruct", "-c", "AAAAAAAAAAAA.json"]
    )
    assert result.exit_code == 2
    assert "does not exist" in result.stderr


def test_version(runner):
    result = runner.invoke(strange_reservoir.main, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout
