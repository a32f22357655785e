import os
from pathlib import Path

import click
import pytest

from strange_reservoir.utils.files import gen_config_files_in_dir
from strange_reservoir.utils.output import dump_to_file, metric_line
from strange_reservoir.utils.report import Outcome, Report


def test_gen_config_files_in_dir(tmp_path):
    valid_files = []
    for i, dir in enumerate(["build"] + list("abc")):
        fake_dir = tmp_path / dir
        fake_dir.mkdir()
        for j, ext in enumerate([".txt", ".json"]):
            fake_file = fake_dir / ("config" + ext)
            fake_file.write_text("{}")
            if i * j:
                valid_files.append(fake_file)
    found_files = list(gen_config_files_in_dir(tmp_path))
    assert found_files == valid_files


def test_run_outputs_are_not_configs(tmp_path):
    config = tmp_path / "rossler.json"
    config.write_text("{}")
    run_dir = tmp_path / "out" / "rossler"
    run_dir.mkdir(parents=True)
    (run_dir / "summary.json").write_text("{}")
    (run_dir / "extra.json").write_text("{}")
    hidden = tmp_path / ".cache"
    hidden.mkdir()
    (hidden / "old.json").write_text("{}")
    (tmp_path / "diagnostics.json").write_text("{}")
    assert list(gen_config_files_in_dir(tmp_path)) == [config]


def test_empty_report():
    report = Report()
    assert report.return_code == 0
    assert str(report) == "No runs."


@pytest.mark.parametrize(
    "passed,failed,errors,code",
    [
        (1, 0, 0, 0),
        (1, 1, 0, 2),
        (0, 1, 1, 1),
        (3, 0, 1, 1),
    ],
)
def test_report_return_codes(passed, failed, errors, code):
    report = Report(quiet=True)
    for i in range(passed):
        report.done(f"ok{i}", True)
    for i in range(failed):
        report.done(f"bad{i}", False, ["nrmse"])
    for i in range(errors):
        report.failed(f"err{i}", "boom")
    assert report.return_code == code
    assert report.outcome is Outcome(code)


def test_report_rendering():
    report = Report(quiet=True)
    report.done("a", True)
    report.done("b", True)
    report.done("c", False, ["lobe_ratio"])
    report.failed("d", "boom")
    assert click.unstyle(str(report)) == (
        "2 runs passed, 1 run missed a threshold, 1 run failed with errors."
    )


def test_metric_line():
    assert click.unstyle(metric_line("nrmse", 0.0123456789, True)) == (
        "  nrmse = 0.0123457"
    )
    assert metric_line("gap", 3.0, None) == "  gap = 3"


def test_dump_to_file():
    tmp_file = Path(dump_to_file('{"a": 1}', "[2]"))
    try:
        assert tmp_file.suffix == ".json"
        assert tmp_file.read_text(encoding="utf8") == '{"a": 1}\n[2]\n'
    finally:
        os.unlink(tmp_file)
