from __future__ import annotations

import argparse
import csv
import json
import logging
from pathlib import Path

import numpy as np
import pytest

from neural_tomography._cli import (
    ReportConsole,
    build_parser,
    channel_arg,
    configure_logging,
    fractions_arg,
    main,
    split_arg,
)
from neural_tomography._io import save_povm
from tests.helpers import get_cmd_output

TINY_TRAINING = ["--split", "20,5,5", "--hidden", "8,4", "--max-epochs", "3", "--batch-size", "5"]


@pytest.fixture()
def povm2(sic2, tmp_path):
    path = tmp_path / "povm2.json"
    save_povm(sic2, path)
    return path


@pytest.fixture()
def povm6(sic6, tmp_path):
    path = tmp_path / "povm6.json"
    save_povm(sic6, path)
    return path


@pytest.fixture()
def dataset2(povm2, tmp_path):
    path = tmp_path / "dataset.jsonl"
    cmd = ["gen-dataset", "--dim", "2", "--states", "30", "--shots", "100", "--spam", "clean"]
    assert main([*cmd, "--povm", str(povm2), "--out", str(path)]) == 0
    return path


# Argument types
# ==============
def test_split_arg():
    assert split_arg("7000,1500,2000") == (7000, 1500, 2000)
    with pytest.raises(argparse.ArgumentTypeError):
        split_arg("1,2")
    with pytest.raises(argparse.ArgumentTypeError):
        split_arg("a,b,c")


def test_fractions_arg():
    assert fractions_arg("0.2:0.6:0.2") == [0.2, 0.4, 0.6]
    assert fractions_arg("0.1,0.5") == [0.1, 0.5]
    with pytest.raises(argparse.ArgumentTypeError, match="invalid fractions"):
        fractions_arg("0.5:0.1:0.1")


def test_channel_arg():
    assert np.allclose(channel_arg("identity").operators[0], np.eye(6))
    gouy = channel_arg("gouy:0.5,1.0").operators[0]
    assert np.allclose(np.angle(np.diag(gouy)), [0, 0.5, 0.5, 1, 1, 1])
    for text in ("identity:1", "gouy:0.5", "laguerre"):
        with pytest.raises(argparse.ArgumentTypeError, match="expected 'identity'"):
            channel_arg(text)


# Commands
# ========
def test_build_povm(tmp_path, capsys):
    path = tmp_path / "sic.json"
    assert main(["build-povm", "--dim", "2", "--out", str(path)]) == 0
    obj = json.loads(path.read_text())
    assert (obj["dim"], obj["kind"]) == (2, "sic")
    assert "wrote" in capsys.readouterr().out
    assert main(["build-povm", "--dim", "3", "--kind", "basis", "--out", str(path)]) == 0
    assert json.loads(path.read_text())["labels"] == ["e0", "e1", "e2"]


def test_gen_dataset(dataset2):
    lines = dataset2.read_text().splitlines()
    assert len(lines) == 30
    first = json.loads(lines[0])
    assert first["shots"] == 100
    assert sum(first["counts"]) == 100


def test_train_reconstruct_evaluate(dataset2, povm2, tmp_path, capsys):
    weights = tmp_path / "weights.json"
    history = tmp_path / "history.csv"
    cmd = ["train", "--data", str(dataset2), "--povm", str(povm2), "--out", str(weights)]
    assert main([*cmd, "--history", str(history), *TINY_TRAINING]) == 0
    echo = json.loads(weights.read_text())["train_config_echo"]
    assert echo["data"] == str(dataset2)
    assert echo["hidden"] == [8, 4]
    assert len(history.read_text().splitlines()) >= 2

    estimates = tmp_path / "estimates.jsonl"
    cmd = ["reconstruct", "--data", str(dataset2), "--povm", str(povm2), "--out", str(estimates)]
    assert main(cmd) == 0
    assert main([*cmd, "--denoise", str(weights), "--append", "--workers", "2"]) == 0
    lines = [json.loads(line) for line in estimates.read_text().splitlines()]
    assert len(lines) == 60
    assert [line["arm"] for line in lines[::30]] == ["raw", "nn"]
    assert all(0 <= line["fidelity"] <= 1 + 1e-9 for line in lines)

    report = tmp_path / "report.json"
    hist = tmp_path / "hist.csv"
    cmd = ["evaluate", "--estimates", str(estimates), "--truth", str(dataset2)]
    assert main([*cmd, "--out", str(report), "--hist", str(hist)]) == 0
    obj = json.loads(report.read_text())
    assert obj["n_records"] == 30
    assert set(obj["aggregates"]) == {"fidelity_raw", "purity_raw", "fidelity_nn", "purity_nn"}
    out = capsys.readouterr().out
    assert "Evaluation (30 records)" in out
    assert "fidelity_nn" in out


def test_reconstruct_pure_arm(dataset2, povm2, tmp_path):
    estimates = tmp_path / "estimates.jsonl"
    cmd = ["reconstruct", "--data", str(dataset2), "--povm", str(povm2), "--out", str(estimates)]
    assert main([*cmd, "--pure", "--arm", "mine", "--max-iterations", "200"]) == 0
    line = json.loads(estimates.read_text().splitlines()[0])
    assert (line["arm"], line["pure"]) == ("mine", True)
    assert line["purity"] == pytest.approx(1)


def test_train_checks_the_povm(dataset2, povm6, tmp_path):
    cmd = ["train", "--data", str(dataset2), "--povm", str(povm6), "--out", str(tmp_path / "w.json")]
    assert main(cmd) == 1


@pytest.mark.parametrize(
    ("channel", "phi1"), (("identity", 0.0), ("gouy:0.92,1.97", 0.92)), ids=("identity", "gouy")
)
def test_process_tomo(povm6, tmp_path, capsys, channel, phi1):
    path = tmp_path / "chi.json"
    assert main(["process-tomo", "--povm", str(povm6), "--channel", channel, "--out", str(path)]) == 0
    obj = json.loads(path.read_text())
    assert obj["gouy"]["phi1"] == pytest.approx(phi1, abs=1e-3)
    assert obj["weights"][0] == pytest.approx(1, abs=1e-6)
    assert "Process tomography" in capsys.readouterr().out


def test_crosstalk(povm6, tmp_path, capsys):
    path = tmp_path / "crosstalk.csv"
    assert main(["crosstalk", "--povm", str(povm6), "--corrected", "--out", str(path)]) == 0
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 37
    assert rows[0][:2] == ["outcome", "probe0"]
    assert "similarity to the ideal crosstalk matrix: 1.000000" in capsys.readouterr().out


def test_learning_curve(dataset2, tmp_path, capsys):
    path = tmp_path / "curve.csv"
    cmd = ["learning-curve", "--data", str(dataset2), "--fractions", "0.5,1.0", "--repeats", "1"]
    cmd += ["--epochs", "1", "--test-size", "10", "--batch-size", "5", "--hidden", "4,4"]
    assert main([*cmd, "--out", str(path)]) == 0
    assert len(path.read_text().splitlines()) == 3
    assert "Learning curve" in capsys.readouterr().out


def test_run(povm2, tmp_path, capsys):
    out_dir = tmp_path / "run"
    cmd = ["run", "--dim", "2", "--states", "30", "--shots", "0", "--spam", "clean"]
    cmd += ["--povm", str(povm2), "--out-dir", str(out_dir), *TINY_TRAINING]
    assert main(cmd) == 0
    assert (out_dir / "report.json").exists()
    assert (out_dir / "estimates.jsonl").exists()
    assert "fidelity_pure_nn" in capsys.readouterr().out


# Failures
# ========
def test_help_exits_cleanly():
    code, out = get_cmd_output(["--help"])
    assert code == 0
    assert "Usage:" in out
    assert "gen-dataset" in out


@pytest.mark.parametrize(
    "cmd",
    (
        ["train"],
        ["process-tomo", "--channel", "laguerre", "--out", "chi.json"],
        ["gen-dataset", "--spam", "unknown", "--out", "d.jsonl"],
        ["frobnicate"],
    ),
    ids=("missing", "channel", "spam", "command"),
)
def test_usage_errors_exit_with_one(cmd):
    code, _ = get_cmd_output(cmd)
    assert code == 1


def test_missing_input_file(tmp_path, capsys):
    cmd = ["train", "--data", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "w.json")]
    assert main(cmd) == 3
    assert "No such file" in capsys.readouterr().err


def test_malformed_dataset(tmp_path):
    path = tmp_path / "dataset.jsonl"
    path.write_text("{]\n")
    assert main(["train", "--data", str(path), "--out", str(tmp_path / "w.json")]) == 3


def test_sic_search_failure(tmp_path):
    cmd = ["build-povm", "--dim", "3", "--restarts", "1", "--tolerance", "1e-300"]
    assert main([*cmd, "--out", str(tmp_path / "sic.json")]) == 2


def test_pipeline_stage_failure(povm2, tmp_path):
    out_dir = tmp_path / "run"
    cmd = ["run", "--states", "30", "--povm", str(povm2), "--out-dir", str(out_dir), *TINY_TRAINING]
    assert main(cmd) == 1
    assert not out_dir.exists()


# Logging and output
# ==================
@pytest.mark.parametrize(
    ("verbose", "quiet", "level"),
    ((0, False, logging.WARNING), (1, False, logging.INFO), (3, False, logging.DEBUG), (2, True, logging.ERROR)),
    ids=("default", "verbose", "debug", "quiet"),
)
def test_configure_logging(verbose, quiet, level):
    logger = logging.getLogger("neural_tomography")
    configure_logging(verbose, quiet)
    configure_logging(verbose, quiet)
    assert logger.level == level
    assert sum(type(h).__name__ == "RichHandler" for h in logger.handlers) == 1


def test_report_console_styles_are_customisable(capsys):
    console = ReportConsole()
    assert set(console.styles) == {"nt.title", "nt.metric", "nt.value", "nt.path"}
    console.wrote(Path("out[1].json"))
    assert "out[1].json" in capsys.readouterr().out


def test_parser_uses_rich_help():
    parser = build_parser()
    assert parser.formatter_class.__name__ == "ArgumentDefaultsRichHelpFormatter"
