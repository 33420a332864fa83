import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mcmult.cli import RunConfig, main, parse_config
from mcmult.config import Variant
from mcmult.errors import ConfigError


def write(path, text):
    path.write_text(text)
    return path


# -- configuration ------------------------------------------------------------------


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "c.txt", ""))
    assert (cfg.dim, cfg.blocks, cfg.layers, cfg.variant, cfg.epochs) == (8, 4, 3, "MCMulT", 100)
    assert cfg == RunConfig()


def test_precedence_flags_over_file(tmp_path):
    path = write(tmp_path / "c.txt", "# comment\nvariant = Dense\nblocks = 2\n\nlr = 0.01\n")
    cfg = parse_config(path)
    assert (cfg.variant, cfg.blocks, cfg.lr) == ("Dense", 2, 0.01)
    cfg = parse_config(path, {"variant": "mult"})
    assert cfg.model_config().variant is Variant.MULT and cfg.blocks == 2


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError, match="blokcs"):
        parse_config(write(tmp_path / "c.txt", "blokcs = 3\n"))


@pytest.mark.parametrize("text", ["blocks = three\n", "dim = 7\n", "heads = 3\n", "variant = sparse\n",
                                  "just a line\n", "split_ratios = 0.5,0.5\n"])
def test_bad_values_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path / "c.txt", text))


def test_config_echo_round_trips(tmp_path):
    cfg = parse_config(None, {"blocks": "2", "branches": "V->L,A->L", "unimodal": ""})
    again = parse_config(write(tmp_path / "echo.txt", cfg.dump()))
    assert again == cfg


# -- exit codes -----------------------------------------------------------------------


def test_exit_code_for_unknown_key(tmp_path, capsys):
    assert main(["count-params", "--config", str(write(tmp_path / "c.txt", "blokcs = 1\n"))]) == 2
    assert "blokcs" in capsys.readouterr().err


def test_exit_code_for_missing_config_and_data(tmp_path):
    assert main(["count-params", "--config", str(tmp_path / "nope.txt")]) == 3
    assert main(["train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "o")]) == 3
    assert main(["train", "--out", str(tmp_path / "o")]) == 2
    assert main(["count-params", "--set", "novalue"]) == 2


def test_count_params_order(capsys):
    assert main(["count-params"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "variant,params"
    names = [line.split(",")[0] for line in lines[1:]]
    counts = [int(line.split(",")[1]) for line in lines[1:]]
    assert names == ["Dense", "LocalDense", "MCMulT", "MulT", "Global"]
    assert counts == sorted(counts, reverse=True) and len(set(counts)) == 5


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mcmult", "count-params", "--blocks", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("variant,params")


# -- end-to-end -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, model = root / "data", root / "model"
    common = ["--dim", "4", "--blocks", "1", "--layers", "1", "--seed", "0"]
    assert main(["gen-data", "--data", str(data), "--out", str(root / "gen"), "--samples", "500"]) == 0
    assert main(["train", "--data", str(data), "--out", str(model), "--epochs", "0", *common]) == 0
    return root, data, model, common


def test_gen_data_and_train_artifacts(workspace):
    root, data, model, _ = workspace
    assert json.loads((data / "manifest.json").read_text())["samples"] == 500
    for name in ("params.npz", "model_config.txt", "history.csv", "metrics.csv", "config.txt"):
        assert (model / name).is_file()
    assert "epochs = 0" in (model / "config.txt").read_text()


def test_eval_untrained_is_chance(workspace, capsys):
    root, data, model, _ = workspace
    assert main(["eval", "--data", str(data), "--model", str(model), "--out", str(root / "ev")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "acc7,acc2,f1,mae,corr"
    acc2 = float(out[1].split(",")[1])
    assert abs(acc2 - 0.5) <= 0.1
    assert out[2].startswith("acc7=")


def test_train_writes_history(workspace, tmp_path):
    root, data, _, common = workspace
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--epochs", "2", *common]) == 0
    with open(tmp_path / "history.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_export_attn_command(workspace, tmp_path):
    root, data, model, _ = workspace
    args = ["export-attn", "--data", str(data), "--model", str(model), "--out", str(tmp_path),
            "--branch", "V->L", "--block-index", "1", "--head-index", "1"]
    assert main(args) == 0
    (csv_path,) = tmp_path.glob("attn_*.csv")
    m = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    assert np.allclose(m.sum(axis=1), 1.0, atol=1e-9)
    assert main([*args[:-4], "--block-index", "5", "--head-index", "0"]) == 2
    assert main([*args[:-6], "--branch", "V->V"]) == 2


def test_ablate_command(workspace, tmp_path):
    root, data, _, common = workspace
    args = ["ablate", "--data", str(data), "--out", str(tmp_path), "--epochs", "1", "--axis", "variants",
            "--set", "batch_size=128", *common]
    assert main(args) == 0
    with open(tmp_path / "ablation_variants.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["arm"] for r in rows] == ["MCMulT", "Dense", "LocalDense", "Global", "MulT"]


def test_grad_check_command_passes(capsys):
    assert main(["grad-check", "--dim", "4", "--heads", "2", "--blocks", "2", "--layers", "1"]) == 0
    assert "max relative error" in capsys.readouterr().out
