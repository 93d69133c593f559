import csv
import json
import time
from pathlib import Path

import numpy as np
import pytest

from h2oformer import cli
from h2oformer.numerics import load_checkpoint, ops
from h2oformer.numerics.tensor import active_tape

ROOT = Path(__file__).resolve().parents[1]
MICRO = str(ROOT / "configs" / "micro.json")


def run(argv, capsys=None):
    code = cli.main(argv)
    if capsys is None:
        return code
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained") / "run"
    assert cli.main(["train", "--config", MICRO, "--out", str(out), "--override", "train.epochs=2"]) == 0
    return out


# -- gen-data --------------------------------------------------------------------------

def test_gen_data_summary_and_determinism(tmp_path, capsys):
    code, out, _ = run(["gen-data", "--config", MICRO, "--seed", "7", "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and out.strip() == "64 sequences, 32/32, oracle 100%"
    run(["gen-data", "--config", MICRO, "--seed", "7", "--out", str(tmp_path / "b")], capsys)
    a = (tmp_path / "a" / "dataset.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "dataset.jsonl").read_bytes()
    run(["gen-data", "--config", MICRO, "--seed", "8", "--out", str(tmp_path / "c")], capsys)
    assert a != (tmp_path / "c" / "dataset.jsonl").read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["oracle_agreement"] == 1.0
    assert sorted(set(summary["split"].values())) == ["test", "train"]


def test_gen_data_rejects_bad_spec(tmp_path, capsys):
    code, _, err = run(["gen-data", "--config", MICRO, "--out", str(tmp_path / "x"),
                        "--override", "synth.amplitude=[0.01, 0.02]"], capsys)
    assert code == 1 and "3 * noise_std" in err
    assert not (tmp_path / "x").exists()


def test_unknown_override_section(tmp_path, capsys):
    code, _, err = run(["train", "--config", MICRO, "--out", str(tmp_path / "x"), "--override", "optim.lr=1"],
                       capsys)
    assert code == 1 and "optim" in err


# -- train / eval -------------------------------------------------------------------------

def test_train_smoke(tmp_path, capsys):
    t0 = time.perf_counter()
    code, out, _ = run(["train", "--config", MICRO, "--out", str(tmp_path / "r")], capsys)
    assert code == 0 and time.perf_counter() - t0 < 60
    assert out.startswith("train accuracy")
    r = tmp_path / "r"
    assert {"config.json", "run.json", "metrics.csv", "final.npz", "report.json",
            "checkpoint_one_stage_epoch4.npz"} <= {p.name for p in r.iterdir()}
    rows = read_csv(r / "metrics.csv")
    assert [int(row["epoch"]) for row in rows] == [1, 2, 3, 4, 5]
    report = json.loads((r / "report.json").read_text())
    assert report["status"] == "ok" and len(report["first_step_losses"]) == 3


def test_override_recorded_and_replay_is_identical(tmp_path, trained, capsys):
    snap = json.loads((trained / "config.json").read_text())
    assert snap["train"]["epochs"] == 2
    code, _, _ = run(["train", "--config", str(trained / "config.json"), "--out", str(tmp_path / "replay")], capsys)
    assert code == 0
    a, ha = load_checkpoint(trained / "final.npz")
    b, hb = load_checkpoint(tmp_path / "replay" / "final.npz")
    assert ha == hb
    for k in a:
        assert a[k].tobytes() == b[k].tobytes(), k
    ra = json.loads((trained / "report.json").read_text())
    rb = json.loads((tmp_path / "replay" / "report.json").read_text())
    assert ra["first_step_losses"] == rb["first_step_losses"]


def test_train_from_jsonl(tmp_path, capsys):
    run(["gen-data", "--config", MICRO, "--out", str(tmp_path / "d")], capsys)
    code, _, _ = run(["train", "--config", MICRO, "--data", str(tmp_path / "d" / "dataset.jsonl"),
                      "--override", "train.epochs=1", "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    assert json.loads((tmp_path / "r" / "run.json").read_text())["data"].endswith("dataset.jsonl")


def test_missing_data_file(tmp_path, capsys):
    code, _, err = run(["train", "--config", MICRO, "--data", str(tmp_path / "nope.jsonl"),
                        "--out", str(tmp_path / "r")], capsys)
    assert code == 1 and "nope.jsonl" in err


def test_non_empty_out_refused(tmp_path, capsys):
    (tmp_path / "r").mkdir()
    (tmp_path / "r" / "keep.txt").write_text("x")
    code, _, err = run(["train", "--config", MICRO, "--out", str(tmp_path / "r")], capsys)
    assert code == 1 and "not empty" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_exits_two(tmp_path, capsys):
    code, _, err = run(["train", "--config", MICRO, "--out", str(tmp_path / "r"),
                        "--override", "train.lr=1e6", "--override", "train.momentum=0"], capsys)
    assert code == 2 and "non-finite" in err
    assert str(tmp_path / "r" / "last_good.npz") in err
    assert (tmp_path / "r" / "last_good.npz").is_file()
    assert json.loads((tmp_path / "r" / "report.json").read_text())["status"] == "aborted"


def test_eval_checkpoint(tmp_path, trained, capsys):
    code, out, _ = run(["eval", "--config", MICRO, "--checkpoint", str(trained / "final.npz"),
                        "--out", str(tmp_path / "e")], capsys)
    assert code == 0 and "test: accuracy" in out
    report = json.loads((tmp_path / "e" / "report.json").read_text())
    assert {"train", "test"} <= set(report)


def test_eval_requires_checkpoint(tmp_path, capsys):
    code, _, err = run(["eval", "--config", MICRO, "--out", str(tmp_path / "e")], capsys)
    assert code == 1 and "--checkpoint" in err


# -- gradcheck -------------------------------------------------------------------------------

def test_gradcheck_micro_passes(tmp_path, capsys):
    code, out, _ = run(["gradcheck", "--config", MICRO, "--out", str(tmp_path / "g")], capsys)
    assert code == 0 and "gradcheck passed" in out
    rows = read_csv(tmp_path / "g" / "gradcheck.csv")
    assert all(float(r["worst_relative_error"]) <= 1e-4 for r in rows)


def test_gradcheck_baseline_variant(tmp_path, capsys):
    code, _, _ = run(["gradcheck", "--config", MICRO, "--variant", "BL", "--samples", "8",
                      "--out", str(tmp_path / "g")], capsys)
    assert code == 0
    names = {r["parameter"] for r in read_csv(tmp_path / "g" / "gradcheck.csv")}
    assert not any(n.startswith("decoder.") or n.endswith("W_EK") for n in names)


def test_gradcheck_detects_broken_backward(tmp_path, capsys, monkeypatch):
    real = ops.conv1d_dilated

    def broken(x, kernel, bias=None, dilation=1):
        out = real(x, kernel, bias, dilation)
        tape = active_tape()
        if tape is not None and kernel.shape[0] == 5:
            node = tape.nodes[-1]
            back = node[2]
            tape.nodes[-1] = (node[0], node[1], lambda g: (lambda r: (r[0], 1.5 * r[1]) + r[2:])(back(g)))
        return out

    monkeypatch.setattr(ops, "conv1d_dilated", broken)
    code, _, err = run(["gradcheck", "--config", MICRO, "--samples", "4", "--out", str(tmp_path / "g")], capsys)
    assert code == 2
    failing = json.loads((tmp_path / "g" / "report.json").read_text())["failures"]
    assert failing and all(name.endswith("tconv5.kernel") for name in failing)
    assert "encoder.block1.tconv5.kernel" in err


# -- ablate / inspect --------------------------------------------------------------------------

def test_ablate_table(tmp_path, capsys):
    code, out, _ = run(["ablate", "--config", MICRO, "--override", "train.epochs=1", "--out", str(tmp_path / "a")],
                       capsys)
    assert code == 0
    lines = (tmp_path / "a" / "ablation.md").read_text().splitlines()
    header = [c.strip() for c in lines[0].strip("|").split("|")]
    assert header[1:5] == ["HG", "EH", "DB", "One-stage"]
    body = [line for line in lines[2:] if line.startswith("|")]
    assert [row.split("|")[1].strip() for row in body] == list(cli.VARIANTS)
    assert "identical across rows" in lines[-1]
    assert len(read_csv(tmp_path / "a" / "ablation.csv")) == 7
    assert (tmp_path / "a" / "BL_HG_EH_DB" / "metrics.csv").is_file()


def test_ablate_subset_and_unknown(tmp_path, capsys):
    code, _, _ = run(["ablate", "--config", MICRO, "--variant", "BL,Full", "--override", "train.epochs=1",
                      "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and len(read_csv(tmp_path / "a" / "ablation.csv")) == 2
    code, _, err = run(["ablate", "--config", MICRO, "--variant", "BL,Nope", "--out", str(tmp_path / "b")], capsys)
    assert code == 1 and "Nope" in err


def test_inspect_outputs(tmp_path, trained, capsys):
    code, out, _ = run(["inspect", "--config", MICRO, "--checkpoint", str(trained / "final.npz"),
                        "--out", str(tmp_path / "i")], capsys)
    assert code == 0
    i = tmp_path / "i"
    assert {"attention_encoder1.csv", "attention_encoder2.csv", "hyperedges_encoder1.csv",
            "hyperedges_encoder2.csv"} <= {p.name for p in i.iterdir()}
    rows = read_csv(i / "attention_encoder1.csv")
    assert {r["part"] for r in rows} == {"a", "b", "c", "d", "combined"}
    heads, v, frames = 2, 6, 3
    assert len(rows) == 5 * frames * heads * v * v
    parts = {p: np.array([float(r["value"]) for r in rows if r["part"] == p]) for p in "abcd"}
    combined = np.array([float(r["value"]) for r in rows if r["part"] == "combined"])
    np.testing.assert_allclose(combined, sum(parts.values()), atol=1e-12)
    assert len(read_csv(i / "hyperedges_encoder2.csv")) == frames * v * 12


def test_inspect_bad_frame(tmp_path, trained, capsys):
    code, _, err = run(["inspect", "--config", MICRO, "--checkpoint", str(trained / "final.npz"),
                        "--frames", "0,99", "--out", str(tmp_path / "i")], capsys)
    assert code == 1 and "99" in err


def test_selected_blocks():
    assert cli.selected_blocks(1) == [0]
    assert cli.selected_blocks(6) == [0, 3, 5]


# -- run directories ------------------------------------------------------------------------

def test_outputs_stay_under_runs_root(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.RUNS_ENV, str(tmp_path / "runs"))
    code, _, _ = run(["train", "--config", MICRO, "--override", "train.epochs=1"], capsys)
    assert code == 0
    assert [p.name for p in tmp_path.iterdir()] == ["runs"]
    entries = list((tmp_path / "runs").iterdir())
    assert len(entries) == 1 and entries[0].name.startswith("train-")
    assert not any(p.name.startswith(".") for p in entries)


def test_parse_override():
    assert cli.parse_override("train.lr=0.5") == (["train", "lr"], 0.5)
    assert cli.parse_override("topology=smg25") == (["topology"], "smg25")
    assert cli.parse_override("model.kernel_sizes=[1,3]") == (["model", "kernel_sizes"], [1, 3])
    with pytest.raises(cli.UsageError):
        cli.parse_override("no-equals-sign")
