import csv
import json
import subprocess
import sys

import pytest

from ntssl.cli import main
from ntssl.data import SCHEMA, load_dataset
from ntssl.evaluate import read_report
from ntssl.train import read_log

SMALL = {
    "synth": {"num_videos": 4, "polyps_per_video": 3, "seed": 0},
    "encoder": {"d_model": 8, "num_heads": 2, "d_ff": 16, "proj_hidden": 8, "proj_out": 4},
    "train": {"total_steps": 4, "batch_size": 8},
    "probe": {"epochs": 1},
}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.json").write_text(json.dumps(SMALL))
    assert main(["generate", str(root / "small.json"), "--out", str(root / "d.jsonl")]) == 0
    assert main(["train", "--data", str(root / "d.jsonl"), "--out", str(root / "run"),
                 "--config", str(root / "small.json")]) == 0
    return root


def single_line_error(capsys):
    err = capsys.readouterr().err.strip()
    assert "\n" not in err and err.startswith("error[")
    return err


def test_generate_header_and_determinism(work, capsys):
    first = (work / "d.jsonl").read_text().splitlines()[0]
    assert json.loads(first)["schema"] == SCHEMA
    for name in ("a.jsonl", "b.jsonl"):
        assert main(["generate", str(work / "small.json"), "--out", str(work / name), "--seed", "7"]) == 0
    assert (work / "a.jsonl").read_bytes() == (work / "b.jsonl").read_bytes()
    assert (work / "a.jsonl").read_bytes() != (work / "d.jsonl").read_bytes()
    assert "N=" in capsys.readouterr().out


def test_generate_missing_config(work, capsys):
    assert main(["generate", str(work / "missing.json"), "--out", str(work / "x.jsonl")]) == 2
    assert "not found" in single_line_error(capsys)
    assert main(["generate", "--out", str(work / "x.jsonl")]) == 2
    single_line_error(capsys)


def test_train_outputs(work):
    run = work / "run"
    for name in ("checkpoint.bin", "train_log.csv", "train_log.png", "config.json"):
        assert (run / name).exists()
    assert len(read_log(run / "train_log.csv")) == 4
    echoed = json.loads((run / "config.json").read_text())
    assert echoed["train"]["total_steps"] == 4


def test_train_flags(work):
    out = work / "fixed"
    assert main(["train", "--data", str(work / "d.jsonl"), "--out", str(out), "--config", str(work / "small.json"),
                 "--steps", "3", "--sampling", "topk", "--no-curriculum", "--level", "tracklet", "--K", "2"]) == 0
    log = read_log(out / "train_log.csv")
    assert len(log) == 3 and len({r["tau"] for r in log}) == 1
    assert main(["train", "--data", str(work / "d.jsonl"), "--out", str(work / "one"),
                 "--config", str(work / "small.json"), "--steps", "1"]) == 0
    assert len(read_log(work / "one" / "train_log.csv")) == 1


def test_train_usage_errors(work, capsys):
    assert main(["train", "--out", str(work / "r")]) == 2
    assert "--data" in single_line_error(capsys)
    assert main(["train", "--data", str(work / "nope.jsonl"), "--out", str(work / "r")]) == 2
    single_line_error(capsys)


def test_eval_tasks_and_schema(work):
    out = work / "rep.json"
    assert main(["eval", "--data", str(work / "d.jsonl"), "--checkpoint", str(work / "run" / "checkpoint.bin"),
                 "--tasks", "retrieval", "--out", str(out)]) == 0
    rep = read_report(out)
    assert set(rep) == {"retrieval", "provenance"}
    assert main(["eval", "--data", str(work / "d.jsonl"), "--checkpoint", str(work / "run" / "checkpoint.bin"),
                 "--out", str(out), "--config", str(work / "small.json")]) == 0
    rep = read_report(out)
    values = [*rep["retrieval"].values(), *rep["reid"].values(), *(b["value"] for b in rep["probes"].values())]
    assert len(values) == 7 and all(0.0 <= v <= 1.0 for v in values)
    assert rep["provenance"]["train_config"]["train"]["total_steps"] == 4


def test_eval_separate_probe_data(work):
    cfg = dict(SMALL, synth={**SMALL["synth"], "noise_scale": 0.0, "drift_scale": 0.0, "seed": 9})
    (work / "clean.json").write_text(json.dumps(cfg))
    assert main(["generate", str(work / "clean.json"), "--out", str(work / "clean.jsonl")]) == 0
    out = work / "rep_probe.json"
    assert main(["eval", "--data", str(work / "d.jsonl"), "--checkpoint", str(work / "run" / "checkpoint.bin"),
                 "--tasks", "probe", "--probe-data", str(work / "clean.jsonl"), "--out", str(out),
                 "--config", str(work / "small.json")]) == 0
    rep = read_report(out)
    assert rep["provenance"]["probe_dataset"] == str(work / "clean.jsonl")
    assert rep["probes"]["size_class"]["n_train"] + rep["probes"]["size_class"]["n_test"] == \
        len(load_dataset(work / "clean.jsonl"))


def test_eval_mismatch_exit_3(work, capsys):
    cfg = dict(SMALL, builder={"tracklet_length": 4})
    (work / "l4.json").write_text(json.dumps(cfg))
    assert main(["generate", str(work / "l4.json"), "--out", str(work / "l4.jsonl")]) == 0
    capsys.readouterr()
    assert main(["eval", "--data", str(work / "l4.jsonl"), "--checkpoint", str(work / "run" / "checkpoint.bin"),
                 "--out", str(work / "x.json")]) == 3
    assert "config mismatch" in single_line_error(capsys)


def test_eval_bad_tasks(work, capsys):
    assert main(["eval", "--data", str(work / "d.jsonl"), "--checkpoint", str(work / "run" / "checkpoint.bin"),
                 "--tasks", "retrieval,nope", "--out", str(work / "x.json")]) == 2
    single_line_error(capsys)


def test_corrupt_dataset_exit_3(work, capsys):
    (work / "bad.jsonl").write_text('{"schema": "other"}\n')
    assert main(["train", "--data", str(work / "bad.jsonl"), "--out", str(work / "r")]) == 3
    assert "line 1" in single_line_error(capsys)


def test_diagnose_sampler(work):
    out = work / "diag.csv"
    assert main(["diagnose-sampler", "--data", str(work / "d.jsonl"), "--samples", "300", "--grid", "11",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["c"]) for r in rows] == [i / 10 for i in range(11)]
    assert float(rows[0]["tau"]) == 0.3 and float(rows[-1]["tau"]) == 12.0
    assert set(rows[0]) == {"c", "tau", "mean_rank", "purity"}
    assert out.with_suffix(".png").exists()


def test_sweep_cli(work, capsys):
    args = ["sweep", "--data", str(work / "d.jsonl"), "--out-dir", str(work / "sw"), "--config",
            str(work / "small.json"), "--steps", "2", "--variants", "sampler:topk,level:frame"]
    assert main(args) == 0
    rows = list(csv.DictReader((work / "sw" / "ablation.csv").open()))
    assert [r["variant"] for r in rows] == ["sampler:topk", "level:frame"]
    capsys.readouterr()
    assert main(args) == 2
    assert "--force" in single_line_error(capsys)
    assert main(args + ["--force"]) == 0
    assert list(csv.DictReader((work / "sw" / "ablation.csv").open())) == rows


def test_no_subcommand(capsys):
    assert main([]) == 2
    single_line_error(capsys)


def test_module_entry_point(work):
    proc = subprocess.run([sys.executable, "-m", "ntssl", "generate", str(work / "small.json"),
                           "--out", str(work / "m.jsonl")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load_dataset(work / "m.jsonl") == load_dataset(work / "d.jsonl")
