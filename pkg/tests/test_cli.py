import filecmp
import json
import os

import pytest

from colalab.cli import main
from colalab.model import TINY_MODEL

SMALL = ["--classes", "40", "--primitives", "10", "--set", "corpus.train_samples=3",
         "--set", "corpus.test_samples=2", "--set", "corpus.num_templates=2"]


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.json"
    cfg = {
        "model": TINY_MODEL.to_dict(),
        "train": {"total_steps": 4, "warmup_steps": 1, "halve_every_steps": 2, "batch_size": 4,
                  "teacher_steps": 2, "teacher_batch_size": 4, "lam": 0.5},
        "eval": {"trials": 2, "batch_size": 8},
    }
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def root(tmp_path_factory, config_file):
    root = str(tmp_path_factory.mktemp("runs"))
    assert main(["synth", "--root", root, *SMALL, "--split", "char:24:16", "--split", "comp:3"]) == 0
    return root


def _runs(root, command):
    d = os.path.join(root, "runs")
    return sorted(x for x in os.listdir(d) if x.endswith("-" + command))


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_synth_layout(root):
    c = os.path.join(root, "corpus")
    for name in ("classes.json", "primitives.json", "meta.json", "run_config.json"):
        assert os.path.exists(os.path.join(c, name))
    assert sorted(os.listdir(os.path.join(c, "splits"))) == ["char-24-16.json", "comp-3.json"]
    assert len(os.listdir(os.path.join(c, "templates", "0"))) == 2


def test_synth_is_deterministic(root, tmp_path):
    other = str(tmp_path / "again")
    assert main(["synth", "--root", root, "--out", other, *SMALL,
                 "--split", "char:24:16", "--split", "comp:3"]) == 0
    cmp = filecmp.dircmp(os.path.join(root, "corpus"), other, ignore=["run_config.json"])

    def same(d):
        assert not d.diff_files and not d.left_only and not d.right_only, d.report()
        for sub in d.subdirs.values():
            same(sub)

    same(cmp)


def test_synth_refuses_existing_dir(root, capsys):
    assert main(["synth", "--root", root, *SMALL]) == 5
    assert _err(capsys)["error"] == "FileExistsError"


def test_synth_rejects_oversized_split(tmp_path, capsys):
    code = main(["synth", "--root", str(tmp_path), "--split", "char:150:80"])
    assert code == 2
    assert _err(capsys)["error"] == "InvalidArgumentError"


def test_eval_before_train_is_state_error(tmp_path, capsys):
    assert main(["eval", "--root", str(tmp_path), "--split", "char:24:16"]) == 3
    rec = _err(capsys)
    assert rec["error"] == "StateError" and "checkpoint" in rec["message"]


def test_train_before_teacher_is_state_error(root, config_file, capsys, tmp_path):
    code = main(["train", "--root", str(tmp_path), "--corpus", os.path.join(root, "corpus"),
                 "--config", config_file])
    assert code == 3
    assert "teacher" in _err(capsys)["message"]


def test_unknown_override_rejected(root, capsys):
    assert main(["eval", "--root", root, "--set", "train.nope=1"]) == 2


def test_full_pipeline(root, config_file, capsys):
    common = ["--root", root, "--config", config_file, "--split", "char:24:16"]
    assert main(["train-teacher", *common]) == 0
    assert main(["train", *common, "--lambda", "0.01"]) == 0
    run = os.path.join(root, "runs", _runs(root, "train")[-1])
    cfg = json.load(open(os.path.join(run, "config.json")))
    # the flag beats the file value
    assert cfg["train"]["lam"] == 0.01
    assert "train.lam=0.01" in cfg["origin"]["overrides"]
    assert cfg["inputs"]["teacher_sha256"]
    for name in ("checkpoint.pt", "metrics.jsonl", "training_manifest.json", "status.json"):
        assert os.path.exists(os.path.join(run, name))
    assert not os.path.exists(os.path.join(run, ".lock"))

    assert main(["eval", *common, "--trials", "2"]) == 0
    ev = os.path.join(root, "runs", _runs(root, "eval")[-1], "eval_report.json")
    report = json.load(open(ev))
    assert report["split_name"] == "char-24-16" and len(report["trials"]) == 2
    assert report["chance_level"] == 1 / 16

    assert main(["viz", *common, "--class-id", "30"]) == 0
    viz = os.path.join(root, "runs", _runs(root, "viz")[-1])
    assert len([f for f in os.listdir(viz) if f.endswith(".png")]) == 1 + TINY_MODEL.n_slots

    assert main(["retrieve", *common, "--k", "5", "--candidates", "40"]) == 0
    ret = json.load(open(os.path.join(root, "runs", _runs(root, "retrieve")[-1], "retrieval.json")))
    assert len(ret["hits"]) == 5

    assert main(["time", *common, "--num-batches", "2", "--batch-size", "32"]) == 0
    timing = json.load(open(os.path.join(root, "runs", _runs(root, "time")[-1], "timing_report.json")))
    assert timing["batch_size"] == 32 and timing["num_batches"] == 2


def test_eval_refuses_overlapping_split(root, config_file, capsys):
    common = ["--root", root, "--config", config_file]
    if not _runs(root, "train"):
        pytest.skip("needs the pipeline run")
    # the checkpoint saw classes 0..23; char:10:30 tests classes 10..39
    assert main(["eval", *common, "--split", "char:10:30"]) == 2
    assert "zero-shot" in _err(capsys)["message"]


def test_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("COLALAB_ROOT", str(tmp_path))
    assert main(["eval"]) == 3
    assert str(tmp_path) in _err(capsys)["message"]
