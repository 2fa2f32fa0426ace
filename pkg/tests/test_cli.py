import json
import subprocess
import sys

import pytest

from weldkge.cli import format_table, main

SYNTH = ["--set", "n_rows=200", "--set", "n_machines=4", "--set", "n_programs=6", "--set", "n_carbodies=10",
         "--set", "seed=1"]
TRAIN = "kind = TransE\ndim = 8\nepochs = 10\neval_every = 5\nbatch_size = 64\n"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", str(root / "data")] + SYNTH) == 0
    assert main(["build", str(root / "data/welds.csv"), str(root / "data/schema.csv"), str(root / "kg")]) == 0
    (root / "train.cfg").write_text(TRAIN)
    return root


def test_build_outputs(pipeline):
    kg = pipeline / "kg"
    for name in ("bins.json", "grouping.tsv", "schema.csv", "build_report.json", "split_train.csv"):
        assert (kg / name).exists(), name
    report = json.loads((kg / "build_report.json").read_text())
    assert report["leakage_violations"] == 0


def test_train_eval_compare(pipeline, capsys):
    root = pipeline
    for seed in (0, 1):
        assert main(["train", str(root / "kg"), str(root / "train.cfg"), str(root / f"run{seed}"),
                     "--seed", str(seed), "--no-timestamp"]) == 0
    assert main(["eval", str(root / "kg"), str(root / "run0/best.ckpt"), str(root / "run0"),
                 "--question", "Q1"]) == 0
    rep = json.loads((root / "run0/eval_Q1.json").read_text())
    assert 0 <= rep["mrr"] <= 1 and rep["nrmse"] is not None
    assert main(["eval", str(root / "kg"), str(root / "run0/best.ckpt"), str(root / "q2.json"),
                 "--question", "Q2", "--queries", str(root / "q2.tsv")]) == 0
    assert json.loads((root / "q2.json").read_text())["hits_groupby3"] is not None
    assert main(["compare", str(root / "kg"), str(root / "run0"), str(root / "run1"), str(root / "table.txt"),
                 "--no-timestamp"]) == 0
    table = (root / "table.txt").read_text()
    assert "TransE-8" in table and "±" in table
    runs = [line for line in table.splitlines() if line.startswith("runs")][0]
    assert runs.split()[-1] == "2"


def test_mlp_baselines(pipeline):
    root = pipeline
    (root / "mlp.cfg").write_text("epochs = 3\n")
    assert main(["train", str(root / "kg"), str(root / "mlp.cfg"), str(root / "mlp"), "--model", "mlp",
                 "--question", "Q1", "--set", "hidden=16"]) == 0
    assert main(["eval", str(root / "kg"), str(root / "mlp/best.ckpt"), str(root / "mlp"), "--question", "Q1"]) == 0
    assert json.loads((root / "mlp/eval_Q1.json").read_text())["config"]["model"] == "MLP"
    assert main(["train", str(root / "kg"), str(root / "train.cfg"), str(root / "kge")]) == 0
    assert main(["train", str(root / "kg"), str(root / "mlp.cfg"), str(root / "hyb"), "--model", "kge-mlp",
                 "--question", "Q2", "--kge", str(root / "kge/best.ckpt"), "--set", "hidden=16"]) == 0
    assert main(["eval", str(root / "kg"), str(root / "hyb/best.ckpt"), str(root / "hyb"), "--question", "Q2"]) == 0
    # a baseline trained for Q2 cannot answer Q1
    assert main(["eval", str(root / "kg"), str(root / "hyb/best.ckpt"), str(root / "x.json"),
                 "--question", "Q1"]) == 3


def test_reports_byte_identical(pipeline):
    root = pipeline
    outs = []
    for i in range(2):
        run = root / f"det{i}"
        assert main(["train", str(root / "kg"), str(root / "train.cfg"), str(run), "--no-timestamp"]) == 0
        assert main(["eval", str(root / "kg"), str(run / "best.ckpt"), str(run / "e.json"), "--question", "Q1",
                     "--no-timestamp"]) == 0
        outs.append(((run / "train_report.json").read_bytes(), (run / "e.json").read_bytes(),
                     (run / "best.ckpt").read_bytes()))
    assert outs[0] == outs[1]


def test_exit_codes(pipeline, tmp_path):
    root = pipeline
    proc = subprocess.run([sys.executable, "-m", "weldkge", "eval", str(root / "kg"), "x.ckpt", "out.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert main(["eval", str(root / "kg"), str(tmp_path / "missing.ckpt"), str(tmp_path / "o.json"),
                 "--question", "Q1"]) == 3
    assert main(["build", str(tmp_path / "none.csv"), str(tmp_path / "none_schema.csv"), str(tmp_path / "k")]) == 3
    (tmp_path / "bad.cfg").write_text("kind = Nope\n")
    assert main(["train", str(root / "kg"), str(tmp_path / "bad.cfg"), str(tmp_path / "r")]) == 3
    assert main(["train", str(root / "kg"), str(root / "train.cfg"), str(tmp_path / "r"), "--model", "mlp"]) == 2


def test_numeric_error_exit_code(pipeline, tmp_path):
    (tmp_path / "hot.cfg").write_text("kind = DistMult\ndim = 8\nepochs = 20\nlearning_rate = 1e300\n")
    assert main(["train", str(pipeline / "kg"), str(tmp_path / "hot.cfg"), str(tmp_path / "r")]) == 4


def test_ablate(pipeline):
    root = pipeline
    assert main(["ablate", str(root / "kg"), str(root / "train.cfg"), str(root / "abl"), "--drop-literals",
                 "--seeds", "0,1", "--no-timestamp"]) == 0
    table = (root / "abl/ablation.txt").read_text()
    assert "TransE-8†" in table and "TransE-8 " in table


def test_format_table_masks_times():
    cols = {"A": [{"Q1 MRR": 0.5, "time_train": 3.0}, {"Q1 MRR": 0.7, "time_train": 4.0}]}
    t = format_table(cols)
    assert "0.6000 ± 0.1000" in t and "3.5000" in t
    assert "3.5000" not in format_table(cols, timestamps=False)
