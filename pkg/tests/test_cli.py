import json

import numpy as np
import pytest

from ctrrefine.cli import main
from ctrrefine.data import read_cache_manifest


@pytest.fixture
def csv_path(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["label,user,item,ctx"]
    for _ in range(400):
        u, i, c = rng.integers(0, 6), rng.integers(0, 8), rng.integers(0, 3)
        p = 1 / (1 + np.exp(-((u % 3) - 1 + (i % 2) - 0.5 + 0.4 * c)))
        lines.append(f"{int(rng.random() < p)},u{u},i{i},c{c}")
    path = tmp_path / "toy.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


FAST = ["--train.runs", "2", "--train.max_epochs", "2", "--train.batch_size", "64",
        "--model.dim", "4", "--fr.m", "8", "--backbone.DNN.widths", "[8]"]


def test_prepare_train_report_export(tmp_path, csv_path, capsys):
    cache = tmp_path / "toy.cache"
    assert main(["prepare", "--data.path", str(csv_path), "--data.cache", str(cache),
                 "--data.min_count", "1"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["sizes"] == [320, 40, 40] and info["num_fields"] == 3
    assert read_cache_manifest(cache)["sizes"] == [320, 40, 40]

    out = tmp_path / "runs"
    assert main(["train", "--data.cache", str(cache), "--model.fr", "GFRL",
                 "--output.dir", str(out)] + FAST) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["model_name"] == "FM_GFRL" and rows[0]["n_runs"] == 2
    assert sorted(p.name for p in (out / "FM_GFRL").iterdir()) == [
        "model_2022.pt", "model_2023.pt", "run_2022.json", "run_2023.json"]

    assert main(["export", "--data.cache", str(cache), "--checkpoint",
                 str(out / "FM_GFRL" / "model_2022.pt"), "--feature", "1", "--n", "3",
                 "--split", "train"]) == 0
    dump = capsys.readouterr().out.strip().splitlines()
    assert len(dump) == 5 and dump[1].startswith("original")

    assert main(["report", "--runs", str(out)]) == 0
    assert "| FM |" in capsys.readouterr().out
    assert (out / "results.csv").exists() and (out / "aggregate.csv").exists()


def test_bench_writes_tables(tmp_path, csv_path, capsys):
    out = tmp_path / "bench"
    code = main(["bench", "--data.path", str(csv_path), "--data.min_count", "1",
                 "--bench.base_models", "[FM, DeepFM]", "--bench.modules", "[SKIP, SENET]",
                 "--bench.separate", "true", "--output.dir", str(out)] + FAST)
    assert code == 0
    md = capsys.readouterr().out
    assert "| DeepFM(2) |" in md and "Ave.Imp" in md
    sig = json.loads((out / "significance.json").read_text())
    assert set(sig) == {"FM_SENET", "DeepFM_SENET", "DeepFM(2)_SENET"}
    header = (out / "aggregate.csv").read_text().splitlines()[0]
    assert header == ("model_name,dataset,mean_auc,std_auc,mean_logloss,std_logloss,n_runs,"
                      "params,seconds_per_epoch")


def test_probe_and_audit_json(tmp_path, capsys):
    assert main(["probe", "--modules", "VGate", "FWN", "--seeds", "0", "1", "--trials", "20"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert len(reports) == 4 and all(r["matches_declared"] for r in reports)
    path = tmp_path / "audit.json"
    assert main(["audit", "--out", str(path)]) == 0
    rows = {r["module"]: r for r in json.loads(path.read_text())}
    assert rows["TCE"]["status"] == "pass"
    assert main(["audit", "--fr.TCE.m", "16", "--out", str(path)]) == 0
    rows = {r["module"]: r for r in json.loads(path.read_text())}
    assert rows["TCE"]["actual"] == 19_968 and rows["TCE"]["status"].startswith("config differs")


def test_missing_dataset_message():
    with pytest.raises(SystemExit, match="no dataset"):
        main(["train"])
