import csv
import io
import json

import pytest

from atrisk.cli import main
from atrisk.ingest import KEY_ENV_VAR

FAST = "importance_trees = 20\ncv_k = 5\nrforest.n_trees = 10\n"


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.setenv(KEY_ENV_VAR, "cli-test-key")
    assert main(["synth", "--out", str(tmp_path / "syn"), "--seed", "0", "--separation", "2"]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(FAST + "roster = syn/roster.csv\nschema = syn/schema.csv\n")
    return tmp_path, cfg


def test_synth_writes_three_files(workspace):
    tmp, _ = workspace
    assert sorted(p.name for p in (tmp / "syn").iterdir()) == ["ground_truth.csv", "roster.csv", "schema.csv"]


def test_missing_key_exit_2(workspace, monkeypatch, capsys):
    tmp, cfg = workspace
    monkeypatch.delenv(KEY_ENV_VAR)
    assert main(["ingest", "--config", str(cfg), "--out", str(tmp / "ing")]) == 2
    assert KEY_ENV_VAR in capsys.readouterr().err


def test_key_file(workspace, monkeypatch):
    tmp, cfg = workspace
    monkeypatch.delenv(KEY_ENV_VAR)
    (tmp / "k").write_text("file-key\n")
    assert main(["ingest", "--config", str(cfg), "--key-file", str(tmp / "k"), "--out", str(tmp / "ing")]) == 0


def test_unknown_config_key_exit_2(workspace):
    tmp, cfg = workspace
    cfg.write_text(cfg.read_text() + "colour = red\n")
    assert main(["features", "--config", str(cfg), "--out", str(tmp / "f")]) == 2


def test_missing_roster_exit_3(workspace):
    tmp, cfg = workspace
    assert main(["ingest", "--config", str(cfg), "--roster", str(tmp / "nope.csv")]) == 3


def test_ingest_output_has_no_raw_ids(workspace):
    tmp, cfg = workspace
    assert main(["ingest", "--config", str(cfg), "--out", str(tmp / "ing")]) == 0
    text = (tmp / "ing" / "records.csv").read_text()
    raw = [r["student_id"] for r in csv.DictReader(open(tmp / "syn" / "roster.csv"))]
    assert not any(i in text for i in raw)


def test_train_predict_report_cycle(workspace, capsys):
    tmp, cfg = workspace
    assert main(["train", "--config", str(cfg), "--model", "logreg", "--out", str(tmp / "m")]) == 0
    model = tmp / "m" / "logreg-none.json"
    assert json.loads(model.read_text())["model_id"] == "logreg-none"

    # phase roster: outcomes and direct identifiers stripped
    rows = list(csv.DictReader(open(tmp / "syn" / "roster.csv")))
    feats = [c for c in rows[0] if c not in ("name", "email", "letter_grade", "repeated_course")]
    buf = io.StringIO()
    w = csv.DictWriter(buf, feats, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows[:40])
    (tmp / "phase.csv").write_text(buf.getvalue())

    args = ["predict", "--config", str(cfg), "--model", str(model), "--phase", "phase3",
            "--roster", str(tmp / "phase.csv"), "--generated-at", "2026-10-01T00:00:00Z", "--out", str(tmp / "p")]
    assert main(args) == 0
    assert "40 students scored" in capsys.readouterr().out
    all_csv = tmp / "p" / "predictions_phase3_all.csv"
    assert len(all_csv.read_text().splitlines()) == 41

    assert main(["report", "--config", str(cfg), "--predictions", str(all_csv),
                 "--outcomes", str(tmp / "syn" / "roster.csv"), "--out", str(tmp / "r")]) == 0
    text = (tmp / "r" / "misprediction_report.txt").read_text()
    assert text.startswith("joined: 40\n") and "misprediction_rate:" in text


def test_predict_with_names_exit_4(workspace):
    tmp, cfg = workspace
    assert main(["train", "--config", str(cfg), "--model", "gnb", "--out", str(tmp / "m")]) == 0
    args = ["predict", "--config", str(cfg), "--model", str(tmp / "m" / "gnb-none.json"), "--phase", "phase3",
            "--roster", str(tmp / "syn" / "roster.csv"), "--out", str(tmp / "p")]
    assert main(args) == 4
    assert not (tmp / "p" / "predictions_phase3_all.csv").exists()


def test_phase_restricted_training(workspace):
    tmp, cfg = workspace
    assert main(["train", "--config", str(cfg), "--model", "logreg", "--phase-restrict", "phase1",
                 "--out", str(tmp / "m")]) == 0
    saved = json.loads((tmp / "m" / "logreg-none-phase1.json").read_text())
    assert all(w <= 8 for w in saved["availability"].values())
    assert main(["train", "--config", str(cfg), "--model", "logreg", "--out", str(tmp / "m")]) == 0
    full = json.loads((tmp / "m" / "logreg-none.json").read_text())
    assert max(full["availability"].values()) > 8  # top features include later-week scores
    roster = [ln.split(",") for ln in (tmp / "syn" / "roster.csv").read_text().splitlines()]
    keep = [j for j, c in enumerate(roster[0]) if c not in ("name", "email")]
    (tmp / "phase.csv").write_text("\n".join(",".join(r[j] for j in keep) for r in roster) + "\n")
    args = ["predict", "--config", str(cfg), "--model", str(tmp / "m" / "logreg-none.json"), "--phase", "phase1",
            "--roster", str(tmp / "phase.csv"), "--out", str(tmp / "p")]
    assert main(args) == 3


def test_evaluate_and_crossval(workspace, capsys):
    tmp, cfg = workspace
    assert main(["evaluate", "--config", str(cfg), "--model", "gnb", "--resampler", "smote",
                 "--out", str(tmp / "e")]) == 0
    assert (tmp / "e" / "reports" / "smote" / "gnb.txt").exists()
    assert main(["crossval", "--config", str(cfg), "--model", "gnb", "--resampler", "none", "--repeats", "2",
                 "--out", str(tmp / "cv")]) == 0
    lines = (tmp / "cv" / "none" / "gnb.csv").read_text().splitlines()
    assert len(lines) == 1 + 10 + 2


def test_report_bundle(workspace, capsys):
    tmp, cfg = workspace
    cfg.write_text(cfg.read_text() + "models = logreg, gnb\nresamplers = none\n")
    assert main(["report", "--config", str(cfg), "--out", str(tmp / "b")]) == 0
    manifest = json.loads((tmp / "b" / "manifest.json").read_text())
    assert "comparison_none.csv" in manifest["files"]
    assert "bundle:" in capsys.readouterr().out
