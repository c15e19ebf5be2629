import hashlib
import json
import subprocess
import sys

import pytest

from gzrd.cli import main
from gzrd.model import param_count, preset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_manifest(path, reading, negative, seed=None):
    obj = {"entries": [{"label": "reading", "count": reading}, {"label": "not_reading", "count": negative}]}
    if seed is not None:
        obj["seed"] = seed
    path.write_text(json.dumps(obj))
    return path


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small trained model plus its data, shared by the eval and detect tests."""
    d = tmp_path_factory.mktemp("cli")
    write_manifest(d / "train.json", 150, 150, seed=21)
    write_manifest(d / "test.json", 50, 50, seed=22)
    assert main(["simulate", str(d / "train.json"), str(d / "train.jsonl")]) == 0
    assert main(["simulate", str(d / "test.json"), str(d / "test.jsonl")]) == 0
    assert main(["train", str(d / "train.jsonl"), str(d / "test.jsonl"), "--model", "s", "--epochs", "6",
                 "--seed", "0", "--out", str(d / "s.ckpt")]) == 0
    return d


# -- simulate ---------------------------------------------------------------------------
def test_simulate_counts_and_hash(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.json", 7, 5, seed=3)
    code, out, err = run(capsys, "simulate", m, tmp_path / "a.jsonl")
    assert code == 0
    assert json.loads(out)["by_label"] == {"reading": 7, "not_reading": 5}
    assert "simulate config" in err
    run(capsys, "simulate", m, tmp_path / "b.jsonl")
    assert sha(tmp_path / "a.jsonl") == sha(tmp_path / "b.jsonl")
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 12


def test_simulate_empty_manifest(tmp_path, capsys):
    (tmp_path / "e.json").write_text('{"entries": []}')
    code, _, err = run(capsys, "simulate", tmp_path / "e.json", tmp_path / "x.jsonl")
    assert code == 2 and "no entries" in err


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    m = write_manifest(tmp_path / "m.json", 2, 2)
    monkeypatch.setenv("GZRD_SEED", "5")
    run(capsys, "simulate", m, tmp_path / "env.jsonl")
    run(capsys, "simulate", m, tmp_path / "flag.jsonl", "--seed", "5")
    run(capsys, "simulate", m, tmp_path / "other.jsonl", "--seed", "6")
    assert sha(tmp_path / "env.jsonl") == sha(tmp_path / "flag.jsonl") != sha(tmp_path / "other.jsonl")
    # a seed in the manifest beats the environment
    m2 = write_manifest(tmp_path / "m2.json", 2, 2, seed=6)
    run(capsys, "simulate", m2, tmp_path / "manifest.jsonl")
    assert sha(tmp_path / "manifest.jsonl") == sha(tmp_path / "other.jsonl")


def test_simulate_alternating(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--alternating", 4, "--duration", 30, "--seed", 1, tmp_path / "alt.jsonl")
    assert code == 0 and json.loads(out)["change_points"]
    code, out, _ = run(capsys, "inspect", tmp_path / "alt.jsonl")
    assert json.loads(out)["sequences"][0]["change_points"] >= 1


def test_bad_alternating_id(tmp_path, capsys):
    assert run(capsys, "simulate", "--alternating", 99, tmp_path / "x.jsonl")[0] == 2


# -- train ------------------------------------------------------------------------------
def test_train_reports_parameter_count(workdir):
    report = json.loads((workdir / "s.report.json").read_text())
    assert len(report["epochs"]) == 6
    assert (workdir / "s-epochs" / "epoch-06.ckpt").exists()


def test_m_parameter_count_printed(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.json", 4, 4, seed=1)
    run(capsys, "simulate", m, tmp_path / "d.jsonl")
    code, out, err = run(capsys, "train", tmp_path / "d.jsonl", "--model", "m", "--epochs", "1", "--out", tmp_path / "m.ckpt")
    assert code == 0
    n = json.loads(out)["parameters"]
    assert 116_000 <= n <= 158_000 and n == param_count(preset("m"))
    assert f"parameters: {n}" in err
    code, out, _ = run(capsys, "inspect", tmp_path / "m.ckpt")
    assert json.loads(out)["parameters"] == n


def test_train_same_seed_same_checkpoint(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.json", 6, 6, seed=2)
    run(capsys, "simulate", m, tmp_path / "d.jsonl")
    for name in ("a", "b"):
        assert run(capsys, "train", tmp_path / "d.jsonl", "--model", "xs", "--epochs", 2, "--seed", 4,
                   "--out", tmp_path / f"{name}.ckpt")[0] == 0
    assert sha(tmp_path / "a.ckpt") == sha(tmp_path / "b.ckpt")
    assert sha(tmp_path / "a.report.json") == sha(tmp_path / "b.report.json")


def test_train_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "train", tmp_path / "nope.jsonl", "--out", tmp_path / "x.ckpt")
    assert code == 3 and "no such file" in err


def test_train_bad_config(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.json", 2, 2, seed=2)
    run(capsys, "simulate", m, tmp_path / "d.jsonl")
    assert run(capsys, "train", tmp_path / "d.jsonl", "--epochs", 0, "--out", tmp_path / "x.ckpt")[0] == 2
    assert run(capsys, "train", tmp_path / "d.jsonl", "--modalities", "sonar", "--out", tmp_path / "x.ckpt")[0] == 2


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_train_nan_exit_code(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.json", 2, 2, seed=2)
    run(capsys, "simulate", m, tmp_path / "d.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "d.jsonl").read_text().splitlines()]
    rows[0]["imu"]["data"] = [[1e308] * 6 for _ in rows[0]["imu"]["data"]]
    (tmp_path / "bad.jsonl").write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    code, _, err = run(capsys, "train", tmp_path / "bad.jsonl", "--model", "xs", "--epochs", 1, "--no-dropout",
                       "--out", tmp_path / "x.ckpt")
    assert code == 4 and "non-finite" in err


# -- eval -------------------------------------------------------------------------------
def test_eval_separable_auc(workdir, capsys, tmp_path):
    code, out, _ = run(capsys, "eval", workdir / "test.jsonl", workdir / "s.ckpt", "--pr", tmp_path / "pr.csv",
                       "--breakdown", "mode", "--breakdown", "gaze_span_bucket", "--json", tmp_path / "m.json")
    assert code == 0
    res = json.loads(out)
    assert res["roc_auc"] >= 0.95 and res["confusion"]["accuracy"] >= 0.85
    assert {"precision_at_recall_0.9", "pr_auc"} <= res.keys()
    assert sum(g["n"] for g in res["breakdown"]["mode"].values()) == 100
    assert (tmp_path / "pr.csv").read_text().startswith("threshold,precision,recall")
    assert json.loads((tmp_path / "m.json").read_text()) == res


def test_eval_deterministic(workdir, capsys):
    a = run(capsys, "eval", workdir / "test.jsonl", workdir / "s.ckpt")[1]
    b = run(capsys, "eval", workdir / "test.jsonl", workdir / "s.ckpt")[1]
    assert a == b


def test_eval_single_modality(workdir, capsys):
    code, out, err = run(capsys, "eval", workdir / "test.jsonl", workdir / "s.ckpt", "--modalities", "gaze")
    assert code == 0 and '"gaze"' in err
    assert json.loads(out)["n"] == 100


def test_eval_unknown_breakdown_key(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", str(workdir / "test.jsonl"), str(workdir / "s.ckpt"), "--breakdown", "weather"])
    assert exc.value.code == 2


# -- detect -----------------------------------------------------------------------------
def test_detect_alternating(workdir, capsys, tmp_path):
    run(capsys, "simulate", "--alternating", 1, "--duration", 40, "--seed", 2, tmp_path / "alt.jsonl")
    code, out, _ = run(capsys, "detect", tmp_path / "alt.jsonl", workdir / "s.ckpt", "--trace", tmp_path / "t.csv",
                       "--report", tmp_path / "lat.json")
    assert code == 0
    rep = json.loads((tmp_path / "lat.json").read_text())
    assert rep == json.loads(out)
    assert rep["matched"] >= 1
    seq = rep["sequences"][0]
    assert "misses" in seq and len(seq["latencies"]) == seq["n_changes"]
    assert (tmp_path / "t.csv").read_text().startswith("t,score,state")


def test_detect_stride_longer_than_window(workdir, capsys, tmp_path):
    run(capsys, "simulate", "--alternating", 1, "--duration", 20, tmp_path / "alt.jsonl")
    code, _, err = run(capsys, "detect", tmp_path / "alt.jsonl", workdir / "s.ckpt", "--stride", 5)
    assert code == 2 and "exceeds" in err


# -- inspect ----------------------------------------------------------------------------
def test_inspect_clip_counts(workdir, capsys):
    code, out, _ = run(capsys, "inspect", workdir / "test.jsonl")
    res = json.loads(out)
    assert code == 0 and res["clips"] == len((workdir / "test.jsonl").read_text().splitlines()) == 100
    assert res["by_label"] == {"reading": 50, "not_reading": 50}


def test_inspect_rejects_corrupt_checkpoint(workdir, capsys, tmp_path):
    data = bytearray((workdir / "s.ckpt").read_bytes())
    data[-10] ^= 0xFF
    (tmp_path / "bad.ckpt").write_bytes(bytes(data))
    code, _, err = run(capsys, "inspect", tmp_path / "bad.ckpt")
    assert code == 3 and "checksum" in err


def test_usage_error_exit_code():
    r = subprocess.run([sys.executable, "-m", "gzrd.cli", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2
