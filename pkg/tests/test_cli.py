import csv
import json

import numpy as np
import pytest

from mfsa.calibration import CalibrationModel
from mfsa.cli import build_parser, main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_pdf_grid(tmp_path, capsys):
    assert main(["pdf", "--k", "1", "--d-intrinsic", "2", "--grid", "0.1:10:100"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x,pdf,cdf"
    rows = [list(map(float, r.split(","))) for r in lines[1:]]
    assert len(rows) == 100
    at2 = min(rows, key=lambda r: abs(r[0] - 2.0))
    assert at2[2] == pytest.approx(0.5, abs=1e-12)


def test_pdf_median_sampling_to_file(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["pdf", "--k", "1", "--d-intrinsic", "2", "--n", "11", "--grid", "0.5:6:12",
                 "--median-sampling", "--out", str(out)]) == 0
    assert len(_rows(out)) == 13
    assert (tmp_path / "m.csv.manifest.json").exists()
    assert main(["pdf", "--k", "1", "--d-intrinsic", "2", "--grid", "0.5:6:12", "--median-sampling"]) == 1
    assert main(["pdf", "--k", "1", "--d-intrinsic", "2", "--n", "10", "--grid", "0.5:6:12",
                 "--median-sampling"]) == 2


def test_generate_then_estimate_helix(tmp_path, capsys):
    cloud = tmp_path / "helix.csv"
    assert main(["generate", "--family", "helix", "--d", "1", "--n", "2500", "--seed", "3", "--out", str(cloud)]) == 0
    manifest = json.loads((tmp_path / "helix.csv.manifest.json").read_text())
    assert manifest["subcommand"] == "generate" and manifest["config"]["seed"] == 3
    assert main(["estimate", "--input", str(cloud), "--k", "5"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert set(rec) == {"method", "k", "n", "value", "n_invalid"}
    assert rec["n"] == 2500 and round(rec["value"]) == 1


# expected values on a periodic D=3 cube with k=6: the local FSA values are
# right-skewed (mean above D, mode of rounded values below), and the mean of
# per-point ML values is D (K-1)/(K-2)
@pytest.mark.parametrize("method,lo,hi", [("mfsa", 2.7, 3.3), ("fsaml", 2.7, 3.3), ("mean", 3.0, 3.8),
                                          ("mode", 2, 2), ("ml", 3.45, 4.05)])
def test_estimate_methods(tmp_path, capsys, method, lo, hi):
    cloud = tmp_path / "c.csv"
    main(["generate", "--family", "hypercube", "--d", "3", "--n", "800", "--boundary", "periodic",
          "--out", str(cloud)])
    assert main(["estimate", "--input", str(cloud), "--k", "6", "--method", method,
                 "--boundary", "periodic"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["method"] == method and lo <= rec["value"] <= hi


def test_generate_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["generate", "--family", "sphere", "--d", "2", "--n", "50", "--seed", "7", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    # round-trip precision
    x = np.loadtxt(a, delimiter=",")
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_missing_input_is_data_error(tmp_path, capsys):
    out = tmp_path / "res.json"
    assert main(["estimate", "--input", str(tmp_path / "nope.csv"), "--k", "2", "--out", str(out)]) == 2
    assert "not found" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []
    assert main(["benchmark", "--suite", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r")]) == 2
    assert list(tmp_path.iterdir()) == []


def test_unknown_flag_suggests(capsys):
    assert main(["estimate", "--inptu", "x.csv", "--k", "2"]) == 1
    err = capsys.readouterr().err
    assert "--input" in err
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_bad_data_is_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,0.2\n0.3,nan\n")
    assert main(["estimate", "--input", str(bad), "--k", "1"]) == 2
    outside = tmp_path / "o.csv"
    outside.write_text("0.1\n1.5\n0.3\n0.7\n")
    assert main(["estimate", "--input", str(outside), "--k", "1", "--boundary", "periodic"]) == 2


def test_calibrate_and_cmfsa(tmp_path, capsys):
    calib = tmp_path / "calib.json"
    assert main(["calibrate", "--n", "300", "--k", "2", "--boundary", "hard", "--d", "2:8",
                 "--realizations", "2", "--order", "1", "--seed", "5", "--out", str(calib)]) == 0
    model = CalibrationModel.load(calib)
    assert model.n == 300 and model.k == 2 and model.provenance["seed"] == 5
    again = tmp_path / "again.json"
    manifest = json.loads((tmp_path / "calib.json.manifest.json").read_text())
    cfg = manifest["config"]
    assert main(["calibrate", "--n", str(cfg["n"]), "--k", str(cfg["k"]), "--boundary", cfg["boundary"],
                 "--d", "2:8", "--realizations", str(cfg["realizations"]), "--order", str(cfg["order"]),
                 "--seed", str(cfg["seed"]), "--out", str(again)]) == 0
    assert again.read_bytes() == calib.read_bytes()

    cloud = tmp_path / "c.csv"
    main(["generate", "--family", "hypercube", "--d", "6", "--n", "300", "--out", str(cloud)])
    capsys.readouterr()
    assert main(["estimate", "--input", str(cloud), "--k", "2", "--correction", str(calib)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["method"] == "cmfsa"


def test_benchmark(tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"n": 200, "manifolds": [{"name": "c2", "family": "hypercube", "d": 2},
                                                          {"name": "h", "family": "helix", "d": 1}]}))
    out = tmp_path / "res"
    assert main(["benchmark", "--suite", str(suite), "--estimators", "mfsa,ml", "--realizations", "2",
                 "--k", "3", "--seed", "1", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"raw.csv", "table.csv", "metrics.json", "manifest.json"}
    table = _rows(out / "table.csv")
    assert table[0] == ["manifold", "true_d", "mfsa", "ml"]
    assert table[-2][0] == "MPE" and table[-1][0] == "error_rate"
    assert main(["benchmark", "--suite", str(suite), "--estimators", "mfsa,danco", "--out", str(tmp_path / "x")]) == 1


def _series(tmp_path, seconds=12.0, rate=256.0):
    t = np.arange(int(seconds * rate)) / rate
    x = np.column_stack([np.sin(2 * np.pi * 5 * t), np.sin(2 * np.pi * 7.3 * t + 1), np.cos(2 * np.pi * 3.1 * t)])
    x += 0.01 * np.random.default_rng(0).normal(size=x.shape)
    path = tmp_path / "series.csv"
    np.savetxt(path, x, delimiter=",")
    layout = tmp_path / "layout.json"
    layout.write_text(json.dumps({"nodes": ["a", "b", "c"], "edges": [["a", "b"], ["b", "c"]]}))
    return path, layout


def test_stsep_and_embed(tmp_path, capsys):
    series, layout = _series(tmp_path)
    st_out = tmp_path / "stsep.csv"
    assert main(["stsep", "--input", str(series), "--rate", "256", "--band", "1:30", "--layout", str(layout),
                 "--m", "2", "--tau", "auto", "--percentiles", "1,25,50", "--dtmax", "30", "--out", str(st_out)]) == 0
    rows = _rows(st_out)
    assert rows[0] == ["dt", "p1", "p25", "p50"] and len(rows) == 31
    info = json.loads(capsys.readouterr().out)
    assert info["tau"] == 2 and info["suggested_stride"] >= 1

    emb = tmp_path / "emb"
    assert main(["embed", "--input", str(series), "--rate", "256", "--band", "1:30", "--layout", str(layout),
                 "--m", "3", "--tau", "2", "--stride", "4", "--out", str(emb)]) == 0
    manifest = json.loads((emb / "manifest.json").read_text())
    assert manifest["stride"] == 4 and len(manifest["files"]) == 12
    total = sum(np.loadtxt(emb / f, delimiter=",", ndmin=2).shape[0] for f in manifest["files"] if f.startswith("a_"))
    T = int(12 * 256) - 2 * int(2 * 256)
    assert total == T - 2 * 2


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv("MFSA_THREADS", "3")
    args = build_parser().parse_args(["pdf", "--k", "1", "--d-intrinsic", "2", "--grid", "1:2:3"])
    assert args.threads == 3
