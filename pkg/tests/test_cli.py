import json

import numpy as np
import pytest

from tensorgp.cli import main


FAST = ["--iterations", "600", "--burn-in", "100", "--pilot-iterations", "100", "--no-optimize"]


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["simulate", "--shape", "16,5,2", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_simulate_writes_files_and_is_deterministic(bench, tmp_path, capsys):
    for name in ("design.csv", "data.txt", "test.txt", "manifest.json", "truth.json"):
        assert (bench / name).exists()
    assert main(["simulate", "--shape", "16,5,2", "--seed", "7", "--out", str(tmp_path)]) == 0
    for name in ("design.csv", "data.txt", "test.txt", "truth.json"):
        assert (bench / name).read_bytes() == (tmp_path / name).read_bytes()
    assert "manifest:" in capsys.readouterr().out


def test_simulate_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("TENSORGP_OUTPUT_ROOT", str(tmp_path))
    assert main(["simulate", "--shape", "8,3,2", "--no-test"]) == 0
    assert (tmp_path / "simulate" / "manifest.json").exists()
    assert not (tmp_path / "simulate" / "test.txt").exists()


def test_simulate_usage_errors(tmp_path):
    assert main(["simulate", "--shape", "8,3,3", "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--a3", "1,2,3", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--shape", "a,b"])
    assert exc.value.code == 1


def test_fit_outputs(bench, tmp_path):
    out = tmp_path / "fit"
    assert main(["fit", "--manifest", str(bench / "manifest.json"), "--out", str(out)] + FAST) == 0
    config = json.loads((out / "config.json").read_text())
    assert config["schema"] == "tensorgp.run/1" and config["seed"] == 0
    assert len(config["input_digest"]) == 64
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["names"]) == 8 and summary["n_retained"] == 500
    assert 0 < summary["chains"][0]["acceptance_rate"] < 1
    assert len(list((out / "marginals").glob("*.csv"))) == 8
    rows = np.loadtxt(out / "chain_0.csv", delimiter=",", skiprows=1)
    assert rows.shape == (500, 11)
    assert np.loadtxt(out / "trace_0.csv", delimiter=",", skiprows=1).shape == (600, 2)


def test_fit_is_reproducible(bench, tmp_path):
    args = ["fit", "--manifest", str(bench / "manifest.json")] + FAST
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "chain_0.csv").read_bytes() == (tmp_path / "b" / "chain_0.csv").read_bytes()


def test_fit_usage_and_data_errors(bench, tmp_path, capsys):
    m = str(bench / "manifest.json")
    assert main(["fit", "--manifest", m, "--iterations", "100", "--burn-in", "100", "--out", str(tmp_path)]) == 1
    assert main(["fit", "--manifest", m, "--forward-prob", "1.0", "--out", str(tmp_path)]) == 1
    assert main(["fit", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert "data error" in capsys.readouterr().err


def test_predict_samples_ten_scalars_and_needs_test(bench, tmp_path):
    out = tmp_path / "pred"
    assert main(["predict", "--manifest", str(bench / "manifest.json"), "--out", str(out)] + FAST) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["names"]) == 10 and len(summary["s_test_mean"]) == 2
    assert (out / "marginals" / "s_test_1.csv").exists()

    no_test = tmp_path / "nt"
    main(["simulate", "--shape", "8,3,2", "--no-test", "--out", str(no_test)])
    assert main(["predict", "--manifest", str(no_test / "manifest.json"), "--out", str(tmp_path / "x")] + FAST) == 2


def test_two_chains_get_distinct_streams(bench, tmp_path):
    out = tmp_path / "two"
    args = ["fit", "--manifest", str(bench / "manifest.json"), "--out", str(out), "--chains", "2"] + FAST
    assert main(args) == 0
    assert (out / "chain_0.csv").read_bytes() != (out / "chain_1.csv").read_bytes()
    assert main(["diagnose", "--run", str(out)]) == 0
    report = json.loads((out / "diagnostics.json").read_text())
    assert len(report["chains"]) == 2
    assert set(report["symmetry"]) >= {"p_value", "tv_distance", "flagged"}
    first = (out / "diagnostics.json").read_bytes()
    assert main(["diagnose", "--run", str(out)]) == 0
    assert (out / "diagnostics.json").read_bytes() == first


def test_diagnose_errors(bench, tmp_path):
    assert main(["diagnose", "--run", str(tmp_path)]) == 2
    out = tmp_path / "short"
    assert main(["fit", "--manifest", str(bench / "manifest.json"), "--out", str(out)] + FAST) == 0
    lines = (out / "chain_0.csv").read_text().splitlines()
    (out / "chain_0.csv").write_text("\n".join(lines[:20]) + "\n")
    assert main(["diagnose", "--run", str(out)]) == 2
