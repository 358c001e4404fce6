import argparse
import json

import pytest

from mprbench.cli import hop_range, main


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "bundle"
    assert main(["gen", "--out", str(out), "--users", "1", "--hops", "2..4", "--per-hop", "2", "--seed", "1"]) == 0
    return out


def test_hop_range():
    assert hop_range("2..10") == (2, 10) and hop_range("4") == (4, 4)
    with pytest.raises(argparse.ArgumentTypeError):
        hop_range("two")


def test_gen_and_validate(bundle_dir, capsys):
    assert (bundle_dir / "manifest.json").exists()
    assert main(["validate", "--bundle", str(bundle_dir)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["checked"] == 6


def test_corpus(bundle_dir, tmp_path):
    for scheme in ("mask", "ask"):
        assert main(["corpus", "--bundle", str(bundle_dir), "--scheme", scheme, "--out", str(tmp_path)]) == 0
        rows = (tmp_path / f"u00.{scheme}.jsonl").read_text().splitlines()
        assert rows and json.loads(rows[0])["scheme"] == scheme


def test_cluster_route_and_hybrid_run(bundle_dir, tmp_path, capsys):
    hybrid = tmp_path / "hybrid"
    assert main(["cluster", "--bundle", str(bundle_dir), "--n", "3", "--out", str(hybrid), "--base-model", "base"]) == 0
    assert (hybrid / "u00" / "clusters.json").exists() and (hybrid / "u00" / "adapters.json").exists()
    capsys.readouterr()
    assert main(["route", "--dry-run", "Who is the husband?", "--bundle", str(bundle_dir),
                 "--hybrid", str(hybrid), "--memory", "sparse", "--k", "5"]) == 0
    routed = json.loads(capsys.readouterr().out)
    assert routed["model"].startswith("lora-u00-c") and sum(routed["votes"].values()) == 5
    out = tmp_path / "run-hybrid"
    assert main(["run", "--bundle", str(bundle_dir), "--structure", "NR", "--memory", "sparse",
                 "--hybrid", str(hybrid), "--provider", "gold-echo", "--out", str(out)]) == 0
    rec = json.loads((out / "run.jsonl").read_text().splitlines()[0])
    assert rec["trace"]["steps"][0]["model"].startswith("lora-u00-c")


def test_run_and_report(bundle_dir, tmp_path, capsys):
    runs = []
    for structure, memory in (("NR", "oracle"), ("SR", "dense"), ("DR", "ignoramus")):
        out = tmp_path / f"{structure}-{memory}"
        assert main(["run", "--bundle", str(bundle_dir), "--structure", structure, "--memory", memory,
                     "--steps", "2", "--provider", "gold-echo", "--out", str(out)]) == 0
        runs.append(str(out))
    assert json.loads((tmp_path / "NR-oracle" / "report.json").read_text())["acc_overall"] == 1.0
    capsys.readouterr()
    assert main(["report", "--runs", *runs, "--format", "md"]) == 0
    assert capsys.readouterr().out.startswith("| Structure | Memory |")
    assert main(["report", "--runs", *runs, "--format", "csv", "--out", str(tmp_path / "r.csv")]) == 0
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 1 + 3 * 3


def test_scripted_provider_run(bundle_dir, tmp_path):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"rules": [], "default": "UNKNOWN"}))
    out = tmp_path / "run"
    assert main(["run", "--bundle", str(bundle_dir), "--provider", "scripted", "--script", str(script),
                 "--out", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["acc_overall"] == 0.0


def test_bench(capsys):
    assert main(["bench", "--docs", "200", "--points", "200", "--repeat", "1"]) == 0
    assert "active backend" in capsys.readouterr().out
