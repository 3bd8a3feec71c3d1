import csv
import json
import subprocess
import sys

import pytest

from fpnet import cli, pipeline


@pytest.fixture(scope="module")
def files(small_synth_files):
    d = small_synth_files
    return {"input": str(d / "playlists.jsonl"), "economics": str(d / "economics.csv")}


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_report_end_to_end(files, tmp_path, capsys):
    out = tmp_path / "rep"
    code, cap = run(["report", "-i", files["input"], "--economics", files["economics"],
                     "--seed", 3, "--out", out], capsys)
    assert code == 0, cap.err
    report = json.loads((out / "report.json").read_text())
    for key in ("dataset", "graph", "tags", "communities", "kld_by_age", "temporal", "fits",
                "regional", "schema_version"):
        assert key in report
    assert report["fits"]["peak_sensitivity_age"] == report["fits"]["sensitivity"]["xc"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] is True
    assert manifest["report"] == "report.json"
    for stage in pipeline.STAGES:
        entry = manifest["stages"][stage]
        assert entry["status"] == "complete" and entry["files"]
        for name in entry["files"]:
            assert (out / name).exists()


def test_every_output_carries_schema_version(files, tmp_path):
    out = tmp_path / "o"
    assert run(["report", "-i", files["input"], "--economics", files["economics"],
                "--out", out])[0] == 0
    for path in sorted(out.iterdir()):
        if path.suffix == ".json":
            assert json.loads(path.read_text())["schema_version"] == pipeline.SCHEMA_VERSION
        else:
            header = next(csv.reader(path.open()))
            assert "schema_version" in header or header[0] == "schema_v1", path.name


def test_report_bytes_deterministic(files, tmp_path):
    bundles = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["report", "-i", files["input"], "--seed", 11, "--out", out])[0] == 0
        bundles.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert bundles[0] == bundles[1]


def test_correlate_without_economics_names_stage(files, tmp_path, capsys):
    code, cap = run(["fit", "correlate", "-i", files["input"], "--out", tmp_path], capsys)
    assert code == 1
    assert "stage fit" in cap.err and "economics" in cap.err


def test_missing_economics_file_is_recorded(files, tmp_path, capsys):
    out = tmp_path / "r"
    code, cap = run(["report", "-i", files["input"], "--economics", tmp_path / "nope.csv",
                     "--out", out], capsys)
    assert code == 1 and "stage fit" in cap.err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] is False
    assert manifest["error"]["stage"] == "fit"
    assert manifest["stages"]["graph"]["status"] == "complete"
    assert (out / "communities.csv").exists()
    assert not (out / "report.json").exists()


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    code, cap = run(["ingest", "-i", bad, "--out", tmp_path / "o"], capsys)
    assert code == 1
    assert "bad.jsonl:1:" in cap.err
    code, _ = run(["ingest", "-i", tmp_path / "absent.jsonl", "--out", tmp_path / "o"], capsys)
    assert code == 1


def test_runtime_exit_code(files, tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise MemoryError("simulated")

    monkeypatch.setattr(pipeline.graph_mod, "build_graph", boom)
    code, cap = run(["graph-stats", "-i", files["input"], "--out", tmp_path], capsys)
    assert code == 2
    assert "stage graph" in cap.err


@pytest.mark.parametrize("argv, produced", [
    (["ingest"], "cohorts.csv"),
    (["graph-stats"], "attention.csv"),
    (["tagmap", "--level", "user"], "tags_user.json"),
    (["communities"], "communities.csv"),
    (["diversity"], "diversity.csv"),
    (["divergence"], "divergence.csv"),
    (["temporal", "--gender", "female"], "attention_matrix_female.csv"),
    (["agemode"], "age_modes.csv"),
    (["fit", "decay"], "decay_fit.json"),
    (["fit", "bigaussian", "--gender", "male"], "bigaussian_fit_male.json"),
    (["fit", "agemode", "--threshold", "0.2"], "age_modes.csv"),
])
def test_subcommands(files, tmp_path, capsys, argv, produced):
    code, cap = run(argv + ["-i", files["input"], "--out", tmp_path], capsys)
    assert code == 0, cap.err
    assert (tmp_path / produced).exists()
    json.loads(cap.out)


def test_fit_correlate(files, tmp_path, capsys):
    code, cap = run(["fit", "correlate", "-i", files["input"], "--economics",
                     files["economics"], "--out", tmp_path], capsys)
    assert code == 0, cap.err
    info = json.loads(cap.out)
    assert info["province"]["n_regions"] == 6
    assert (tmp_path / "correlations_city.csv").exists()


def test_synth_subcommand(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n_users = 300\nn_tracks = 500\nfp_length_mean = 10\n")
    code, cap = run(["synth", "--config", cfg, "--seed", 5, "--out", tmp_path / "s"], capsys)
    assert code == 0, cap.err
    assert json.loads(cap.out)["users"] == 300
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_blocks = 0\n")
    code, cap = run(["synth", "--config", bad, "--out", tmp_path / "x"], capsys)
    assert code == 1 and "n_blocks" in cap.err


def test_region_exclusion_flag(files, tmp_path, capsys):
    counts = []
    for extra in ([], ["--exclude-regions", "P00,P01C00"]):
        code, cap = run(["ingest", "-i", files["input"], "--out", tmp_path, *extra], capsys)
        assert code == 0
        counts.append(json.loads(cap.out)["n_users"])
    assert 0 < counts[1] < counts[0]


def test_module_entry_point(files, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fpnet", "ingest", "-i", files["input"],
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["n_users"] > 0
    proc = subprocess.run([sys.executable, "-m", "fpnet", "fit", "correlate", "-i",
                           files["input"], "--out", str(tmp_path)], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 1
