import csv
import json
from pathlib import Path

import pytest

from wavemark.cli import main
from wavemark.pipeline import ARTIFACTS, EXIT_CODES, PipelineConfig

SMALL = """
[input]
markers = prot_*

[features]
transform = cwt:3
cv_transforms = raw, cwt:3

[ga]
l_min = 2
l_max = 3
restarts = 2
generations = 15

[cv]
k = 3
repeats = 2
cv_l_min = 1
cv_l_max = 3
classifier = bayes

[survival]
max_survival_markers = 2

[run]
seed = 3
"""


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.ini"
    p.write_text(SMALL)
    return p


@pytest.fixture(scope="module")
def run_dir(small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    assert main(["run", "--config", str(small_config), "--out", str(out)]) == 0
    return out


def _files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_writes_every_artifact(run_dir):
    names = {p.name for p in run_dir.iterdir()}
    assert set(ARTIFACTS) <= names
    assert any(n.startswith("km_") and n.endswith(".svg") for n in names)
    assert "FAILED" not in names
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["config"]["l_max"] == 3
    assert set(manifest["artifacts"]) >= set(ARTIFACTS) - {"manifest.json"}
    ga = json.loads((run_dir / "ga.json").read_text())
    assert [r["l"] for r in ga["runs"]] == [2, 3]


def test_run_is_byte_deterministic(run_dir, small_config, tmp_path):
    again = tmp_path / "again"
    assert main(["run", "--config", str(small_config), "--out", str(again), "--threads", "2"]) == 0
    assert _files(again) == _files(run_dir)


def test_manifest_config_reproduces_run(run_dir, tmp_path):
    # the emitted config.ini alone, plus an output directory, reproduces the artifacts
    again = tmp_path / "replay"
    assert main(["run", "--config", str(run_dir / "config.ini"), "--out", str(again)]) == 0
    assert _files(again) == _files(run_dir)


def test_config_round_trip():
    cfg = PipelineConfig.from_ini(SMALL)
    back = PipelineConfig.from_ini(cfg.to_ini())
    assert back == cfg and back.digest() == cfg.digest()
    assert PipelineConfig.from_ini(SMALL, {"seed": 4}).digest() != cfg.digest()
    assert PipelineConfig.from_ini(SMALL, {"out": "elsewhere"}).digest() == cfg.digest()


def test_cv_report_has_one_row_per_scale_and_l(small_config, tmp_path):
    out = tmp_path / "cv"
    rc = main(["cv-eval", "--config", str(small_config), "--out", str(out), "--transforms",
               "cwt:1,cwt:2,cwt:3,cwt:4,cwt:5", "--l-min", "1", "--l-max", "20", "--k", "3", "--repeats", "1"])
    assert rc == 0
    with open(out / "cv_report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 * 20
    assert {(r["transform"], int(r["n_features"])) for r in rows} == \
        {(f"cwt:{s}", l) for s in range(1, 6) for l in range(1, 21)}


def test_stage_subcommands(small_config, tmp_path):
    out = tmp_path / "stages"
    base = ["--config", str(small_config), "--out", str(out)]
    assert main(["synth", "--kind", "two-group", *base]) == 0
    assert main(["ingest", "--out", str(out), "--input", str(out / "two_group.csv"), "--format", "json"]) == 0
    groups = json.loads((out / "groups.json").read_text())
    assert len(groups) == 90
    assert main(["features", *base, "--transform", "dwt:2"]) == 0
    assert main(["rank", *base, "--method", "wilcoxon", "--top", "3"]) == 0
    assert main(["ga-select", *base, "--l-min", "2", "--l-max", "2", "--restarts", "1",
                 "--generations", "5", "--repeats", "1"]) == 0
    for cmd in ("km", "logrank"):
        assert main([cmd, *base, "--marker", "prot_017"]) == 0
    assert main(["cox", *base, "--covariate", "prot_017", "--covariate", "prot_052"]) == 0
    assert main(["bias", *base, "--demo", "--seeds", "3"]) == 0
    assert main(["bias", *base, "--delta", "1"]) == 0
    for name in ("pruned.csv", "features_dwt_2.csv", "ranked_cwt_3.csv", "ga.csv", "km.csv",
                 "km_prot_017.svg", "logrank.csv", "cox.csv", "bias_demo.csv", "bias.csv"):
        assert (out / name).exists(), name


def test_json_format_is_valid(small_config, tmp_path):
    out = tmp_path / "j"
    assert main(["logrank", "--config", str(small_config), "--out", str(out), "--marker", "prot_017",
                 "--format", "json"]) == 0
    rows = json.loads((out / "logrank.json").read_text())
    assert rows[0]["marker"] == "prot_017" and 0 <= rows[0]["p_value"] <= 1


def test_exit_codes_and_failed_marker(small_config, tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[ga]\nno_such_key = 1\n")
    assert main(["ingest", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CODES["config"]
    out = tmp_path / "fail"
    missing = tmp_path / "missing.csv"
    rc = main(["run", "--config", str(small_config), "--out", str(out), "--input", str(missing)])
    assert rc == EXIT_CODES["config"] and (out / "FAILED").exists()
    broken = tmp_path / "broken.csv"
    broken.write_text("survival_months,status,a\n12,dead,1\n-4,alive,2\n")
    rc = main(["ingest", "--config", str(small_config), "--out", str(out), "--input", str(broken)])
    assert rc == EXIT_CODES["ingest"]
    assert "ingest" in (out / "FAILED").read_text()
    assert "ingest failed" in capsys.readouterr().err
    rc = main(["km", "--config", str(small_config), "--out", str(out), "--marker", "not_a_marker"])
    assert rc != 0
    # a later success clears the marker
    assert main(["synth", "--config", str(small_config), "--out", str(out)]) == 0
    assert not (out / "FAILED").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "wavemark" in capsys.readouterr().out
