import csv
import filecmp
import json
import shutil
from pathlib import Path

import pytest

from veremi_bench.cli import main
from veremi_bench.traceio import BeaconRecord, list_logs, read_log_file

FIXTURES = Path(__file__).parent / "fixtures"
QUICK = ["--duration", "10", "--jobs", "1"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(same_tree(Path(a) / d, Path(b) / d) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--out", str(out), "--seed", "1", "--attacker-type", "8",
                 "--attacker-fraction", "0.3", *QUICK]) == 0
    return out / "low-a8-f0.3-s1"


def test_generate_one_run(generated):
    assert generated.is_dir()
    manifest = json.loads((generated / "manifest.json").read_text())
    assert manifest["attackerType"] == 8 and manifest["scenario"]["durationSeconds"] == 10.0
    assert 35 <= len(list_logs(generated)) <= 39


def test_bad_fraction_exit_2(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--attacker-fraction", "1.5"]) == 2
    assert "attacker-fraction" in capsys.readouterr().err


def test_bad_values_exit_2(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--attacker-type", "3"]) == 2
    assert main(["generate", "--out", str(tmp_path), "--density", "huge"]) == 2
    assert main(["generate", "--out", str(tmp_path), "--seed", "one"]) == 2
    assert main(["generate", "--out", str(tmp_path), "--comm-range", "-5"]) == 2


def test_full_sweep_is_225_runs(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--dry-run",
                 "--density", "low,medium,high", "--attacker-fraction", "0.1,0.2,0.3",
                 "--attacker-type", "1,2,4,8,16", "--seed", "0,1,2,3,4"]) == 0
    listed = capsys.readouterr().out.split()
    assert len(listed) == len(set(listed)) == 225
    assert not any(tmp_path.iterdir())


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "bench.ini"
    cfg.write_text("[scenario]\nseed = 4\nattacker-type = 2\nduration = 5\n"
                   "[attack]\nconstant-offset = 100, 0\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--seed", "6", "--jobs", "1"]) == 0
    run = tmp_path / "o" / "low-a2-f0.1-s6"
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["attack"]["constantOffset"] == [100.0, 0.0, 0.0]
    assert manifest["scenario"]["durationSeconds"] == 5.0


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nspeed = 3\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("[attack]\nseed = 3\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["generate", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 1


def test_existing_run_needs_overwrite(generated, tmp_path):
    out = tmp_path / "g"
    args = ["generate", "--out", str(out), "--seed", "1", "--attacker-type", "8",
            "--attacker-fraction", "0.3", *QUICK]
    assert main(args) == 0
    assert main(args) == 1
    assert main(args + ["--overwrite"]) == 0
    assert same_tree(out / generated.name, generated)


def test_detect_counts_and_determinism(generated, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    assert main(["detect", str(run), "--jobs", "1"]) == 0
    lines = (run / "verdicts.csv").read_text().splitlines()
    beacons = sum(isinstance(r, BeaconRecord)
                  for p in list_logs(run).values() for r in read_log_file(p))
    assert len(lines) - 1 == beacons * 26
    first = (run / "verdicts.csv").read_bytes()
    assert main(["detect", str(run), "--jobs", "1", "--backend", "python"]) == 0
    assert (run / "verdicts.csv").read_bytes() == first


def test_detect_threshold_flags(generated, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    assert main(["detect", str(run), "--art-thresholds", "450", "--saw-thresholds", "25",
                 "--ssc-thresholds", "5", "--dmv-thresholds", "1,2", "--jobs", "1"]) == 0
    dets = {tuple(r[3:5]) for r in csv.reader(open(run / "verdicts.csv"))}
    assert dets - {("detector", "threshold")} == {
        ("ART", "450.0"), ("SAW", "25.0"), ("SSC", "5.0"), ("DMV", "1.0"), ("DMV", "2.0")}


def test_detect_empty_dir_exit_3(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["detect", str(tmp_path / "empty"), "--jobs", "1"]) == 3
    assert main(["detect", str(tmp_path / "empty"), "--external", "--jobs", "1"]) == 3


def test_detect_bad_log_names_file_and_line(generated, tmp_path, capsys):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    path = next(iter(list_logs(run).values()))
    lines = path.read_text().splitlines()
    lines[3] = lines[3].replace('"pos"', '"place"')
    path.write_text("\n".join(lines) + "\n")
    assert main(["detect", str(run), "--jobs", "1"]) == 3
    err = capsys.readouterr().err
    assert path.name in err and "line 4" in err and "pos" in err


def test_external_data(tmp_path):
    run = tmp_path / "published"
    run.mkdir()
    src = FIXTURES / "published"
    shutil.copy(src / "JSONlog-13-7-A0.json", run / "log-13.jsonl")
    shutil.copy(src / "traceGroundTruthJSON-7.json", run / "groundtruth.jsonl")
    assert main(["detect", str(run), "--jobs", "1"]) == 3
    assert main(["detect", str(run), "--external", "--jobs", "1"]) == 0
    assert main(["report", str(run), "--out", str(tmp_path / "rep"), "--jobs", "1"]) == 3
    assert main(["report", str(run), "--external", "--out", str(tmp_path / "rep"),
                 "--jobs", "1"]) == 0
    conf = rows(tmp_path / "rep" / "confusion.csv")
    assert {r["density"] for r in conf} == {"external"}
    assert {r["attackerFraction"] for r in conf} == {"undefined"}
    art450 = next(r for r in conf if r["detector"] == "ART" and r["threshold"] == "450.0")
    assert (art450["tp"], art450["fp"], art450["tn"], art450["fn"]) == ("1", "0", "2", "0")


def test_report_needs_verdicts(generated, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    assert main(["report", str(run), "--out", str(tmp_path / "r"), "--jobs", "1"]) == 3


def test_report_scope_flag(generated, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    assert main(["detect", str(run), "--jobs", "1"]) == 0
    assert main(["report", str(run), "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert main(["report", str(run), "--out", str(tmp_path / "b"), "--jobs", "1",
                 "--include-attacker-receivers"]) == 0
    narrow, wide = rows(tmp_path / "a" / "confusion.csv"), rows(tmp_path / "b" / "confusion.csv")
    assert len(narrow) == len(wide) == 26
    for n, w in zip(narrow, wide):
        tn = sum(int(n[k]) for k in ("tp", "fp", "tn", "fn"))
        tw = sum(int(w[k]) for k in ("tp", "fp", "tn", "fn"))
        assert tw >= tn
    pr = rows(tmp_path / "a" / "pr.csv")
    assert {r["seedCount"] for r in pr} == {"1"}
    assert {r["precisionStd"] for r in pr} == {"undefined"}


def test_pipeline_equals_composed_commands(tmp_path):
    flags = ["--seed", "2,3", "--attacker-type", "16", "--duration", "10"]
    assert main(["pipeline", "--out", str(tmp_path / "p"), "--jobs", "2", *flags]) == 0
    comp = tmp_path / "c"
    assert main(["generate", "--out", str(comp / "runs"), "--jobs", "1", *flags]) == 0
    assert main(["detect", str(comp / "runs"), "--jobs", "1"]) == 0
    assert main(["report", str(comp / "runs"), "--out", str(comp / "report"), "--jobs", "1"]) == 0
    assert same_tree(tmp_path / "p", comp)
    pr = rows(tmp_path / "p" / "report" / "pr.csv")
    assert {r["seedCount"] for r in pr} == {"2"}


def test_pipeline_golden(tmp_path):
    """Report CSVs are pinned to files captured from the first verified run."""
    assert main(["pipeline", "--out", str(tmp_path), "--seed", "5", "--attacker-type", "2",
                 "--attacker-fraction", "0.3", "--duration", "20", "--jobs", "1"]) == 0
    golden = FIXTURES / "golden"
    for name in ("pr.csv", "gini.csv", "confusion.csv", "pr_curves.csv"):
        assert (tmp_path / "report" / name).read_bytes() == (golden / name).read_bytes(), name


def test_detect_records_thresholds_in_manifest(generated, tmp_path):
    run = tmp_path / "run"
    shutil.copytree(generated, run)
    assert main(["detect", str(run), "--dmv-thresholds", "2", "--jobs", "1"]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["detector"]["DMV"] == [2.0]
    assert manifest["seed"] == 1
