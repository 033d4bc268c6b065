import json
import subprocess
import sys

import pytest

from attacktree.cli import run_cli

from conftest import ASSETS, LAYERED, MIT_LAYERED, MIT_SOA, SOA


def test_eval_root():
    status, out, _ = run_cli(["eval", str(LAYERED), "--tree", "C.1.1"])
    assert status == 0
    assert "| C.1.1: | 2/1/8" in out


def test_eval_all_nodes_structured():
    status, out, _ = run_cli(["eval", str(SOA), "--tree", "E.2.2", "--all-nodes", "--format", "structured"])
    doc = json.loads(out)
    assert status == 0 and doc["version"] == 1
    nodes = {n["node"]: n for n in doc["report"]["nodes"]}
    assert nodes["E.2.2:"]["computed"] == {"effort": 2, "risk": 1, "gain": 7}


def test_audit_exit_one():
    status, out, _ = run_cli(["audit", str(LAYERED)])
    assert status == 1
    assert "C.1.1:4.1" in out and "7/1/7" in out and "6/1" in out


def test_audit_clean_tree():
    status, _, _ = run_cli(["audit", str(LAYERED), "--tree", "C.7.1"])
    assert status == 0


def test_validate(tmp_path):
    assert run_cli(["validate", str(LAYERED)])[:2] == (0, "13 trees, no violations\n")
    empty = tmp_path / "empty.atk"
    empty.write_text("")
    status, out, _ = run_cli(["validate", str(empty)])
    assert (status, out) == (0, "no trees found\n")


def test_validate_findings(tmp_path):
    path = tmp_path / "gap.atk"
    path.write_text("tree: A\ntitle: t\nasset: a\nproperty: integrity\ngoal: G\n1. leaf\n")
    status, out, _ = run_cli(["validate", str(path)])
    assert status == 1 and "UnannotatedLeaf" in out


def test_parse_error_exit_two(tmp_path):
    path = tmp_path / "bad.atk"
    path.write_text("tree: A\ntitle: t\nasset: a\nproperty: integrity\ngoal: G\n1. a [0/1/1]\n")
    status, out, err = run_cli(["eval", str(path)])
    assert status == 2 and out == ""
    assert "ATK102" in err and "bad.atk:6:" in err


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["eval"],
    ["compare", str(LAYERED)],
    ["compare", str(LAYERED), str(SOA), "--threshold", "-1"],
    ["eval", str(LAYERED), "--format", "yaml"],
    ["mitigate", str(LAYERED)],
    ["export", str(LAYERED)],
    ["eval", str(LAYERED), "--tree", "Q.9"],
    ["eval", "/no/such/file.atk"],
])
def test_usage_errors(argv, capsys):
    status, _, _ = run_cli(argv)
    assert status == 2


def test_mitigate():
    status, out, _ = run_cli(["mitigate", str(LAYERED), "--tree", "C.2.2", "--mitigate", str(MIT_LAYERED)])
    assert status == 0
    assert "5/1/7" in out and "C.2.2:5.2" in out


def test_mitigate_structured():
    status, out, _ = run_cli(["mitigate", str(SOA), "--tree", "E.1.1", "--mitigate", str(MIT_SOA),
                              "--format", "structured"])
    doc = json.loads(out)
    (report,) = doc["report"]["what_if"]
    assert report["after"]["summary"]["effort"] == 4 and report["after"]["locus"] == "system"


def test_unknown_mitigation_node(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("C.1.1:99\n")
    status, _, err = run_cli(["dominant", str(LAYERED), "--mitigate", str(path)])
    assert status == 2 and "C.1.1:99" in err


def test_compare():
    argv = ["compare", str(LAYERED), str(SOA), "--mitigate", str(MIT_LAYERED), "--mitigate", str(MIT_SOA)]
    status, out, _ = run_cli(argv)
    assert status == 0 and "risk −1" in out
    status, _, _ = run_cli(argv + ["--threshold", "0"])
    assert status == 1


def test_coverage():
    status, out, _ = run_cli(["coverage", str(ASSETS), str(SOA)])
    assert status == 0 and "13/13" in out


def test_coverage_missing(tmp_path):
    status, _, _ = run_cli(["coverage", str(ASSETS), str(tmp_path / "none.atk")])
    assert status == 2
    (tmp_path / "one.atk").write_text(LAYERED.read_text(encoding="utf-8").split("tree: C.1.2")[0])
    status, out, _ = run_cli(["coverage", str(ASSETS), str(tmp_path / "one.atk")])
    assert status == 1 and "MISSING" in out


def test_dominant():
    status, out, _ = run_cli(["dominant", str(LAYERED), "--tree", "C.1.1", "--mitigate", str(MIT_LAYERED)])
    assert status == 0 and "C.1.1:4.3.3.4" in out and "environment" in out


def test_export(tmp_path):
    status, out, _ = run_cli(["export", str(LAYERED), "--tree", "C.7.1"])
    assert status == 0 and out.count('xlabel="AND"') == 1
    target = tmp_path / "forest.atk.json"
    status, out, _ = run_cli(["export", str(LAYERED), "--format", "structured", "--out", str(target)])
    assert status == 0 and out == ""
    status, out, _ = run_cli(["eval", str(target), "--tree", "C.1.1"])
    assert "2/1/8" in out


def test_out_file(tmp_path):
    target = tmp_path / "audit.md"
    status, out, _ = run_cli(["audit", str(LAYERED), "--out", str(target)])
    assert status == 1 and out == ""
    assert "C.1.1:4.1" in target.read_text(encoding="utf-8")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "attacktree", "eval", str(LAYERED), "--tree", "C.2.2"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "2/1/7" in proc.stdout
