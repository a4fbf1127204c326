import json

import pytest

from tokenlab import cli
from tokenlab import scenario as sc


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def write(tmp_path, obj, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


BASE = {"name": "t", "system": "utxo", "centralisation": "centralised", "privacy": "transparent", "seed": 1, "script": []}


@pytest.mark.parametrize("path", sc.bundled_scenarios(), ids=lambda p: p.stem)
def test_bundled_scenarios_validate(path, capsys):
    assert cli.main(["validate", str(path)]) == 0


def test_quadrant_coverage():
    covered = set()
    for path in sc.bundled_scenarios():
        s = sc.load_scenario(path)
        covered.add((s["system"], s["centralisation"], s.get("privacy", "transparent")))
    assert covered == set(sc.QUADRANTS)


def test_out_of_scope_quadrant(tmp_path, capsys):
    p = write(tmp_path, dict(BASE, centralisation="decentralised", privacy="private"))
    assert cli.main(["validate", str(p)]) == 2
    assert "out-of-scope quadrant" in capsys.readouterr().err


def test_missing_seed(tmp_path, capsys):
    obj = dict(BASE)
    del obj["seed"]
    assert cli.main(["validate", str(write(tmp_path, obj))]) == 2
    assert "seed required" in capsys.readouterr().err


def test_parse_error_has_line_number(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    assert cli.main(["validate", str(p)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_violations_name_the_step(tmp_path, capsys):
    obj = dict(BASE, script=[{"action": "mint", "id": "m", "outputs": []}, {"action": "teleport"}])
    assert cli.main(["validate", str(write(tmp_path, obj))]) == 2
    err = capsys.readouterr().err
    assert "script step 2" in err and "teleport" in err


def test_mitigation_must_match_centralisation(tmp_path):
    obj = dict(BASE, system="uso", mitigation="dlt")
    assert any("mitigation" in v for v in sc.validate_scenario(obj))


def test_double_spend_utxo_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(sc.BUNDLED_DIR / "double_spend_utxo.json"), "--out", str(out)]) == 0
    summary = json.loads((out / "reports" / "summary.json").read_text())
    assert summary["outcomes"]["spend"] == {"ok": 1, "REJECTED_DOUBLE_SPEND": 1}


def test_equivocation_mitigated_has_finding(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(sc.BUNDLED_DIR / "equivocation_uso_mitigated.json"), "--out", str(out)]) == 0
    audit = json.loads((out / "reports" / "equivocation_audit.json").read_text())
    assert audit["status"] == "FINDINGS" and len(audit["findings"]) == 1


def test_unexpected_outcome_exit_3(tmp_path, capsys):
    obj = json.loads((sc.BUNDLED_DIR / "vouchers.json").read_text())
    obj["script"][1]["expect"] = "REJECTED_DOUBLE_SPEND"
    assert cli.main(["run", str(write(tmp_path, obj)), "--out", str(tmp_path / "o")]) == 3
    assert "step 2 (spend)" in capsys.readouterr().err


def test_no_quorum_is_reported_per_step(tmp_path, capsys):
    obj = json.loads((sc.BUNDLED_DIR / "no_quorum.json").read_text())
    del obj["script"][0]["expect"]
    assert cli.main(["run", str(write(tmp_path, obj)), "--out", str(tmp_path / "o")]) == 3
    assert "step 1 (issue): expected ok, got REJECTED_NO_QUORUM" in capsys.readouterr().err


def test_seed_42_twice_identical(tmp_path, capsys):
    path = str(sc.BUNDLED_DIR / "uso_mitigated.json")
    cli.main(["run", path, "--out", str(tmp_path / "a"), "--seed", "42"])
    cli.main(["run", path, "--out", str(tmp_path / "b"), "--seed", "42"])
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and json.loads(a["scenario.json"])["seed"] == 42


def test_seed_changes_output(tmp_path, capsys):
    path = str(sc.BUNDLED_DIR / "vouchers.json")
    cli.main(["run", path, "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["run", path, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert tree_bytes(tmp_path / "a")["ledger.log"] != tree_bytes(tmp_path / "b")["ledger.log"]


def test_report_reemits_identical_files(tmp_path, capsys):
    out = tmp_path / "o"
    cli.main(["run", str(sc.BUNDLED_DIR / "equivocation_uso_mitigated.json"), "--out", str(out)])
    before = tree_bytes(out)
    for f in ("linkage.json", "equivocation_audit.json", "ledger_audit.json"):
        (out / "reports" / f).unlink()
    assert cli.main(["report", str(out)]) == 0
    assert tree_bytes(out) == before


def test_report_rejects_non_run_dir(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2


def test_output_layout(tmp_path, capsys):
    out = tmp_path / "o"
    cli.main(["run", str(sc.BUNDLED_DIR / "uso_standard.json"), "--out", str(out)])
    names = set(tree_bytes(out))
    assert {"ledger.log", "scenario.json", "transcripts/events.jsonl", "reports/summary.json", "reports/growth.csv"} <= names
