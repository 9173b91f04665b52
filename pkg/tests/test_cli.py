import csv
import io
import json
import subprocess
import sys

import pytest

from gradedcoalg import ctmc
from gradedcoalg.cli import main


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


R4 = ("--builtin", "repairable4", "--lambda", "1", "--mu", "1")


def test_kernel_identity_from_file(tmp_path):
    path = tmp_path / "r4.json"
    ctmc.save_model(ctmc.repairable_4state(1, 1), path)
    code, text = run("kernel", "--model", str(path), "--time", "0", "--format", "json")
    assert code == 0
    data = json.loads(text)
    assert data[0]["time"] == "0"
    assert data[0]["matrix"] == [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]


def test_kernel_csv_rows():
    code, text = run("kernel", *R4, "--time", "1", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert code == 0 and len(rows) == 16
    stay = next(r for r in rows if r["from"] == "2" and r["to"] == "2")
    assert stay["weight"] == "0.32224655134"


def test_trace_outputs():
    assert run("trace", *R4, "--state", "2", "--word", "0:1")[1].strip() == "1|yes⟩"
    assert run("trace", *R4, "--state", "2", "--word", "")[1].strip() == "1|ε⟩"
    text = run("trace", *R4, "--state", "L", "--word", "0:2")[1].strip()
    assert text == "1/4|yesyes⟩ + 1/4|yesno⟩ + 1/4|noyes⟩ + 1/4|nono⟩"


def test_equiv_verdicts():
    code, text = run("equiv", *R4, "--mode", "trace", "--states", "0,2", "--format", "json")
    verdict = json.loads(text)
    assert code == 0 and verdict["kind"] == "Distinguished" and verdict["witness_word"] == "0:1"
    code, text = run("equiv", *R4, "--mode", "behavioural", "--states", "L,R", "--format", "json")
    assert json.loads(text)["kind"] == "EquivalentWitness"
    code, text = run("equiv", *R4, "--mode", "trace", "--states", "L,L", "--format", "json")
    assert json.loads(text)["kind"] == "IndistinguishableUpTo"


def test_equiv_across_models():
    code, text = run("equiv", *R4, "--mode", "behavioural", "--states", "L,1",
                     "--other-builtin", "repairable3", "--format", "json")
    assert code == 0 and json.loads(text)["kind"] == "EquivalentWitness"


@pytest.mark.parametrize("via", ["lumping", "logic"])
def test_quotient_file_reloads(tmp_path, via):
    out = tmp_path / f"q_{via}.json"
    code, text = run("quotient", *R4, "--via", via, "--output", str(out), "--format", "json")
    assert code == 0
    assert json.loads(text)["partition"] == [["0"], ["L", "R"], ["2"]]
    q = ctmc.load_model(out)
    assert q.generator.rates == ctmc.repairable_3state(1, 1).generator.rates


def test_quotient_of_walk_is_identity():
    code, text = run("quotient", "--builtin", "randomwalk", "--radius", "2", "--via", "lumping", "--format", "json")
    part = json.loads(text)["partition"]
    # the origin is alone; mirror sites are only lumped when rates are symmetric
    assert ["0"] in part


def test_eval_commands():
    code, text = run("eval", *R4, "--logic", "bool", "--formula", "(yes)_0.5 T", "--all", "--format", "json")
    assert json.loads(text) == {"0": False, "L": True, "R": True, "2": True}
    code, text = run("eval", *R4, "--logic", "quant", "--formula", "<1>(yes)T", "--state", "2", "--format", "json")
    assert abs(json.loads(text)["2"] - 0.56767) <= 1e-5
    code, text = run("eval", *R4, "--logic", "quant", "--formula", "T", "--all", "--format", "json")
    assert set(json.loads(text).values()) == {1}


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run("eval", *R4, "--logic", "quant", "--formula", "(yes)_0.5 T", "--state", "2")[0] == 2
    assert run("eval", *R4, "--logic", "bool", "--formula", "(yes", "--state", "2")[0] == 2
    assert run("kernel", "--model", str(tmp_path / "missing.json"), "--time", "1")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"states": ["a"], "rates": [[1]], "labels": ["x"], "obs": {"a": {"x": 1}}}))
    assert run("kernel", "--model", str(bad), "--time", "1")[0] == 2
    assert run("trace", *R4, "--state", "Q", "--word", "0:1")[0] == 2


def test_check_suites():
    code, text = run("check", "--suite", "chapman")
    assert code == 0 and "repairable4" in text
    code, text = run("check", "--suite", "monoid", "--mutate", "swap-label")
    assert code == 1 and "counterexample" in text


def test_output_is_deterministic():
    args = ("kernel", *R4, "--time", "0.1", "1", "5", "--format", "csv")
    assert run(*args)[1] == run(*args)[1]


def test_installed_script_runs():
    proc = subprocess.run([sys.executable, "-m", "gradedcoalg.cli", "trace", *R4, "--state", "0", "--word", "0:1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip() == "1|no⟩"


def test_full_check_passes():
    code, text = run("check")
    assert code == 0, text
    assert "11/11 suites passed" in text
