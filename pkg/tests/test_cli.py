import csv
import hashlib
import io
import json
import math
import subprocess
import sys

import pytest

from robinheat import cli


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_eigen_flat_ball(capsys):
    code, out, _ = run(["eigen", "--family", "real", "--dim", "3", "--kappa", "0", "--radius", "1", "--alpha", "1"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["results"]["lambda1"] == pytest.approx(math.pi**2 / 4, abs=1e-4)
    assert doc["command"] == "eigen"


def test_eigen_dirichlet_csv(capsys):
    code, out, _ = run(["eigen", "--dim", "2", "--alpha", "inf", "--grid", "1025", "--modes", "3", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["index", "lambda"]
    assert float(rows[1][1]) == pytest.approx(5.783186, abs=1e-3)


def test_negative_alpha_rejected(capsys):
    code, out, err = run(["eigen", "--alpha", "-1"], capsys)
    assert code == 2
    assert out == ""
    assert "alpha" in err


def test_negative_alpha_allowed_with_flag(capsys):
    code, out, err = run(["eigen", "--alpha", "-1", "--grid", "257", "--allow-negative-alpha"], capsys)
    assert code == 0
    assert "warning" in err
    assert json.loads(out)["results"]["lambda1"] < 0


def test_negative_alpha_never_allowed_for_compare(capsys):
    code, _, _ = run(["compare", "--preset", "sphere-vs-flat", "--alpha", "-1"], capsys)
    assert code == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["eigen", "--grid", "10"],
        ["eigen", "--kappa", "1", "--radius", "4"],
        ["eigen", "--modes", "0"],
        ["kernel", "--times", "0.2,0.1"],
        ["kernel", "--method", "timestep", "--mollifier", "-1"],
        ["compare", "--lhs-kappa", "1"],
        ["suite", "--only", "12"],
    ],
)
def test_invalid_arguments_exit_two(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err.startswith("robinheat: error:")


def test_unknown_choice_is_an_argparse_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["eigen", "--family", "octonion"])
    assert exc.value.code == 2


def test_kernel_command_spectral_and_timestep(capsys):
    code, out, _ = run(["kernel", "--alpha", "0", "--grid", "513", "--times", "0.05,0.5"], capsys)
    assert code == 0
    doc = json.loads(out)["results"]
    assert doc["mass"] == pytest.approx([1.0, 1.0], abs=1e-6)
    code, out, _ = run(["kernel", "--grid", "513", "--times", "0.05,0.5", "--method", "timestep"], capsys)
    assert code == 0
    assert json.loads(out)["results"]["provenance"] == "TimeStepped"


def test_compare_preset_sphere_vs_flat(capsys):
    code, out, _ = run(["compare", "--preset", "sphere-vs-flat", "--grid", "1025"], capsys)
    assert code == 0
    reports = json.loads(out)["results"]
    assert reports and all(r["verdict"] == "pass" for r in reports)


def test_compare_custom_not_applicable_exits_two(capsys):
    argv = ["compare", "--dim", "3", "--kappa", "1", "--radius", "0.7", "--lhs-kappa", "0", "--grid", "513"]
    code, out, _ = run(argv + ["--hypothesis", "RicciLower", "--direction", "LhsGeq"], capsys)
    assert code == 2
    assert {r["verdict"] for r in json.loads(out)["results"]} == {"not-applicable"}


def test_compare_custom_pass(capsys):
    argv = ["compare", "--dim", "3", "--kappa", "-1", "--lhs-kappa", "0", "--grid", "513", "--times", "0.05,0.2,1"]
    code, out, _ = run(argv + ["--hypothesis", "RicciLower", "--direction", "LhsGeq"], capsys)
    assert code == 0


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"dim": 3, "alpha": 2.0, "grid": 513, "modes": 4}, indent=1))
    code, out, _ = run(["eigen", "--config", str(cfg), "--alpha", "1"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["alpha"] == 1.0
    assert doc["config"]["grid"] == 513
    assert len(doc["results"]["lambdas"]) == 4


@pytest.mark.parametrize(
    "text, line",
    [
        ('{\n  "dim": 3,\n  "alpha": ,\n}', 3),
        ('{\n  "dim": 3,\n  "colour": 1\n}', 3),
        ('{\n  "grid": 2.5\n}', 2),
        ('{\n  "dim": 3,\n\n  "alpha": "soon"\n}', 4),
    ],
)
def test_config_errors_report_line(tmp_path, capsys, text, line):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    code, _, err = run(["eigen", "--config", str(cfg)], capsys)
    assert code == 2
    assert f"{cfg}:{line}:" in err


def test_output_file_and_env_directory(tmp_path, monkeypatch, capsys):
    dest = tmp_path / "sub" / "eig.json"
    code, out, _ = run(["eigen", "--grid", "257", "--out", str(dest)], capsys)
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["results"]["lambda1"] > 0
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    code, _, _ = run(["eigen", "--grid", "257", "--format", "csv"], capsys)
    assert code == 0
    assert (tmp_path / "env" / "eigen.csv").read_text().startswith("index,lambda")
    assert not list((tmp_path / "env").glob(".*tmp"))


def test_same_seed_gives_identical_reports(tmp_path, capsys):
    digests = []
    for i in range(2):
        dest = tmp_path / f"run{i}.json"
        argv = ["compare", "--preset", "transplant-gamma-sweep", "--draws", "3", "--grid", "513", "--seed", "7"]
        assert run(argv + ["--out", str(dest)], capsys)[0] == 0
        doc = json.loads(dest.read_text())
        doc["config"].pop("out")
        for rep in doc["results"]:
            rep.pop("timing", None)
        digests.append(hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest())
    assert digests[0] == digests[1]


def test_suite_subset(capsys):
    code, out, err = run(["suite", "--only", "1,7", "--grid", "2049"], capsys)
    assert code == 0
    assert "[PASS] criterion  1" in err and "[PASS] criterion  7" in err
    assert [r["number"] for r in json.loads(out)["results"]] == [1, 7]


@pytest.mark.parametrize(
    "text, value",
    [("inf", math.inf), ("Dirichlet", math.inf), ("0.5", 0.5), ("-2", -2.0)],
)
def test_parse_alpha(text, value):
    assert cli.parse_alpha(text) == value


def test_parse_lists():
    assert cli.parse_float_list("0.1, 0.2,1") == [0.1, 0.2, 1.0]
    assert cli.parse_int_list("1,3") == [1, 3]


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "robinheat.cli", "eigen", "--grid", "257", "--modes", "2"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["lambda1"] == pytest.approx(math.pi**2 / 4, rel=1e-4)
