import json
import subprocess
import sys

import pytest

from zetasdp.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, _parse_sweep, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_invalid_kind_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--kind", "Zeta", "--d", "4"])
    assert exc.value.code == EXIT_USAGE


def test_parse_sweep():
    assert _parse_sweep("d=4..12") == [4, 6, 8, 10, 12]
    assert _parse_sweep("4..8") == [4, 6, 8]
    assert _parse_sweep("3..9:3") == [3, 6, 9]


def test_baseline_table(capsys):
    code, out, err = run_cli(capsys, "baseline")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].split()[0] == "function"
    hat = lines[1].split()
    assert hat[0] == "Hat"
    assert hat[1].startswith("1.3333")  # Z
    assert hat[2].startswith("1.3333")  # ZTilde
    assert hat[3].startswith("1.0833")  # L = 13/12
    assert hat[4].startswith("0.9166")  # 2 - L
    assert hat[6].startswith("0.6695")  # refined Montgomery threshold
    selberg = lines[2].split()
    assert selberg[0] == "Selberg"
    assert float(selberg[1]) > 4 / 3  # Selberg is weaker than Hat for Z


def test_report_from_bound(capsys):
    code, out, err = run_cli(capsys, "report", "--kind", "Z", "--bound", "1.3208")
    assert code == EXIT_OK
    assert "RH" in out
    assert "0.6792" in out
    assert "0.8477" in out


def test_report_machine_style(capsys):
    code, out, err = run_cli(capsys, "report", "--kind", "Z1", "--bound", "1.1175", "--style", "machine")
    assert code == EXIT_OK
    rec = json.loads(out)
    printed = {d["name"]: d["printed"] for d in rec["derived"]}
    assert printed["xi_prime_simple_proportion"] == "0.8825"
    assert printed["xi_prime_distinct_proportion"] == "0.9412"


def test_report_needs_input(capsys):
    code, out, err = run_cli(capsys, "report", "--kind", "Z")
    assert code == EXIT_USAGE


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "Z-3.txt"
    proc = subprocess.run(
        [sys.executable, "-m", "zetasdp.cli", "solve", "--kind", "Z", "--d", "3", "--out", str(out)],
        capture_output=True,
        text=True,
        timeout=600,
    )
    return proc, out


def test_solve_writes_verified_certificate(solved):
    proc, out = solved
    assert proc.returncode == EXIT_OK, proc.stderr
    assert out.exists()
    # stdout carries machine lines only
    lines = [l for l in proc.stdout.splitlines() if l.strip()]
    assert len(lines) == 1
    rec = json.loads(lines[0])
    assert rec["verified"] is True
    assert float(rec["bound"][1]) < 4 / 3
    assert rec["report"]["hypothesis"] == "RH"


def test_verify_cli_roundtrip(solved, capsys):
    proc, out = solved
    code, stdout, err = run_cli(capsys, "verify", "--cert", str(out), "--kind", "Z", "--d", "3")
    assert code == EXIT_OK
    rec = json.loads(stdout)
    assert rec["ok"] is True and rec["test_passed"] is True


def test_verify_detects_tampering(solved, capsys, tmp_path):
    proc, out = solved
    text = out.read_text().splitlines()
    # flip the sign of the whole X3 line (line 3 of the data: header + R + X2 + X3)
    vals = text[3].split()
    text[3] = " ".join(("-" + v if not v.startswith("-") else v[1:]) for v in vals)
    bad = tmp_path / "tampered.txt"
    bad.write_text("\n".join(text) + "\n")
    code, stdout, err = run_cli(capsys, "verify", "--cert", str(bad))
    assert code == EXIT_VERIFY
    rec = json.loads(stdout)
    assert rec["ok"] is False
    assert "pd_X3" in [c["name"] for c in rec["checks"] if not c["passed"]]


def test_verify_d_mismatch_is_io_error(solved, capsys):
    proc, out = solved
    code, stdout, err = run_cli(capsys, "verify", "--cert", str(out), "--d", "5")
    assert code == EXIT_IO


def test_verify_missing_file(capsys):
    code, stdout, err = run_cli(capsys, "verify", "--cert", "/nonexistent/cert.txt")
    assert code == EXIT_IO


def test_report_from_certificate(solved, capsys):
    proc, out = solved
    code, stdout, err = run_cli(capsys, "report", "--cert", str(out))
    assert code == EXIT_OK
    assert "simple_zero_proportion" in stdout


def test_export_problem_file(capsys, tmp_path):
    dest = tmp_path / "problem.sdpa"
    code, stdout, err = run_cli(
        capsys, "export", "--kind", "Z", "--d", "2", "--R", "1.3", "--out", str(dest)
    )
    assert code == EXIT_OK
    from zetasdp.certio import read_problem

    prob = read_problem(str(dest))
    assert len(prob.rows) == 8
    # threshold kinds need lambda and get the slack block
    dest2 = tmp_path / "problem-p.sdpa"
    code, stdout, err = run_cli(
        capsys, "export", "--kind", "P", "--d", "2", "--R", "1.1", "--lam", "0.65", "--out", str(dest2)
    )
    assert code == EXIT_OK
    prob2 = read_problem(str(dest2))
    assert [n for n, _ in prob2.blocks][-1] == "slack_p"


def test_config_file_and_env_override(tmp_path, capsys, monkeypatch):
    cfgfile = tmp_path / "settings.cfg"
    cfgfile.write_text("precision = 192\nseries_k = 10  # comment\n")
    from zetasdp.cli import load_settings

    s = load_settings(str(cfgfile), {})
    assert s["precision"] == 192 and s["series_k"] == 10
    monkeypatch.setenv("ZETASDP_PRECISION", "320")
    s = load_settings(str(cfgfile), {})
    assert s["precision"] == 320
    s = load_settings(str(cfgfile), {"precision": 288})
    assert s["precision"] == 288
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense == 3\n")
    with pytest.raises(ValueError):
        load_settings(str(bad), {})
