import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from ruintime.cli import (EXIT_CHECK, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, SCHEMA_VERSION, main)
from ruintime.model import gamma_logpdf

pytestmark = pytest.mark.filterwarnings("ignore::ruintime.NetProfitWarning")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    meta = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            lines.append(line)
    return meta, list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_exit_code_constants():
    assert (EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC) == (0, 1, 2, 3)


def test_prob_csv(capsys):
    code, out, _ = run(capsys, "prob", "--t", "20")
    assert code == 0
    meta, rows = parse_csv(out)
    assert meta["u"] == "0.0" and meta["c"] == "1.1" and meta["family"] == "gamma"
    assert list(rows[0]) == ["t", "psi", "abs_error_estimate", "evaluations"]
    assert float(rows[0]["psi"]) == pytest.approx(0.7973108850, abs=1e-9)


def test_prob_json_schema(capsys):
    code, out, _ = run(capsys, "prob", "--t", "0", "--out", "json")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"schema_version", "command", "parameters", "results", "warnings"}
    assert doc["schema_version"] == SCHEMA_VERSION and doc["command"] == "prob"
    assert doc["results"]["psi"] == 0.0


def test_density_rows_and_mass(capsys):
    code, out, _ = run(capsys, "density", "--t-max", "100", "--dt", "0.1", "--u", "0")
    assert code == 0
    _, rows = parse_csv(out)
    assert len(rows) == 1000
    # mass check on a finer grid, where the trapezoid end correction is ~3e-5
    _, out, _ = run(capsys, "density", "--t-max", "100", "--dt", "0.01", "--u", "0")
    _, rows = parse_csv(out)
    t = np.array([float(r["t"]) for r in rows])
    p = np.array([float(r["density"]) for r in rows])
    _, prob_out, _ = run(capsys, "prob", "--t", "100", "--out", "json")
    psi = json.loads(prob_out)["results"]["psi"]
    # p(0+) = 0 here since u = 0 and f0(0) = 0
    assert np.trapezoid(np.concatenate([[0.0], p]), np.concatenate([[0.0], t])) == pytest.approx(psi, abs=1e-3)


def test_net_profit_warning_is_reported(capsys):
    code, out, _ = run(capsys, "prob", "--t", "5", "--c", "0.5", "--out", "json")
    assert code == 0
    assert any("net profit" in w for w in json.loads(out)["warnings"])


@pytest.mark.parametrize("argv", [
    ["density", "--t-max", "0"],
    ["density", "--t-max", "10", "--dt", "-1"],
    ["prob", "--t", "-1"],
    ["prob", "--t", "1", "--u", "-3"],
    ["prob", "--t", "1", "--family", "mixedexp", "--p", "0.5"],
    ["prob", "--t", "1", "--family", "tabulated"],
    ["prob", "--t", "1", "--delay", "file"],
    ["simulate", "--paths", "0"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert err.strip()


@pytest.mark.parametrize("argv", [["prob"], ["verify", "--only", "no_such_check"], ["prob", "--t", "x"]])
def test_argparse_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_USAGE


def _write_gamma_csv(path, header=True, skew=False):
    dt = 0.005
    t = dt * np.arange(6001)
    if skew:
        t[5] += 0.003
    v = np.exp(gamma_logpdf(2, 2, t))
    with open(path, "w") as fh:
        if header:
            fh.write("t,density\n")
        for a, b in zip(t, v):
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def test_tabulated_density_file(tmp_path, capsys):
    f = tmp_path / "g.csv"
    _write_gamma_csv(f)
    _, ref, _ = run(capsys, "prob", "--t", "20", "--out", "json")
    code, out, _ = run(capsys, "prob", "--t", "20", "--family", "tabulated", "--density-file", str(f), "--out", "json")
    assert code == 0
    assert json.loads(out)["results"]["psi"] == pytest.approx(json.loads(ref)["results"]["psi"], abs=1e-4)
    g = tmp_path / "nohead.csv"
    _write_gamma_csv(g, header=False)
    assert run(capsys, "prob", "--t", "5", "--family", "tabulated", "--density-file", str(g))[0] == 0


def test_bad_density_files(tmp_path, capsys):
    f = tmp_path / "skew.csv"
    _write_gamma_csv(f, skew=True)
    code, _, err = run(capsys, "prob", "--t", "5", "--family", "tabulated", "--density-file", str(f))
    assert code == EXIT_USAGE and "uniform" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("t,density\n0,1\n0.5,x\n")
    assert run(capsys, "prob", "--t", "5", "--family", "tabulated", "--density-file", str(bad))[0] == EXIT_USAGE
    missing = tmp_path / "missing.csv"
    assert run(capsys, "prob", "--t", "5", "--family", "tabulated", "--density-file", str(missing))[0] == EXIT_USAGE


def test_table1_check_and_negative_control(capsys):
    code, out, _ = run(capsys, "table1", "--check")
    assert code == EXIT_OK
    _, rows = parse_csv(out)
    assert len(rows) == 5 and len(rows[0]) == 7
    code, _, err = run(capsys, "table1", "--check", "--quad-tol", "1e-2")
    assert code == EXIT_CHECK
    assert "tolerance too loose" in err


def test_simulate_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--paths", "5000", "--horizon", "10", "--bin-width", "5",
                       "--threads", "1", "--out", "json")
    assert code == 0
    res = json.loads(out)["results"]
    assert res["ruined_count"] + res["survived_count"] == 5000
    assert len(res["counts"]) == 2 and res["bin_edges"] == [0.0, 5.0, 10.0]
    code, out, _ = run(capsys, "simulate", "--paths", "5000", "--horizon", "10", "--bin-width", "5")
    meta, rows = parse_csv(out)
    assert meta["seed"] == "0" and len(rows) == 2


def test_moments(capsys):
    code, out, _ = run(capsys, "moments", "--delay", "stationary", "--out", "json")
    assert code == 0
    r = json.loads(out)["results"]
    assert r["mean_T0"] == pytest.approx(0.75) and r["var_T0"] == pytest.approx(0.4375)
    assert r["net_profit"] is True


def test_verify_list_and_injection(capsys):
    code, out, _ = run(capsys, "verify", "--list")
    assert code == 0 and "eta_vs_kummer" in out
    code, out, _ = run(capsys, "verify", "--only", "bessel_identity", "--only", "eta_vs_kummer")
    _, rows = parse_csv(out)
    assert code == 0 and [r["passed"] for r in rows] == ["true", "true"]
    code, out, _ = run(capsys, "verify", "--only", "eta_vs_kummer", "--inject-error", "eta")
    _, rows = parse_csv(out)
    assert code == EXIT_CHECK and rows[0]["passed"] == "false"


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ruintime.cli", "prob", "--t", "1"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "psi" in proc.stdout
