import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from fcount import __version__
from fcount.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_csv(text):
    meta, lines = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        else:
            lines.append(line)
    columns = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return meta, columns, rows


def usage_error(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        main(list(argv))
    assert exc.value.code == 2
    return capsys.readouterr().err


def test_moments_ppk_example(capsys):
    code, out, _ = run_cli(capsys, "moments", "--family", "ppk", "--k", "3", "--lambda", "1", "--t", "2", "--s", "1")
    assert code == 0
    meta, cols, rows = parse_csv(out)
    assert cols == ["quantity", "value", "standard_error"]
    vals = {r[0]: float(r[1]) for r in rows}
    assert vals["mean"] == 12.0
    assert vals["covariance"] == 14.0
    assert meta["tool"] == f"fcount {__version__}"
    assert meta["family"] == "PPk" and meta["k"] == 3 and meta["lam"] == 1.0
    assert "created" in meta


def test_pmf_reduction_to_poisson(capsys):
    _, out, _ = run_cli(capsys, "pmf", "--family", "pak", "--k", "1", "--rho", "0", "--mass", "2", "--m-max", "5")
    meta, cols, rows = parse_csv(out)
    assert cols == ["m", "probability"]
    probs = np.array([float(r[1]) for r in rows])
    np.testing.assert_allclose(probs, stats.poisson.pmf(np.arange(6), 2.0), rtol=1e-13)
    assert meta["family"] == "PAk"
    assert meta["summary.tail_mass_bound"] >= 1 - probs.sum() - 1e-15


@pytest.mark.parametrize(
    "argv",
    [
        ["--family", "fpak", "--k", "2", "--rho", "0.4", "--lambda", "1", "--alpha", "0.7"],
        ["--family", "fnppk", "--k", "2", "--rate", "weibull:b=1,c=2", "--alpha", "0.7"],
        ["--family", "nfpak", "--k", "2", "--rho", "0.3", "--rate", "makeham:b=1,c=1,mu=0.5", "--alpha", "0.8"],
        ["--family", "npak", "--k", "3", "--rho", "0.3", "--rate", "constant:1.5"],
    ],
)
def test_pmf_time_mode_sums_to_one(capsys, argv):
    _, out, _ = run_cli(capsys, "pmf", *argv, "--t", "1", "--m-max", "120")
    meta, _, rows = parse_csv(out)
    probs = np.array([float(r[1]) for r in rows])
    assert np.all(probs >= 0)
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert meta["summary.total_mass"] == pytest.approx(probs.sum())


def test_simulate_example_is_reproducible(tmp_path, capsys):
    argv = ["simulate", "--family", "fppk", "--k", "3", "--lambda", "1", "--alpha", "0.95", "--t-end", "10"]
    argv += ["--n-paths", "2000", "--seed", "42"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["-o", str(a)]) == 0
    assert main(argv + ["-o", str(b)]) == 0

    def data(p):
        return [line for line in p.read_text().splitlines() if not line.startswith("# created")]

    assert data(a) == data(b)
    meta, cols, rows = parse_csv(a.read_text())
    assert cols == ["path", "N(10.0)"]
    assert len(rows) == 2000 and meta["seed"] == 42 and meta["n_paths"] == 2000
    c = tmp_path / "c.csv"
    main(argv[:-1] + ["43", "-o", str(c)])
    assert data(c)[-2000:] != data(a)[-2000:]


def test_no_timestamp_gives_identical_files(tmp_path):
    argv = ["simulate", "--family", "npak", "--k", "2", "--rho", "0.5", "--rate", "weibull:b=2,c=1.5"]
    argv += ["--t-end", "3", "--n-points", "4", "--n-paths", "50", "--seed", "7", "--no-timestamp"]
    outs = []
    for name in ("x", "y"):
        p = tmp_path / name
        main(argv + ["-o", str(p)])
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert b"created" not in outs[0]


def test_json_mirrors_csv(capsys):
    argv = ["lrd", "--family", "fpak", "--k", "2", "--rho", "0.3", "--lambda", "1", "--alpha", "0.6", "--n-points", "9"]
    _, csv_out, _ = run_cli(capsys, *argv, "--no-timestamp")
    _, js_out, _ = run_cli(capsys, *argv, "--no-timestamp", "--format", "json")
    meta, cols, rows = parse_csv(csv_out)
    doc = json.loads(js_out)
    assert doc["columns"] == cols
    np.testing.assert_array_equal(np.array(doc["data"]), np.array(rows, dtype=float))
    for key, val in doc["header"].items():
        assert meta[key] == val
    for key, val in doc["summary"].items():
        assert meta["summary." + key] == val
    assert abs(doc["summary"]["fitted_exponent"] + 0.6) < 0.03


def test_cov_and_solve_and_check(capsys):
    _, out, _ = run_cli(
        capsys, "cov", "--family", "fppk", "--k", "2", "--lambda", "1", "--alpha", "0.7",
        "--s", "1", "--t-start", "1", "--t-end", "4", "--n-points", "4",
    )
    _, _, rows = parse_csv(out)
    corr = np.array([float(r[3]) for r in rows])
    assert corr[0] == pytest.approx(1.0) and np.all(np.diff(corr) < 0)

    _, out, _ = run_cli(
        capsys, "solve", "--family", "fppk", "--k", "1", "--lambda", "1", "--alpha", "0.5",
        "--t-end", "1", "--n-points", "401", "--m-max", "3",
    )
    _, cols, rows = parse_csv(out)
    assert cols == ["t", "p0", "p1", "p2", "p3", "truncated_mass"]
    assert float(rows[0][1]) == 1.0

    _, out, _ = run_cli(
        capsys, "check-governing", "--family", "fnppk", "--k", "2", "--rate", "weibull:b=1,c=2",
        "--alpha", "0.7", "--t-end", "2", "--n-points", "251", "--m-max", "5", "--t-min", "0.1",
    )
    meta, cols, rows = parse_csv(out)
    assert cols == ["m", "max_residual"] and len(rows) == 6
    assert meta["summary.max_residual"] == max(float(r[1]) for r in rows)
    assert meta["summary.quadrature_cutoff"] > 0


def test_monte_carlo_moments_are_seeded(capsys):
    argv = ["moments", "--family", "fnppk", "--k", "1", "--rate", "weibull:b=1,c=2", "--alpha", "0.7"]
    argv += ["--t", "2", "--s", "1", "--n-paths", "5000", "--seed", "11", "--no-timestamp"]
    _, a, _ = run_cli(capsys, *argv)
    _, b, _ = run_cli(capsys, *argv)
    assert a == b
    meta, _, rows = parse_csv(a)
    assert meta["seed"] == 11
    assert "monte carlo" in meta["summary.method"]
    assert rows[2][0] == "covariance" and float(rows[2][2]) > 0


@pytest.mark.parametrize(
    "argv, names",
    [
        (["moments", "--family", "fppk", "--k", "2", "--t", "1"], ["--alpha", "--lambda"]),
        (["moments", "--family", "ppk", "--k", "2", "--lambda", "1", "--alpha", "0.5", "--t", "1"], ["--alpha"]),
        (["moments", "--family", "nppk", "--k", "2", "--lambda", "1", "--t", "1"], ["--rate", "--lambda"]),
        (["moments", "--family", "pak", "--k", "2", "--lambda", "1", "--t", "1"], ["--rho"]),
        (["pmf", "--family", "fppk", "--k", "1", "--lambda", "1", "--alpha", "0.5", "--mass", "2"], ["--mass"]),
        (["pmf", "--family", "ppk", "--k", "1", "--mass", "2", "--t", "1"], ["--mass", "--t"]),
        (["pmf", "--family", "ppk", "--k", "1", "--mass", "-2"], ["--mass"]),
        (["moments", "--family", "ppk", "--k", "1", "--lambda", "1"], ["--t"]),
        (["simulate", "--family", "ppk", "--k", "1", "--lambda", "1"], ["--t-end"]),
        (["simulate", "--family", "nppk", "--k", "1", "--rate", "weibull:q=1", "--t-end", "1"], ["--rate"]),
        (["cov", "--family", "ppk", "--k", "1", "--lambda", "1", "--t-end", "2", "--n-points", "3"], ["--s"]),
        (["moments", "--family", "ppk", "--k", "1", "--lambda", "1", "--t", "1", "--n-paths", "9"], ["--n-paths"]),
        (["solve", "--family", "ppk", "--k", "1", "--lambda", "1", "--t-end", "1", "--n-points", "5"], ["fppk"]),
        (["moments", "--family", "ppk", "--k", "0", "--lambda", "1", "--t", "1"], ["k"]),
    ],
)
def test_usage_errors_name_the_flags(capsys, argv, names):
    err = usage_error(capsys, *argv)
    for name in names:
        assert name in err


def test_numeric_failure_exit_status(capsys):
    code, out, err = run_cli(
        capsys, "solve", "--family", "fppk", "--k", "3", "--lambda", "5", "--alpha", "0.95",
        "--t-end", "1", "--n-points", "11",
    )
    assert code == 1 and out == ""
    assert "RefinementError" in err and "refine" in err


def test_table_rate_file(tmp_path, capsys):
    table = tmp_path / "rate.csv"
    table.write_text("time,rate\n0,1.0\n1,2.0\n")
    _, out, _ = run_cli(capsys, "moments", "--family", "nppk", "--k", "1", "--rate", f"table:{table}", "--t", "3")
    vals = {r[0]: float(r[1]) for r in parse_csv(out)[2]}
    assert vals["mean"] > 0


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "fcount.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == f"fcount {__version__}"
    res = subprocess.run([sys.executable, "-m", "fcount.cli"], capture_output=True, text=True)
    assert res.returncode == 2
