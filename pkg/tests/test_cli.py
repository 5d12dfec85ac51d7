import csv
import json
import math

import pytest

from iucert import cli


def _run(*argv):
    return cli.main(list(argv))


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_check_potential_exit_codes(tmp_path):
    ok = _write(tmp_path / "a3.txt", "potential.family = power\npotential.alpha = 3\n")
    assert _run("check-potential", "--config", ok, "--out", str(tmp_path / "a3")) == 0
    rep = json.loads((tmp_path / "a3" / "conditions.json").read_text())
    assert rep["ok"] and rep["conditions"]["all_hold"]
    bad = _write(tmp_path / "a2.txt", "potential.alpha = 2\n")
    assert _run("check-potential", "--config", bad, "--out", str(tmp_path / "a2")) == 2
    assert (tmp_path / "a2" / "conditions.json").exists()
    assert (tmp_path / "a2" / "metadata.json").exists()


def test_config_errors_exit_3(tmp_path):
    bad = _write(tmp_path / "bad.txt", "potential.alpha = four\n")
    assert _run("check-potential", "--config", bad, "--out", str(tmp_path)) == 3
    assert _run("certify", "--config", str(tmp_path / "missing.txt")) == 3
    assert _run("certify", "--grid", "8") == 3
    assert _run("certify", "--t", "soon") == 3
    assert _run("frobnicate") == 3


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    code = _run("certify", "--out", str(out))
    return code, out


@pytest.mark.slow
def test_certify_default_exit_0(default_run):
    code, out = default_run
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["ok"] and rep["failures"] == {}
    assert rep["rosen"]["valid"] and rep["semigroup"]["ok"] and rep["iu"]["ok"]
    assert len(rep["iu"]["certificates"]) == 5
    for name in ("ground_state.csv", "spectrum.csv", "schedule_0.json", "schedule_4.csv", "kernel_0.bin",
                 "kernel_4.csv", "metadata.json"):
        assert (out / name).exists(), name
    # timestamps live only in the sidecar
    assert "created_utc" not in (out / "report.json").read_text()


@pytest.mark.slow
def test_certify_harmonic_exit_5(tmp_path):
    cfg = _write(tmp_path / "ho.txt", "potential.q = harmonic\ngrid.N = 300\n")
    assert _run("certify", "--config", cfg, "--out", str(tmp_path)) == 5
    rep = json.loads((tmp_path / "report.json").read_text())
    assert list(rep["failures"]) == ["iu"]
    assert "unbounded trend" in rep["failures"]["iu"][0] or "strictly increasing" in rep["failures"]["iu"][0]
    assert rep["iu"]["negative_control"]["strictly_increasing"]


@pytest.mark.slow
def test_certify_tiny_grid_warns(tmp_path):
    code = _run("certify", "--grid", "8,auto", "--t", "T", "--out", str(tmp_path))
    rep = json.loads((tmp_path / "report.json").read_text())
    assert any(w.startswith("DiscretizationWarning: N=8") for w in rep["discretize"]["warnings"])
    assert code == rep["exit_code"]


@pytest.fixture(scope="module")
def plot_runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("plot_a"), tmp_path_factory.mktemp("plot_b")
    codes = [_run("plotdata", "--out", str(d)) for d in (a, b)]
    return codes, a, b


@pytest.mark.slow
def test_plotdata_tables(plot_runs):
    codes, a, _ = plot_runs
    assert codes == [0, 0]
    expect = {"ground_state_bounds.csv": ["r", "phi", "neg_ln_phi"],
              "schedule.csv": ["t", "s", "p", "log_p", "eps", "N", "log_N"],
              "constants.csv": ["t", "t_reduced", "k_steps", "xi", "M", "log_M", "C_t"],
              "kernel_ratio.csv": ["t", "r_i", "r_j", "log_ratio"]}
    for name, head in expect.items():
        with open(a / name, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:len(head)] == head and len(rows) > 1, name
        assert (a / name.replace(".csv", ".png")).stat().st_size > 1000


@pytest.mark.slow
def test_plotdata_bounds_hold_rowwise(plot_runs):
    _, a, _ = plot_runs
    with open(a / "ground_state_bounds.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = [c for c in rows[0] if c.startswith("eps_q_plus_gamma_")]
    assert len(cols) == 5
    for row in rows:
        lhs = float(row["neg_ln_phi"])
        for c in cols:
            rhs = float(row[c])
            assert math.isnan(rhs) or lhs <= rhs, (row["r"], c)


@pytest.mark.slow
def test_plotdata_deterministic(plot_runs):
    _, a, b = plot_runs
    names = sorted(p.name for p in a.iterdir() if p.name != "metadata.json")
    assert names == sorted(p.name for p in b.iterdir() if p.name != "metadata.json")
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
