import json
import subprocess
import sys

import pytest

from mcptiming import __version__
from mcptiming.cli import main
from mcptiming.config import DATA_DIR

SMALL = (DATA_DIR / "paper_v.cfg").read_text().replace(
    "run.n_decays = 10000000", "run.n_decays = 400000")


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


@pytest.fixture
def sim_dir(tmp_path, small_cfg):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(small_cfg), "--out-dir", str(out)]) == 0
    return out


def test_version_entry_point():
    r = subprocess.run([sys.executable, "-m", "mcptiming.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert __version__ in r.stdout


def test_rates_csv(capsys):
    assert main(["rates", "--config", "paper_s3.cfg", "--grid", "2.5,5,7.5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "s_cm,R_AA,R_DA,R_total"
    rows = [list(map(float, l.split(","))) for l in lines[1:]]
    assert rows[0][1] == pytest.approx(rows[2][1], rel=1e-12)  # mirror symmetry
    assert rows[1][3] == max(r[3] for r in rows)


def test_rates_zero_efficiency(tmp_path, capsys):
    p = tmp_path / "zero.cfg"
    p.write_text("mcp.efficiency = 0\n")
    assert main(["rates", "--config", str(p), "--grid", "1,5,9"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert all(r.split(",")[1:] == ["0.0", "0.0", "0.0"] for r in rows)


def test_rates_default_grid_to_file(tmp_path):
    assert main(["rates", "--config", "paper_s3.cfg", "--out-dir", str(tmp_path)]) == 0
    text = (tmp_path / "rates.csv").read_bytes()
    assert b"\r" not in text
    assert len(text.splitlines()) == 100


def test_rates_grid_outside_domain():
    assert main(["rates", "--config", "paper_s3.cfg", "--grid", "0,5"]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["rates"])
    assert exc.value.code == 2


def test_missing_config_is_io_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                 "--out-dir", str(tmp_path)]) == 3


def test_simulate_validation_error(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("run.n_decays = 0\n")
    assert main(["simulate", "--config", str(p), "--out-dir", str(tmp_path)]) == 2
    assert "run.n_decays" in capsys.readouterr().err


def test_simulate_outputs_and_manifest(sim_dir, small_cfg):
    for name in ("listmode.txt", "summary.json", "manifest.json"):
        assert (sim_dir / name).exists()
    man = json.loads((sim_dir / "manifest.json").read_text())
    assert man["version"] == __version__
    assert man["master_seed"] == 2004
    assert man["command"] == "simulate"
    assert man["argv"][:2] == ["mcptiming", "simulate"]
    assert [o["path"] for o in man["outputs"]] == ["listmode.txt", "summary.json"]
    import hashlib
    assert man["config_digest"] == hashlib.sha256(small_cfg.read_bytes()).hexdigest()
    assert man["started_utc"] and man["finished_utc"]
    summary = json.loads((sim_dir / "summary.json").read_text())
    assert summary["n_records"] > 1000


def test_simulate_deterministic_and_seed_override(tmp_path, small_cfg, sim_dir):
    again = tmp_path / "again"
    main(["simulate", "--config", str(small_cfg), "--out-dir", str(again)])
    for name in ("listmode.txt", "summary.json"):
        assert (again / name).read_bytes() == (sim_dir / name).read_bytes()
    other = tmp_path / "other"
    main(["simulate", "--config", str(small_cfg), "--seed", "5", "--out-dir", str(other)])
    assert (other / "listmode.txt").read_bytes() != (sim_dir / "listmode.txt").read_bytes()
    assert json.loads((other / "manifest.json").read_text())["master_seed"] == 5


def test_histogram_bit_identical(sim_dir, capsys):
    lm = str(sim_dir / "listmode.txt")
    args = ["histogram", lm, "--bins-ps", "20", "--range-ns", "49.5:50.5", "--filter", "all"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert first.startswith("bin_center_ps,counts\n")


def test_histogram_bad_inputs(tmp_path, sim_dir):
    assert main(["histogram", str(sim_dir / "listmode.txt"), "--filter", "tag=1"]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("ticks_ps=0.305,version=1\n12,x\n")
    assert main(["histogram", str(bad)]) == 3
    assert main(["histogram", str(tmp_path / "missing.txt")]) == 3


def test_fit_tag_filter_narrows_peak(tmp_path, sim_dir):
    lm = str(sim_dir / "listmode.txt")
    widths = {}
    for flt in ("all", "tag==0"):
        out = tmp_path / flt.replace("=", "")
        assert main(["fit", lm, "--filter", flt, "--out-dir", str(out),
                     "--weighting", "unweighted"]) == 0
        widths[flt] = json.loads((out / "fit.json").read_text())["fwhm_ps"]
        assert (out / "histogram.csv").exists()
    assert widths["tag==0"] < widths["all"]


def test_fit_empty_selection(tmp_path, sim_dir):
    assert main(["fit", str(sim_dir / "listmode.txt"), "--range-ns", "10:11",
                 "--out-dir", str(tmp_path)]) == 4


def test_experiment_outputs(tmp_path, small_cfg):
    out = tmp_path / "exp"
    assert main(["experiment", "--config", str(small_cfg), "--sweep", "30,16,9",
                 "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in out.glob("point_*.txt")) == [
        "point_00.txt", "point_01.txt", "point_02.txt"]
    table = (out / "table.csv").read_text().splitlines()
    assert table[0].startswith("overrange_mV,x_percent")
    assert len(table) == 4
    report = json.loads((out / "report.json").read_text())
    assert report["sweep_mV"] == [30.0, 16.0, 9.0]
    assert report["n_points"] == 3


def test_experiment_needs_three_points(tmp_path, small_cfg):
    assert main(["experiment", "--config", str(small_cfg), "--sweep", "30,9",
                 "--out-dir", str(tmp_path)]) == 2
