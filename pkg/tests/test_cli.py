import csv
import json
import math
import subprocess
import sys

import pytest

from stredalab.cli import SWEEP_COLUMNS, ConfigError, load_config, main, pool_size
from stredalab.model import build_hamiltonian
from stredalab.spectral import eigensolve

from conftest import tb

MODEL = """[model]
backend = tightbinding
half_width_L = 6
tb_spin_flux_offset = 1/3
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cfg(tmp_path, fermi=-1.5, extra=""):
    return write(tmp_path, MODEL + f"\n[run]\nfermi_energy = {fermi}\noutput_dir = out\n" + extra)


def test_run_writes_report(tmp_path):
    assert main(["run", str(run_cfg(tmp_path))]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert {"isdos", "ch_up", "ch_down", "sch", "fd_derivative", "sigma_contour",
            "residual_streda_fd", "residual_streda_kubo"} <= set(rep)
    assert rep["rank_below"] > 0 and rep["gap_lower"] < -1.5 < rep["gap_upper"]
    log = (tmp_path / "out" / "run.log").read_text()
    assert "timing eigensolve" in log and "timing sigma_zero_limit" in log


def test_run_fermi_level_on_eigenvalue_exits_3(tmp_path, capsys):
    lam = eigensolve(build_hamiltonian(tb(6, offset=1 / 3))).blocks[0].eigenvalues[3]
    assert main(["run", str(run_cfg(tmp_path, fermi=repr(float(lam))))]) == 3
    assert "detect_gap" in capsys.readouterr().err


def test_cached_rerun_is_byte_identical(tmp_path):
    cfg = run_cfg(tmp_path, extra="cache = true\n")
    assert main(["run", str(cfg)]) == 0
    first = (tmp_path / "out" / "report.json").read_bytes()
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "out" / "report.json").read_bytes() == first
    assert "cache hit" in (tmp_path / "out" / "run.log").read_text()
    assert main(["cache-clear", str(tmp_path / "out")]) == 0
    assert not list((tmp_path / "out" / "cache").glob("*.npz"))


def test_sweep_rows_and_header(tmp_path):
    cfg = run_cfg(tmp_path, extra="workers = 1\nprecision_digits = 8\n"
                                  "\n[sweep]\nB_start = -0.02\nB_end = 0.02\nsteps = 5\n")
    assert main(["sweep", str(cfg)]) == 0
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    rows = list(csv.DictReader(lines))
    assert len(rows) == 5
    Bs = [float(r["B"]) for r in rows]
    assert Bs == sorted(Bs)
    assert all(r["gapped_flag"] == "1" for r in rows)
    assert all(abs(float(r["sch"]) - 1) < 0.1 for r in rows)


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    sweep = "\n[sweep]\nB_start = 0\nB_end = 0.01\nsteps = 2\n"
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    monkeypatch.setenv("STREDALAB_THREADS", "1")
    assert main(["sweep", str(run_cfg(a, extra=sweep))]) == 0
    monkeypatch.setenv("STREDALAB_THREADS", "2")
    assert main(["sweep", str(run_cfg(b, extra=sweep))]) == 0
    assert (a / "out" / "sweep.csv").read_text() == (b / "out" / "sweep.csv").read_text()


def test_threads_env_overrides_workers(tmp_path, monkeypatch):
    cfg = load_config(run_cfg(tmp_path, extra="workers = 3\n"))
    assert pool_size(cfg) == 3
    monkeypatch.setenv("STREDALAB_THREADS", "2")
    assert pool_size(cfg) == 2
    monkeypatch.setenv("STREDALAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        pool_size(cfg)


@pytest.mark.parametrize("text, key", [
    (MODEL + "[run]\nfermi_energy = -1.5\noutput_dir = out\ncolour = blue\n", "colour"),
    (MODEL + "[run]\nfermi_energy = -1.5\noutput_dir = out\n[extras]\n", "extras"),
    (MODEL + "[run]\noutput_dir = out\n", "fermi_energy"),
    (MODEL + "[run]\nfermi_energy = -1.5\n", "output_dir"),
    (MODEL + "[run]\nfermi_energy = low\noutput_dir = out\n", "fermi_energy"),
    (MODEL + "[run]\nfermi_energy = -1.5\noutput_dir = out\ncontour_nodes = 4\n", "contour_nodes"),
    (MODEL.replace("= 6", "= 4.5") + "[run]\nfermi_energy = -1.5\noutput_dir = out\n", "half_width_L"),
    (MODEL + "B1 = 0.1\n[run]\nfermi_energy = -1.5\noutput_dir = out\n", "B1"),
    (MODEL + "[run]\nfermi_energy = -1.5\noutput_dir = out\n[sweep]\nB_start = 0\nsteps = 3\n",
     "B_end"),
    (MODEL + "[run]\nfermi_energy = -1.5\noutput_dir = out\n[window]\nlower = 0, 0\n", "window"),
])
def test_invalid_config_exits_2(tmp_path, capsys, text, key):
    assert main(["run", str(write(tmp_path, text))]) == 2
    assert key in capsys.readouterr().err


def test_sweep_needs_sweep_section(tmp_path):
    assert main(["sweep", str(run_cfg(tmp_path))]) == 2


def test_torus_not_quantized_is_config_error(tmp_path, capsys):
    # 8 x 8 torus at flux 1/3 carries 64/3 flux quanta
    text = MODEL.replace("half_width_L = 6", "half_width_L = 4\nboundary = torus")
    assert main(["run", str(write(tmp_path, text + "[run]\nfermi_energy = -1.5\noutput_dir = o\n"))]) == 2
    assert "model" in capsys.readouterr().err


def test_oracle_verb(tmp_path):
    cfg = write(tmp_path, "[run]\noutput_dir = out\n[oracle]\ninstances = 3\nmax_dim = 30\n"
                          "fluxes = 1/3, 1/4\nkgrid = 8\n")
    assert main(["oracle", str(cfg)]) == 0
    res = json.loads((tmp_path / "out" / "oracle.json").read_text())
    assert res["pass"] and len(res["identities"]) == 3
    assert {(r["flux"], r["bands_filled"]) for r in res["fukui_hatsugai"]} == \
        {("1/3", 1), ("1/3", 2), ("1/4", 1), ("1/4", 3)}


def test_cache_clear_missing_directory(tmp_path):
    assert main(["cache-clear", str(tmp_path / "nope")]) == 2


def test_console_entry_point(tmp_path):
    cfg = run_cfg(tmp_path, extra="\n[sweep]\nB_start = 0\nB_end = 0.01\nsteps = 2\n")
    out = subprocess.run([sys.executable, "-m", "stredalab.cli", "sweep", str(cfg)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and not any(math.isnan(float(x)) for x in rows[1].split(",")[:3])
