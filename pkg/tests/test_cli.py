"""End-to-end tests of the command-line entry point."""
import json

import numpy as np
import pytest

from conftest import DATA_DIR, matrix_system
from core.commands import format_summary
from main import main
from services.mna_service import MnaService


def read_summary(folder):
    lines = (folder / "summary.txt").read_text().splitlines()
    return dict(line.split("=", 1) for line in lines)


@pytest.fixture
def unstable_bundle(tmp_path):
    system = matrix_system([[1.0, 0.0], [0.0, -2.0]], np.eye(2), [[1.0], [1.0]], [[1.0, 1.0]])
    return MnaService().write_matrix_bundle(system, str(tmp_path / "unstable"))


def test_format_summary_is_sorted():
    assert format_summary({"r": 3, "a": 0.1, "names": ["x", "y"]}) == "a=0.10000000000000001\nnames=x,y\nr=3\n"


def test_reduce_scalar(scalar_netlist_path, tmp_path):
    out = tmp_path / "out"
    assert main(["reduce", str(scalar_netlist_path), "--out-dir", str(out)]) == 0
    summary = read_summary(out)
    assert summary["r"] == "1"
    assert summary["N"] == "1"
    assert summary["method"] == "eksm"
    assert float(summary["max_relative_error"]) <= 1e-10
    assert (out / "trace.csv").read_text().startswith("j,basis_p,basis_q,criterion,probe_r\n1,")
    assert (out / "rom" / "manifest.yaml").exists()
    assert json.loads((out / "summary.json").read_text())["r"] == 1


def test_reduce_dense(tmp_path):
    out = tmp_path / "out"
    code = main(["reduce", str(DATA_DIR / "coupled_pair.sp"), "--method", "dense", "--out-dir", str(out)])
    assert code == 0
    summary = read_summary(out)
    assert summary["stop_reason"] == "dense"
    assert int(summary["r"]) <= 8
    assert not (out / "trace.csv").exists()


@pytest.mark.parametrize("tol", ["0", "-1"])
def test_reduce_rejects_non_positive_tol(scalar_netlist_path, tmp_path, tol, capsys):
    assert main(["reduce", str(scalar_netlist_path), "--tol", tol, "--out-dir", str(tmp_path)]) == 2
    assert "tol" in capsys.readouterr().err


@pytest.mark.parametrize("method", ["dense", "eksm"])
def test_unstable_model_exits_3(unstable_bundle, tmp_path, method, capsys):
    code = main(["reduce", str(unstable_bundle), "--method", method, "--out-dir", str(tmp_path / "out")])
    assert code == 3
    assert capsys.readouterr().err.startswith("error:")


def test_missing_input_exits_2(tmp_path):
    assert main(["reduce", str(tmp_path / "absent.sp"), "--out-dir", str(tmp_path)]) == 2


def test_circuit_without_elements_exits_2(tmp_path):
    path = tmp_path / "empty.sp"
    path.write_text("* nothing here\n.end\n")
    assert main(["reduce", str(path), "--out-dir", str(tmp_path / "out")]) == 2


def test_syntax_error_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.sp"
    path.write_text("R1 a 0 1\nZ9 a 0 1\n")
    assert main(["hsv", str(path), "--out-dir", str(tmp_path / "out")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_reduce_is_deterministic_without_timing(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert main(["reduce", source, "--no-timing", "--out-dir", str(out)]) == 0
    assert (first / "summary.txt").read_bytes() == (second / "summary.txt").read_bytes()
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
    for name in ("G.mtx", "C.mtx", "B.mtx", "L.mtx"):
        assert (first / "rom" / name).read_bytes() == (second / "rom" / name).read_bytes()
    assert "wall_time_s" not in read_summary(first)


def test_timing_recorded_by_default(scalar_netlist_path, tmp_path):
    assert main(["reduce", str(scalar_netlist_path), "--out-dir", str(tmp_path)]) == 0
    assert float(read_summary(tmp_path)["wall_time_s"]) >= 0


def test_compare_with_itself(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["compare", source, source, "--out-dir", str(tmp_path)]) == 0
    summary = read_summary(tmp_path)
    assert float(summary["max_relative_error"]) == 0.0
    rows = (tmp_path / "comparison.csv").read_text().splitlines()
    assert rows[0] == "f_hz,relative_error,s_deviation"
    assert len(rows) == 21


def test_compare_against_rom(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    reduce_dir = tmp_path / "reduce"
    assert main(["reduce", source, "--method", "dense", "--out-dir", str(reduce_dir)]) == 0
    compare_dir = tmp_path / "compare"
    assert main(["compare", source, str(reduce_dir / "rom"), "--out-dir", str(compare_dir)]) == 0
    summary = read_summary(compare_dir)
    assert float(summary["max_relative_error"]) == pytest.approx(
        float(read_summary(reduce_dir)["max_relative_error"]), rel=1e-6, abs=1e-12)
    assert "apriori_bound" in summary


def test_compare_port_mismatch(tmp_path, scalar_netlist_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["compare", source, str(scalar_netlist_path), "--out-dir", str(tmp_path)]) == 2


def test_hsv_scalar(scalar_netlist_path, tmp_path):
    for method in ("dense", "eksm"):
        out = tmp_path / method
        assert main(["hsv", str(scalar_netlist_path), "--method", method, "--out-dir", str(out)]) == 0
        rows = (out / "hsv.csv").read_text().splitlines()
        assert rows[0] == "r,sigma,tail_bound"
        r, sigma, bound = rows[1].split(",")
        assert r == "1"
        assert float(sigma) == pytest.approx(0.5, rel=1e-12)
        assert float(bound) == 0.0
        assert read_summary(out)["count"] == "1"


def test_gen_then_reduce(tmp_path, capsys):
    assert main(["gen", "ladder", "--size", "5", "--ports", "2", "--seed", "7", "--out-dir", str(tmp_path)]) == 0
    path = tmp_path / "ladder_5_p2_s7.sp"
    assert capsys.readouterr().out.strip() == str(path)
    text = path.read_text()
    assert text.rstrip().endswith(".end")
    out = tmp_path / "out"
    assert main(["reduce", str(path), "--method", "dense", "--out-dir", str(out)]) == 0
    assert read_summary(out)["N"] == "11"


def test_gen_explicit_output(tmp_path):
    target = tmp_path / "nested" / "mesh.sp"
    assert main(["gen", "mesh", "--size", "3", "--ports", "2", "--output", str(target)]) == 0
    assert target.exists()


def test_gen_invalid_size(tmp_path):
    assert main(["gen", "ladder", "--size", "0", "--out-dir", str(tmp_path)]) == 2


def test_sweep_writes_every_format(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["sweep", source, "--points", "5", "--out-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 6
    assert len((tmp_path / "sweep_plot.csv").read_text().splitlines()) == 1 + 5 * 4
    touchstone = (tmp_path / "sweep.s2p").read_text().splitlines()
    assert "# Hz S RI R 50" in touchstone
    assert read_summary(tmp_path)["files"] == "sweep.csv,sweep_plot.csv,sweep.s2p"


def test_sweep_single_format(tmp_path, scalar_netlist_path):
    assert main(["sweep", str(scalar_netlist_path), "--format", "touchstone", "--z0", "75",
                 "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.s1p").exists()
    assert not (tmp_path / "sweep.csv").exists()


def test_config_file_and_flag_precedence(tmp_path, scalar_netlist_path):
    config = tmp_path / "run.yaml"
    config.write_text(f"points: 7\nout_dir: {tmp_path / 'from_file'}\n")
    assert main(["compare", str(scalar_netlist_path), str(scalar_netlist_path),
                 "--config", str(config), "--points", "9"]) == 0
    assert read_summary(tmp_path / "from_file")["points"] == "9"


def test_non_utf8_netlist_exits_2(tmp_path, capsys):
    path = tmp_path / "binary.sp"
    path.write_bytes(b"\xff\xfeR1 a 0 50\n")
    assert main(["reduce", str(path), "--out-dir", str(tmp_path / "out")]) == 2
    assert "not UTF-8" in capsys.readouterr().err


def test_eksm_order_matches_dense_on_long_ladder(tmp_path, capsys):
    assert main(["gen", "ladder", "--size", "200", "--out-dir", str(tmp_path)]) == 0
    path = capsys.readouterr().out.strip()
    dense_dir, eksm_dir = tmp_path / "dense", tmp_path / "eksm"
    assert main(["reduce", path, "--method", "dense", "--out-dir", str(dense_dir)]) == 0
    assert main(["reduce", path, "--tol", "1e-10", "--maxiter", "300", "--out-dir", str(eksm_dir)]) == 0
    dense, eksm = read_summary(dense_dir), read_summary(eksm_dir)
    assert eksm["N"] == "401"
    assert eksm["method"] == "eksm"
    assert eksm["r"] == dense["r"]
    assert float(eksm["wall_time_s"]) < 120


def test_compare_prints_scattering_deviation(tmp_path, capsys):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["compare", source, source, "--out-dir", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "f_hz,relative_error,s_deviation"
    summary = read_summary(tmp_path)
    assert float(summary["worst_s_entry_deviation"]) == 0.0
    assert float(summary["z0"]) == 50.0
    assert summary["f_max"] != summary["f_min"]


def test_compare_accepts_fixed_fmax(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["compare", source, source, "--fmax", "2e9", "--out-dir", str(tmp_path)]) == 0
    assert float(read_summary(tmp_path)["f_max"]) == 2e9
    with pytest.raises(SystemExit):
        main(["compare", source, source, "--fmax", "often", "--out-dir", str(tmp_path)])


def test_hsv_count_is_numerical_rank(tmp_path):
    source = str(DATA_DIR / "coupled_pair.sp")
    assert main(["hsv", source, "--method", "dense", "--out-dir", str(tmp_path)]) == 0
    summary = read_summary(tmp_path)
    assert summary["count"] == summary["numerical_rank"]
    assert len((tmp_path / "hsv.csv").read_text().splitlines()) == 1 + int(summary["count"])
