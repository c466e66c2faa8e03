import json
import math

import numpy as np
import pytest

from blochlab.cli import _csv_cell, main, run_and_emit, write_csv
from blochlab.config import parse_config
from blochlab.fieldio import write_field_dump


def run_main(argv):
    return main([str(a) for a in argv])


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_csv_cell_formats():
    assert _csv_cell(None) == ""
    assert _csv_cell(True) == "pass"
    assert _csv_cell(False) == "fail"
    assert _csv_cell(np.True_) == "pass"
    assert _csv_cell(3) == "3"
    assert _csv_cell(0.1) == "0.10000000000000001"
    assert _csv_cell(1.0) == "1"
    assert _csv_cell("word") == "word"


def test_write_csv_layout(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ["a", "b"], [{"a": 1, "b": None}, {"a": 0.5, "b": True}])
    assert p.read_bytes() == b"a,b\n1,\n0.5,pass\n"


def test_bloch_command_matches_symbol(tmp_path):
    n = 16
    cfg = parse_config(
        f"command = bloch\na = constant(1)\nn = {n}\neta = (0.3, 0.2)\n"
    )
    code, paths = run_and_emit(cfg, out_dir=tmp_path)
    assert code == 0
    header, row = paths[0].read_text().splitlines()
    assert header == "eta1,eta2,lambda1,residual,iterations"
    cells = row.split(",")
    h = 2 * math.pi / n
    expect = sum(4 * math.sin(e * h / 2) ** 2 / h**2 for e in (0.3, 0.2))
    assert abs(float(cells[2]) - expect) < 1e-9
    assert float(cells[3]) < 1e-9


def test_homogenize_constant(tmp_path):
    cfg = parse_config("command = homogenize\na = constant(2)\nn = 8\n")
    code, paths = run_and_emit(cfg, out_dir=tmp_path)
    assert code == 0
    header, row = paths[0].read_text().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["q11"]) == pytest.approx(2.0, abs=1e-12)
    assert float(vals["q22"]) == pytest.approx(2.0, abs=1e-12)
    assert abs(float(vals["q12"])) < 1e-12
    assert float(vals["defect"]) < 1e-12


def test_csv_bytes_stable_across_reruns(tmp_path):
    text = (
        "command = dispersion\n"
        "a = two_phase(eps=1/2, beta=4, rho=1/2)\n"
        "n = 16\neta = (0.25, 0.0)\n"
    )
    _, paths_a = run_and_emit(parse_config(text), out_dir=tmp_path / "a")
    _, paths_b = run_and_emit(parse_config(text), out_dir=tmp_path / "b")
    assert paths_a[0].read_bytes() == paths_b[0].read_bytes()


def test_experiment_csv_bytes_stable(tmp_path):
    text = "command = experiment:thm22\neps = 1/2\nn = 32\n"
    _, pa = run_and_emit(parse_config(text), out_dir=tmp_path / "a")
    _, pb = run_and_emit(parse_config(text), out_dir=tmp_path / "b")
    assert pa[0].read_bytes() == pb[0].read_bytes()
    assert pa[0].name == "experiment_thm22.csv"


def test_sidecar_contents(tmp_path):
    cfg = parse_config("command = experiment:thm22\neps = 1/2\nn = 32\nseed = 5\n")
    _, paths = run_and_emit(cfg, out_dir=tmp_path, threads=3)
    meta = json.loads(paths[1].read_text())
    assert meta["command"] == "experiment:thm22"
    assert meta["seed"] == 5
    assert meta["threads"] == 3
    assert meta["q_normalization"] == "cell-average"
    assert "gap" in meta["columns"]
    assert set(meta["checks"]) >= {"gap_nonincreasing_pass"}
    assert meta["wall_times"]["total_seconds"] > 0
    assert "command = experiment:thm22" in meta["config"]
    assert "package_version" in meta and "git_describe" in meta


def test_capacity_annulus_mode(tmp_path):
    cfg = parse_config("command = capacity\nr = 0.28\nn = 256\n")
    code, paths = run_and_emit(cfg, out_dir=tmp_path)
    assert code == 0
    header, row = paths[0].read_text().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["rel_error"]) < 0.02


def test_capacity_needs_a_mode(tmp_path):
    cfg = parse_config("command = capacity\n")
    rc = run_main(["--config", write_cfg(tmp_path, "command = capacity\n")])
    assert rc == 1
    with pytest.raises(Exception):
        run_and_emit(cfg, out_dir=tmp_path)


def test_from_file_field(tmp_path):
    rng = np.random.default_rng(67)
    vals = np.exp(0.3 * rng.standard_normal(64))
    dump = tmp_path / "medium.blf"
    write_field_dump(dump, vals, (8, 8))
    cfg = parse_config(f"command = homogenize\na = from_file(path={dump})\nn = 8\n")
    code, paths = run_and_emit(cfg, out_dir=tmp_path)
    assert code == 0
    header, row = paths[0].read_text().splitlines()
    q11 = float(dict(zip(header.split(","), row.split(",")))["q11"])
    assert 1.0 / np.mean(1.0 / vals) - 1e-9 <= q11 <= vals.mean() + 1e-9


def test_main_success_prints_paths(tmp_path, capsys):
    p = write_cfg(tmp_path, "command = homogenize\na = constant(1)\nn = 8\n")
    rc = run_main(["--config", p, "--out", tmp_path / "out"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert lines[0].endswith("homogenize.csv")
    assert lines[1].endswith("homogenize.json")


def test_main_seed_override(tmp_path):
    p = write_cfg(tmp_path, "command = experiment:thm22\neps = 1/2\nn = 32\n")
    rc = run_main(["--config", p, "--out", tmp_path / "out", "--seed", 99])
    assert rc == 0
    meta = json.loads((tmp_path / "out" / "experiment_thm22.json").read_text())
    assert meta["seed"] == 99


def test_main_missing_config(tmp_path, capsys):
    rc = run_main(["--config", tmp_path / "nope.cfg"])
    assert rc == 1
    assert "cannot read config" in capsys.readouterr().err


def test_main_bad_config(tmp_path, capsys):
    p = write_cfg(tmp_path, "command = fly\n")
    rc = run_main(["--config", p])
    assert rc == 1
    assert "unknown command" in capsys.readouterr().err


def test_main_exit_two_on_failed_checks(tmp_path, capsys):
    # reversed ladder: the gap grows instead of shrinking, so the
    # monotonicity column fails while files are still written
    p = write_cfg(tmp_path, "command = experiment:thm22\neps = 1/4, 1/2\nn = 64\n")
    rc = run_main(["--config", p, "--out", tmp_path / "out"])
    assert rc == 2
    captured = capsys.readouterr()
    assert "assertion columns" in captured.err
    csv_text = (tmp_path / "out" / "experiment_thm22.csv").read_text()
    assert "fail" in csv_text
