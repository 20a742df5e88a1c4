import math

import numpy as np
import pytest

from sogdd.cli import main, parse_angle, parse_block, read_config
from sogdd.imagecore import GrayImage, load_pgm, save_pgm

from helpers import block_array


@pytest.fixture
def block_pgm(tmp_path):
    p = tmp_path / "block.pgm"
    save_pgm(GrayImage(block_array()), p)
    return p


def test_parse_angle():
    assert parse_angle("pi/8") == math.pi / 8
    assert parse_angle("3pi/8") == 3 * math.pi / 8
    assert parse_angle("-2*pi/3") == -2 * math.pi / 3
    assert parse_angle("pi") == math.pi
    assert parse_angle("0.25") == 0.25
    with pytest.raises(Exception):
        parse_angle("tau")


def test_parse_block():
    assert parse_block("7") == (6, 6)
    assert parse_block("7x9") == (6, 8)
    with pytest.raises(Exception):
        parse_block("6")


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# detector\nsigma2 = 1.5  # squared\n\nnms-radius=2\n")
    assert read_config(p) == {"sigma2": "1.5", "nms_radius": "2"}


def test_detect_constant_image(tmp_path, capsys):
    img = tmp_path / "flat.pgm"
    save_pgm(GrayImage(np.full((40, 40), 90.0)), img)
    out = tmp_path / "c.csv"
    assert main(["detect", str(img), "--out", str(out)]) == 0
    assert out.read_text() == "x,y,score\n"
    assert "0 corners" in capsys.readouterr().out


def test_detect_block(block_pgm, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["detect", str(block_pgm), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,score" and len(lines) == 5


def test_detect_to_stdout(block_pgm, capsys):
    assert main(["detect", str(block_pgm)]) == 0
    assert capsys.readouterr().out.startswith("x,y,score\n")


def test_exit_codes(tmp_path, block_pgm):
    assert main(["detect", str(tmp_path / "missing.pgm")]) == 2
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P9 nonsense")
    assert main(["detect", str(bad)]) == 2
    assert main(["detect", str(block_pgm), "--sigma2", "0.5"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["eval-repeat", str(block_pgm), "--suite", "blur"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 1


def test_config_file_and_override(tmp_path, block_pgm):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("threshold = 1e30\n")
    out = tmp_path / "c.csv"
    assert main(["detect", str(block_pgm), "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text() == "x,y,score\n"
    assert main(["detect", str(block_pgm), "--config", str(cfg), "--threshold", "1e9", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5
    cfg.write_text("colour = red\n")
    assert main(["detect", str(block_pgm), "--config", str(cfg)]) == 1


def test_config_supplies_required_option(tmp_path, block_pgm):
    gt = tmp_path / "gt.csv"
    gt.write_text("x,y\n25,25\n74,25\n25,74\n74,74\n")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"gt = {gt}\n")
    out = tmp_path / "r.csv"
    assert main(["eval-gt", str(block_pgm), "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "missed,false,Le"


def test_model_verify(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["model-verify", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "theta_rad,psi_closed,psi_quadrature" and len(lines) == 361
    assert "max relative deviation" in capsys.readouterr().out
    args = ["model-verify", "--kind", "L", "--alpha", "pi/8", "--sigma", "1.15", "--out", str(out)]
    assert main(args) == 0
    assert main(["model-verify", "--T1", "100", "--T2", "100", "--out", str(out)]) == 0
    vals = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.all(vals[:, 1] == 0)


def test_model_verify_failure_exit(tmp_path, monkeypatch):
    from sogdd import cornermodels

    real = cornermodels.psi_closed_form
    monkeypatch.setattr(cornermodels, "psi_closed_form", lambda *a, **k: 1.5 * real(*a, **k))
    assert main(["model-verify", "--out", str(tmp_path / "p.csv")]) == 3


def test_scale_range(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert main(["scale-range", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sigma,energy_corner,energy_edge,diff" and len(lines) == 252
    text = capsys.readouterr().out
    assert "sweep minimum first root" in text and "quadratic fit" in text
    assert main(["scale-range", "--kind", "L", "--sweep", "none", "--out", str(out)]) == 0
    assert "positive over the whole grid" in capsys.readouterr().out


def test_eval_gt(tmp_path, block_pgm):
    gt = tmp_path / "gt.csv"
    gt.write_text("x,y\n26,26\n73,26\n26,73\n73,73\n")
    out = tmp_path / "r.csv"
    assert main(["eval-gt", str(block_pgm), "--gt", str(gt), "--out", str(out)]) == 0
    assert out.read_text() == "missed,false,Le\n0,0,0.0\n"
    assert main(["eval-gt", str(block_pgm), "--gt", str(tmp_path / "none.csv")]) == 2


def test_eval_repeat(tmp_path, block_pgm):
    out = tmp_path / "r.csv"
    assert main(["eval-repeat", str(block_pgm), "--suite", "rotation", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "suite,param,Lb,Ld,Lr,Ravg" and len(lines) == 19


def test_eval_mma_and_warp(tmp_path, block_pgm, capsys):
    warped = tmp_path / "w.pgm"
    assert main(["warp", str(block_pgm), "--transform", "rotation", "--param", "pi/12", "--out", str(warped)]) == 0
    lines = capsys.readouterr().out.splitlines()
    w, h = (int(v) for v in lines[0].split("x"))
    assert load_pgm(warped).shape == (h, w)
    H = np.vstack([np.array([[float(v) for v in ln.split()] for ln in lines[1:3]]), [0, 0, 1]])
    hfile = tmp_path / "H.txt"
    np.savetxt(hfile, H)
    out = tmp_path / "m.csv"
    assert main(["eval-mma", str(block_pgm), str(warped), "--homography", str(hfile), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "Pth,Npossible,Nmatch,MMA" and len(rows) == 11
    assert main(["warp", str(block_pgm), "--transform", "shear", "--param", "0.2"]) == 1


def test_export_kernels(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["export-kernels", "--orientations", "4", "--out", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (4 * 13 * 13, 5)
    for k in range(4):
        assert abs(data[data[:, 0] == k, 4].sum()) < 1e-9
