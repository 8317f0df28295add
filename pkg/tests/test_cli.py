import math
import os
import subprocess
import sys

import numpy as np
import pytest

from eitwalk.cli import EXIT_CODES, main
from eitwalk.config import parse


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "eitwalk.cli", *args], capture_output=True, text=True)


SMALL = """[experiment]
kind = currents
[scene]
inclusion_radii = 0.5
[walk]
h = 0.02
allow_coarse_eps = true
[plan]
M2 = 3000
[output]
methods = direct, reference_vr
"""


def test_usage_errors(capsys):
    assert main([]) == EXIT_CODES["usage"] == 2
    assert main(["frobnicate"]) == 2
    assert main(["currents", "--workers", "two"]) == 2
    assert main(["--help"]) == 0


def test_config_and_io_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[walk]\nh = -1, x\n")
    assert main(["--config", str(bad)]) == EXIT_CODES["config"] == 3
    err = capsys.readouterr().err
    assert "error[config]" in err and f"{bad}:2:" in err
    assert main(["--config", str(tmp_path / "missing.ini")]) == EXIT_CODES["io"] == 8
    good = tmp_path / "good.ini"
    good.write_text(SMALL)
    assert main(["--config", str(good), "--out", str(tmp_path / "no" / "dir.csv")]) == 8
    assert "error[io]" in capsys.readouterr().err


def test_show_config(tmp_path, capsys):
    assert main(["show-config", "bias", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    cfg = parse(out)
    assert cfg.experiment.kind == "bias" and cfg.experiment.seed == 7


def test_reproducible_across_workers(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    outs = []
    for w in (1, 4):
        out = tmp_path / f"w{w}.csv"
        r = run_cli("--config", str(cfg), "--workers", str(w), "--no-timing", "--out", str(out))
        assert r.returncode == 0, r.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert b"wall_time" not in outs[0]


def _field_rows(path):
    rows = [l.strip().split(",") for l in open(path) if not l.startswith(("#", "r_"))]
    return rows


@pytest.fixture(scope="module")
def field_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("field") / "f.csv"
    assert main(["field", "--no-timing", "--out", str(out)]) == 0
    return out


def _angles(th, centers):
    return np.abs(((th[:, None] - centers[None, :] + math.pi) % (2 * math.pi)) - math.pi)


def test_field_flux_integral(field_csv):
    meta = {l[2:].split(":")[0]: l.split(":", 1)[1].strip() for l in open(field_csv) if l.startswith("# ")}
    assert float(meta["max_flux_integral_error"]) < 1e-8


def test_field_gaps_are_insulating(field_csv):
    rows = _field_rows(field_csv)
    centers = np.arange(8) * 2 * math.pi / 8
    for kind in ("current_density", "flux_series"):
        d = np.array([[float(r[3]), float(r[4])] for r in rows if r[1] == kind])
        dist = _angles(d[:, 0], centers).min(axis=1)
        gap = np.abs(d[dist > 0.15, 1])
        assert gap.max() < 0.05 * np.abs(d[:, 1]).max(), kind


def test_field_density_spikes_at_edges(field_csv):
    rows = _field_rows(field_csv)
    d = np.array([[float(r[3]), float(r[4])] for r in rows if r[1] == "current_density"])
    dist = _angles(d[:, 0], np.array([0.0]))[:, 0]
    on = dist <= 0.05
    center = abs(d[on][np.argmin(dist[on]), 1])
    edge = np.abs(d[on & (dist > 0.04), 1]).max()
    assert edge > 2 * center, f"edge/center = {edge / center:.3f}"
