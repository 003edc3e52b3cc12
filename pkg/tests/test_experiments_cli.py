import json
from fractions import Fraction

import numpy as np
import pytest

from carnotlab import heisenberg
from carnotlab.cli import main
from carnotlab.experiments import classify, emit_plots
from carnotlab.semilinear import LifespanRecord, write_sweep_csv

H = heisenberg(1)


@pytest.mark.parametrize(
    "p, equation, variant, regime",
    [
        ("3/2", "parabolic", "sharp", "critical"),
        ("5/4", "parabolic", "cd", "critical"),
        ("5/3", "hyperbolic", "sharp", "critical"),
        ("6/5", "parabolic", "sharp", "subcritical"),
        ("3", "subelliptic", "sharp", "supercritical"),
    ],
)
def test_classify_cells(p, equation, variant, regime):
    assert classify(H, p).cells[equation][variant] == regime


def test_classify_rejects_small_p():
    with pytest.raises(ValueError):
        classify(H, 1)


def test_classify_is_monotone_in_p():
    order = {"subcritical": 0, "critical": 1, "supercritical": 2}
    ps = [Fraction(k, 24) for k in range(25, 80)]
    tables = [classify(H, p) for p in ps]
    for eq in ("parabolic", "hyperbolic", "subelliptic"):
        for v in ("sharp", "cd"):
            seq = [order[t.cells[eq][v]] for t in tables]
            assert seq == sorted(seq)


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


def test_empty_config_is_usage_error(tmp_path):
    cfg = write_cfg(tmp_path / "empty.ini", "")
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert main(["classify", "--out", str(tmp_path / "o")]) == 2


def test_classify_command_and_manifest(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "run.ini", "[run]\npreset = heisenberg-1\n[classify]\np_list = 3/2, 5/4\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["classify", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
        outs.append(json.loads((out / "manifest.json").read_text()))
    assert "critical" in capsys.readouterr().out
    sums = [[o["sha256"] for o in m["outputs"]] for m in outs]
    assert sums[0] == sums[1] and sums[0]
    assert outs[0]["seed"] == 7 and outs[0]["config"]["run"]["preset"] == "heisenberg-1"


def test_failing_command_writes_failure_record(tmp_path):
    cfg = write_cfg(tmp_path / "run.ini", "[run]\npreset = heisenberg-1\n[classify]\np_list = 1\n")
    out = tmp_path / "o"
    assert main(["classify", "--config", cfg, "--out", str(out)]) == 1
    record = json.loads((out / "failures.json").read_text())
    assert record[0]["error"] == "ValueError"


def test_geometry_command(tmp_path):
    cfg = write_cfg(tmp_path / "run.ini", "[run]\npreset = heisenberg-1\n[geometry]\ncases = 200\n")
    assert main(["verify-geometry", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "geometry_checks.csv").exists()


def synthetic_sweep(path, n=5, p=1.2):
    eps = np.logspace(-3, -1, n)
    recs = [LifespanRecord(float(e), True, float(3 * e**-0.4), (3 * e**-0.4,) * 2, False, "parabolic", p) for e in eps]
    write_sweep_csv(path, recs)


def test_plot_has_both_reference_lines(tmp_path):
    synthetic_sweep(tmp_path / "sweep.csv")
    info = emit_plots(tmp_path / "sweep.csv", tmp_path / "plot.svg", H)
    assert set(info["reference_slopes"]) == {"sharp", "cd"}
    assert info["fit"]["slope"] == pytest.approx(-0.4)
    svg = (tmp_path / "plot.svg").read_text()
    assert svg.startswith("<?xml") and "sharp slope -0.333" in svg and "cd slope -1.000" in svg


def test_plot_of_empty_sweep_raises(tmp_path):
    (tmp_path / "sweep.csv").write_text("")
    with pytest.raises(ValueError):
        emit_plots(tmp_path / "sweep.csv", tmp_path / "plot.svg", H)


def test_fit_and_report_commands(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    synthetic_sweep(out / "sweep.csv", p=1.3)
    cfg = write_cfg(tmp_path / "run.ini", "[run]\npreset = heisenberg-1\n[fit]\nslope_tolerance = 0.2\n")
    # synthetic slope -0.4 is far from -0.75: the fit stage must report failure
    assert main(["fit", "--config", cfg, "--out", str(out)]) == 1
    assert (out / "failures.json").exists()
    assert main(["report", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "lifespan.svg").exists()
