import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from rigidlab import __version__
from rigidlab.cli import CONFIG_SCHEMA, load_config, run
from rigidlab.surface import CATALOG


def _run(args):
    out, err = io.StringIO(), io.StringIO()
    code = run(args, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_energy_sphere(tmp_path):
    code, out, _ = _run(["energy", "--surface", "sphere", "--grid", "256", "--out", str(tmp_path)])
    assert code == 0
    doc = _json(tmp_path / "energy.json")
    assert doc["result"]["willmore"] == pytest.approx(4 * math.pi, rel=1e-6)
    assert doc["tool"] == {"name": "rigidlab", "version": __version__}
    assert doc["config"]["grid"] == [256, 256]
    assert "willmore" in out


def test_ledger_with_auto_inversion(tmp_path):
    code, out, _ = _run(["ledger", "--surface", "catenoid", "--invert", "auto", "--out", str(tmp_path)])
    assert code == 0
    doc = _json(tmp_path / "ledger.json")["result"]
    assert doc["gauss_bonnet"]["agrees"]
    inv = doc["inversion"]
    assert inv["measured"]["total_sff"] == pytest.approx(24 * math.pi, rel=0.01)
    assert all(inv["within_relative"].values())
    assert "+24.0" in out


def test_grid_below_minimum_is_config_error(tmp_path):
    code, _, err = _run(["energy", "--surface", "sphere", "--grid", "4", "--out", str(tmp_path)])
    assert code == 2
    assert "config error" in err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "energy", "surface": {"name": "sphere"}, "grd": 64}))
    code, _, err = _run(["--config", str(cfg)])
    assert code == 2
    assert "grd" in err


@pytest.mark.parametrize("args", [
    ["energy", "--surface", "torus"],
    ["energy"],
    ["energy", "--surface", "sphere", "--params", "[1]"],
    ["energy", "--surface", "sphere", "--params", '{"r": -1}'],
    ["sweep", "--family", "round-sphere", "--eps", "0.01,0.02"],
    ["ledger", "--surface", "sphere", "--invert", "1,2"],
    ["frobnicate"],
    [],
])
def test_config_errors(tmp_path, args):
    code, _, _ = _run(args + ["--out", str(tmp_path)] if args else args)
    assert code == 2


def test_defaults_are_filled():
    cfg = load_config(overrides={"command": "align", "surface": {"name": "sphere"}})
    assert cfg["model"] == "round_sphere"
    assert cfg["surface"]["params"] == {"r": 1.0}
    assert cfg["optimizer"]["restarts"] >= 0
    assert cfg["tolerances"]["ledger_relative"] == 0.01
    assert cfg["output"]["dir"] == "rigidlab-out"
    sw = load_config(overrides={"command": "sweep"})
    assert sw["sweep"]["family"]["family"] == "round-sphere"
    assert len([e for e in sw["sweep"]["epsilons"] if e > 0]) >= 4


def test_toml_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'command = "energy"\n'
        "grid = [64, 64]\n"
        f'[output]\ndir = "{tmp_path / "res"}"\n'
        '[surface]\nname = "sphere"\n[surface.params]\nr = 2.0\n'
    )
    code, _, _ = _run(["--config", str(cfg)])
    assert code == 0
    doc = _json(tmp_path / "res" / "energy.json")
    assert doc["result"]["area"] == pytest.approx(16 * math.pi, rel=1e-6)
    assert doc["config"]["surface"]["params"] == {"r": 2.0}


def test_command_line_overrides_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "energy", "surface": {"name": "sphere"}, "grid": 16}))
    code, _, _ = _run(["energy", "--config", str(cfg), "--grid", "32", "--out", str(tmp_path)])
    assert code == 0
    assert _json(tmp_path / "energy.json")["config"]["grid"] == [32, 32]


def test_outputs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(["energy", "--surface", "clifford_torus", "--grid", "32", "--out", str(d)])[0] == 0
    assert (a / "energy.json").read_bytes() == (b / "energy.json").read_bytes()


def test_inversion_pole_on_surface(tmp_path):
    code, _, err = _run(["invert", "--surface", "sphere", "--center", "1,0,0", "--out", str(tmp_path)])
    assert code == 3
    assert "numerical failure" in err


def test_invert_auto(tmp_path):
    code, out, _ = _run(["invert", "--surface", "catenoid", "--grid", "64", "--out", str(tmp_path)])
    assert code == 0
    doc = _json(tmp_path / "invert.json")["result"]
    assert doc["safe_center"] is not None
    assert doc["energy"]["willmore"] == pytest.approx(8 * math.pi, rel=0.01)


def test_catalog_listing():
    code, out, _ = _run(["catalog"])
    assert code == 0
    doc = json.loads(out)
    assert set(doc["catalog"]) == set(CATALOG)


def test_off_export(tmp_path):
    code, _, _ = _run(["energy", "--surface", "sphere", "--grid", "32", "--off", "s.off", "--out", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "s.off").read_text()
    assert text.startswith("OFF\n")


def test_align_sphere(tmp_path):
    code, out, _ = _run(["align", "--surface", "sphere", "--grid", "32", "--out", str(tmp_path)])
    assert code == 0
    doc = _json(tmp_path / "align.json")["result"]
    assert doc["distance"]["value"] <= 1e-8


def test_small_sweep(tmp_path):
    code, out, _ = _run(["sweep", "--family", "round-sphere", "--eps", "0.01,0.02,0.05,0.1", "--grid", "32",
                         "--restarts", "1", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epsilon", "delta", "distance", "area", "normalized_distance", "converged"]
    assert len(rows) == 5
    assert [float(r[0]) for r in rows[1:]] == [0.01, 0.02, 0.05, 0.1]
    fit = _json(tmp_path / "sweep_fit.json")
    assert fit["result"]["fit"]["rows_used"] == 4
    dat = (tmp_path / "sweep.dat").read_text().splitlines()
    assert dat[0].startswith("# rigidlab")
    assert len([ln for ln in dat if not ln.startswith("#")]) == 4
    assert 'sweep.dat' in (tmp_path / "sweep.gp").read_text()


def test_schema_is_draft7():
    assert CONFIG_SCHEMA["$schema"].endswith("draft-07/schema#")


def test_console_script_version():
    env = dict(os.environ)
    out = subprocess.run([sys.executable, "-m", "rigidlab", "--version"], capture_output=True, text=True, env=env)
    assert out.returncode == 0
    assert __version__ in out.stdout
