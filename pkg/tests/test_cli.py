import csv
import io
import json
import shutil
import subprocess

import numpy as np
import pytest

from polmult.cli import main
from polmult.io import sector_from_dict, table_from_dict
from polmult.multipoles import decompose, recompose


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def fock20(tmp_path):
    path = tmp_path / "fock20.json"
    assert _run("state", "--family", "fock", "--nh", 2, "--nv", 0, "-o", path) == 0
    return path


def test_state_families(tmp_path):
    vac = tmp_path / "vac.json"
    assert _run("state", "--family", "tmsv", "--r", 0, "-o", vac) == 0
    sector = sector_from_dict(json.loads(vac.read_text()))
    assert list(sector.blocks) == [0]
    q = tmp_path / "q.json"
    assert _run("state", "--family", "quadrature_coherent", "--nbar", 4, "--tail", 1e-10, "-o", q) == 0
    assert sector_from_dict(json.loads(q.read_text())).tail_mass < 1e-10
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"family": "noon", "n": 3}))
    assert _run("state", "--spec", spec, "-o", tmp_path / "noon.json") == 0


def test_state_input_errors(tmp_path, capsys):
    assert _run("state", "--family", "fock", "--nh", -1, "--nv", 0) == 2
    assert "error" in capsys.readouterr().err
    assert _run("state", "--family", "fock", "--nh", 1) == 2
    assert _run("state") == 2
    assert _run("nonsense") == 2
    assert _run("state", "--spec", tmp_path / "missing.json") == 2


def test_measures_csv_and_clamp(fock20, tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert _run("measures", fock20, "--k-max", 5, "-o", out) == 0
    assert "clamped" in capsys.readouterr().err
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    agg = {int(r["K"]): r for r in rows if r["S"] == "all"}
    assert float(agg[1]["P_contribution"]) == pytest.approx(1.0)
    assert _run("measures", fock20, "--k-max", 0) == 2


def test_coherent_measures_are_unity(tmp_path):
    st = tmp_path / "c.json"
    _run("state", "--family", "su2_coherent", "--two-s", 5, "--theta", 0.4, "--phi", 1.0, "-o", st)
    out = tmp_path / "m.json"
    assert _run("measures", st, "--k-max", 5, "--format", "json", "-o", out) == 0
    data = json.loads(out.read_text())
    assert [a["P"] for a in data["aggregate"][1:]] == pytest.approx([1.0] * 5, abs=1e-12)


def test_tomo_exact_side_by_side(fock20, tmp_path):
    out, cmp = tmp_path / "rec.json", tmp_path / "cmp.csv"
    assert _run("tomo", "--state", fock20, "--l-max", 2, "-o", out, "--compare", cmp) == 0
    rows = {(r["K"], r["q"]): r for r in csv.DictReader(io.StringIO(cmp.read_text()))}
    assert rows[("1", "0")]["rec_re"] == "0.707107"
    assert rows[("2", "0")]["rec_re"] == "0.408248"


def test_round_trip_state_tomo_recompose(tmp_path):
    st = tmp_path / "s.json"
    # blocks stay at 2S <= 8, where exact moments keep the recursion within 1e-10
    _run("state", "--family", "quadrature_coherent", "--alpha-h", "0.5+0.2j", "--alpha-v", "0.3", "--tail", 1e-8, "-o", st)
    original = sector_from_dict(json.loads(st.read_text()))
    assert max(original.blocks) <= 8
    rec = tmp_path / "rec.json"
    assert _run("tomo", "--state", st, "--l-max", 8, "-o", rec) == 0
    table = table_from_dict(json.loads(rec.read_text())["table"])
    assert recompose(table).allclose(original, atol=1e-10)


def test_sampled_and_ingest_modes_agree(fock20, tmp_path):
    counts, out1, out2 = tmp_path / "c.jsonl", tmp_path / "a.json", tmp_path / "b.json"
    assert _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 20000, "--seed", 1,
                "--counts-out", counts, "-o", out1) == 0
    assert _run("tomo", "--counts", counts, "--l-max", 2, "-o", out2) == 0
    a = json.loads(out1.read_text())["table"]
    b = json.loads(out2.read_text())["table"]
    assert a == b


def test_outputs_are_byte_identical(fock20, tmp_path):
    paths = [tmp_path / "x.json", tmp_path / "y.json"]
    for p in paths:
        assert _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 5000, "--seed", 3, "-o", p) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_seed_environment_override(fock20, tmp_path, monkeypatch):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    monkeypatch.setenv("POLMULT_SEED", "77")
    _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 5000, "-o", a)
    _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 5000, "--seed", 77, "-o", b)
    monkeypatch.setenv("POLMULT_SEED", "78")
    _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 5000, "-o", c)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    monkeypatch.setenv("POLMULT_SEED", "abc")
    assert _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 10) == 2


def test_tomo_singular_directions_exit_one(fock20, tmp_path, capsys):
    dirs = tmp_path / "d.json"
    dirs.write_text(json.dumps({"orders": {"1": {"directions": [
        {"theta": 1.5707963267948966, "phi": 0.0},
        {"theta": 1.5707963267948966, "phi": 1.5707963267948966},
        {"theta": 1.5707963267948966, "phi": 0.7853981633974483},
    ]}}}))
    assert _run("tomo", "--state", fock20, "--l-max", 1, "--directions", dirs) == 1
    assert "condition number" in capsys.readouterr().err


def test_tomo_option_errors(fock20, tmp_path):
    assert _run("tomo", "--l-max", 2) == 2
    assert _run("tomo", "--state", fock20, "--l-max", 0) == 2
    assert _run("tomo", "--state", fock20, "--l-max", 3, "--strict") == 2
    assert _run("tomo", "--state", fock20, "--l-max", 2, "--shots", 0) == 2


def test_quasi_outputs(tmp_path):
    mixed = tmp_path / "mm.json"
    _run("state", "--family", "maximally_mixed", "--two-s", 3, "-o", mixed)
    out = tmp_path / "q.csv"
    assert _run("quasi", mixed, "--r", 0, "-o", out) == 0
    lines = out.read_text().splitlines()
    header = json.loads(lines[0][2:])
    assert header["localization_integral"] == pytest.approx(header["localization_identity"], abs=1e-12)
    values = np.array([float(r["value"]) for r in csv.DictReader(io.StringIO("\n".join(lines[1:])))])
    np.testing.assert_allclose(values, values[0], atol=1e-14)
    assert _run("quasi", mixed, "--r", 0, "--band-limit", 0) == 2
    assert _run("quasi", mixed, "--r", 0, "--two-s", 5) == 2


def test_directions_and_p2_surface(tmp_path):
    d = tmp_path / "d.json"
    assert _run("directions", "--order", 1, 2, 3, "-o", d) == 0
    data = json.loads(d.read_text())
    assert data["orders"]["2"]["min_line_angle_deg"] == pytest.approx(63.4349, abs=1e-3)
    p = tmp_path / "p2.csv"
    assert _run("p2-surface", "--s-max", 3, "-o", p) == 0
    rows = list(csv.DictReader(io.StringIO(p.read_text())))
    for r in rows:
        assert float(r["P2_squared"]) == pytest.approx(float(r["closed_form"]), abs=1e-12)
        if r["m"] == r["S"]:
            assert float(r["P2"]) == pytest.approx(1.0)
    assert _run("p2-surface", "--s-max", 0.5) == 2


def test_decompose_command(fock20, tmp_path):
    out = tmp_path / "t.json"
    assert _run("decompose", fock20, "-o", out) == 0
    table = table_from_dict(json.loads(out.read_text()))
    ref = decompose(sector_from_dict(json.loads(fock20.read_text())))
    assert table.allclose(ref, atol=0)


@pytest.mark.skipif(shutil.which("polmult") is None, reason="console script not installed")
def test_console_script_runs():
    out = subprocess.run(["polmult", "directions", "--order", "1"], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["orders"]["1"]["label"] == "axes"
