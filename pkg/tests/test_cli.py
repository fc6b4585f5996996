import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from magnon_gkp import cli
from magnon_gkp import hilbert as hb

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL_GRID = {"extent": 5.0, "points": 41}


def reference_raw(**top):
    raw = json.loads((CONFIGS / "reference_device.json").read_text())
    raw.update(top)
    return raw


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_derive_writes_report(tmp_path, capsys):
    code = cli.main(["derive", "--config", str(CONFIGS / "reference_device.json"),
                     "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    rep = json.loads((tmp_path / "derive.json").read_text())
    assert abs(rep["chi_hz"] - 7.55e6) < 0.02e6
    head = json.loads(capsys.readouterr().out)
    assert head["r"] == pytest.approx(rep["r"])


def test_gamma0_in_hz_per_tesla():
    raw = reference_raw()
    raw["device"]["material"] = {"gamma0": 28e9, "mu0_Ms": 0.175, "B0": 0.1}
    raw["device"]["geometry"] = {"a": 3e-3, "b": 1e-3, "c": 1e-3}
    rc = cli.parse_config(raw)
    assert rc.device.material.gamma0 == pytest.approx(2 * math.pi * 28e9)


@pytest.mark.parametrize("mutate, fragment", [
    (lambda r: r["device"].pop("f_q"), "f_q"),
    (lambda r: r["device"].update(f_x=1.0), "f_x"),
    (lambda r: r.update(colour="red"), "colour"),
    (lambda r: r.update(sequence="2_L"), "sequence"),
    (lambda r: r.update(noise="yes"), "noise"),
    (lambda r: r.update(dim=1), "dim"),
    (lambda r: r["device"].update(g_cq="65e6"), "g_cq"),
    (lambda r: r.update(sweep={"parameter": "kappa_m", "values": [1]}), "sweep"),
])
def test_config_errors_exit_2(tmp_path, capsys, mutate, fragment):
    raw = reference_raw()
    mutate(raw)
    code = cli.main(["derive", "--config", write_config(tmp_path, raw), "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "device": {,\n}')
    assert cli.main(["derive", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_unstable_device_exit_3(tmp_path):
    raw = reference_raw()
    raw["device"]["xi"] = raw["device"]["f_m"]
    assert cli.main(["derive", "--config", write_config(tmp_path, raw)]) == cli.EXIT_PHYSICS


def test_coarse_integration_exit_4(tmp_path):
    raw = reference_raw(noise=True, steps_per_t1=1, grid=SMALL_GRID)
    code = cli.main(["prepare", "--config", write_config(tmp_path, raw), "--out", str(tmp_path)])
    assert code == cli.EXIT_DRIFT


def test_prepare_and_wigner_round_trip(tmp_path):
    raw = reference_raw(grid=SMALL_GRID)
    out = tmp_path / "prep"
    assert cli.main(["prepare", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
    for name in ("wigner.csv", "wigner.json", "marginals.csv", "tomography.json",
                 "squeezing.json", "state.json", "summary.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["success_probability"] == pytest.approx(0.375, abs=1e-3)
    assert summary["tomography"]["fidelities"]["0_L"] > 0.913
    again = tmp_path / "again"
    assert cli.main(["wigner", "--state", str(out / "state.json"), "--config",
                     write_config(tmp_path, raw), "--out", str(again)]) == 0
    # the dump is trimmed to its support, so values agree to the trim accuracy
    a = np.loadtxt(out / "wigner.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(again / "wigner.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(a - b)) < 1e-8


def test_state_dump_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi = hb.HybridState(v / np.linalg.norm(v), (4, 2))
    back = cli.load_state(cli.dump_state(psi, tmp_path / "s.json"))
    assert np.array_equal(back.amplitudes, psi.amplitudes)
    rho = psi.to_density()
    back = cli.load_state(cli.dump_state(rho, tmp_path / "r.json"))
    assert np.array_equal(back.matrix, rho.matrix) and back.space_dims == (4, 2)
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(cli.ConfigError):
        cli.load_state(tmp_path / "bad.json")


def test_explicit_empty_sequence_gives_initial_state(tmp_path):
    raw = reference_raw(sequence=[], grid=SMALL_GRID)
    out = tmp_path / "empty"
    assert cli.main(["prepare", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["success_probability"] == 1.0
    # lab-frame squeezed vacuum: Delta_Z^2 = e^{-2r}
    r = cli.derive_model(cli.parse_config(raw).device).r
    assert summary["squeezing"]["delta_Z"] ** 2 == pytest.approx(math.exp(-2 * r), rel=1e-6)


def test_explicit_steps_match_preset(tmp_path):
    steps = [{"kind": "cd", "duration_t1": 1.0}, {"kind": "project", "outcome": "g"},
             {"kind": "cd", "duration_t1": 1.0}, {"kind": "project", "outcome": "g"}]
    a = cli.cmd_prepare(cli.parse_config(reference_raw(sequence=steps, grid=SMALL_GRID)), tmp_path / "a")
    b = cli.cmd_prepare(cli.parse_config(reference_raw(grid=SMALL_GRID)), tmp_path / "b")
    assert a["tomography"]["fidelities"] == pytest.approx(b["tomography"]["fidelities"], abs=1e-12)


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_records_row_errors_and_is_deterministic(tmp_path):
    raw = reference_raw(sweep={"parameter": "device.xi", "values": [17.368e9, 18.5e9]})
    cfg = write_config(tmp_path, raw)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    rows = _read_rows(tmp_path / "a" / "sweep.csv")
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert rows[0]["error"] == "" and float(rows[0]["F_bar"]) > 0.9
    assert rows[1]["error"].startswith("InstabilityError")


def test_single_point_sweep_matches_prepare(tmp_path):
    raw = reference_raw(grid=SMALL_GRID, sweep={"parameter": "device.T", "values": [0.01]})
    rows = cli.cmd_sweep(cli.parse_config(raw), tmp_path / "s")
    prep = cli.cmd_prepare(cli.parse_config(reference_raw(grid=SMALL_GRID)), tmp_path / "p")
    assert rows[0]["F_0_L"] == pytest.approx(prep["tomography"]["fidelities"]["0_L"], abs=1e-12)


def test_sweep_without_section_is_config_error(tmp_path):
    assert cli.main(["sweep", "--config", str(CONFIGS / "reference_device.json"),
                     "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_repeat_prepare_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, reference_raw(grid=SMALL_GRID))
    for name in ("a", "b"):
        assert cli.main(["prepare", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
