import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from spectral_flow import Ball, ModelSpec, admissible_eps2, assemble_perturbed, bloch_dos_table, convergence_study, find_gap
from spectral_flow.cli import main
from spectral_flow.config import config_from_dict
from spectral_flow.errors import ConfigError

GAP_MODEL = {
    "d": 1,
    "period": [2],
    "cell_values": [0.0, 3.0],
    "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2, "near_field_cap": 0.0},
}
FREE_MODEL = {"d": 1, "period": [1], "cell_values": [0.0]}


def write_config(tmp_path, name="cfg.json", **sections):
    data = {"model": GAP_MODEL, "output": {"directory": str(tmp_path / "out")}}
    data.update(sections)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECTRAL_FLOW_CACHE", str(tmp_path / "cache"))
    monkeypatch.delenv("SPECTRAL_FLOW_THREADS", raising=False)


def test_bands_free_reports_no_gap(tmp_path, capsys):
    cfg = write_config(tmp_path, model=FREE_MODEL)
    assert main(["bands", str(cfg)]) == 0
    assert "no gap" in capsys.readouterr().out
    assert json.loads((tmp_path / "out" / "gaps.json").read_text())["widest"] is None


def test_bands_gap_model(tmp_path, capsys):
    assert main(["bands", str(write_config(tmp_path))]) == 0
    widest = json.loads((tmp_path / "out" / "gaps.json").read_text())["widest"]
    assert widest == pytest.approx([2.0, 5.0], abs=1e-9)
    rows = read_csv(tmp_path / "out" / "bands.csv")
    assert list(rows[0]) == ["k_1", "band_0", "band_1"]
    assert float(rows[0]["band_0"]) == pytest.approx(1.0)


def test_malformed_json_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"d": 1,\n  "period": [2],,}}')
    assert main(["bands", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_bad_field_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, alpha_grid={"min": 10, "max": 1, "points": 3})
    assert main(["flow", str(cfg)]) == 2
    assert "alpha_grid" in capsys.readouterr().err


def test_unknown_field_and_missing_model():
    with pytest.raises(ConfigError, match="unknown configuration fields: colour"):
        config_from_dict({"model": GAP_MODEL, "colour": 1})
    with pytest.raises(ConfigError, match="model"):
        config_from_dict({})
    with pytest.raises(ConfigError, match="model"):
        config_from_dict({"model": {"d": 1, "period": [2], "cell_values": [0.0]}})


def test_missing_file_exit_2(tmp_path):
    assert main(["bands", str(tmp_path / "nope.json")]) == 2


def test_auto_midgap_without_gap_is_config_error(tmp_path, capsys):
    assert main(["flow", str(write_config(tmp_path, model=FREE_MODEL))]) == 2
    assert "auto-midgap" in capsys.readouterr().err


def test_numerical_error_exit_3(tmp_path, capsys):
    # lambda = 2 is an eigenvalue of the 3-site free path: resolvent singular
    cfg = write_config(tmp_path, model=FREE_MODEL, bs={"domain": {"shape": "ball", "params": {"radius": 1.5}, "dimension": 1}})
    assert main(["bs-verify", str(cfg), "--lambda", "2.0"]) == 3
    assert "resolvent singular" in capsys.readouterr().err


def test_alpha_grid_spacing():
    cfg = config_from_dict({"model": GAP_MODEL, "alpha_grid": {"min": 1, "max": 100, "points": 3}})
    assert cfg.alphas() == pytest.approx([1.0, 10.0, 100.0])
    cfg = config_from_dict({"model": GAP_MODEL, "alpha_grid": {"min": 0, "max": 10, "points": 3, "log": False}})
    assert cfg.alphas() == [0.0, 5.0, 10.0]


def test_dos_free_table_matches_closed_form(tmp_path):
    cfg = write_config(tmp_path, model=FREE_MODEL, dos={"points": 201})
    assert main(["dos", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "dos_bloch.csv")
    lam = np.array([float(r["lambda"]) for r in rows])
    rho = np.array([float(r["rho"]) for r in rows])
    inside = (lam >= 0) & (lam <= 4)
    assert rho[inside] == pytest.approx(np.arccos(1 - lam[inside] / 2) / np.pi, abs=1e-10)


def test_dos_cached_rerun_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, dos={"points": 301})
    assert main(["dos", str(cfg)]) == 0
    first = (tmp_path / "out" / "dos_bloch.csv").read_bytes()
    cache_files = sorted((tmp_path / "cache").iterdir())
    assert main(["dos", str(cfg)]) == 0
    assert "cached" in capsys.readouterr().out.splitlines()[-1]
    assert (tmp_path / "out" / "dos_bloch.csv").read_bytes() == first
    assert sorted((tmp_path / "cache").iterdir()) == cache_files


def test_dos_both_routes_agreement(tmp_path):
    cfg = write_config(
        tmp_path,
        dos={"route": "both", "points": 301, "fv_points": 41, "betas": [100, 200]},
    )
    assert main(["dos", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "dos_agreement.csv")
    assert len(rows) == 41
    assert all(r["agree"] == "true" for r in rows)
    assert (tmp_path / "out" / "dos_finite_volume.csv").exists()


def test_flow_csv(tmp_path):
    cfg = write_config(tmp_path, alpha_grid={"values": [10, 100, 1000]})
    assert main(["flow", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "flow.csv")
    assert rows[0] == {"alpha": "0.0", "N": "0", "lambda_shift": ""}
    counts = [int(r["N"]) for r in rows]
    assert counts == sorted(counts) and counts[-1] > 0
    assert all(r["lambda_shift"] == "" for r in rows)


def test_flow_collision_populates_shift(tmp_path):
    model = ModelSpec.from_dict(GAP_MODEL)
    dom = Ball(30.0, 1)
    e = np.linalg.eigvalsh(assemble_perturbed(dom, model, 100.0).to_dense())
    lam = float(e[(e > 2.2) & (e < 4.8)][0])
    cfg = write_config(tmp_path, alpha_grid={"values": [1, 100]}, flow={"domain_radius": 30.0})
    assert main(["flow", str(cfg), "--lambda", repr(lam)]) == 0
    rows = read_csv(tmp_path / "out" / "flow.csv")
    assert rows[1]["lambda_shift"] == ""
    assert float(rows[2]["lambda_shift"]) > 0


def test_bs_verify(tmp_path):
    cfg = write_config(tmp_path, alpha_grid={"values": [1, 10, 50, 100]})
    assert main(["bs-verify", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "bs.csv")
    assert [r["equal"] for r in rows] == ["true"] * 5
    assert rows[0]["n_plus"] == "0"


def test_bs_verify_empty_support(tmp_path):
    model = dict(GAP_MODEL, impurity={"psi": {"kind": "constant", "value": 0.0}, "p": 2})
    cfg = write_config(tmp_path, model=model, alpha_grid={"values": [1, 1e4]})
    assert main(["bs-verify", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "bs.csv")
    assert {(r["n_plus"], r["flow_count"]) for r in rows} == {("0", "0")}


def test_asymptotics_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, alpha_grid={"values": [100, 1000]})
    assert main(["asymptotics", str(cfg)]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert {"trend_toward_1", "final_deviation", "n3_all_zero", "splitting_ok", "n1_bound_ok"} <= set(report["verdict"])
    svg = (out / "ratio.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<image" not in svg and "href=\"http" not in svg
    assert json.loads((out / "timings.json").read_text())["per_alpha"]

    model = ModelSpec.from_dict(GAP_MODEL)
    gap = find_gap(model)
    lam = 0.5 * (gap[0] + gap[1])
    direct = convergence_study(
        model, lam, [100.0, 1000.0], 0.2, admissible_eps2(model, lam, gap), bloch_dos_table(model), gap=gap
    )
    assert [r["ratio"] for r in report["records"]] == direct.ratios
    assert main(["report", str(cfg)]) == 0
    assert "verdict" in capsys.readouterr().out


def test_asymptotics_rerun_byte_identical(tmp_path):
    cfg = write_config(tmp_path, alpha_grid={"values": [100, 400]}, seed=3)
    out = tmp_path / "out"
    assert main(["asymptotics", str(cfg)]) == 0
    first = {p: (out / p).read_bytes() for p in ("asymptotics.csv", "report.json", "ratio.svg")}
    assert main(["asymptotics", str(cfg)]) == 0
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob, name


def test_flags_override_file(tmp_path):
    cfg = write_config(tmp_path, alpha_grid={"values": [100, 1000]})
    other = tmp_path / "elsewhere"
    assert main(["flow", str(cfg), "--alphas", "5", "50", "-o", str(other)]) == 0
    rows = read_csv(other / "flow.csv")
    assert [r["alpha"] for r in rows] == ["0.0", "5.0", "50.0"]
    assert not (tmp_path / "out" / "flow.csv").exists()


def test_report_without_run_is_config_error(tmp_path):
    assert main(["report", str(write_config(tmp_path))]) == 2


def test_help_documents_columns():
    res = subprocess.run([sys.executable, "-m", "spectral_flow.cli", "flow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "column provenance" in res.stdout and "lambda_shift" in res.stdout


def test_console_script_installed():
    res = subprocess.run(["spectral-flow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "asymptotics" in res.stdout
