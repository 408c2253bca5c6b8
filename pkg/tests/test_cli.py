import csv
import json

import numpy as np
import pytest

from surfield.cli import main
from surfield.fieldio import write_srf1
from surfield.lattice import RngSpec, VoxelSet, make_domain_preset, sample_ensemble


def read_lkc_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def test_lkc_white_noise_reference(tmp_path):
    out = tmp_path / "o"
    rc = main([
        "lkc", "--preset", "stat1d", "--fwhm", "3", "--source", "white-noise",
        "--r", "11", "--out", str(out),
    ])
    assert rc == 0
    rows = read_lkc_csv(out / "lkc.csv")
    assert len(rows) == 1
    assert abs(float(rows[0]["L1"]) - 55.50) / 55.50 < 0.005
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "lkc"
    assert manifest["config"]["fwhm"] == 3.0
    assert "version" in manifest


def test_lkc_closed_form(tmp_path):
    out = tmp_path / "o"
    rc = main([
        "lkc", "--preset", "stat2d", "--fwhm", "2", "--source", "closed-form",
        "--out", str(out),
    ])
    assert rc == 0
    rows = read_lkc_csv(out / "lkc.csv")
    assert float(rows[0]["L2"]) == pytest.approx(277.26, rel=1e-4)


def test_lkc_requires_domain(tmp_path):
    rc = main(["lkc", "--fwhm", "2", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_threshold_cli(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["threshold", "--lkcs", "1,0,0,0", "--alpha", "0.025", "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    assert abs(float(printed) - 1.959964) < 1e-5
    payload = json.loads((out / "threshold.json").read_text())
    assert payload["u_alpha"] == pytest.approx(1.959964, abs=1e-5)


def test_census_cli(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["census", "--preset", "nonstat2d", "--out", str(out)])
    assert rc == 0
    payload = json.loads((out / "census.json").read_text())
    assert payload["euler_characteristic"] == 0
    assert payload["n_voxels"] == 144


def test_check_nondegeneracy_cli(tmp_path):
    rc = main([
        "check-nondegeneracy", "--preset", "stat1d", "--fwhm", "2",
        "--point", "50", "--out", str(tmp_path / "o"),
    ])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "nondegeneracy.json").read_text())
    assert payload["passed"] and payload["rank"] == 3


def test_fwer_sim_cli_and_determinism(tmp_path):
    cfg = {
        "preset": "nonstat1d", "fwhm": 2.0, "n_subjects": 12, "n_reps": 8,
        "alpha": 0.1, "seed": 3,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["fwer-sim", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert main(["fwer-sim", "--config", str(cfg_path), "--threads", "3", "--out", str(out2)]) == 0
    rep1 = (out1 / "fwer_report.json").read_bytes()
    rep2 = (out2 / "fwer_report.json").read_bytes()
    assert rep1 == rep2
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3
    with open(out1 / "fwer_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["r_mode"] for r in rows] == ["r0", "r1", "rinf"]
    f = [float(r["fwer"]) for r in rows]
    assert f[0] <= f[1] <= f[2]


def test_fwer_sim_config_validation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"preset": "stat2d", "fwhm": 2.0}))
    assert main(["fwer-sim", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"preset": "stat2d", "fwhm": 2.0, "n_subjects": 5,
                               "n_reps": 2, "bogus": 1}))
    assert main(["fwer-sim", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("{not json")
    assert main(["fwer-sim", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_fwer_sim_dry_run(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "stat2d", "fwhm": 3.0, "n_subjects": 10, "n_reps": 4}))
    rc = main(["fwer-sim", "--config", str(cfg), "--dry-run", "--out", str(tmp_path / "o")])
    assert rc == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["plan"]["alpha"] == 0.05
    assert not (tmp_path / "o").exists()


def test_surf_eval_cli(tmp_path):
    dom = VoxelSet(np.arange(0.0, 10.0)[:, None])
    ens = sample_ensemble(dom, 2, RngSpec(1))
    srf = tmp_path / "f.srf1"
    write_srf1(srf, ens)
    pts = tmp_path / "pts.csv"
    pts.write_text("x0\n2.25\n7.5\n")
    out = tmp_path / "o"
    rc = main([
        "surf", "eval", "--fields", str(srf), "--points", str(pts),
        "--fwhm", "2", "--order", "gradient", "--out", str(out),
    ])
    assert rc == 0
    with open(out / "surf_eval.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    from surfield.kernel import GaussianKernel
    from surfield.surf import SurfSpec, surf_eval

    want = surf_eval(SurfSpec(ens, GaussianKernel.isotropic(2.0, 1)), [[2.25]], field=0)
    assert float(rows[0]["value0"]) == pytest.approx(want[0], rel=1e-12)


def test_cli_identical_runs_identical_files(tmp_path):
    args = ["lkc", "--preset", "stat1d", "--fwhm", "2", "--source", "ensemble",
            "--n-subjects", "8", "--seed", "11", "--r", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "lkc.csv").read_bytes() == (tmp_path / "b" / "lkc.csv").read_bytes()


def test_lkc_json_format(tmp_path):
    out = tmp_path / "o"
    rc = main([
        "lkc", "--preset", "stat1d", "--fwhm", "4", "--source", "closed-form",
        "--format", "json", "--out", str(out),
    ])
    assert rc == 0
    payload = json.loads((out / "lkc.json").read_text())
    assert float(payload["L1"]) == pytest.approx(41.63, rel=1e-4)
    assert not (out / "lkc.csv").exists()
