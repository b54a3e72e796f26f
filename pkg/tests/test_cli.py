import numpy as np
import pytest
import yaml

from magloc import cli, io
from magloc.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_ILL_CONDITIONED, EXIT_OK, EXIT_VERIFY

SMALL = {
    "scenario": {"anomalies": [{"position": [0.6, 0.45, 0.0], "delta": 0.02}]},
    "quadrature": {"exact_degree": 24},
    "noise": {"beta": 0.05, "seed": 3},
    "grid": {"h": 0.05, "slice": "z=0"},
}


def write_cfg(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.fixture
def cfg(tmp_path):
    return write_cfg(tmp_path / "cfg.yaml", SMALL)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_synth_writes_files(cfg, tmp_path):
    assert run("synth", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    assert (tmp_path / "o" / "measurement.csv").exists()
    assert not (tmp_path / "o" / "partial.csv").exists()
    dumped = yaml.safe_load((tmp_path / "o" / "config.yaml").read_text())
    assert dumped["noise"]["seed"] == 3


def test_synth_same_seed_is_byte_identical(cfg, tmp_path):
    run("synth", "--config", cfg, "--out", tmp_path / "a", "--aperture", "hemi:+x")
    run("synth", "--config", cfg, "--out", tmp_path / "b", "--aperture", "hemi:+x")
    for name in ("measurement.csv", "partial.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    run("synth", "--config", cfg, "--out", tmp_path / "c", "--seed", "4")
    assert (tmp_path / "c" / "measurement.csv").read_bytes() != (tmp_path / "a" / "measurement.csv").read_bytes()


def test_synth_without_anomalies_is_zero(tmp_path):
    c = write_cfg(tmp_path / "c.yaml", {"quadrature": {"exact_degree": 8}})
    assert run("synth", "--config", c, "--out", tmp_path / "o") == EXIT_OK
    meas = io.read_measurement(tmp_path / "o" / "measurement.csv")
    assert np.all(meas.values == 0)


def test_locate_zero_data_is_degenerate(tmp_path):
    c = write_cfg(tmp_path / "c.yaml", {"quadrature": {"exact_degree": 8}, "grid": {"h": 0.1, "slice": "z=0"}})
    run("synth", "--config", c, "--out", tmp_path / "o")
    code = run("locate", "--config", c, "--data", tmp_path / "o" / "measurement.csv", "--out", tmp_path / "l")
    assert code == EXIT_DEGENERATE


def test_locate_finds_anomaly(cfg, tmp_path):
    run("synth", "--config", cfg, "--out", tmp_path / "o")
    code = run("locate", "--config", cfg, "--data", tmp_path / "o" / "measurement.csv", "--out", tmp_path / "l")
    assert code == EXIT_OK
    rep = yaml.safe_load((tmp_path / "l" / "report.yaml").read_text())["run"]
    assert rep["n_peaks"] == 1
    assert rep["peaks"][0]["error"] < 0.05
    assert rep["bound"]["compliant"]
    head, pts, raw, norm, sat = io.read_grid(tmp_path / "l" / "grid.csv")
    assert norm.max() == 1.0


def test_locate_partial_data_needs_aperture(cfg, tmp_path):
    run("synth", "--config", cfg, "--out", tmp_path / "o", "--aperture", "hemi:+x")
    code = run("locate", "--config", cfg, "--data", tmp_path / "o" / "partial.csv", "--out", tmp_path / "l")
    assert code == EXIT_CONFIG
    code = run("locate", "--config", cfg, "--aperture", "hemi:+x",
               "--data", tmp_path / "o" / "partial.csv", "--out", tmp_path / "l")
    assert code == EXIT_OK


def test_extend_then_locate(cfg, tmp_path):
    # clean data: noise at this low quadrature degree swamps the extension
    run("synth", "--config", cfg, "--beta", 0, "--out", tmp_path / "o", "--aperture", "hemi:+x")
    code = run("extend", "--config", cfg, "--data", tmp_path / "o" / "partial.csv", "--out", tmp_path / "e")
    assert code == EXIT_OK
    fit = yaml.safe_load((tmp_path / "e" / "fit.yaml").read_text())
    assert fit["rank"] == fit["n_coefficients"] == 51
    ext = io.read_measurement(tmp_path / "e" / "extended.csv")
    assert ext.weights is not None and len(ext) == 13 * 25
    code = run("locate", "--config", cfg, "--data", tmp_path / "e" / "extended.csv", "--out", tmp_path / "l")
    assert code == EXIT_OK
    rep = yaml.safe_load((tmp_path / "l" / "report.yaml").read_text())["run"]
    assert rep["truth_errors"][0] < 0.02


def test_extend_full_sphere_reproduces_clean_data(tmp_path):
    data = dict(SMALL, noise={"beta": 0.0, "seed": 0}, scenario={"R0": 20.0, "anomalies": [{"position": [0.6, 0.45, 0.0]}]})
    c = write_cfg(tmp_path / "c.yaml", data)
    run("synth", "--config", c, "--out", tmp_path / "o")
    assert run("extend", "--config", c, "--basis", "0,0,6", "--data", tmp_path / "o" / "measurement.csv",
               "--out", tmp_path / "e") == EXIT_OK
    orig = io.read_measurement(tmp_path / "o" / "measurement.csv").values
    ext = io.read_measurement(tmp_path / "e" / "extended.csv").values
    assert np.linalg.norm(ext - orig) / np.linalg.norm(orig) < 1e-6


def test_extend_rank_deficient_exits_4(cfg, tmp_path):
    run("synth", "--config", cfg, "--out", tmp_path / "o", "--aperture", "quarter:+x,+y")
    code = run("extend", "--config", cfg, "--basis", "20,0,20",
               "--data", tmp_path / "o" / "partial.csv", "--out", tmp_path / "e")
    assert code == EXIT_ILL_CONDITIONED


@pytest.mark.parametrize(
    "bad",
    [{"noise": {"bta": 1}}, {"grid": {"h": -1}}, {"preset": "nope"}, {"aperture": "hemi:+w"}],
)
def test_bad_config_exits_2(bad, tmp_path, capsys):
    c = write_cfg(tmp_path / "c.yaml", bad)
    assert run("synth", "--config", c, "--out", tmp_path / "o") == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_missing_data_file_exits_2(cfg, tmp_path):
    assert run("locate", "--config", cfg, "--data", tmp_path / "nope.csv", "--out", tmp_path / "l") == EXIT_CONFIG
    assert not (tmp_path / "l").exists()


def test_verify_passes(cfg, tmp_path):
    assert run("verify", "--config", cfg, "--out", tmp_path / "v") == EXIT_OK
    checks = yaml.safe_load((tmp_path / "v" / "verify.yaml").read_text())["checks"]
    assert all(c["passed"] for c in checks)


def test_verify_negative_control(cfg, tmp_path):
    code = run("verify", "--config", cfg, "--debug-drop-qz-factor", "--out", tmp_path / "v")
    assert code == EXIT_VERIFY
    checks = yaml.safe_load((tmp_path / "v" / "verify.yaml").read_text())["checks"]
    failed = {c["name"] for c in checks if not c["passed"]}
    assert {"qz_consistency", "indicator_peak"} <= failed


def test_verify_independent_of_seed(cfg, tmp_path):
    outcomes = set()
    for seed in range(10):
        code = run("verify", "--config", cfg, "--seed", seed, "--out", tmp_path / f"v{seed}")
        checks = yaml.safe_load((tmp_path / f"v{seed}" / "verify.yaml").read_text())["checks"]
        outcomes.add((code, tuple((c["name"], c["passed"]) for c in checks)))
    assert len(outcomes) == 1


def test_workers_do_not_change_output(cfg, tmp_path):
    run("synth", "--config", cfg, "--out", tmp_path / "o")
    data = tmp_path / "o" / "measurement.csv"
    for w in (1, 4):
        run("locate", "--config", cfg, "--slice", "none", "--grid", "0.03", "--workers", w,
            "--data", data, "--out", tmp_path / f"w{w}")
    for name in ("grid.csv", "report.yaml"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w4" / name).read_bytes()


def test_report_runs_all_variants(cfg, tmp_path):
    code = run("report", "--config", cfg, "--aperture", "hemi:+x", "--out", tmp_path / "r")
    assert code == EXIT_OK
    rows = (tmp_path / "r" / "summary.csv").read_text().splitlines()
    assert rows[0] == "data,x,y,z,error"
    assert {r.split(",")[0] for r in rows[1:]} == {"full", "raw", "extended"}
    for name in ("grid_full.csv", "grid_raw.csv", "grid_extended.csv", "coefficients.csv"):
        assert (tmp_path / "r" / name).exists()


def report_errors(path):
    runs = yaml.safe_load((path / "report.yaml").read_text())["runs"]
    return {r["label"]: min(r["truth_errors"]) for r in runs}


def test_preset_ex1a_locates_within_one_cell(tmp_path):
    assert run("synth", "--preset", "ex1a", "--out", tmp_path / "o") == EXIT_OK
    assert run("locate", "--preset", "ex1a", "--data", tmp_path / "o" / "measurement.csv",
               "--out", tmp_path / "l") == EXIT_OK
    rep = yaml.safe_load((tmp_path / "l" / "report.yaml").read_text())["run"]
    assert rep["n_peaks"] == 1
    assert rep["peaks"][0]["error"] <= 0.02


def test_preset_hemisphere_extension_not_worse_than_raw(tmp_path):
    assert run("report", "--preset", "ex4-hemi", "--out", tmp_path / "r") == EXIT_OK
    err = report_errors(tmp_path / "r")
    assert err["extended"] <= err["raw"] + 0.03
    assert err["full"] <= err["extended"]


def test_preset_quarter_noiseless_extension(tmp_path):
    assert run("report", "--preset", "ex4-quarter", "--beta", 0, "--out", tmp_path / "r") == EXIT_OK
    assert report_errors(tmp_path / "r")["extended"] <= 0.08
