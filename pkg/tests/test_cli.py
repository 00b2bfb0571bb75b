"""Config ingestion, command dispatch, persistence and exit codes."""

import math

import pytest

from diracgap import cli

COULOMB_BASE = """
[problem]
kind = pure-coulomb
gamma = -0.5
k = 1
mu_a = 0.0

[numerics]
lambda_min = 0.5
lambda_max = 0.93
lambda_points = 8
x_zero = 1e-3
x_inf = 250.0
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# -- parsing and validation -----------------------------------------------------

def test_parse_reports_line_numbers(tmp_path):
    path = write(tmp_path, "[problem]\nkind pure-coulomb\n")
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(path)
    assert any("line 2" in e for e in err.value.errors)


def test_key_outside_section_rejected(tmp_path):
    path = write(tmp_path, "k = 1\n[problem]\nkind = pure-coulomb\n")
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(path)
    assert any("outside any" in e for e in err.value.errors)


def test_missing_required_keys_collected(tmp_path):
    path = write(tmp_path, "[problem]\nkind = pure-coulomb\n")
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(path)
    joined = " ".join(err.value.errors)
    assert "gamma" in joined and "k:" in joined


def test_unknown_section_rejected(tmp_path):
    path = write(tmp_path, COULOMB_BASE + "\n[mystery]\nx = 1\n")
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(path)
    assert any("mystery" in e for e in err.value.errors)


def test_grid_outside_gap_rejected(tmp_path):
    bad = COULOMB_BASE.replace("lambda_max = 0.93", "lambda_max = 1.25")
    path = write(tmp_path, bad)
    with pytest.raises(cli.ConfigError):
        cli.load_config(path)


def test_config_loads_with_defaults(tmp_path):
    path = write(tmp_path, COULOMB_BASE)
    cfg = cli.load_config(path)
    assert cfg.params.k == 1
    assert cfg.rtol == 1e-10
    assert cfg.lam_grid.size == 8
    assert len(cfg.config_hash) == 16


def test_out_dir_precedence(tmp_path, monkeypatch):
    path = write(tmp_path, COULOMB_BASE + "\n[output]\ndir = cfgdir\n")
    cfg = cli.load_config(path)
    assert cfg.out_dir.name == "cfgdir"
    monkeypatch.setenv("DIRACGAP_OUT", "envdir")
    cfg = cli.load_config(path)
    assert cfg.out_dir.name == "envdir"
    cfg = cli.load_config(path, out_override="flagdir")
    assert cfg.out_dir.name == "flagdir"


# -- exit codes -------------------------------------------------------------------

def test_check_accepts_coulomb(tmp_path, capsys):
    path = write(tmp_path, COULOMB_BASE)
    code = cli.main(["check", "--config", str(path), "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "check_report.csv").exists()


def test_check_rejects_supercritical_coupling(tmp_path):
    cfg = COULOMB_BASE.replace("gamma = -0.5", "gamma = -0.99")
    path = write(tmp_path, cfg.replace("k = 1", "k = -1"))
    code = cli.main(["check", "--config", str(path), "--out", str(tmp_path)])
    assert code == 2


def test_check_accepts_anomalous_strong_coupling(tmp_path):
    cfg = COULOMB_BASE.replace("gamma = -0.5", "gamma = -2.0")
    cfg = cfg.replace("mu_a = 0.0", "mu_a = 1.0").replace("k = 1", "k = -1")
    path = write(tmp_path, cfg)
    code = cli.main(["check", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 0


def test_malformed_config_is_usage_error(tmp_path, capsys):
    path = write(tmp_path, "problem\nkind =\n")
    code = cli.main(["check", "--config", str(path), "--out", str(tmp_path)])
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_is_usage_error(tmp_path):
    code = cli.main(["check", "--config", str(tmp_path / "nope.cfg")])
    assert code == 1


# -- spectrum command --------------------------------------------------------------

def test_spectrum_finds_ground_state(tmp_path, capsys):
    path = write(tmp_path, COULOMB_BASE)
    code = cli.main(["spectrum", "--config", str(path), "--out", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "spectrum.csv").read_text()
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "k,lambda,rot,nodal_index,residual,decay_inf,decay_zero"
    row = lines[1].split(",")
    assert abs(float(row[1]) - math.sqrt(3.0) / 2.0) < 1e-8
    assert int(row[3]) == 0


def test_spectrum_empty_for_zero_potential(tmp_path):
    cfg = COULOMB_BASE.replace("gamma = -0.5", "gamma = 0.0")
    cfg = cfg.replace("k = 1", "k = -1")
    path = write(tmp_path, cfg)
    code = cli.main(["spectrum", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 0
    lines = [l for l in (tmp_path / "spectrum.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    assert len(lines) == 1      # header only


def test_spectrum_rejects_inadmissible_family(tmp_path):
    cfg = COULOMB_BASE.replace("gamma = -0.5", "gamma = -1.0")
    path = write(tmp_path, cfg.replace("k = 1", "k = -1"))
    code = cli.main(["spectrum", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 2


def test_outputs_reproducible_byte_for_byte(tmp_path):
    path = write(tmp_path, COULOMB_BASE)
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert cli.main(["spectrum", "--config", str(path), "--out", str(out1),
                     "--quiet"]) == 0
    assert cli.main(["spectrum", "--config", str(path), "--out", str(out2),
                     "--quiet"]) == 0
    b1 = (out1 / "spectrum.csv").read_bytes()
    b2 = (out2 / "spectrum.csv").read_bytes()
    assert b1 == b2
    assert b"config_hash=" in b1


# -- the other commands -------------------------------------------------------------

def test_eigenfunction_command(tmp_path, capsys):
    cfg = COULOMB_BASE + "\n[eigenfunction]\nk = 1\nsamples = 100\n"
    path = write(tmp_path, cfg)
    code = cli.main(["eigenfunction", "--config", str(path), "--out",
                     str(tmp_path)])
    assert code == 0
    text = (tmp_path / "eigenfunction.csv").read_text()
    assert "decay_inf=" in text
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "x,u,v"
    assert len(lines) == 101


def test_eigenfunction_requires_level(tmp_path):
    path = write(tmp_path, COULOMB_BASE)
    code = cli.main(["eigenfunction", "--config", str(path), "--out",
                     str(tmp_path), "--quiet"])
    assert code == 1


def test_accumulation_command(tmp_path, capsys):
    cfg = COULOMB_BASE + "\n[accumulation]\nschedule = 1e2 1e3 1e4\n"
    path = write(tmp_path, cfg)
    code = cli.main(["accumulation", "--config", str(path), "--out",
                     str(tmp_path)])
    assert code == 0
    text = (tmp_path / "accumulation.csv").read_text()
    assert "verdict=accumulating" in text
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "X,theta"
    assert len(lines) == 4


def test_branch_command(tmp_path):
    cfg = COULOMB_BASE.replace("x_inf = 250.0", "x_inf = 60.0")
    cfg += ("\n[branch]\nseed_k = 1\nds = 0.001\nmax_steps = 4\n"
            "\n[coupling]\nkind = soler\n")
    path = write(tmp_path, cfg)
    code = cli.main(["branch", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 0
    text = (tmp_path / "branch.csv").read_text()
    assert "index_audit_ok=True" in text
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "step,lambda,amplitude,l2norm,j,i,residual"
    assert len(lines) == 5
    assert (tmp_path / "branch_solution.csv").exists()


def test_branch_requires_coupling(tmp_path):
    cfg = COULOMB_BASE + "\n[branch]\nseed_k = 1\n"
    path = write(tmp_path, cfg)
    code = cli.main(["branch", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 1


def test_rejected_coupling_is_math_error(tmp_path):
    # constant-power weight keeps the envelope from decaying at infinity
    cfg = COULOMB_BASE + ("\n[branch]\nseed_k = 1\n[coupling]\nkind = soler\n"
                          "gamma_power = 0.0\ngamma_scale = 1.0\n")
    cfg = cfg.replace("gamma_scale = 1.0", "gamma_scale = 1.0")
    path = write(tmp_path, cfg)
    code = cli.main(["branch", "--config", str(path), "--out", str(tmp_path),
                     "--quiet"])
    assert code == 2
