import csv
import io
import math

import numpy as np
import pytest

from tidiss.cli import main
from tidiss.config import ConfigError, default_config, load_config, parse_config, to_toml
from tidiss.dissipators import (QOMESpec, isotropic_pair, matched_amplitude, optimal_profile,
                                qome_jumps)
from tidiss.experiments import ExperimentError, match_rates, run, run_fig1b
from tidiss.fock import UnitSystem, build_canonical_operators, build_hamiltonian
from tidiss.liouvillian import Generator, propagate
from tidiss.thermo import thermal_state

U = UnitSystem()


def read_csv(path):
    lines = open(path, encoding="utf-8").read().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(l for l in lines if not l.startswith("#")))))
    return meta, rows


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


SMALL_FIG2A = """
experiment = "fig2a"
dim = 12
[grids]
kappa = [0.3, 0.5]
gamma = [0.1]
"""


# --- match_rates -------------------------------------------------------------

def test_match_rates_matched_amplitude_gives_half():
    for theta in (0.0, 0.5, 1.0):
        prof = optimal_profile(theta, 0.5, U, matched_amplitude(0.5, theta, U))
        assert match_rates(prof, 0.5, theta, U) == pytest.approx(0.5, rel=1e-12)


def test_match_rates_quadratic_in_amplitude():
    prof = optimal_profile(1.0, 0.5, U, 0.7)
    double = optimal_profile(1.0, 0.5, U, 1.4)
    assert match_rates(double, 0.5, 1.0, U) == pytest.approx(4 * match_rates(prof, 0.5, 1.0, U))


def test_match_rates_rejects_zero_kappa():
    with pytest.raises(ExperimentError):
        match_rates(optimal_profile(1.0, 0.0, U, 1.0), 0.0, 1.0, U)


def test_matched_pair_relaxation_rates_agree():
    theta, kappa, gamma = 1.0, 0.5, 0.1
    prof = optimal_profile(theta, kappa, U, matched_amplitude(kappa, theta, U))
    g_q = match_rates(prof, kappa, theta, U, n_jumps=2, rate=gamma)
    ops = build_canonical_operators(U, 30)
    h = build_hamiltonian(ops)
    rho0 = thermal_state(h, 1.05 * theta)
    e_eq = np.trace(h @ thermal_state(h, theta)).real
    t = np.linspace(0.0, 0.1, 11)
    rates = []
    for gen in (Generator(h, isotropic_pair(kappa, prof, ops), gamma),
                Generator(h, qome_jumps(QOMESpec(g_q, theta), ops))):
        times, states = propagate(gen, rho0, t[-1], t_eval=t)
        excess = np.array([np.trace(h @ s).real for s in states]) - e_eq
        rates.append(-np.polyfit(times, np.log(excess), 1)[0])
    assert rates[0] == pytest.approx(rates[1], rel=0.05)


# --- config ------------------------------------------------------------------

def test_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="typo"):
        parse_config({"experiment": "fig2a", "typo": 1})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "steady",
                      "dissipator": {"model": "qome", "Gamma": 0.1, "theta": 1.0, "extra": 2}})


def test_config_grid_validation():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "fig2a", "grids": {"kappa": []}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "fig2a", "grids": {"gamma": [float("nan")]}})
    with pytest.raises(ConfigError, match=r"\[10, 80\]"):
        parse_config({"experiment": "fig2a", "dim": 5})


def test_config_round_trip(tmp_path):
    cfg = parse_config({
        "experiment": "steady", "dim": 14, "theta": 0.5,
        "dissipator": {"model": "isotropic", "kappa": 0.4, "rate": 0.2,
                       "profile": {"kind": "clipped", "base": {"kind": "optimal"}}},
    })
    again = load_config(write(tmp_path, "c.toml", to_toml(cfg)))
    assert again == cfg


def test_default_configs_parse():
    for name in ("fig1a", "fig1b", "fig2a"):
        cfg = default_config(name)
        assert cfg.experiment == name and 10 <= cfg.dim <= 80


# --- runners -----------------------------------------------------------------

def test_fig1b_zero_kappa_is_failed_row():
    cfg = parse_config({"experiment": "fig1b", "dim": 10,
                        "grids": {"kappa": [0.0, 0.5], "theta": [1.0], "gamma": [0.1]}})
    table = run_fig1b(cfg)
    zero = table.select(kappa=0.0)[0]
    assert math.isnan(zero["bures"]) and zero["converged"] is False
    assert table.n_failed == 1
    assert table.select(kappa=0.5)[0]["bures"] > 0


def test_csv_is_deterministic(tmp_path):
    path = write(tmp_path, "c.toml", SMALL_FIG2A)
    a = run(load_config(path)).to_csv(timestamp="T")
    b = run(load_config(path)).to_csv(timestamp="T")
    assert a == b
    stamped = run(load_config(path)).to_csv()
    strip = lambda s: [l for l in s.splitlines() if not l.startswith("# generated")]
    assert strip(stamped) == strip(a)


def test_workers_do_not_change_rows(tmp_path):
    cfg = load_config(write(tmp_path, "a.toml", SMALL_FIG2A))
    serial = run(cfg)
    parallel = run(parse_config({**cfg.normalized(), "workers": 2}))
    assert serial.rows == parallel.rows


def test_run_requires_dissipator():
    with pytest.raises(ExperimentError):
        run(parse_config({"experiment": "steady"}))


# --- CLI ---------------------------------------------------------------------

def test_cli_validate_config(tmp_path, capsys):
    path = write(tmp_path, "c.toml", SMALL_FIG2A)
    assert main(["validate-config", str(path)]) == 0
    out = capsys.readouterr().out
    assert 'experiment = "fig2a"' in out and "dim = 12" in out


def test_cli_config_errors(tmp_path, capsys):
    bad = write(tmp_path, "bad.toml", 'experiment = "fig2a"\ndim = 5\n')
    assert main(["validate-config", str(bad)]) == 1
    assert "[10, 80]" in capsys.readouterr().err
    typo = write(tmp_path, "typo.toml", 'experiment = "fig2a"\ndimm = 20\n')
    assert main(["figures", "fig2a", "--config", str(typo)]) == 1
    assert main(["validate-config", str(tmp_path / "missing.toml")]) == 1
    wrong = write(tmp_path, "w.toml", SMALL_FIG2A)
    assert main(["figures", "fig1a", "--config", str(wrong)]) == 1


def test_cli_figures_fig2a(tmp_path, capsys):
    path = write(tmp_path, "c.toml", SMALL_FIG2A)
    prefix = tmp_path / "out" / "f2"
    assert main(["figures", "fig2a", "--config", str(path), "--out", str(prefix), "--plots"]) == 0
    meta, rows = read_csv(str(prefix) + ".csv")
    assert list(rows[0]) == ["variant", "kappa", "Gamma", "bures", "converged"]
    assert len(rows) == 3 * 2 * 1
    assert all(r["converged"] in ("true", "false") for r in rows)
    assert any(m.startswith("# config:") for m in meta)
    assert (tmp_path / "out" / "f2.svg").read_text().lstrip().startswith("<?xml")
    out = capsys.readouterr().out
    assert "variant=optimal" in out and "variant=doppler" in out


def test_cli_partial_failure_exit_code(tmp_path):
    path = write(tmp_path, "c.toml", 'experiment = "fig1b"\ndim = 10\n[grids]\nkappa = [0.0]\ntheta = [1.0]\n')
    assert main(["figures", "fig1b", "--config", str(path), "--out", str(tmp_path / "f")]) == 2
    meta, rows = read_csv(tmp_path / "f.csv")
    assert rows[0]["bures"] == "nan" and rows[0]["converged"] == "false"
    assert any(m.startswith("# failed:") for m in meta)


def test_cli_steady_and_diagnose(tmp_path):
    steady = write(tmp_path, "s.toml", """
experiment = "steady"
dim = 20
theta = 1.0
[dissipator]
model = "qome"
Gamma = 0.1
theta = 1.0
""")
    assert main(["steady", "--config", str(steady), "--out", str(tmp_path / "s")]) == 0
    _, rows = read_csv(tmp_path / "s.csv")
    assert float(rows[0]["bures"]) < 1e-6 and rows[0]["converged"] == "true"

    diag = write(tmp_path, "d.toml", """
experiment = "diagnose"
dim = 20
theta = 1.0
[dissipator]
model = "isotropic"
kappa = 0.5
profile = { kind = "optimal" }
""")
    assert main(["diagnose", "--config", str(diag), "--out", str(tmp_path / "d")]) == 0
    _, rows = read_csv(tmp_path / "d.csv")
    assert list(rows[0]) == ["name", "closed_form", "from_liouvillian", "rel_error", "dim_used", "converged"]
    names = [r["name"] for r in rows]
    assert any(n.startswith("position_diffusion") for n in names)
    assert any(n.startswith("gamma_en") for n in names)


def test_cli_sweep(tmp_path):
    path = write(tmp_path, "w.toml", """
experiment = "sweep"
dim = 10
[dissipator]
model = "isotropic"
kappa = 0.5
rate = 0.1
profile = { kind = "optimal" }
[grids]
kappa = [0.3, 0.5]
dx0 = [0.0, 0.5]
""")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "w")]) == 0
    _, rows = read_csv(tmp_path / "w.csv")
    assert len(rows) == 4
    assert list(rows[0]) == ["kappa", "Gamma", "theta", "dx0", "bures", "converged"]
