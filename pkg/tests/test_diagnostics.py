import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tidiss.diagnostics import (RateReport, diffusion_curve, ehrenfest_residuals, energy_rate_check,
                                energy_rates, friction_curve, generator_for, population_constraint_residual,
                                population_second_derivative, position_diffusion,
                                position_diffusion_check, stationary_density, write_reports)
from tidiss.dissipators import (Constant, DissipatorSpec, DopplerLorentz, JumpSpec, OptimalExp, QOMESpec, clip_profile,
                                isotropic_spec, optimal_profile)
from tidiss.fock import UnitSystem, build_canonical_operators, build_hamiltonian
from tidiss.thermo import expectation

U = UnitSystem()
P = np.linspace(-3.0, 3.0, 61)


def test_friction_examples():
    single = DissipatorSpec([JumpSpec(0.7, Constant(2.0))])
    np.testing.assert_allclose(friction_curve(single, P), -0.7 * 4.0)
    even = isotropic_spec(0.6, Constant(1.3))
    np.testing.assert_allclose(friction_curve(even, P), 0.0, atol=1e-15)
    iso = isotropic_spec(0.5, OptimalExp(1.0, 0.5))
    assert friction_curve(iso, [1.0])[0] == pytest.approx(-0.5 * (math.e - 1 / math.e), abs=1e-12)
    assert friction_curve(iso, [1.0])[0] == pytest.approx(-1.1752, abs=1e-4)


def test_diffusion_examples():
    np.testing.assert_array_equal(diffusion_curve(DissipatorSpec([JumpSpec(0.0, Constant(3.0))]), P), 0.0)
    single = DissipatorSpec([JumpSpec(0.4, Constant(2.0))])
    np.testing.assert_allclose(diffusion_curve(single, P), 0.5 * 4.0 * 0.16)
    iso = isotropic_spec(0.5, OptimalExp(1.0, 0.5))
    assert diffusion_curve(iso, [0.0])[0] == pytest.approx(0.25, abs=1e-14)


def test_ornstein_uhlenbeck_stationary_law():
    p = np.linspace(-10.0, 10.0, 4001)
    gamma, d = 0.7, 1.4
    w = stationary_density(-gamma * p, d, p)
    var = d / gamma
    exact = np.exp(-p**2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    assert np.max(np.abs(w - exact)) < 1e-8


def _random_low_state(rng, dim, occupied):
    m = np.zeros((dim, dim), dtype=complex)
    m[:occupied, :occupied] = rng.normal(size=(occupied, occupied)) + 1j * rng.normal(size=(occupied, occupied))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


SPECS = [
    isotropic_spec(0.5, OptimalExp(0.8, 0.5)),
    isotropic_spec(0.3, OptimalExp(1.2, 0.2), rate=0.5),
    DissipatorSpec([JumpSpec(0.4, OptimalExp(1.0, 0.4))]),
    DissipatorSpec([JumpSpec(-0.6, Constant(1.1))]),
    isotropic_spec(0.3, DopplerLorentz(1.0, 1.0, 0.5)),
]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(range(len(SPECS))), st.floats(-1.0, 1.0))
def test_ehrenfest_identities(seed, which, dx0):
    ops = build_canonical_operators(U, 60)
    rho = _random_low_state(np.random.default_rng(seed), 60, 8)
    rx, rp = ehrenfest_residuals(SPECS[which], ops, rho, dx0)
    assert rx < 1e-6 and rp < 1e-6


@pytest.mark.parametrize("spec", SPECS)
def test_dissipator_leaves_position_mean(spec):
    # the Lorentzian profile has complex poles at unit distance, so its Fock tail decays slowly
    ops = build_canonical_operators(U, 80)
    rho = _random_low_state(np.random.default_rng(11), 80, 8)
    gen = generator_for(spec, ops, np.zeros((80, 80)))
    assert abs(expectation(ops.x, gen.apply(rho))) < 1e-8


def test_population_constraint_optimal_vs_clipped():
    ops = build_canonical_operators(U, 50)
    h = build_hamiltonian(ops)
    alphas = (0.25, 0.5, 1.0, 2.0)
    opt = optimal_profile(1.0, 0.5, U, c=1.0)
    good = population_constraint_residual(isotropic_spec(0.5, opt), h, 1.0, alphas, ops)
    assert np.max(np.abs(good)) < 1e-6
    bad = population_constraint_residual(isotropic_spec(0.5, clip_profile(opt, 0.5)), h, 1.0, alphas, ops)
    assert np.max(np.abs(bad)) > 1e-3
    second = population_second_derivative(isotropic_spec(0.5, opt), h, 1.0, alphas, ops)
    assert np.all(np.isfinite(second))


def test_population_constraint_qome():
    ops = build_canonical_operators(U, 50)
    h = build_hamiltonian(ops)
    res = population_constraint_residual(QOMESpec(0.2, 1.0), h, 1.0, (0.25, 0.5, 1.0, 2.0), ops)
    assert np.max(np.abs(res)) < 1e-8


def test_population_constraint_rejects_bad_alpha():
    ops = build_canonical_operators(U, 10)
    with pytest.raises(ValueError):
        population_constraint_residual(QOMESpec(0.2, 1.0), build_hamiltonian(ops), 1.0, (0.0,), ops)


def test_energy_rate_zero_temperature():
    rep = energy_rate_check(OptimalExp(1.0, 0.5), 0.5, 0.0, 0.0, U, dim=40)
    assert rep.closed_form == pytest.approx(0.6420, abs=1e-4)
    assert rep.rel_error < 1e-4
    assert rep.converged


def test_energy_rate_vanishes_at_equal_temperature():
    prof = optimal_profile(1.0, 0.5, U, c=1.0)
    _, raw = energy_rates(prof, 0.5, 1.0, 1.0, U, dim=40)
    assert abs(raw) < 1e-8


@pytest.mark.parametrize("theta_prime, sign", [(2.0, -1), (0.5, 1)])
def test_energy_rate_sign(theta_prime, sign):
    prof = optimal_profile(1.0, 0.5, U, c=1.0)
    closed, raw = energy_rates(prof, 0.5, theta_prime, 1.0, U, dim=40)
    assert np.sign(raw) == sign and np.sign(closed) == sign
    assert raw == pytest.approx(closed, rel=1e-4)


def test_position_diffusion_constant_profile():
    spec = isotropic_spec(0.5, Constant(1.0))
    closed, gen = position_diffusion(spec, 1.0, 40)
    assert abs(closed) < 1e-9 and abs(gen) < 1e-9


def test_position_diffusion_optimal():
    spec = isotropic_spec(0.5, OptimalExp(1.0, 0.5))
    rep = position_diffusion_check(spec, 1.0, 40)
    assert rep.closed_form > 0 and rep.from_liouvillian > 0
    assert rep.rel_error < 1e-4


def test_rate_report_csv(tmp_path):
    reps = [RateReport("a", 2.0, 2.0 + 1e-9, 30, True), RateReport("b", 0.0, 1e-3, 30, False)]
    assert reps[0].rel_error == pytest.approx(5e-10)
    path = tmp_path / "r.csv"
    write_reports(reps, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["name", "closed_form", "from_liouvillian", "rel_error", "dim_used", "converged"]
    assert rows[1][0] == "a" and float(rows[1][1]) == 2.0 and rows[2][-1] == "false"
