"""Closed-form rate identities checked against the assembled generator.

Each check evaluates a quantity twice: from its analytic expression in terms
of the momentum profiles, and as ``Tr[O L[rho]]`` with the truncated
generator. The two routes share nothing beyond the profile objects.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .dissipators import (DissipatorSpec, JumpSpec, OptimalExp, QOMESpec, coth_half, gamma_en,
                          qome_jumps, spec_jump_operators)
from .fock import CanonicalOps, UnitSystem, build_canonical_operators, build_hamiltonian, func_of_hermitian
from .liouvillian import Generator
from .thermo import expectation, thermal_state

RATE_COLUMNS = ("name", "closed_form", "from_liouvillian", "rel_error", "dim_used", "converged")
CONVERGENCE_RTOL = 1e-6


@dataclass(frozen=True)
class RateReport:
    name: str
    closed_form: float
    from_liouvillian: float
    dim_used: int
    converged: bool

    @property
    def rel_error(self) -> float:
        return abs(self.closed_form - self.from_liouvillian) / max(abs(self.closed_form), 1e-300)

    def row(self) -> dict:
        return {
            "name": self.name,
            "closed_form": self.closed_form,
            "from_liouvillian": self.from_liouvillian,
            "rel_error": self.rel_error,
            "dim_used": self.dim_used,
            "converged": self.converged,
        }


def write_reports(reports: Iterable[RateReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RATE_COLUMNS)
        for r in reports:
            d = r.row()
            w.writerow([d["name"], repr(float(d["closed_form"])), repr(float(d["from_liouvillian"])),
                        repr(float(d["rel_error"])), d["dim_used"], str(d["converged"]).lower()])


# ---------------------------------------------------------------------------
# friction and diffusion


def friction_curve(spec: DissipatorSpec, p, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """``F(p) = -hbar sum_k kappa_k |f_k(p)|^2`` (times the overall rate)."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    for j in spec.jumps:
        out -= units.hbar * j.kappa * np.abs(j.profile(p)) ** 2
    return spec.overall_rate * out


def diffusion_curve(spec: DissipatorSpec, p, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """``D(p) = (hbar^2/2) sum_k |f_k(p)|^2 kappa_k^2`` (times the overall rate)."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    for j in spec.jumps:
        out += 0.5 * units.hbar**2 * j.kappa**2 * np.abs(j.profile(p)) ** 2
    return spec.overall_rate * out


def friction_operator(spec: DissipatorSpec, ops: CanonicalOps) -> np.ndarray:
    return func_of_hermitian(ops.p, lambda u: friction_curve(spec, u, ops.units), eig=ops.p_eig)


def generator_for(spec: DissipatorSpec | QOMESpec, ops: CanonicalOps,
                  h: np.ndarray | None = None) -> Generator:
    from .dissipators import drift_hamiltonian

    h = build_hamiltonian(ops) if h is None else h
    if isinstance(spec, QOMESpec):
        return Generator(h, qome_jumps(spec, ops), 1.0, ops.units.hbar)
    h = np.asarray(h) + drift_hamiltonian(spec.drift, ops)
    return Generator(h, spec_jump_operators(spec, ops), 1.0, ops.units.hbar)


def ehrenfest_residuals(spec: DissipatorSpec, ops: CanonicalOps, rho: np.ndarray,
                        displacement: float = 0.0) -> tuple[float, float]:
    """Deviations of ``d<x>/dt`` and ``d<p>/dt`` from ``<p>/m`` and ``-<U'> + <F(p)>``."""
    u = ops.units
    h = build_hamiltonian(ops, displacement=displacement)
    gen = generator_for(spec, ops, h)
    lr = gen.apply(rho)
    dx = expectation(ops.x, lr)
    dp = expectation(ops.p, lr)
    force = -u.mass * u.omega**2 * (expectation(ops.x, rho) - displacement)
    fric = expectation(friction_operator(spec, ops), rho)
    return abs(dx - expectation(ops.p, rho) / u.mass), abs(dp - force - fric)


# ---------------------------------------------------------------------------
# thermal population constraint


def _exp_h(h: np.ndarray, alpha: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-alpha * (w - w[0]))) @ v.conj().T


def population_constraint_residual(spec: DissipatorSpec, h: np.ndarray, theta: float,
                                   alphas: Sequence[float], ops: CanonicalOps) -> np.ndarray:
    """``Tr[exp(-a H) L[rho_theta]] / Tr[exp(-a H) rho_theta]`` for each ``a``."""
    if any(a <= 0 for a in alphas):
        raise ValueError("alpha values must be positive")
    gen = generator_for(spec, ops, h)
    rho = thermal_state(h, theta)
    lr = gen.apply(rho)
    out = []
    for a in alphas:
        e = _exp_h(h, a)
        out.append(expectation(e, lr).real / expectation(e, rho).real)
    return np.array(out)


def population_second_derivative(spec: DissipatorSpec, h: np.ndarray, theta: float,
                                 alphas: Sequence[float], ops: CanonicalOps) -> np.ndarray:
    """``|Tr[exp(-a H) L^2[rho_theta]]|`` normalised like the first-order residual."""
    gen = generator_for(spec, ops, h)
    rho = thermal_state(h, theta)
    l2r = gen.apply(gen.apply(rho))
    out = []
    for a in alphas:
        e = _exp_h(h, a)
        out.append(abs(expectation(e, l2r).real) / expectation(e, rho).real)
    return np.array(out)


# ---------------------------------------------------------------------------
# energy relaxation


def mean_energy(theta: float, units: UnitSystem = UnitSystem()) -> float:
    return 0.5 * units.hbar * units.omega * coth_half(theta, units)


def _theta_from_s(s: float, units: UnitSystem) -> float:
    # inverse of s = coth(hbar w / 2 theta)
    if s <= 1.0:
        return 0.0
    return units.hbar * units.omega / math.log((s + 1.0) / (s - 1.0))


def _energy_rate(gen: Generator, h: np.ndarray, theta_prime: float) -> float:
    rho = thermal_state(h, theta_prime)
    return expectation(h, gen.apply(rho)).real


def energy_rates(profile: OptimalExp, kappa: float, theta_prime: float, theta: float,
                 units: UnitSystem = UnitSystem(), dim: int = 40,
                 isotropic: bool = False) -> tuple[float, float]:
    """Raw ``d<H>/dt`` at a thermal state ``theta_prime``: (closed form, generator)."""
    n = 2 if isotropic else 1
    closed = n * (profile.c**2 / units.omega) * gamma_en(kappa, profile.lam, theta_prime, units) * (
        mean_energy(theta, units) - mean_energy(theta_prime, units))
    gen, h = _rate_generator(profile, kappa, units, dim, isotropic)
    return closed, _energy_rate(gen, h, theta_prime)


def _rate_generator(profile, kappa, units, dim, isotropic):
    from .dissipators import isotropic_jumps

    ops = build_canonical_operators(units, dim)
    h = build_hamiltonian(ops)
    jumps = isotropic_jumps(kappa, profile) if isotropic else (JumpSpec(kappa, profile),)
    return generator_for(DissipatorSpec(jumps), ops, h), h


def _extract_gamma(gen, h, profile, kappa, theta_prime, theta, units, n, ds=1e-3):
    de = mean_energy(theta, units) - mean_energy(theta_prime, units)
    pref = n * profile.c**2 / units.omega
    if abs(de) > 1e-3 * units.hbar * units.omega:
        return _energy_rate(gen, h, theta_prime) / (pref * de)
    # equal energies: the rate vanishes, so take the slope in s = coth(hbar w / 2 theta')
    # at fixed profile; d(rate)/ds = -pref * gamma * hbar w / 2 there
    s0 = coth_half(theta_prime, units)
    rate = lambda s: _energy_rate(gen, h, _theta_from_s(s, units))
    if s0 - 2 * ds > 1.0:
        slope = (rate(s0 - 2 * ds) - 8 * rate(s0 - ds) + 8 * rate(s0 + ds) - rate(s0 + 2 * ds)) / (12 * ds)
    else:
        slope = (-3 * rate(s0) + 4 * rate(s0 + ds) - rate(s0 + 2 * ds)) / (2 * ds)
    return -2.0 * slope / (pref * units.hbar * units.omega)


def energy_rate_check(profile: OptimalExp, kappa: float, theta_prime: float, theta: float,
                      units: UnitSystem = UnitSystem(), dim: int = 40, isotropic: bool = False,
                      step: int = 10) -> RateReport:
    """Compare the energy relaxation coefficient ``gamma_en(theta', theta)``.

    The closed form is the analytic coefficient; the generator value is
    ``Tr[H L[rho_theta']]`` divided by ``(c^2/w)(<H>_theta - <H>_theta')``.
    When the two mean energies coincide that ratio is 0/0 and the coefficient
    is read off the slope of the rate with respect to the initial temperature.
    """
    if theta_prime < 0:
        raise ValueError("theta_prime must be >= 0")
    n = 2 if isotropic else 1
    closed = gamma_en(kappa, profile.lam, theta_prime, units)
    vals = []
    for d in (dim, dim + step):
        gen, h = _rate_generator(profile, kappa, units, d, isotropic)
        vals.append(_extract_gamma(gen, h, profile, kappa, theta_prime, theta, units, n))
    conv = abs(vals[0] - vals[1]) <= CONVERGENCE_RTOL * max(abs(vals[1]), 1e-300)
    name = f"gamma_en(theta'={theta_prime:g},theta={theta:g},kappa={kappa:g})"
    return RateReport(name, closed, vals[0], dim, bool(conv))


# ---------------------------------------------------------------------------
# position diffusion


def position_diffusion(spec: DissipatorSpec, theta: float, dim: int,
                       units: UnitSystem = UnitSystem()) -> tuple[float, float]:
    """``d<x^2>/dt`` at the thermal state: (spectral closed form, generator)."""
    ops = build_canonical_operators(units, dim)
    h = build_hamiltonian(ops)
    rho = thermal_state(h, theta)
    gen = generator_for(spec, ops, h)
    from_gen = expectation(ops.x2, gen.apply(rho)).real

    def dsq(u):
        return sum(np.abs(j.profile.derivative(u)) ** 2 for j in spec.jumps)

    closed = units.hbar**2 * spec.overall_rate * expectation(
        func_of_hermitian(ops.p, dsq, eig=ops.p_eig), rho).real if spec.jumps else 0.0
    return float(closed), float(from_gen)


def position_diffusion_check(spec: DissipatorSpec, theta: float, dim: int = 40,
                             units: UnitSystem = UnitSystem(), step: int = 10) -> RateReport:
    c1, g1 = position_diffusion(spec, theta, dim, units)
    _, g2 = position_diffusion(spec, theta, dim + step, units)
    conv = abs(g1 - g2) <= max(CONVERGENCE_RTOL * abs(g2), 1e-12)
    return RateReport(f"position_diffusion(theta={theta:g})", c1, g1, dim, bool(conv))


def position_diffusion_sweep(spec: DissipatorSpec, theta: float, dims: Sequence[int],
                             units: UnitSystem = UnitSystem(), workers: int = 1) -> dict[int, float]:
    """Generator value of ``d<x^2>/dt`` for several truncations."""
    run = lambda d: position_diffusion(spec, theta, d, units)[1]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        vals = list(ex.map(run, dims))
    return dict(zip(dims, vals))


# ---------------------------------------------------------------------------
# Fokker-Planck limit


def stationary_density(friction, diffusion, p) -> np.ndarray:
    """Zero-flux solution ``D(p) w(p) ~ exp(int_0^p F/D)`` normalised on the grid."""
    p = np.asarray(p, dtype=float)
    f = np.broadcast_to(np.asarray(friction, dtype=float), p.shape)
    d = np.broadcast_to(np.asarray(diffusion, dtype=float), p.shape)
    if np.any(d <= 0):
        raise ValueError("diffusion must be positive on the whole grid")
    logw = -np.log(d) + cumulative_trapezoid(f / d, p, initial=0.0)
    w = np.exp(logw - logw.max())
    return w / np.trapezoid(w, p)


def fp_stationary_momentum(spec: DissipatorSpec, p, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """Fokker-Planck stationary momentum law of a TI dissipator."""
    return stationary_density(friction_curve(spec, p, units), diffusion_curve(spec, p, units), p)


def l1_distance(a, b, p) -> float:
    return float(np.trapezoid(np.abs(np.asarray(a) - np.asarray(b)), p))
