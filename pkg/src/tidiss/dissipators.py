"""Jump operators for translation-invariant dissipators and the QOME baseline.

A translation-invariant jump has the form ``A = exp(-i kappa x) f(p)`` where
``f`` is a momentum profile. Profiles are small immutable dataclasses that
evaluate pointwise on momentum arrays and know their own derivative and
mirror image ``p -> f(-p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .fock import CanonicalOps, UnitSystem, displacement_phase, func_of_hermitian


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    c: float

    kind = "constant"

    def __call__(self, p):
        return np.full(np.shape(p), self.c, dtype=float)

    def derivative(self, p):
        return np.zeros(np.shape(p))

    def reflect(self) -> "Constant":
        return self


@dataclass(frozen=True)
class OptimalExp:
    """``c * exp(scale * lam * p)``; ``scale`` is ``beta * hbar`` of the unit system."""

    c: float
    lam: float
    scale: float = 1.0

    kind = "optimal"

    def __post_init__(self):
        if self.c < 0:
            raise ProfileError("OptimalExp amplitude must be non-negative")

    @property
    def rate(self) -> float:
        return self.scale * self.lam

    def __call__(self, p):
        return self.c * np.exp(self.rate * np.asarray(p, dtype=float))

    def derivative(self, p):
        return self.rate * self(p)

    def reflect(self) -> "OptimalExp":
        return OptimalExp(self.c, -self.lam, self.scale)


@dataclass(frozen=True)
class DopplerLorentz:
    """``c1 / sqrt(c2^2 + (p - c3)^2)``."""

    c1: float
    c2: float
    c3: float

    kind = "doppler"

    def __post_init__(self):
        if self.c2 == 0:
            raise ProfileError("DopplerLorentz needs c2 != 0")

    def __call__(self, p):
        u = np.asarray(p, dtype=float) - self.c3
        return self.c1 / np.sqrt(self.c2**2 + u * u)

    def derivative(self, p):
        u = np.asarray(p, dtype=float) - self.c3
        return -self.c1 * u * (self.c2**2 + u * u) ** -1.5

    def reflect(self) -> "DopplerLorentz":
        return DopplerLorentz(self.c1, self.c2, -self.c3)


@dataclass(frozen=True)
class Clipped:
    """``base`` where ``sign * p >= 0``, zero elsewhere (``p = 0`` passes)."""

    base: "MomentumProfile"
    sign: int

    kind = "clipped"

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ProfileError("sign must be -1, 0 or +1")

    def _mask(self, p):
        return self.sign * np.asarray(p, dtype=float) >= 0

    def __call__(self, p):
        return np.where(self._mask(p), self.base(p), 0.0)

    def derivative(self, p):
        # regular part only; the jump at p = 0 is what diverges quantum mechanically
        return np.where(self._mask(p), self.base.derivative(p), 0.0)

    def reflect(self) -> "Clipped":
        return Clipped(self.base.reflect(), -self.sign)


@dataclass(frozen=True)
class Tabulated:
    """Linear interpolation of sampled values; constant beyond the grid ends."""

    grid: tuple
    values: tuple

    kind = "tabulated"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 3:
            raise ProfileError("tabulated profile needs matching 1D grid/values of length >= 3")
        if np.any(np.diff(g) <= 0):
            raise ProfileError("tabulated grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ProfileError("tabulated values must be finite")

    def __call__(self, p):
        return np.interp(np.asarray(p, dtype=float), self.grid, self.values)

    def derivative(self, p):
        d = np.gradient(np.asarray(self.values), np.asarray(self.grid))
        p = np.asarray(p, dtype=float)
        inside = (p >= self.grid[0]) & (p <= self.grid[-1])
        return np.where(inside, np.interp(p, self.grid, d), 0.0)

    def reflect(self) -> "Tabulated":
        return Tabulated(tuple(-np.asarray(self.grid)[::-1]), tuple(np.asarray(self.values)[::-1]))


MomentumProfile = Union[Constant, OptimalExp, DopplerLorentz, Clipped, Tabulated]


@dataclass(frozen=True)
class JumpSpec:
    kappa: float
    profile: MomentumProfile

    def __post_init__(self):
        if not np.isfinite(self.kappa):
            raise ProfileError("kappa must be finite")


@dataclass(frozen=True)
class Drift:
    """Unitary drift ``hbar * (kappa_aux x + f_aux(p))`` folded into the Hamiltonian."""

    kappa_aux: float = 0.0
    f_aux: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class DissipatorSpec:
    jumps: tuple = ()
    drift: Optional[Drift] = None
    overall_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if self.overall_rate < 0:
            raise ProfileError("overall_rate must be >= 0")

    @property
    def is_zero(self) -> bool:
        return not self.jumps and self.drift is None


@dataclass(frozen=True)
class QOMESpec:
    Gamma: float
    theta: float

    def __post_init__(self):
        if self.Gamma < 0 or self.theta < 0:
            raise ProfileError("QOME needs Gamma >= 0 and theta >= 0")


# ---------------------------------------------------------------------------
# profile constructors


def thermal_tanh(theta: float, units: UnitSystem) -> float:
    """``tanh(hbar omega / 4 theta)``, equal to 1 at ``theta = 0``."""
    if theta < 0:
        raise ProfileError("theta must be >= 0")
    if theta == 0:
        return 1.0
    return math.tanh(units.hbar * units.omega / (4.0 * theta))


def optimal_profile(theta: float, kappa: float, units: UnitSystem, c: float = 1.0) -> OptimalExp:
    """Exponential profile whose slope ``lam = kappa tanh(hbar w / 4 theta)``
    conserves thermal populations to first order."""
    if not np.isfinite(kappa):
        raise ProfileError("kappa must be finite")
    lam = kappa * thermal_tanh(theta, units)
    return OptimalExp(c=c, lam=lam, scale=units.beta * units.hbar)


def gamma_en(kappa: float, lam: float, theta_prime: float, units: UnitSystem) -> float:
    """Energy relaxation coefficient of one exponential jump evaluated on a
    thermal state at ``theta_prime``."""
    hbar, w, beta = units.hbar, units.omega, units.beta
    s = coth_half(theta_prime, units)
    return 2 * w * beta * hbar**2 * kappa * lam * math.exp(beta * hbar**2 * lam**2 * s)


def coth_half(theta: float, units: UnitSystem) -> float:
    """``coth(hbar omega / 2 theta)``, equal to 1 at ``theta = 0``."""
    if theta < 0:
        raise ProfileError("theta must be >= 0")
    if theta == 0:
        return 1.0
    u = units.hbar * units.omega / (2.0 * theta)
    if u > 40:
        return 1.0
    return 1.0 / math.tanh(u)


def matched_amplitude(kappa: float, theta: float, units: UnitSystem) -> float:
    """Amplitude ``c = omega / sqrt(gamma_en(theta, theta))``.

    At ``theta = 0`` this is the normalisation used for the zero-temperature
    accuracy scans; it makes the energy relaxation rate of the isotropic pair
    equal to ``2 omega`` at every temperature.
    """
    lam = kappa * thermal_tanh(theta, units)
    g = gamma_en(kappa, lam, theta, units)
    if g <= 0:
        raise ProfileError("gamma_en vanishes (kappa = 0); no finite amplitude")
    return units.omega / math.sqrt(g)


def doppler_fit(opt: OptimalExp) -> Union[DopplerLorentz, Constant]:
    """Lorentzian-type profile agreeing with ``opt`` to second order at ``p = 0``.

    For ``lam = 0`` the exponential is flat and a ``Constant`` is returned.
    """
    r = opt.rate
    if r == 0:
        return Constant(opt.c)
    c3 = 1.0 / (2.0 * r)
    c2 = abs(c3)
    c1 = opt.c / (math.sqrt(2.0) * abs(r))
    return DopplerLorentz(c1=c1, c2=c2, c3=c3)


def clip_profile(base: MomentumProfile, kappa: float) -> MomentumProfile:
    """Zero the profile where ``p * kappa < 0``."""
    sign = int(np.sign(kappa))
    if isinstance(base, Clipped) and base.sign == sign:
        return base
    return Clipped(base, sign)


# ---------------------------------------------------------------------------
# operators


def profile_operator(profile: MomentumProfile, ops: CanonicalOps) -> np.ndarray:
    return func_of_hermitian(ops.p, profile, eig=ops.p_eig)


def jump_operator(spec: JumpSpec, ops: CanonicalOps) -> np.ndarray:
    """``exp(-i kappa x) f(p)``."""
    phase = displacement_phase(ops.x, spec.kappa, eig=ops.x_eig)
    return phase @ profile_operator(spec.profile, ops)


def isotropic_jumps(kappa: float, profile: MomentumProfile) -> tuple[JumpSpec, JumpSpec]:
    """The pair ``exp(-+ i kappa x) f(+-p)``."""
    return JumpSpec(kappa, profile), JumpSpec(-kappa, profile.reflect())


def isotropic_spec(kappa: float, profile: MomentumProfile, rate: float = 1.0) -> DissipatorSpec:
    if kappa < 0:
        raise ProfileError("isotropic pair expects kappa >= 0")
    return DissipatorSpec(jumps=isotropic_jumps(kappa, profile), overall_rate=rate)


def isotropic_pair(kappa: float, profile: MomentumProfile, ops: CanonicalOps) -> list[np.ndarray]:
    if kappa < 0:
        raise ProfileError("isotropic pair expects kappa >= 0")
    return [jump_operator(j, ops) for j in isotropic_jumps(kappa, profile)]


def qome_jumps(spec: QOMESpec, ops: CanonicalOps, units: UnitSystem | None = None) -> list[np.ndarray]:
    """Ladder jumps ``L1 ~ a`` and ``L2 ~ a_dag`` with Bose weights."""
    units = units or ops.units
    pref = math.sqrt(2 * spec.Gamma * units.omega)
    if spec.theta == 0:
        return [pref * np.asarray(ops.a), np.zeros((ops.dim, ops.dim), dtype=complex)]
    u = units.hbar * units.omega / spec.theta
    l1 = pref / math.sqrt(-math.expm1(-u))
    l2 = 0.0 if u > 700 else pref / math.sqrt(math.expm1(u))
    return [l1 * np.asarray(ops.a), l2 * np.asarray(ops.a_dag)]


def drift_hamiltonian(drift: Drift | None, ops: CanonicalOps) -> np.ndarray:
    out = np.zeros((ops.dim, ops.dim), dtype=complex)
    if drift is None:
        return out
    out += drift.kappa_aux * np.asarray(ops.x)
    if drift.f_aux is not None:
        fa = func_of_hermitian(ops.p, lambda u: np.real(drift.f_aux(u)), eig=ops.p_eig)
        out += fa
    return ops.units.hbar * 0.5 * (out + out.conj().T)


def spec_jump_operators(spec: DissipatorSpec, ops: CanonicalOps) -> list[np.ndarray]:
    """All jump operators of a spec, with ``sqrt(overall_rate)`` absorbed."""
    s = math.sqrt(spec.overall_rate)
    return [s * jump_operator(j, ops) for j in spec.jumps]


def translation_covariance_error(spec: JumpSpec, ops: CanonicalOps, s: float,
                                 margin: int | None = None) -> float:
    """Max interior deviation of ``D(s)^dag A D(s)`` from ``exp(-i kappa s) A``.

    Truncation corrupts the upper Fock levels, so only the leading
    ``dim - margin`` block is compared (default: the lower half).
    """
    from .fock import momentum_shift

    a = jump_operator(spec, ops)
    d = momentum_shift(ops, s)
    lhs = d.conj().T @ a @ d
    rhs = np.exp(-1j * spec.kappa * s) * a
    k = ops.dim - (ops.dim // 2 if margin is None else margin)
    return float(np.max(np.abs(lhs - rhs)[:k, :k]))


__all__ = [
    "Clipped", "Constant", "DissipatorSpec", "DopplerLorentz", "Drift", "JumpSpec",
    "MomentumProfile", "OptimalExp", "ProfileError", "QOMESpec", "Tabulated",
    "clip_profile", "coth_half", "doppler_fit", "drift_hamiltonian", "gamma_en",
    "isotropic_jumps", "isotropic_pair", "isotropic_spec", "jump_operator",
    "matched_amplitude", "optimal_profile", "profile_operator", "qome_jumps",
    "spec_jump_operators", "thermal_tanh", "translation_covariance_error",
]
