"""Thermal states, Bures distance and phase-space functions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fock import FockError, UnitSystem, make_density_matrix


class GridCoverageError(ValueError):
    pass


def thermal_state(h: np.ndarray, theta: float) -> np.ndarray:
    """Gibbs state ``exp(-H/theta)/Z``; the ground-state projector at ``theta = 0``."""
    if theta < 0:
        raise FockError("theta must be >= 0")
    w, v = np.linalg.eigh(h)
    if theta == 0:
        if w[1] - w[0] < 1e-10 * max(1.0, abs(w[0])):
            raise FockError("degenerate ground state; zero-temperature state is ambiguous")
        g = v[:, 0]
        return make_density_matrix(np.outer(g, g.conj()))
    pops = np.exp(-(w - w[0]) / theta)
    pops /= pops.sum()
    return make_density_matrix((v * pops) @ v.conj().T)


def _psd_sqrt(rho: np.ndarray, rel_floor: float = 1e-14) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    # eigenvalues at round-off level would be amplified to ~1e-8 by the square root
    w = np.where(w > rel_floor * w[-1], w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    Evaluated as the squared trace norm of ``sqrt(rho) sqrt(sigma)`` via its
    singular values, which avoids taking square roots of a noisy spectrum twice.
    """
    if rho.shape != sigma.shape:
        raise FockError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    x = _psd_sqrt(rho) @ _psd_sqrt(sigma)
    return float(np.sum(np.linalg.svd(x, compute_uv=False)) ** 2)


def bures_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``sqrt(2 (1 - sqrt(F)))``, in ``[0, sqrt(2)]``."""
    rho = make_density_matrix(rho)
    sigma = make_density_matrix(sigma)
    sf = min(1.0, np.sqrt(fidelity(rho, sigma)))
    return float(np.sqrt(2.0 * (1.0 - sf)))


def expectation(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.sum(op.T * rho))


# ---------------------------------------------------------------------------
# phase space


def hermite_functions(n_max: int, x: np.ndarray, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """Oscillator eigenfunctions ``<x|n>`` for ``n < n_max`` (shape ``(n_max, len(x))``).

    Uses the normalised three-term recurrence, which stays finite for orders
    in the thousands.
    """
    k = np.sqrt(units.mass * units.omega / units.hbar)
    xi = k * np.asarray(x, dtype=float)
    out = np.empty((n_max,) + xi.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * xi * xi)
    if n_max > 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(2, n_max):
        out[n] = np.sqrt(2.0 / n) * xi * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out * np.sqrt(k)


def momentum_functions(n_max: int, p: np.ndarray, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """Momentum-space eigenfunctions ``<p|n> = (-i)^n psi_n(p)``."""
    # same Hermite functions with the momentum scale sqrt(m hbar omega)
    k = 1.0 / np.sqrt(units.mass * units.omega * units.hbar)
    base = hermite_functions(n_max, k * np.asarray(p, dtype=float)) * np.sqrt(k)
    phase = (-1j) ** np.arange(n_max)
    return base * phase[:, None]


def position_density(rho: np.ndarray, x: np.ndarray, units: UnitSystem = UnitSystem()) -> np.ndarray:
    psi = hermite_functions(rho.shape[0], x, units)
    return np.real(np.einsum("mi,mn,ni->i", psi, rho, psi.conj()))


def momentum_marginal(rho: np.ndarray, p: np.ndarray, units: UnitSystem = UnitSystem()) -> np.ndarray:
    phi = momentum_functions(rho.shape[0], p, units)
    return np.real(np.einsum("mi,mn,ni->i", phi, rho, phi.conj()))


def _outside_mass(density, lo, hi, scale):
    # mass outside [lo, hi]; the density is smooth on the oscillator scale
    g = np.linspace(lo, hi, max(801, int(40 * (hi - lo) / scale)))
    return 1.0 - np.trapezoid(density(g), g)


@dataclass(frozen=True)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # shape (len(p), len(x))

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def norm(self) -> float:
        return float(self.values.sum() * self.dx * self.dp)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "p", "value"])
            for i, pv in enumerate(self.p):
                for j, xv in enumerate(self.x):
                    w.writerow([repr(float(xv)), repr(float(pv)), repr(float(self.values[i, j]))])


def _uniform(g, name):
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 3:
        raise GridCoverageError(f"{name} grid needs at least 3 points")
    d = np.diff(g)
    if np.any(d <= 0) or np.ptp(d) > 1e-9 * abs(d[0]):
        raise GridCoverageError(f"{name} grid must be uniform and increasing")
    return g


def wigner(rho: np.ndarray, x: np.ndarray, p: np.ndarray, units: UnitSystem = UnitSystem(),
           coverage_tol: float = 1e-4, n_y: int | None = None) -> WignerGrid:
    """Wigner function ``(1/pi hbar) int <x+y|rho|x-y> exp(-2ipy/hbar) dy`` on a grid.

    The Fock amplitudes are mapped to position space by the Hermite-function
    recurrence and the ``y`` integral is done by the trapezoid rule, which is
    spectrally accurate for these rapidly decaying integrands.
    """
    x = _uniform(x, "x")
    p = _uniform(p, "p")
    d = rho.shape[0]
    hbar = units.hbar
    x0 = np.sqrt(hbar / (units.mass * units.omega))
    p0 = np.sqrt(hbar * units.mass * units.omega)

    out_x = _outside_mass(lambda g: position_density(rho, g, units), x[0], x[-1], x0)
    out_p = _outside_mass(lambda g: momentum_marginal(rho, g, units), p[0], p[-1], p0)
    if out_x > coverage_tol or out_p > coverage_tol:
        raise GridCoverageError(
            f"grid misses probability mass: x {out_x:.2e}, p {out_p:.2e} (tol {coverage_tol:.0e})")

    ymax = max(abs(x[0]), abs(x[-1]))
    kmax = max(np.abs(p).max(), np.sqrt(2.0 * d + 1.0) * p0) / hbar
    dy = min(x0 * np.pi / (4.0 * np.sqrt(2.0 * d + 1.0)), np.pi / (4.0 * kmax))
    ny = n_y or 2 * int(np.ceil(ymax / dy)) + 1
    y = np.linspace(-ymax, ymax, ny)
    dy = y[1] - y[0]

    plus = hermite_functions(d, x[:, None] + y[None, :], units)   # (d, nx, ny)
    minus = hermite_functions(d, x[:, None] - y[None, :], units)
    corr = np.einsum("mxy,mn,nxy->xy", plus, rho, minus, optimize=True)  # psi real
    kern = np.exp(-2j * np.outer(y, p) / hbar)  # (ny, np)
    w = (corr @ kern) * dy / (np.pi * hbar)  # (nx, np)
    w = w.T
    if np.max(np.abs(w.imag)) > 1e-10:
        raise FockError(f"Wigner function has imaginary residue {np.max(np.abs(w.imag)):.2e}")
    return WignerGrid(x=x, p=p, values=np.ascontiguousarray(w.real))


@dataclass(frozen=True)
class BlokhintsevGrid:
    p: np.ndarray
    lam: np.ndarray
    values: np.ndarray  # shape (len(p), len(lam)), complex

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "lambda", "re", "im"])
            for i, pv in enumerate(self.p):
                for j, lv in enumerate(self.lam):
                    v = self.values[i, j]
                    w.writerow([repr(float(pv)), repr(float(lv)), repr(float(v.real)), repr(float(v.imag))])


def default_lambda_grid(x: np.ndarray) -> np.ndarray:
    """Symmetric DFT frequencies ``2 pi k / (N dx)`` dual to the ``x`` grid."""
    n = x.size
    dx = x[1] - x[0]
    k = np.arange(-(n // 2), n // 2 + 1)
    return 2 * np.pi * k / (n * dx)


def blokhintsev(w: WignerGrid, lam: np.ndarray | None = None) -> BlokhintsevGrid:
    """``B(p, lam) = int exp(i lam x) W(p, x) dx`` on each fixed-``p`` row."""
    lam = default_lambda_grid(w.x) if lam is None else np.asarray(lam, dtype=float)
    kern = np.exp(1j * np.outer(w.x, lam)) * w.dx
    return BlokhintsevGrid(p=w.p, lam=lam, values=w.values @ kern)


@dataclass(frozen=True)
class BlokhintsevFlags:
    positive: bool
    even: bool
    strict_max_at_origin: bool
    strict_max_on_axes: bool
    min_value: float
    max_asymmetry: float
    max_margin: float

    @property
    def all(self) -> bool:
        return self.positive and self.even and self.strict_max_at_origin


def theorem2_conditions(b: BlokhintsevGrid, noise: float = 1e-10, even_tol: float = 1e-8,
                        origin_cells: int = 1) -> BlokhintsevFlags:
    """Check positivity, evenness in ``lam`` and a strict maximum at the origin.

    Tolerances are relative to ``max |B|`` so the flags are unchanged by an
    overall positive rescaling. Values within ``noise`` of zero count as
    non-negative: quadrature round-off and the Boltzmann tail cut off by the
    Fock truncation both leave relative ripples well below ``1e-10`` when the
    state is resolved. The strict-maximum
    test skips ``origin_cells`` grid cells around the origin; points with both
    coordinates nonzero are the main flag, points on the axes are reported as
    ``strict_max_on_axes``.
    """
    v = b.values
    scale = float(np.max(np.abs(v)))
    ref = v.real  # positivity and the maximum refer to the real part
    min_val = float(ref.min())
    positive = min_val > -noise * scale

    lam = b.lam
    idx = np.array([np.argmin(np.abs(lam + l)) for l in lam])
    mirrored = np.abs(lam[idx] + lam) < 1e-9 * max(1.0, np.abs(lam).max())
    asym = float(np.max(np.abs(v[:, mirrored] - v[:, idx[mirrored]]))) if mirrored.any() else np.inf
    even = asym < even_tol * scale

    ip = int(np.argmin(np.abs(b.p)))
    il = int(np.argmin(np.abs(lam)))
    if abs(b.p[ip]) > 1e-12 or abs(lam[il]) > 1e-12:
        raise ValueError("grids must contain p = 0 and lambda = 0")
    b00 = ref[ip, il]
    pi, li = np.meshgrid(np.arange(b.p.size), np.arange(lam.size), indexing="ij")
    far = (np.abs(pi - ip) > origin_cells) | (np.abs(li - il) > origin_cells)
    interior = far & (pi != ip) & (li != il)
    axes = far & ((pi == ip) ^ (li == il))
    margin = float(b00 - ref[interior].max())
    strict = margin > 0
    strict_axes = bool(b00 - ref[axes].max() > 0) if axes.any() else True
    return BlokhintsevFlags(positive, even, strict, strict_axes, min_val, asym, margin)


def thermal_wigner_gaussian(x, p, theta: float, units: UnitSystem = UnitSystem()) -> np.ndarray:
    """Closed-form thermal Wigner function of the oscillator on a ``(p, x)`` mesh."""
    s = 1.0
    if theta > 0:
        u = units.hbar * units.omega / (2 * theta)
        s = 1.0 if u > 40 else 1.0 / np.tanh(u)
    var_x = units.hbar / (2 * units.mass * units.omega) * s
    var_p = units.hbar * units.mass * units.omega / 2 * s
    pp, xx = np.meshgrid(p, x, indexing="ij")
    return np.exp(-xx**2 / (2 * var_x) - pp**2 / (2 * var_p)) / (2 * np.pi * np.sqrt(var_x * var_p))
