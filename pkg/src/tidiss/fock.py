"""Truncated Fock-space operator algebra for a 1D harmonic oscillator.

Operators are plain complex ``numpy`` arrays. Everything is built in natural
units with ``hbar = m = 1``; the oscillator frequency ``omega`` is the only
free scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

HERMITIAN_ATOL = 1e-10
CLIP_FLOOR = -1e-8


class FockError(ValueError):
    """Invalid input to a Fock-space construction."""


class PositivityError(FockError):
    """A candidate density matrix has an eigenvalue below the clipping floor."""


@dataclass(frozen=True)
class UnitSystem:
    """Natural units: ``hbar`` and ``mass`` are fixed to one."""

    omega: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise FockError(f"omega must be positive and finite, got {self.omega!r}")

    @property
    def hbar(self) -> float:
        return 1.0

    @property
    def mass(self) -> float:
        return 1.0

    @property
    def beta(self) -> float:
        """Inverse action scale ``1/(m hbar omega)``."""
        return 1.0 / (self.mass * self.hbar * self.omega)

    @property
    def kappa0(self) -> float:
        """Recoil wavenumber unit ``1/(hbar sqrt(beta))``."""
        return 1.0 / (self.hbar * np.sqrt(self.beta))

    @property
    def length0(self) -> float:
        """Displacement unit ``hbar sqrt(beta)``."""
        return self.hbar * np.sqrt(self.beta)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


@dataclass(frozen=True)
class CanonicalOps:
    """Ladder, position and momentum matrices on a ``dim``-level Fock space.

    ``x2`` and ``p2`` are the projections of the exact squares onto the
    truncated space, i.e. ``P x^2 P`` rather than ``(P x P)^2``. They differ
    only in the last diagonal entry, but that entry decides whether the
    truncated Hamiltonian has the exact ladder spectrum.
    """

    dim: int
    units: UnitSystem
    a: np.ndarray = field(repr=False)
    a_dag: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    x2: np.ndarray = field(repr=False)
    p2: np.ndarray = field(repr=False)

    @cached_property
    def x_eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.x)

    @cached_property
    def p_eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.p)

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


def build_canonical_operators(units: UnitSystem, dim: int) -> CanonicalOps:
    """Build ``a``, ``a_dag``, ``x`` and ``p`` with ``a[n-1, n] = sqrt(n)``."""
    if int(dim) != dim or dim < 2:
        raise FockError(f"dim must be an integer >= 2, got {dim!r}")
    dim = int(dim)
    hbar, m, w = units.hbar, units.mass, units.omega
    sx = np.sqrt(hbar / (2 * m * w))
    sp = np.sqrt(m * hbar * w / 2)

    a = _ladder(dim)
    ad = a.conj().T
    x = sx * (a + ad)
    p = 1j * sp * (ad - a)

    # exact squares: build one level larger, square, then project
    big = _ladder(dim + 1)
    xb = sx * (big + big.conj().T)
    pb = 1j * sp * (big.conj().T - big)
    x2 = (xb @ xb)[:dim, :dim]
    p2 = (pb @ pb)[:dim, :dim]
    return CanonicalOps(
        dim=dim,
        units=units,
        a=_frozen(a),
        a_dag=_frozen(ad),
        x=_frozen(x),
        p=_frozen(p),
        x2=_frozen(x2),
        p2=_frozen(p2),
    )


def build_hamiltonian(ops: CanonicalOps, units: UnitSystem | None = None,
                      displacement: float = 0.0) -> np.ndarray:
    """Harmonic Hamiltonian ``p^2/2m + m w^2 (x - dx0)^2 / 2``."""
    units = units or ops.units
    if not np.isfinite(displacement):
        raise FockError("displacement must be finite")
    m, w = units.mass, units.omega
    d = float(displacement)
    xs2 = ops.x2 - 2 * d * ops.x + d * d * ops.identity
    h = ops.p2 / (2 * m) + 0.5 * m * w**2 * xs2
    return _frozen(0.5 * (h + h.conj().T))


def is_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) < atol)


def func_of_hermitian(a: np.ndarray, f: Callable[[np.ndarray], np.ndarray],
                      eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Spectral calculus: ``V f(w) V^dagger`` for ``a = V diag(w) V^dagger``.

    ``eig`` may carry a precomputed ``np.linalg.eigh`` result of ``a``.
    """
    a = np.asarray(a)
    if not is_hermitian(a):
        raise FockError("func_of_hermitian requires a Hermitian matrix")
    w, v = eig if eig is not None else np.linalg.eigh(a)
    fw = np.asarray(f(w), dtype=complex)
    if fw.shape != w.shape:
        fw = np.broadcast_to(fw, w.shape)
    if not np.all(np.isfinite(fw)):
        raise FockError("f is not finite on the spectrum")
    return (v * fw) @ v.conj().T


def displacement_phase(x: np.ndarray, kappa: float,
                       eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """The unitary ``exp(-i kappa x)`` by spectral calculus."""
    return func_of_hermitian(x, lambda u: np.exp(-1j * kappa * u), eig=eig)


def momentum_shift(ops: CanonicalOps, s: float) -> np.ndarray:
    """Spatial translation ``exp(-i s p / hbar)``."""
    return func_of_hermitian(ops.p, lambda u: np.exp(-1j * s * u / ops.units.hbar),
                             eig=ops.p_eig)


def make_density_matrix(rho: np.ndarray, floor: float = CLIP_FLOOR) -> np.ndarray:
    """Validate and canonicalise a density matrix.

    The input is Hermitian-symmetrised, eigenvalues in ``[floor, 0)`` are
    clipped to zero, and the trace is renormalised to one. Anything more
    negative than ``floor`` raises :class:`PositivityError`.
    """
    rho = np.array(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
        raise FockError(f"density matrix must be square with dim >= 2, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise FockError("density matrix has non-finite entries")
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if tr <= 0:
        raise PositivityError(f"non-positive trace {tr}")
    rho /= tr
    w, v = np.linalg.eigh(rho)
    if w[0] < floor:
        raise PositivityError(f"minimum eigenvalue {w[0]:.3e} below {floor:.0e}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        rho = (v * w) @ v.conj().T
        rho = 0.5 * (rho + rho.conj().T)
    return _frozen(rho)


def fock_projector(dim: int, n: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return _frozen(rho)


def coherent_state(ops: CanonicalOps, alpha: complex) -> np.ndarray:
    """Pure coherent-state density matrix, built on the truncated space."""
    n = np.arange(ops.dim)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    if alpha == 0:
        amp = (n == 0).astype(complex)
    else:
        amp = np.exp(n * np.log(complex(alpha)) - 0.5 * logfact - 0.5 * abs(alpha) ** 2)
    amp /= np.linalg.norm(amp)
    return make_density_matrix(np.outer(amp, amp.conj()))


def embed(rho: np.ndarray, dim: int) -> np.ndarray:
    """Zero-pad an operator into a larger Fock space."""
    out = np.zeros((dim, dim), dtype=complex)
    d = rho.shape[0]
    if d > dim:
        raise FockError("cannot embed into a smaller space")
    out[:d, :d] = rho
    return out
