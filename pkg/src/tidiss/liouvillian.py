"""Lindblad generators, stationary states and time propagation.

Vectorisation is column stacking throughout: ``vec(rho) = rho.ravel(order="F")``
so that ``vec(A rho B) = kron(B.T, A) @ vec(rho)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .fock import embed, is_hermitian, make_density_matrix

log = logging.getLogger(__name__)

DENSE_EIG_MAX_DIM = 20
CONVERGENCE_TOL = 1e-4
CONVERGENCE_STEP = 10


class LiouvillianError(ValueError):
    pass


class DegenerateSteadyState(LiouvillianError):
    """The generator has more than one stationary state."""

    def __init__(self, msg: str, null_vectors: np.ndarray):
        super().__init__(msg)
        self.null_vectors = null_vectors


class PropagationError(RuntimeError):
    def __init__(self, msg: str, t_reached: float):
        super().__init__(f"{msg} (reached t={t_reached:.6g})")
        self.t_reached = t_reached


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    dim = dim or int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape((dim, dim), order="F")


@dataclass(frozen=True)
class Superoperator:
    dim: int
    data: np.ndarray = field(repr=False)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.data @ vec(rho), self.dim)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        _check_dims(self.dim, other.dim)
        return Superoperator(self.dim, self.data + other.data)

    def scaled(self, s: float) -> "Superoperator":
        return Superoperator(self.dim, s * self.data)

    def trace_error(self) -> float:
        idv = vec(np.eye(self.dim)).conj()
        return float(np.max(np.abs(idv @ self.data)))


def _check_dims(*dims):
    if len(set(dims)) > 1:
        raise LiouvillianError(f"dimension mismatch: {sorted(set(dims))}")


def hamiltonian_superop(h: np.ndarray, hbar: float = 1.0) -> Superoperator:
    d = h.shape[0]
    eye = np.eye(d)
    return Superoperator(d, (-1j / hbar) * (np.kron(eye, h) - np.kron(h.T, eye)))


def dissipator_superop(jumps: Sequence[np.ndarray], dim: int | None = None) -> Superoperator:
    """``sum_k L rho L^dag - (L^dag L rho + rho L^dag L)/2`` as a matrix."""
    if not jumps:
        if dim is None:
            raise LiouvillianError("dim required for an empty jump list")
        return Superoperator(dim, np.zeros((dim * dim, dim * dim), dtype=complex))
    d = jumps[0].shape[0]
    _check_dims(d, *(j.shape[0] for j in jumps))
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    llsum = np.zeros((d, d), dtype=complex)
    for l in jumps:
        out += np.kron(l.conj(), l)
        llsum += l.conj().T @ l
    out -= 0.5 * (np.kron(eye, llsum) + np.kron(llsum.T, eye))
    return Superoperator(d, out)


def assemble(h: np.ndarray, jumps: Sequence[np.ndarray], gamma: float = 1.0,
             hbar: float = 1.0) -> Superoperator:
    if not is_hermitian(h):
        raise LiouvillianError("Hamiltonian is not Hermitian")
    d = h.shape[0]
    _check_dims(d, *(j.shape[0] for j in jumps))
    return hamiltonian_superop(h, hbar) + dissipator_superop(jumps, d).scaled(gamma)


@dataclass
class Generator:
    """Matrix-free Lindblad generator ``-i/hbar [H, .] + gamma sum_k D[L_k]``."""

    h: np.ndarray
    jumps: list
    gamma: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        self.h = np.asarray(self.h)
        self.jumps = [np.asarray(j) for j in self.jumps]
        _check_dims(self.h.shape[0], *(j.shape[0] for j in self.jumps))
        self._ldl = sum((j.conj().T @ j for j in self.jumps),
                        np.zeros_like(self.h, dtype=complex))

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        _check_dims(self.dim, rho.shape[0])
        out = (-1j / self.hbar) * (self.h @ rho - rho @ self.h)
        return out + self.gamma * self.apply_dissipator(rho)

    def apply_dissipator(self, rho: np.ndarray) -> np.ndarray:
        out = -0.5 * (self._ldl @ rho + rho @ self._ldl)
        for l in self.jumps:
            out = out + l @ rho @ l.conj().T
        return out

    def superop(self) -> Superoperator:
        return assemble(self.h, self.jumps, self.gamma, self.hbar)

    def adjoint_apply(self, obs: np.ndarray) -> np.ndarray:
        """Heisenberg picture: ``Tr[obs L[rho]] = Tr[L^dag[obs] rho]``."""
        out = (1j / self.hbar) * (self.h @ obs - obs @ self.h)
        diss = -0.5 * (self._ldl @ obs + obs @ self._ldl)
        for l in self.jumps:
            diss = diss + l.conj().T @ obs @ l
        return out + self.gamma * diss


def apply(gen: Generator, rho: np.ndarray) -> np.ndarray:
    return gen.apply(rho)


def choi_matrix(s: Superoperator) -> np.ndarray:
    """Choi matrix ``sum_kl S(|k><l|) (x) |k><l|`` of a superoperator."""
    d = s.dim
    t = s.data.reshape((d, d, d, d), order="F")  # t[i, j, k, l]: (k,l) -> (i,j)
    return t.transpose(0, 2, 1, 3).reshape(d * d, d * d)


def choi_min_eigenvalue(s: Superoperator) -> float:
    """Smallest Choi eigenvalue on the complement of the maximally entangled vector.

    A generator is of Lindblad form exactly when this is non-negative
    (conditional complete positivity).
    """
    d = s.dim
    c = choi_matrix(s)
    omega = np.eye(d).ravel() / np.sqrt(d)
    q = np.eye(d * d) - np.outer(omega, omega)
    m = q @ c @ q
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


# ---------------------------------------------------------------------------
# steady states


@dataclass(frozen=True)
class SteadyStateResult:
    rho: np.ndarray
    residual_norm: float
    spectral_gap: float
    converged: bool = True
    dim: int = 0
    eigenvalues: np.ndarray | None = field(default=None, repr=False)


def _finish(l: Superoperator, v: np.ndarray) -> tuple[np.ndarray, float]:
    rho = unvec(v, l.dim)
    rho = rho / np.trace(rho)
    rho = make_density_matrix(0.5 * (rho + rho.conj().T))
    resid = float(np.max(np.abs(l.data @ vec(rho))))
    return rho, resid


def _null_check(vals: np.ndarray, vecs: np.ndarray, scale: float, tol: float):
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    zero = np.abs(vals) <= tol * scale
    if zero.sum() == 0:
        raise LiouvillianError(f"no stationary state found (smallest |eig| = {abs(vals[0]):.3e})")
    if zero.sum() > 1:
        raise DegenerateSteadyState(
            f"null space has dimension >= {int(zero.sum())}", vecs[:, zero])
    rest = vals[~zero]
    gap = float(np.max(rest.real)) if rest.size else float("nan")
    return vecs[:, 0], gap, vals


def steady_state(l: Superoperator, method: str = "auto", null_tol: float = 1e-10,
                 n_eigs: int = 6) -> SteadyStateResult:
    """Unique stationary state of ``l`` with residual and spectral gap.

    ``method="dense"`` diagonalises the full generator; ``"shift-invert"``
    factors ``L - s`` once and uses it both for ARPACK (the few eigenvalues
    nearest zero) and for inverse iteration on the null vector. ``"auto"``
    picks dense for ``dim <= DENSE_EIG_MAX_DIM``.
    """
    if l.trace_error() > 1e-9 * max(1.0, np.max(np.abs(l.data))):
        raise LiouvillianError("generator is not trace preserving")
    d = l.dim
    scale = float(np.linalg.norm(l.data, ord=1))
    if method == "auto":
        method = "dense" if d <= DENSE_EIG_MAX_DIM else "shift-invert"

    if method == "dense":
        vals, vecs = sla.eig(l.data, check_finite=False)
        v0, gap, vals = _null_check(vals, vecs, scale, null_tol)
        rho, resid = _finish(l, v0)
        if resid > 1e-9:
            v0 = _inverse_iterate(l, v0)
            rho, resid = _finish(l, v0)
        return SteadyStateResult(rho, resid, gap, dim=d, eigenvalues=vals)

    if method == "shift-invert":
        shift = 1e-3 * max(1.0, _gap_scale(l))
        lu = sla.lu_factor(l.data - shift * np.eye(d * d), check_finite=False)
        op = LinearOperator(l.data.shape, matvec=lambda x: sla.lu_solve(lu, x),
                            dtype=complex)
        k = min(n_eigs, d * d - 2)
        try:
            mu, vecs = eigs(op, k=k, which="LM", tol=1e-12, maxiter=5000,
                            v0=vec(np.eye(d)).astype(complex))
        except ArpackNoConvergence as exc:
            mu, vecs = exc.eigenvalues, exc.eigenvectors
            if mu.size == 0:
                raise LiouvillianError("ARPACK failed to converge") from exc
        vals = shift + 1.0 / mu
        v0, gap, vals = _null_check(vals, vecs, scale, max(null_tol, 1e-9))
        for _ in range(3):
            v0 = sla.lu_solve(lu, v0)
            v0 /= np.linalg.norm(v0)
        rho, resid = _finish(l, v0)
        return SteadyStateResult(rho, resid, gap, dim=d, eigenvalues=vals)

    if method == "direct":
        rho, resid = _finish(l, _bordered_solve(l))
        return SteadyStateResult(rho, resid, float("nan"), dim=d)

    raise ValueError(f"unknown method {method!r}")


def _gap_scale(l: Superoperator) -> float:
    # cheap lower-end scale: the diagonal of L is minus the total decay of each coherence
    diag = np.abs(np.diag(l.data).real)
    return float(np.median(diag[diag > 0])) if np.any(diag > 0) else 1.0


def _bordered_solve(l: Superoperator) -> np.ndarray:
    d = l.dim
    m = l.data.copy()
    m[0, :] = vec(np.eye(d))
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    return sla.solve(m, rhs, check_finite=False)


def _inverse_iterate(l: Superoperator, v: np.ndarray, steps: int = 2) -> np.ndarray:
    shift = 1e-8 * max(1.0, _gap_scale(l))
    lu = sla.lu_factor(l.data - shift * np.eye(l.dim**2), check_finite=False)
    for _ in range(steps):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    return v


@dataclass(frozen=True)
class ConvergedSteadyState:
    result: SteadyStateResult
    check: SteadyStateResult
    bures_change: float
    converged: bool

    @property
    def rho(self) -> np.ndarray:
        return self.result.rho

    @property
    def dim(self) -> int:
        return self.result.dim


def converged_steady_state(make: Callable[[int], Superoperator], dim: int,
                           step: int = CONVERGENCE_STEP, tol: float = CONVERGENCE_TOL,
                           method: str = "auto") -> ConvergedSteadyState:
    """Stationary state at ``dim`` re-checked at ``dim + step``.

    ``make(d)`` must build the generator on a ``d``-level space. The run counts
    as converged when the Bures distance between the two (zero-padded) states
    is below ``tol``.
    """
    from .thermo import bures_distance

    r1 = steady_state(make(dim), method=method)
    r2 = steady_state(make(dim + step), method=method)
    db = bures_distance(embed(r1.rho, dim + step), r2.rho)
    return ConvergedSteadyState(r1, r2, db, bool(db < tol))


# ---------------------------------------------------------------------------
# time propagation


def propagate(gen: Generator, rho0: np.ndarray, t_final: float, dt_max: float = np.inf,
              rtol: float = 1e-10, atol: float = 1e-12, method: str = "DOP853",
              t_eval: Sequence[float] | None = None):
    """Integrate ``d rho/dt = L[rho]`` with an adaptive explicit Runge-Kutta scheme.

    Returns the final density matrix, or ``(times, states)`` when ``t_eval`` is
    given. Trace and Hermiticity drift are checked against ``1e-9``.
    """
    d = gen.dim
    _check_dims(d, rho0.shape[0])

    def rhs(_t, y):
        return gen.apply(y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (0.0, float(t_final)), np.asarray(rho0, dtype=complex).ravel(),
                    method=method, rtol=rtol, atol=atol, max_step=dt_max,
                    t_eval=t_eval)
    if sol.status != 0:
        t_reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise PropagationError(sol.message, t_reached)
    states = sol.y.T.reshape(-1, d, d)
    for rho in states:
        if abs(np.trace(rho) - 1) > 1e-9 or np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise PropagationError("trace or Hermiticity drift above 1e-9", float(sol.t[-1]))
    if t_eval is None:
        return make_density_matrix(states[-1])
    return sol.t, states
