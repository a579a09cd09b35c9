import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from tidiss.fock import (FockError, PositivityError, UnitSystem, build_canonical_operators,
                         build_hamiltonian, coherent_state, displacement_phase, embed,
                         fock_projector, func_of_hermitian, is_hermitian, make_density_matrix,
                         momentum_shift)

U = UnitSystem()


def test_ladder_dim2():
    ops = build_canonical_operators(U, 2)
    expected = np.array([[0, 1], [0, 0]], dtype=complex)
    assert np.array_equal(ops.a, expected)


def test_commutator_truncation_artifact():
    ops = build_canonical_operators(U, 4)
    comm = ops.x @ ops.p - ops.p @ ops.x
    diag = np.diag(comm)
    np.testing.assert_allclose(diag[:-1], 1j, atol=1e-14)
    assert diag[-1] == pytest.approx(-3j, abs=1e-14)
    assert np.allclose(comm - np.diag(diag), 0, atol=1e-14)


def test_x_p_hermitian():
    ops = build_canonical_operators(U, 30)
    assert np.max(np.abs(ops.x - ops.x.conj().T)) == 0
    assert np.max(np.abs(ops.p - ops.p.conj().T)) == 0


def test_rejects_small_dim():
    with pytest.raises(FockError):
        build_canonical_operators(U, 1)


def test_operators_read_only():
    ops = build_canonical_operators(U, 5)
    with pytest.raises(ValueError):
        ops.x[0, 0] = 1.0


def test_hamiltonian_spectrum():
    ops = build_canonical_operators(U, 30)
    w = np.linalg.eigvalsh(build_hamiltonian(ops))
    n = np.arange(21)
    np.testing.assert_allclose(w[:21], n + 0.5, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(3, 25))
def test_hamiltonian_exact_ladder(omega, dim):
    u = UnitSystem(omega)
    h = build_hamiltonian(build_canonical_operators(u, dim), u)
    np.testing.assert_allclose(h, np.diag(omega * (np.arange(dim) + 0.5)), atol=1e-12 * omega)


def test_displaced_hamiltonian():
    ops = build_canonical_operators(U, 40)
    w, v = np.linalg.eigh(build_hamiltonian(ops, displacement=1.0))
    assert w[0] == pytest.approx(0.5, abs=1e-8)
    w, v = np.linalg.eigh(build_hamiltonian(ops, displacement=0.5))
    g = v[:, 0]
    assert (g.conj() @ ops.x @ g).real == pytest.approx(0.5, abs=1e-8)


def test_func_of_hermitian_oracles():
    ops = build_canonical_operators(U, 30)
    np.testing.assert_allclose(func_of_hermitian(ops.p, lambda u: u), ops.p, atol=1e-12)
    np.testing.assert_allclose(func_of_hermitian(ops.p, lambda u: np.exp(0.0 * u)), np.eye(30), atol=1e-12)
    np.testing.assert_allclose(func_of_hermitian(ops.x, lambda u: u**2), ops.x @ ops.x, atol=1e-10)


def test_func_of_hermitian_matches_expm():
    ops = build_canonical_operators(U, 20)
    np.testing.assert_allclose(displacement_phase(ops.x, 0.7), expm(-0.7j * ops.x), atol=1e-10)


def test_func_of_hermitian_rejects_nonhermitian():
    with pytest.raises(FockError):
        func_of_hermitian(np.array([[0, 1], [0, 0]], dtype=complex), np.exp)


def test_displacement_phase():
    ops = build_canonical_operators(U, 30)
    np.testing.assert_allclose(displacement_phase(ops.x, 0.0), np.eye(30), atol=1e-12)
    prod = displacement_phase(ops.x, 0.8) @ displacement_phase(ops.x, -0.8)
    np.testing.assert_allclose(prod, np.eye(30), atol=1e-9)
    # exp(-i kappa x) lowers momentum by hbar kappa
    u = displacement_phase(ops.x, 1.0)
    k = 15  # truncation error reaches ~1e-3 by row 20
    np.testing.assert_allclose((u @ ops.p @ u.conj().T)[:k, :k], (ops.p + np.eye(30))[:k, :k], atol=1e-6)
    np.testing.assert_allclose((u.conj().T @ ops.p @ u)[:k, :k], (ops.p - np.eye(30))[:k, :k], atol=1e-6)


def test_momentum_shift_translates_x():
    ops = build_canonical_operators(U, 60)
    t = momentum_shift(ops, 0.5)
    moved = t.conj().T @ ops.x @ t
    k = 30
    np.testing.assert_allclose(moved[:k, :k], (ops.x + 0.5 * np.eye(60))[:k, :k], atol=1e-6)


def test_make_density_matrix_clips_and_raises():
    rho = np.diag([0.5, 0.5 + 1e-10, -1e-10]).astype(complex)
    out = make_density_matrix(rho)
    assert np.min(np.linalg.eigvalsh(out)) >= 0
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-15)
    assert not out.flags.writeable
    with pytest.raises(PositivityError):
        make_density_matrix(np.diag([0.6, 0.5, -1e-3]))
    with pytest.raises(FockError):
        make_density_matrix(np.ones((3, 2)))


def test_coherent_state_mean():
    ops = build_canonical_operators(U, 40)
    rho = coherent_state(ops, 1.2 + 0.3j)
    assert np.trace(ops.a @ rho) == pytest.approx(1.2 + 0.3j, abs=1e-9)
    assert is_hermitian(rho)


def test_embed_and_projector():
    rho = fock_projector(3, 1)
    big = embed(rho, 5)
    assert big.shape == (5, 5) and big[1, 1] == 1
    with pytest.raises(FockError):
        embed(big, 3)


def test_unit_system_validation():
    with pytest.raises(FockError):
        UnitSystem(0.0)
    u = UnitSystem(4.0)
    assert u.beta == pytest.approx(0.25)
    assert u.kappa0 == pytest.approx(2.0)
    assert u.length0 == pytest.approx(0.5)
