from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdkit._validation import InvariantError
from qsdkit.core import (OperatorSet, Superoperator, choi_check, generator_heisenberg,
                         generator_schrodinger, liouvillian_matrix, master_evolve, matrix_units,
                         random_density_matrix, random_operator_set, semigroup_exact, unvectorize,
                         vectorize)

from conftest import E, LOWER, PLUS, SIGMA_Z, amplitude_damping, dephasing


def _rand_ops(seed, c=1.0):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    n = int(rng.integers(0, 4))
    return rng, random_operator_set(rng, d, n, c=c)


def test_operator_set_rejects_non_hermitian_h():
    with pytest.raises(ValueError, match="Hermitian"):
        OperatorSet(np.array([[0, 1], [0, 0]]), ())


def test_operator_set_rejects_bad_prefactor_and_shapes():
    with pytest.raises(ValueError):
        OperatorSet(np.zeros((2, 2)), (), 0.7)
    with pytest.raises(ValueError):
        OperatorSet(np.zeros((2, 2)), (np.eye(3),))


def test_operator_set_is_immutable(ad_ops):
    with pytest.raises(ValueError):
        ad_ops.hamiltonian[0, 0] = 1.0


def test_generator_vanishes_without_dynamics(rng):
    ops = OperatorSet(np.zeros((3, 3)), ())
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(generator_heisenberg(ops, X), np.zeros((3, 3)))
    assert np.array_equal(generator_schrodinger(ops, X), np.zeros((3, 3)))


def test_generator_heisenberg_amplitude_damping_sigma_z(ad_ops):
    # L(diag(1,-1)) = -(L^+L X + X L^+L - 2 L^+ X L) = -(-2|e><e| - 2|e><e|) = 4|e><e|
    out = generator_heisenberg(ad_ops, np.diag([1.0, -1.0]))
    assert np.allclose(out, np.diag([0.0, 4.0]), atol=1e-14)


def test_generator_schrodinger_amplitude_damping_excited():
    gamma = 0.7
    ops = amplitude_damping(gamma)
    out = generator_schrodinger(ops, np.outer(E, E))
    assert np.allclose(out, np.diag([2 * gamma, -2 * gamma]), atol=1e-14)


def test_generator_dimension_mismatch(ad_ops):
    with pytest.raises(ValueError):
        generator_heisenberg(ad_ops, np.eye(3))
    with pytest.raises(ValueError):
        generator_schrodinger(ad_ops, np.eye(3))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unitality_and_trace_preservation(seed):
    rng, ops = _rand_ops(seed)
    d = ops.dim
    assert np.max(np.abs(generator_heisenberg(ops, np.eye(d)))) <= 1e-12
    rho = random_density_matrix(rng, d)
    assert abs(np.trace(generator_schrodinger(ops, rho))) <= 1e-12
    out = generator_schrodinger(ops, rho)
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_and_adjoint_symmetry(seed):
    rng, ops = _rand_ops(seed)
    d = ops.dim
    rho = random_density_matrix(rng, d)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    lhs = np.trace(generator_schrodinger(ops, rho) @ X)
    rhs = np.trace(rho @ generator_heisenberg(ops, X))
    assert abs(lhs - rhs) <= 1e-10
    assert np.allclose(generator_heisenberg(ops, X.conj().T),
                       generator_heisenberg(ops, X).conj().T, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_convention_bridge(seed):
    rng, ops = _rand_ops(seed, c=1.0)
    half = OperatorSet(ops.hamiltonian, tuple(np.sqrt(2) * L for L in ops.lindblads), 0.5)
    d = ops.dim
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert np.max(np.abs(generator_heisenberg(ops, X) - generator_heisenberg(half, X))) <= 1e-12
    assert np.max(np.abs(liouvillian_matrix(ops).matrix - liouvillian_matrix(half).matrix)) <= 1e-12
    assert np.allclose(ops.with_prefactor(0.5).lindblad_array, half.lindblad_array, atol=1e-15)


def test_vectorization_is_row_major():
    X = np.arange(4).reshape(2, 2)
    assert np.array_equal(vectorize(X), [0, 1, 2, 3])
    assert np.array_equal(unvectorize(vectorize(X)), X)


@pytest.mark.parametrize("picture", ["heisenberg", "schrodinger"])
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_liouvillian_matches_generator(picture, seed):
    rng, ops = _rand_ops(seed)
    gen = generator_heisenberg if picture == "heisenberg" else generator_schrodinger
    S = liouvillian_matrix(ops, picture)
    for _, _, Eij in matrix_units(ops.dim):
        assert np.max(np.abs(S(Eij) - gen(ops, Eij))) <= 1e-12


def test_liouvillian_trivial_and_unital_row(ad_ops):
    assert not np.any(liouvillian_matrix(OperatorSet(np.zeros((2, 2)), ())).matrix)
    Lh = liouvillian_matrix(ad_ops, "heisenberg").matrix
    assert np.max(np.abs(Lh @ vectorize(np.eye(2)))) <= 1e-12


def test_master_amplitude_damping_closed_form(ad_ops):
    rhos = master_evolve(ad_ops, np.outer(E, E), 1.0, 1e-3)
    assert rhos.shape == (1001, 2, 2)
    assert abs(rhos[-1][1, 1].real - np.exp(-2.0)) <= 1e-6
    assert abs(rhos[500][1, 1].real - np.exp(-1.0)) <= 1e-6


def test_master_dephasing_closed_form():
    rhos = master_evolve(dephasing(), np.outer(PLUS, PLUS), 1.0, 1e-3)
    # basis (g, e): rho_eg is entry [1, 0]
    assert abs(rhos[-1][1, 0] - 0.5 * np.exp(-4.0)) <= 1e-6


def test_master_unitary_preserves_purity():
    ops = OperatorSet(SIGMA_Z, ())
    psi = np.array([0.6, 0.8j])
    rhos = master_evolve(ops, np.outer(psi, psi.conj()), 2.0, 1e-3)
    purity = np.einsum("tij,tji->t", rhos, rhos).real
    assert np.max(np.abs(purity - 1.0)) <= 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_master_matches_exponential_and_stays_positive(seed):
    rng, ops = _rand_ops(seed)
    rho0 = random_density_matrix(rng, ops.dim)
    rhos = master_evolve(ops, rho0, 1.0, 1e-3)
    exact = semigroup_exact(ops, 1.0, "schrodinger")(rho0)
    assert np.max(np.abs(rhos[-1] - exact)) <= 1e-8
    assert min(np.linalg.eigvalsh(r)[0] for r in rhos) >= -1e-9


def test_master_rejects_bad_inputs(ad_ops):
    with pytest.raises(ValueError):
        master_evolve(ad_ops, np.outer(E, E), 1.0, 0.0)
    with pytest.raises(ValueError):
        master_evolve(ad_ops, np.diag([0.5, 0.4]), 1.0, 1e-2)


def test_master_reports_offending_step():
    # a huge step makes RK4 leave the state space; the error names the step
    ops = amplitude_damping(50.0)
    with pytest.raises(InvariantError) as info:
        master_evolve(ops, np.outer(E, E), 1.0, 0.5)
    assert info.value.step == 1


def test_semigroup_identity_and_law(ad_ops, rng):
    T0 = semigroup_exact(ad_ops, 0.0)
    assert np.allclose(T0.matrix, np.eye(4), atol=1e-15)
    ops = random_operator_set(rng, 3, 2)
    for picture in ("heisenberg", "schrodinger"):
        a = semigroup_exact(ops, 0.3, picture).compose(semigroup_exact(ops, 0.7, picture))
        b = semigroup_exact(ops, 1.0, picture)
        assert np.max(np.abs(a.matrix - b.matrix)) <= 1e-9


def test_semigroup_matches_master_endpoint(ad_ops):
    rho = semigroup_exact(ad_ops, 1.0, "schrodinger")(np.outer(E, E))
    end = master_evolve(ad_ops, np.outer(E, E), 1.0, 1e-3)[-1]
    assert np.max(np.abs(rho - end)) <= 1e-6
    assert abs(rho[1, 1] - np.exp(-2.0)) <= 1e-12


def test_choi_identity_and_transpose():
    ident = Superoperator(np.eye(4, dtype=complex), "schrodinger")
    lam, cp = choi_check(ident)
    assert abs(lam) <= 1e-12 and cp
    P = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            P[i * 2 + j, j * 2 + i] = 1
    lam, cp = choi_check(Superoperator(P.astype(complex), "schrodinger"))
    assert not cp
    assert abs(lam + 1.0) <= 1e-12


def test_choi_semigroup_is_cp(ad_ops, rng):
    assert choi_check(semigroup_exact(ad_ops, 1.0))[1]
    for _ in range(10):
        ops = random_operator_set(rng, int(rng.integers(2, 5)), int(rng.integers(1, 4)))
        for t in (0.1, 1.0, 10.0):
            assert choi_check(semigroup_exact(ops, t))[0] >= -1e-9
