from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdkit.core import semigroup_exact
from qsdkit.discrete import (ImpossibleOutcomeError, KrausFamily, channel_apply,
                             channel_apply_heisenberg, coarse_grain_discrete, collapse_closed_form,
                             collapse_step, dilate, enumerate_outcomes, kraus_from_superoperator,
                             kraus_validate, outcome_probabilities, sample_trajectories,
                             sample_trajectory)
from qsdkit.io import read_csv, write_discrete_trajectory

from conftest import E, G, amplitude_damping

P = 0.3


def ad_family(p=P):
    return KrausFamily((np.diag([1.0, np.sqrt(1 - p)]), np.sqrt(p) * np.array([[0, 1], [0, 0]])))


def random_family(rng, d, k):
    # rows of a Haar unitary's first d columns give a valid Kraus family
    m = d * k
    Q, R = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))
    U = Q * (np.diag(R) / np.abs(np.diag(R)))
    V = U[:, :d]
    return KrausFamily(tuple(V[y * d:(y + 1) * d] for y in range(k)))


def test_kraus_validate_examples():
    assert kraus_validate(KrausFamily((np.eye(1),))) == 0.0
    assert kraus_validate(ad_family()) <= 1e-15
    assert kraus_validate(KrausFamily((np.eye(2), np.eye(2)))) == pytest.approx(1.0)


def test_family_shape_checks():
    with pytest.raises(ValueError):
        KrausFamily(())
    with pytest.raises(ValueError):
        KrausFamily((np.eye(2), np.eye(3)))


def test_dilate_examples():
    U = dilate(KrausFamily((np.eye(1),)))
    assert np.array_equal(U.matrix, np.eye(1))
    fam = ad_family()
    U = dilate(fam)
    assert U.matrix.shape == (4, 4)
    assert np.max(np.abs(U.matrix.conj().T @ U.matrix - np.eye(4))) <= 1e-12
    for y in range(2):
        assert np.array_equal(U.block(y, 0), fam.operators[y])
    assert np.array_equal(dilate(fam).matrix, U.matrix)
    with pytest.raises(ValueError):
        dilate(KrausFamily((np.eye(2), np.eye(2))))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_dilation_reproduces_collapse_probabilities(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    fam = random_family(rng, d, k)
    U = dilate(fam)
    assert np.max(np.abs(U.matrix.conj().T @ U.matrix - np.eye(d * k))) <= 1e-10
    phi = rng.normal(size=d) + 1j * rng.normal(size=d)
    phi /= np.linalg.norm(phi)
    out = U.matrix @ np.kron(np.eye(k)[0], phi)
    readout = np.sum(np.abs(out.reshape(k, d)) ** 2, axis=1)
    assert np.max(np.abs(readout - outcome_probabilities(fam, phi))) <= 1e-12


def test_channel_apply_examples():
    rho = np.array([[0.3, 0.1j], [-0.1j, 0.7]])
    assert np.allclose(channel_apply(KrausFamily((np.eye(2),)), rho), rho)
    out = channel_apply(ad_family(), np.outer(E, E))
    assert np.allclose(out, np.diag([0.3, 0.7]), atol=1e-15)
    assert np.max(np.abs(channel_apply_heisenberg(ad_family(), np.eye(2)) - np.eye(2))) <= 1e-12
    with pytest.raises(ValueError):
        channel_apply(ad_family(), np.eye(3))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_channel_duality_and_trace(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    fam = random_family(rng, d, k)
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    lhs = np.trace(channel_apply(fam, rho) @ X)
    rhs = np.trace(rho @ channel_apply_heisenberg(fam, X))
    assert abs(lhs - rhs) <= 1e-10
    assert abs(np.trace(channel_apply(fam, rho)) - 1) <= 1e-12
    assert np.max(np.abs(channel_apply_heisenberg(fam, np.eye(d)) - np.eye(d))) <= 1e-12


def test_collapse_step_examples():
    fam = ad_family()
    psi, p = collapse_step(fam, E, 1)
    assert np.allclose(psi, G) and p == pytest.approx(0.3)
    with pytest.raises(ImpossibleOutcomeError):
        collapse_step(fam, G, 1)
    phi = np.array([0.6, 0.8j])
    assert sum(collapse_step(fam, phi, y)[1] for y in range(2)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        collapse_step(fam, np.array([1.0, 1.0]), 0)


def test_trivial_family_trajectory():
    t = sample_trajectory(KrausFamily((np.eye(2),)), E, 5, 0)
    assert np.array_equal(t.outcomes, np.zeros(5))
    assert np.array_equal(t.nu, np.ones(6)) and np.array_equal(t.Z, np.ones(6))
    assert np.allclose(t.states, E)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_sequential_collapse_matches_closed_form(seed, d, k):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, d, k)
    phi = rng.normal(size=d) + 1j * rng.normal(size=d)
    phi /= np.linalg.norm(phi)
    t = sample_trajectory(fam, phi, 12, (seed, 3))
    for n in range(13):
        closed = collapse_closed_form(fam, phi, t.outcomes[:n])
        assert np.max(np.abs(t.states[n] - closed)) <= 1e-10
        assert abs(np.linalg.norm(t.states[n]) - 1) <= 1e-12
    assert np.all((t.nu >= 0) & (t.nu <= 1)) and np.all(t.Z >= 0)
    assert np.allclose(t.Z, t.nu * float(k) ** np.arange(13))


def test_sampling_is_deterministic_and_matches_batch():
    fam = ad_family()
    phi = np.array([0.6, 0.8])
    a = sample_trajectory(fam, phi, 30, (9, 4))
    b = sample_trajectory(fam, phi, 30, (9, 4))
    assert np.array_equal(a.outcomes, b.outcomes)
    outs, states, nu = sample_trajectories(fam, phi, 30, 9, 3, first_stream=2)
    assert np.array_equal(outs[2], a.outcomes)
    assert np.allclose(states[2], a.states, atol=1e-15)
    assert np.allclose(nu[2], a.nu, rtol=1e-13)


def test_sampled_outcome_frequencies():
    fam = ad_family()
    outs, _, _ = sample_trajectories(fam, E, 1, 5, 20000)
    freq = outs[:, 0].mean()
    assert abs(freq - 0.3) <= 5 * np.sqrt(0.21 / 20000)


def test_exhaustive_enumeration_consistency():
    fam = ad_family()
    phi = np.array([0.6, 0.8j])
    for n in range(1, 9):
        strings, _, nu = enumerate_outcomes(fam, phi, n)
        assert abs(nu.sum() - 1) <= 1e-12
        # marginal consistency: summing the last outcome recovers nu_{n-1}
        _, _, prev = enumerate_outcomes(fam, phi, n - 1)
        assert np.max(np.abs(nu.reshape(-1, 2).sum(axis=1) - prev)) <= 1e-12
        # martingale: (1/k) sum_y Z_n(prefix, y) = Z_{n-1}(prefix)
        Z = 2.0 ** n * nu
        assert np.max(np.abs(Z.reshape(-1, 2).mean(axis=1) - 2.0 ** (n - 1) * prev)) <= 1e-12
        assert abs(Z.mean() - 1) <= 1e-12
    strings, _, _ = enumerate_outcomes(fam, phi, 3)
    assert strings[:3].tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 0]]


def test_enumeration_limit():
    with pytest.raises(ValueError):
        enumerate_outcomes(ad_family(), E, 21)


def test_coarse_grain_examples():
    fam = ad_family()
    assert np.allclose(coarse_grain_discrete(fam, E, 0), np.outer(E, E))
    rho = np.outer(E, E)
    for _ in range(3):
        rho = channel_apply(fam, rho)
    assert np.max(np.abs(coarse_grain_discrete(fam, E, 3) - rho)) <= 1e-12
    assert np.allclose(rho, np.diag([1 - 0.7 ** 3, 0.7 ** 3]), atol=1e-15)


def test_coarse_grain_monte_carlo():
    fam = ad_family()
    phi = np.array([0.6, 0.8])
    est = coarse_grain_discrete(fam, phi, 4, mode="mc", n_samples=20000, master_seed=1)
    exact = coarse_grain_discrete(fam, phi, 4)
    assert np.max(np.abs(est - exact)) <= 5 * 0.5 / np.sqrt(20000)
    with pytest.raises(ValueError):
        coarse_grain_discrete(fam, phi, 4, mode="mc")


def test_kraus_from_semigroup_step():
    ops = amplitude_damping()
    T = semigroup_exact(ops, 0.05, "schrodinger")
    fam = kraus_from_superoperator(T)
    assert kraus_validate(fam) <= 1e-12
    rho = np.array([[0.4, 0.2 - 0.1j], [0.2 + 0.1j, 0.6]])
    assert np.max(np.abs(channel_apply(fam, rho) - T(rho))) <= 1e-12
    with pytest.raises(ValueError):
        kraus_from_superoperator(semigroup_exact(ops, 0.05, "heisenberg"))


def test_discrete_trajectory_csv(tmp_path):
    t = sample_trajectory(ad_family(), np.array([0.6, 0.8]), 4, 2)
    path = write_discrete_trajectory(tmp_path / "d.csv", t, {"master_seed": 2, "N": 1, "scheme": "discrete"})
    meta, cols, data = read_csv(path)
    assert cols[:4] == ["step", "outcome", "nu", "Z"]
    assert meta["master_seed"] == "2"
    assert np.array_equal(data[1:, 1], t.outcomes)
    assert np.array_equal(data[:, 3], t.Z)
