from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from qsdkit.core import OperatorSet, generator_heisenberg, random_operator_set
from qsdkit.symmetry import generator_distance, hamiltonian_shift, rotate_ops, translate_ops

from conftest import LOWER


def _random_case(seed, c):
    rng = np.random.default_rng(seed)
    d, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    ops = random_operator_set(rng, d, n, c=c)
    ell = rng.normal(size=n) + 1j * rng.normal(size=n)
    return rng, ops, ell


def test_zero_translation_is_identity(rng):
    ops = random_operator_set(rng, 3, 2)
    out = translate_ops(ops, np.zeros(2))
    assert out == ops


@pytest.mark.parametrize("c, coeff", [(0.5, 1 / 2j), (1.0, 1 / 1j)])
def test_translation_example(c, coeff):
    ops = OperatorSet(np.zeros((2, 2)), (LOWER,), c)
    out = translate_ops(ops, [1.0])
    assert np.array_equal(out.lindblads[0], LOWER + np.eye(2))
    E_ge, E_eg = LOWER, LOWER.T
    assert np.allclose(out.hamiltonian, coeff * (E_ge - E_eg), atol=1e-15)


def test_translation_round_trip(rng):
    ops = random_operator_set(rng, 3, 2)
    ell = np.array([0.3 - 1.2j, 2.0 + 0.5j])
    back = translate_ops(translate_ops(ops, ell), -ell)
    for a, b in zip(back.lindblads, ops.lindblads):
        assert np.max(np.abs(a - b)) <= 1e-15
    assert np.max(np.abs(back.hamiltonian - ops.hamiltonian)) <= 1e-12


def test_translation_channel_mismatch(rng):
    with pytest.raises(ValueError):
        translate_ops(random_operator_set(rng, 2, 2), [1.0])


@pytest.mark.parametrize("c", [0.5, 1.0])
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_translation_invariance(c, seed):
    _, ops, ell = _random_case(seed, c)
    out = translate_ops(ops, ell)
    assert np.max(np.abs(out.hamiltonian - out.hamiltonian.conj().T)) <= 1e-12
    assert generator_distance(ops, out) <= 1e-10


@pytest.mark.parametrize("c", [0.5, 1.0])
def test_wrong_shift_coefficient_is_detected(c, rng):
    # the other convention's coefficient breaks invariance by a visible amount
    ops = random_operator_set(rng, 2, 1, c=c)
    ell = np.array([0.8 + 0.4j])
    good = translate_ops(ops, ell)
    other = 1.5 - c  # 0.5 <-> 1.0
    wrong = OperatorSet(good.hamiltonian - hamiltonian_shift(ops, ell) * (1 - other / c),
                        good.lindblads, c)
    assert generator_distance(ops, wrong) > 1e-3


@pytest.mark.parametrize("c", [0.5, 1.0])
def test_time_dependent_translation(c, rng):
    ops = random_operator_set(rng, 3, 2, c=c)
    ell = rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2))
    per_cell = translate_ops(ops, ell)
    assert len(per_cell) == 20
    for j, cell in enumerate(per_cell):
        assert cell == translate_ops(ops, ell[j])
        assert generator_distance(ops, cell) <= 1e-10


def test_rotation_examples(rng):
    ops = random_operator_set(rng, 2, 2)
    assert rotate_ops(ops, np.eye(2)) == ops
    swapped = rotate_ops(ops, np.array([[0, 1], [1, 0]]))
    assert np.array_equal(swapped.lindblads[0], ops.lindblads[1])
    assert np.array_equal(swapped.lindblads[1], ops.lindblads[0])
    had = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert generator_distance(ops, rotate_ops(ops, had)) <= 1e-10


def test_rotation_rejects_non_unitary(rng):
    ops = random_operator_set(rng, 2, 2)
    with pytest.raises(ValueError, match="unitary"):
        rotate_ops(ops, np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        rotate_ops(ops, np.eye(3))


@pytest.mark.parametrize("c", [0.5, 1.0])
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_rotation_invariance(c, seed):
    rng, ops, _ = _random_case(seed, c)
    u = unitary_group.rvs(ops.n_channels, random_state=rng) if ops.n_channels > 1 \
        else np.array([[np.exp(1j * rng.uniform(0, 2 * np.pi))]])
    assert generator_distance(ops, rotate_ops(ops, u)) <= 1e-10


def test_generator_distance_basics(rng):
    ops = random_operator_set(rng, 3, 2)
    assert generator_distance(ops, ops) == 0.0
    other = OperatorSet(ops.hamiltonian + np.eye(3) * 0 + np.diag([1.0, 0, 0]), ops.lindblads)
    X = np.zeros((3, 3)); X[0, 1] = 1
    expected = np.max(np.abs(generator_heisenberg(ops, X) - generator_heisenberg(other, X)))
    assert generator_distance(ops, other) >= expected > 0
    with pytest.raises(ValueError):
        generator_distance(ops, random_operator_set(rng, 2, 2))
    with pytest.raises(ValueError):
        generator_distance(ops, ops.with_prefactor(0.5))
