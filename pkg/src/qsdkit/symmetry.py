"""Transformations of ``(L, H)`` that leave the GKSL generator unchanged.

Translation ``L_k -> L_k + l_k I`` is compensated by the Hamiltonian shift

    H' = H + (c / i) sum_k (conj(l_k) L_k - l_k L_k^+),

where ``c`` is the dissipator prefactor of the operator set.  Rotation
``L_i -> sum_j u_ij L_j`` with ``u`` unitary needs no compensation.
"""

from __future__ import annotations

import numpy as np

from ._validation import check_unitary
from .core import OperatorSet, generator_heisenberg, matrix_units

__all__ = ["hamiltonian_shift", "translate_ops", "rotate_ops", "generator_distance"]


def hamiltonian_shift(ops: OperatorSet, ell) -> np.ndarray:
    """Compensating Hamiltonian for the translation ``L_k -> L_k + ell_k I``."""
    ell = _as_param(ops, ell)
    Ls = ops.lindblad_array
    S = np.einsum("k,kij->ij", ell.conj(), Ls) - np.einsum("k,kji->ij", ell, Ls.conj())
    dH = (ops.dissipator_prefactor / 1j) * S
    return 0.5 * (dH + dH.conj().T)


def _as_param(ops, ell):
    ell = np.asarray(ell, dtype=complex)
    if ell.shape[-1:] != (ops.n_channels,):
        raise ValueError(f"translation has {ell.shape[-1] if ell.ndim else 0} channels, "
                         f"operator set has {ops.n_channels}")
    if not np.all(np.isfinite(ell)):
        raise ValueError("translation parameter has non-finite entries")
    return ell


def translate_ops(ops: OperatorSet, ell):
    """Translate the Lindblad operators by multiples of the identity.

    Parameters
    ----------
    ops : OperatorSet
    ell : array_like, shape (n,) or (M, n)
        Constant shift, or one shift per grid cell for a time-dependent translation.

    Returns
    -------
    OperatorSet or list of OperatorSet
        A list with one frozen-coefficient set per cell when ``ell`` is 2-D.
    """
    ell = _as_param(ops, ell)
    if ell.ndim == 2:
        return [translate_ops(ops, row) for row in ell]
    if ell.ndim != 1:
        raise ValueError("translation must be 1-D (constant) or 2-D (per cell)")
    eye = np.eye(ops.dim)
    Ls = tuple(L + l * eye for L, l in zip(ops.lindblads, ell))
    H = ops.hamiltonian + hamiltonian_shift(ops, ell)
    return OperatorSet(H, Ls, ops.dissipator_prefactor)


def rotate_ops(ops: OperatorSet, u) -> OperatorSet:
    """Mix channels with a unitary: ``L'_i = sum_j u_ij L_j``."""
    u = check_unitary(u, name="u")
    if u.shape[0] != ops.n_channels:
        raise ValueError(f"rotation is {u.shape[0]}x{u.shape[0]}, "
                         f"operator set has {ops.n_channels} channels")
    Ls = np.einsum("ij,jab->iab", u, ops.lindblad_array)
    return OperatorSet(ops.hamiltonian, tuple(Ls), ops.dissipator_prefactor)


def generator_distance(ops1: OperatorSet, ops2: OperatorSet) -> float:
    """Largest entry of ``|L1(E_ij) - L2(E_ij)|`` over all matrix units."""
    if ops1.dim != ops2.dim:
        raise ValueError(f"dimension mismatch: {ops1.dim} vs {ops2.dim}")
    if ops1.dissipator_prefactor != ops2.dissipator_prefactor:
        raise ValueError("operator sets use different dissipator prefactors")
    worst = 0.0
    for _, _, E in matrix_units(ops1.dim):
        diff = generator_heisenberg(ops1, E) - generator_heisenberg(ops2, E)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst
