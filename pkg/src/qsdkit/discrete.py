"""Discrete-time collapse chains generated by a Kraus family.

A family ``{K_y}``, ``y = 0..k-1``, with ``sum_y K_y^+ K_y = I`` defines the unital channel
``T(X) = sum_y K_y^+ X K_y`` and its dual ``T*(rho) = sum_y K_y rho K_y^+``.  Reading out the
outcome register after each step gives the Markov chain

    Psi_{n+1} = K_y Psi_n / ||K_y Psi_n||,  with probability ||K_y Psi_n||^2,

whose string probabilities ``nu_n`` are consistent marginals, and ``Z_n = k^n nu_n`` is the
likelihood ratio against the uniform measure on outcome strings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._validation import as_square_matrix, as_state_vector
from .core import Superoperator, choi_matrix
from .noise import stream_generator

__all__ = [
    "KrausFamily",
    "DilationUnitary",
    "DiscreteTrajectory",
    "ImpossibleOutcomeError",
    "kraus_validate",
    "dilate",
    "channel_apply",
    "channel_apply_heisenberg",
    "collapse_step",
    "outcome_probabilities",
    "collapse_closed_form",
    "sample_trajectory",
    "sample_trajectories",
    "enumerate_outcomes",
    "coarse_grain_discrete",
    "kraus_from_superoperator",
]

KRAUS_ATOL = 1e-10
RANK_TOL = 1e-12
IMPOSSIBLE = 1e-300


class ImpossibleOutcomeError(ValueError):
    """Collapse requested for an outcome with zero probability."""


@dataclass(frozen=True)
class KrausFamily:
    operators: tuple

    def __post_init__(self):
        ops = tuple(np.asarray(K, dtype=complex) for K in self.operators)
        if not ops:
            raise ValueError("a Kraus family needs at least one operator")
        d = as_square_matrix(ops[0], name="operators[0]").shape[0]
        for y, K in enumerate(ops):
            as_square_matrix(K, name=f"operators[{y}]", dim=d)
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def k(self) -> int:
        return len(self.operators)

    @property
    def array(self) -> np.ndarray:
        return np.stack(self.operators)


def kraus_validate(family: KrausFamily) -> float:
    """Max entry of ``|sum_y K_y^+ K_y - I|``; the family is valid iff this is <= 1e-10."""
    K = family.array
    s = np.einsum("yji,yjl->il", K.conj(), K)
    return float(np.max(np.abs(s - np.eye(family.dim))))


def _require_valid(family):
    dev = kraus_validate(family)
    if dev > KRAUS_ATOL:
        raise ValueError(f"Kraus family is not trace preserving (deviation {dev:.3g})")


@dataclass(frozen=True)
class DilationUnitary:
    """Block unitary on ``C^k (x) C^d``; block ``(y, x)`` is ``L_{yx}``.

    The ordering is register-major: basis index ``y * d + i`` stands for ``|y> (x) |i>``, so
    ``matrix @ kron(e_x, phi)`` stacks ``L_{yx} phi`` over ``y``.
    """

    matrix: np.ndarray
    dim: int
    k: int

    def block(self, y: int, x: int) -> np.ndarray:
        d = self.dim
        return self.matrix[y * d:(y + 1) * d, x * d:(x + 1) * d]


def dilate(family: KrausFamily) -> DilationUnitary:
    """Complete the isometry ``phi -> sum_y K_y phi (x) |y>`` to a unitary.

    The first block column is the Kraus family verbatim; the remaining ``d(k-1)`` columns
    come from Gram-Schmidt (two passes) over the standard basis in order, keeping vectors
    whose residual norm exceeds 1e-12.
    """
    _require_valid(family)
    d, k = family.dim, family.k
    V = family.array.reshape(k * d, d)
    cols = [V[:, i] for i in range(d)]
    basis = list(cols)
    for e_idx in range(k * d):
        if len(basis) == k * d:
            break
        v = np.zeros(k * d, dtype=complex)
        v[e_idx] = 1.0
        for _ in range(2):
            for b in basis:
                v = v - np.vdot(b, v) * b
        nrm = np.linalg.norm(v)
        if nrm > RANK_TOL:
            basis.append(v / nrm)
    if len(basis) != k * d:
        raise ValueError("could not complete the dilation to a unitary")
    U = np.column_stack(basis)
    return DilationUnitary(U, d, k)


def channel_apply(family: KrausFamily, rho) -> np.ndarray:
    """Schrodinger form ``sum_y K_y rho K_y^+``."""
    rho = as_square_matrix(rho, name="rho", dim=family.dim)
    K = family.array
    return np.einsum("yij,jk,ylk->il", K, rho, K.conj())


def channel_apply_heisenberg(family: KrausFamily, X) -> np.ndarray:
    """Heisenberg form ``T(X) = sum_y K_y^+ X K_y``."""
    X = as_square_matrix(X, name="X", dim=family.dim)
    K = family.array
    return np.einsum("yji,jk,ykl->il", K.conj(), X, K)


def outcome_probabilities(family: KrausFamily, psi) -> np.ndarray:
    """``p(y) = ||K_y psi||^2`` for every outcome."""
    branches = np.einsum("yij,j->yi", family.array, np.asarray(psi, complex))
    return np.sum(np.abs(branches) ** 2, axis=-1)


def collapse_step(family: KrausFamily, psi, y: int) -> tuple[np.ndarray, float]:
    """Post-measurement state and probability of outcome ``y``.

    Raises
    ------
    ImpossibleOutcomeError
        If ``||K_y psi||^2 < 1e-300``.
    """
    psi = as_state_vector(psi, dim=family.dim, normalized=True, name="psi")
    branch = family.operators[y] @ psi
    p = min(float(np.vdot(branch, branch).real), 1.0)  # clip roundoff above one
    if p < IMPOSSIBLE:
        raise ImpossibleOutcomeError(f"outcome {y} cannot occur from this state (p = {p:.3g})")
    return branch / np.sqrt(p), p


def collapse_closed_form(family: KrausFamily, phi0, outcomes) -> np.ndarray:
    """``K_{y_n} ... K_{y_1} phi0`` normalized in one shot."""
    v = np.asarray(phi0, complex)
    for y in outcomes:
        v = family.operators[y] @ v
    nrm = np.linalg.norm(v)
    if nrm ** 2 < IMPOSSIBLE:
        raise ImpossibleOutcomeError(f"outcome string {tuple(outcomes)} cannot occur")
    return v / nrm


@dataclass
class DiscreteTrajectory:
    """Sampled outcome string with the collapsed states ``Psi_0..Psi_n``.

    ``nu`` and ``Z`` are arrays over steps ``0..n`` (``nu[0] = Z[0] = 1``).
    """

    outcomes: np.ndarray
    states: np.ndarray
    nu: np.ndarray
    Z: np.ndarray
    k: int


def sample_trajectory(family: KrausFamily, phi0, n: int, seed) -> DiscreteTrajectory:
    """Sample ``n`` sequential measurements with the collapse chain.

    ``seed`` is an int or a ``(master_seed, stream_index)`` pair.
    """
    _require_valid(family)
    phi0 = as_state_vector(phi0, dim=family.dim, normalized=True, name="phi0")
    master, stream = (seed, 0) if np.isscalar(seed) else seed
    u = stream_generator(master, stream).random(n)
    return _sample_from_uniforms(family, phi0, u)


def _sample_from_uniforms(family, phi0, uniforms) -> DiscreteTrajectory:
    n = len(uniforms)
    states = np.empty((n + 1, family.dim), complex)
    states[0] = phi0
    outcomes = np.empty(n, dtype=int)
    nu = np.ones(n + 1)
    psi = phi0
    for j, r in enumerate(uniforms):
        p = outcome_probabilities(family, psi)
        p = np.where(p < IMPOSSIBLE, 0.0, p)
        y = _pick(p, r)
        psi, py = collapse_step(family, psi, y)
        outcomes[j] = y
        states[j + 1] = psi
        nu[j + 1] = nu[j] * py
    Z = nu * float(family.k) ** np.arange(n + 1)
    return DiscreteTrajectory(outcomes, states, nu, Z, family.k)


def _pick(p, r):
    cdf = np.cumsum(p)
    y = int(np.searchsorted(cdf, r * cdf[-1], side="right"))
    y = min(y, len(p) - 1)
    while p[y] == 0.0:  # guard against landing on an excluded branch at the cdf edge
        y -= 1
    return y


def sample_trajectories(family: KrausFamily, phi0, n: int, master_seed: int,
                        n_traj: int, first_stream: int = 0):
    """Vectorized sampling of ``n_traj`` chains; trajectory ``i`` uses stream ``first_stream + i``.

    Returns
    -------
    outcomes : ndarray (N, n)
    states : ndarray (N, n + 1, d)
    nu : ndarray (N, n + 1)
    """
    _require_valid(family)
    phi0 = as_state_vector(phi0, dim=family.dim, normalized=True, name="phi0")
    uni = np.stack([stream_generator(master_seed, first_stream + i).random(n) for i in range(n_traj)]) \
        if n > 0 else np.zeros((n_traj, 0))
    K = family.array
    states = np.empty((n_traj, n + 1, family.dim), complex)
    states[:, 0] = phi0
    outcomes = np.empty((n_traj, n), dtype=int)
    nu = np.ones((n_traj, n + 1))
    psi = np.broadcast_to(phi0, (n_traj, family.dim)).copy()
    rows = np.arange(n_traj)
    for j in range(n):
        branches = np.einsum("yij,nj->nyi", K, psi)
        p = np.sum(np.abs(branches) ** 2, axis=-1)
        p = np.where(p < IMPOSSIBLE, 0.0, p)
        cdf = np.cumsum(p, axis=1)
        y = np.minimum((cdf < (uni[:, j] * cdf[:, -1])[:, None]).sum(axis=1), family.k - 1)
        # step back over zero-probability branches at the cdf edge
        while np.any(p[rows, y] == 0.0):
            y = np.where(p[rows, y] == 0.0, y - 1, y)
        py = p[rows, y]
        psi = branches[rows, y] / np.sqrt(py)[:, None]
        py = np.minimum(py, 1.0)
        outcomes[:, j] = y
        states[:, j + 1] = psi
        nu[:, j + 1] = nu[:, j] * py
    return outcomes, states, nu


def enumerate_outcomes(family: KrausFamily, phi0, n: int, max_strings: int = 10**6):
    """All ``k^n`` outcome strings in lexicographic order with their unnormalized branches.

    Returns
    -------
    strings : ndarray (k^n, n)
    branches : ndarray (k^n, d)
        ``K_{y_n} ... K_{y_1} phi0``.
    nu : ndarray (k^n,)
    """
    k = family.k
    if k ** n > max_strings:
        raise ValueError(f"k^n = {k ** n} exceeds the exhaustive limit {max_strings}")
    phi0 = as_state_vector(phi0, dim=family.dim, name="phi0")
    K = family.array
    branches = phi0[None, :]
    for _ in range(n):
        # new index = prefix_index * k + y keeps lexicographic order
        branches = np.einsum("yij,sj->syi", K, branches).reshape(-1, family.dim)
    strings = np.array(list(itertools.product(range(k), repeat=n)), dtype=int).reshape(k ** n, n)
    nu = np.sum(np.abs(branches) ** 2, axis=-1)
    return strings, branches, nu


def coarse_grain_discrete(family: KrausFamily, phi0, n: int, mode: str = "exhaustive",
                          n_samples: int | None = None, master_seed: int = 0) -> np.ndarray:
    """``sum_y nu_n(y) |Psi_n(y)><Psi_n(y)|`` over outcome strings.

    ``mode="exhaustive"`` sums all ``k^n`` strings (impossible strings contribute nothing);
    ``mode="mc"`` averages ``n_samples`` sampled chains.
    """
    phi0 = as_state_vector(phi0, dim=family.dim, normalized=True, name="phi0")
    if mode == "exhaustive":
        _, branches, nu = enumerate_outcomes(family, phi0, n)
        keep = nu >= IMPOSSIBLE
        b = branches[keep]
        # nu |Psi><Psi| == unnormalized branch outer product
        return np.einsum("si,sj->ij", b, b.conj())
    if mode == "mc":
        if not n_samples:
            raise ValueError("mode='mc' needs n_samples")
        _, states, _ = sample_trajectories(family, phi0, n, master_seed, n_samples)
        last = states[:, -1]
        return np.einsum("si,sj->ij", last, last.conj()) / n_samples
    raise ValueError(f"unknown mode {mode!r}")


def kraus_from_superoperator(T: Superoperator, tol: float = 1e-12) -> KrausFamily:
    """Kraus family of a CP Schrodinger-picture map from its Choi eigendecomposition.

    Eigenvalues below ``tol`` (relative to the largest) are dropped.
    """
    if T.picture != "schrodinger":
        raise ValueError("expected a Schrodinger-picture superoperator")
    d = T.dim
    C = choi_matrix(T)
    lam, vec = np.linalg.eigh(0.5 * (C + C.conj().T))
    if lam[0] < -1e-9 * max(1.0, lam[-1]):
        raise ValueError(f"map is not completely positive (Choi eigenvalue {lam[0]:.3g})")
    keep = lam > tol * lam[-1]
    ops = []
    for l, v in zip(lam[keep][::-1], vec[:, keep].T[::-1]):
        # C = sum_ij E_ij (x) T(E_ij): vec index i*d + a  ->  K[a, i]
        ops.append(np.sqrt(l) * v.reshape(d, d).T)
    return KrausFamily(tuple(ops))
