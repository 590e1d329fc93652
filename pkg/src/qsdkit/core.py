"""GKSL generators, deterministic master-equation integration and CP diagnostics.

Conventions
-----------
Basis vectors are indexed ``0 = |g>``, ``1 = |e>`` for qubit examples.

The dissipator carries an explicit prefactor ``c``::

    L(X)    =  i[H, X] - c * sum_k (Lk^+ Lk X + X Lk^+ Lk - 2 Lk^+ X Lk)     (Heisenberg)
    L*(rho) = -i[H, rho] - c * sum_k (Lk^+ Lk rho + rho Lk^+ Lk - 2 Lk rho Lk^+)  (Schrodinger)

``c = 1/2`` is the textbook Lindblad normalization; ``c = 1`` is the one produced by
complex Brownian noise with ``dB dB* = 2 dt`` and is the default here.  The two are
related by ``(c=1, {Lk}) == (c=1/2, {sqrt(2) Lk})``.

Superoperators act on operators vectorized in **row-major** order,
``vec(X)[i*d + j] = X[i, j]``, so that ``vec(A X B) = kron(A, B.T) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from ._validation import (
    InvariantError,
    as_square_matrix,
    check_density_matrix,
    hermiticity_error,
    n_steps,
)

__all__ = [
    "OperatorSet",
    "Superoperator",
    "generator_heisenberg",
    "generator_schrodinger",
    "liouvillian_matrix",
    "master_evolve",
    "semigroup_exact",
    "choi_matrix",
    "choi_check",
    "vectorize",
    "unvectorize",
    "matrix_units",
]

PREFACTORS = (0.5, 1.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OperatorSet:
    """Hamiltonian, Lindblad operators and dissipator prefactor of a GKSL generator.

    Parameters
    ----------
    hamiltonian : array_like, shape (d, d)
        Hermitian system Hamiltonian.
    lindblads : sequence of array_like, shape (d, d)
        Lindblad (noise) operators ``L_1 .. L_n``; may be empty.
    dissipator_prefactor : float
        Either ``0.5`` or ``1.0``.
    """

    hamiltonian: np.ndarray
    lindblads: tuple = field(default_factory=tuple)
    dissipator_prefactor: float = 1.0

    def __post_init__(self):
        h = as_square_matrix(self.hamiltonian, name="hamiltonian")
        herr = hermiticity_error(h)
        if herr > 1e-12:
            raise ValueError(f"hamiltonian is not Hermitian (max |H - H^dag| = {herr:.3g})")
        d = h.shape[0]
        ls = tuple(
            _readonly(as_square_matrix(L, name=f"lindblads[{k}]", dim=d))
            for k, L in enumerate(self.lindblads)
        )
        c = float(self.dissipator_prefactor)
        if c not in PREFACTORS:
            raise ValueError(f"dissipator_prefactor must be 0.5 or 1, got {self.dissipator_prefactor!r}")
        object.__setattr__(self, "hamiltonian", _readonly(h))
        object.__setattr__(self, "lindblads", ls)
        object.__setattr__(self, "dissipator_prefactor", c)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.lindblads)

    @cached_property
    def lindblad_array(self) -> np.ndarray:
        """Lindblad operators stacked into an array of shape (n, d, d)."""
        if not self.lindblads:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack(self.lindblads)

    @cached_property
    def ldag_l_sum(self) -> np.ndarray:
        """``sum_k Lk^+ Lk``."""
        a = self.lindblad_array
        return np.einsum("kji,kjl->il", a.conj(), a)

    def with_prefactor(self, c: float) -> "OperatorSet":
        """Equivalent operator set expressed in the other dissipator convention.

        Lindblad operators are rescaled by ``sqrt(c_old / c)`` so the generator is unchanged.
        """
        c = float(c)
        scale = np.sqrt(self.dissipator_prefactor / c)
        return OperatorSet(self.hamiltonian, tuple(scale * L for L in self.lindblads), c)

    def __eq__(self, other):
        if not isinstance(other, OperatorSet):
            return NotImplemented
        return (
            self.dissipator_prefactor == other.dissipator_prefactor
            and self.n_channels == other.n_channels
            and np.array_equal(self.hamiltonian, other.hamiltonian)
            and all(np.array_equal(a, b) for a, b in zip(self.lindblads, other.lindblads))
        )

    __hash__ = None


def _check_operand(ops: OperatorSet, X, name) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.shape != (ops.dim, ops.dim):
        raise ValueError(f"{name} has shape {X.shape}, expected {(ops.dim, ops.dim)}")
    return X


def generator_heisenberg(ops: OperatorSet, X) -> np.ndarray:
    """Apply the Heisenberg-picture GKSL generator to the observable ``X``."""
    X = _check_operand(ops, X, "X")
    H, A, c = ops.hamiltonian, ops.ldag_l_sum, ops.dissipator_prefactor
    out = 1j * (H @ X - X @ H) - c * (A @ X + X @ A)
    for L in ops.lindblads:
        out += 2 * c * (L.conj().T @ X @ L)
    return out


def generator_schrodinger(ops: OperatorSet, rho) -> np.ndarray:
    """Right-hand side ``d rho / dt`` of the GKSL master equation."""
    rho = _check_operand(ops, rho, "rho")
    H, A, c = ops.hamiltonian, ops.ldag_l_sum, ops.dissipator_prefactor
    out = -1j * (H @ rho - rho @ H) - c * (A @ rho + rho @ A)
    for L in ops.lindblads:
        out += 2 * c * (L @ rho @ L.conj().T)
    return out


def vectorize(X) -> np.ndarray:
    """Row-major vectorization of a square matrix."""
    return np.asarray(X).reshape(-1)


def unvectorize(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape(dim, dim)


def matrix_units(d: int):
    """Yield ``(i, j, E_ij)`` for the d*d matrix units in row-major order."""
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1.0
            yield i, j, E


@dataclass(frozen=True)
class Superoperator:
    """Linear map on d x d matrices stored as a d^2 x d^2 matrix (row-major vec)."""

    matrix: np.ndarray
    picture: str = "heisenberg"

    def __post_init__(self):
        m = as_square_matrix(self.matrix, name="superoperator")
        d = int(round(np.sqrt(m.shape[0])))
        if d * d != m.shape[0]:
            raise ValueError(f"superoperator size {m.shape[0]} is not a perfect square")
        if self.picture not in ("heisenberg", "schrodinger"):
            raise ValueError(f"unknown picture {self.picture!r}")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        return unvectorize(self.matrix @ vectorize(X), self.dim)

    def compose(self, other: "Superoperator") -> "Superoperator":
        """``self o other`` (apply ``other`` first)."""
        if other.dim != self.dim:
            raise ValueError("superoperator dimensions differ")
        return Superoperator(self.matrix @ other.matrix, self.picture)


def liouvillian_matrix(ops: OperatorSet, picture: str = "heisenberg") -> Superoperator:
    """Matrix of the GKSL generator acting on row-major vectorized operators."""
    d = ops.dim
    eye = np.eye(d)
    H, A, c = ops.hamiltonian, ops.ldag_l_sum, ops.dissipator_prefactor
    comm = np.kron(H, eye) - np.kron(eye, H.T)
    anti = np.kron(A, eye) + np.kron(eye, A.T)
    if picture == "heisenberg":
        m = 1j * comm - c * anti
        for L in ops.lindblads:
            m += 2 * c * np.kron(L.conj().T, L.T)
    elif picture == "schrodinger":
        m = -1j * comm - c * anti
        for L in ops.lindblads:
            m += 2 * c * np.kron(L, L.conj())
    else:
        raise ValueError(f"picture must be 'heisenberg' or 'schrodinger', got {picture!r}")
    return Superoperator(m, picture)


def semigroup_exact(ops: OperatorSet, t: float, picture: str = "heisenberg") -> Superoperator:
    """``T_t = exp(t L)`` by Pade scaling-and-squaring."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    gen = liouvillian_matrix(ops, picture)
    return Superoperator(scipy.linalg.expm(t * gen.matrix), picture)


def master_evolve(ops: OperatorSet, rho0, T: float, dt: float) -> np.ndarray:
    """Integrate the Schrodinger-picture master equation with fixed-step RK4.

    The state is re-Hermitized after every step; the trace is never renormalized.

    Parameters
    ----------
    ops : OperatorSet
    rho0 : array_like, shape (d, d)
        Initial density matrix.
    T, dt : float
        Final time and step; ``T`` must be a multiple of ``dt``.

    Returns
    -------
    numpy.ndarray, shape (M + 1, d, d)
        Density matrices at ``t_j = j * dt``, ``j = 0..M``.

    Raises
    ------
    InvariantError
        If a stored state has trace error above 1e-10 or an eigenvalue below -1e-9.
    """
    rho = check_density_matrix(rho0, dim=ops.dim, name="rho0").copy()
    m = n_steps(T, dt)
    out = np.empty((m + 1, ops.dim, ops.dim), dtype=complex)
    out[0] = rho
    f = lambda r: generator_schrodinger(ops, r)  # noqa: E731
    for j in range(1, m + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        _check_step(rho, j)
        out[j] = rho
    return out


def _check_step(rho, step):
    if not np.all(np.isfinite(rho)):
        raise InvariantError(f"non-finite density matrix at step {step}", step=step,
                             quantity="finite")
    tr_err = abs(np.trace(rho).real - 1.0)
    if tr_err > 1e-10:
        raise InvariantError(f"trace error {tr_err:.3g} > 1e-10 at step {step}", step=step,
                             quantity="trace", value=tr_err, tolerance=1e-10)
    lam = np.linalg.eigvalsh(rho)[0]
    if lam < -1e-9:
        raise InvariantError(f"eigenvalue {lam:.3g} < -1e-9 at step {step}", step=step,
                             quantity="min_eigenvalue", value=lam, tolerance=-1e-9)


def choi_matrix(T: Superoperator) -> np.ndarray:
    """``sum_ij E_ij (x) T(E_ij)``; Hermitian for Hermiticity-preserving maps."""
    d = T.dim
    C = np.zeros((d * d, d * d), dtype=complex)
    for i, j, E in matrix_units(d):
        C[i * d:(i + 1) * d, j * d:(j + 1) * d] = T(E)
    return C


def choi_check(T: Superoperator, atol: float = 1e-9) -> tuple[float, bool]:
    """Smallest Choi eigenvalue and whether the map is completely positive."""
    C = choi_matrix(T)
    lam = float(np.linalg.eigvalsh(0.5 * (C + C.conj().T))[0])
    return lam, lam >= -atol


def random_operator_set(rng: np.random.Generator, d: int, n: int,
                        c: float = 1.0, scale: float = 1.0) -> OperatorSet:
    """Random operator set with Gaussian entries, used by property tests and ``verify``."""
    g = lambda: rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))  # noqa: E731
    h = g()
    h = 0.5 * scale * (h + h.conj().T)
    ls: Sequence[np.ndarray] = [scale * 0.5 * g() for _ in range(n)]
    return OperatorSet(h, tuple(ls), c)


def random_density_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
