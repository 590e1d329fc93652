"""Stochastic Schrodinger equations driven by complex Brownian noise.

Three Euler-Maruyama integrators share one stepping engine:

``linear``
    ``d psi = sum_k Lk psi dB_k - (iH + sum_k Lk^+ Lk) psi dt``; not norm preserving.
    ``<psi_t|psi_t>`` is the Girsanov likelihood ratio ``Z_t``.
``nonlinear``
    ``d Psi = sum_k (Lk - l_k) Psi dB_k - [iH + sum_k (Lk^+ Lk - |l_k|^2)] Psi dt`` with
    ``l_k = <Lk>_Psi``, driven by the same reference Brownian motion ``B``.
``gisin-percival``
    ``d Psi = sum_k (Lk - l_k) Psi dB'_k - (iH + sum_k [Lk^+ Lk + |l_k|^2 - 2 conj(l_k) Lk]) Psi dt``,
    driven by ``B' = B - 2 int conj(l) dt``, a standard Brownian motion under the
    reweighted measure ``Z_t mu``.

All state-dependent coefficients are evaluated at the left end of each step (Ito).
The unravelings need the ``c = 1`` dissipator convention because ``dB dB* = 2 dt``.

Every record also carries the running integrals ``int sum_k l_k dB_k`` and
``int sum_k |l_k|^2 ds`` along the reference increments ``dB`` (for Gisin-Percival,
``dB = dB' + 2 conj(l) dt``), from which the Girsanov weight
``Z_t = exp(2 Re int l dB - 2 int |l|^2 ds)`` is rebuilt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ._validation import ConventionError, InvariantError, as_state_vector
from .core import OperatorSet
from .noise import ComplexNoisePath, TestFunction, TimeGrid, phi_process

__all__ = [
    "TrajectoryRecord",
    "SCHEMES",
    "expectations",
    "linear_sse_evolve",
    "nonlinear_evolve",
    "gisin_percival_evolve",
    "norm_closed_form",
    "explicit_solution",
    "girsanov_weight",
    "require_unravelable",
    "linear_step",
    "nonlinear_step",
    "gisin_percival_step",
    "girsanov_shift",
    "integrate",
]

SCHEMES = ("linear", "nonlinear", "gisin-percival")
EPS_NORM = 1e-14


def require_unravelable(ops: OperatorSet) -> None:
    """Raise :class:`ConventionError` unless ``ops`` uses the ``c = 1`` convention."""
    if ops.dissipator_prefactor != 1.0:
        raise ConventionError(
            "stochastic unravelings require dissipator_prefactor = 1 (noise rule dB dB* = 2 dt); "
            f"got {ops.dissipator_prefactor}. Convert with ops.with_prefactor(1.0), which rescales "
            "each Lk by 1/sqrt(2): (c=1/2, {Lk}) == (c=1, {Lk/sqrt(2)})."
        )


@dataclass
class TrajectoryRecord:
    """Time series produced by one of the stochastic integrators.

    Arrays have a time axis of length ``grid.steps + 1``, preceded by any batch axes of the
    driving path.

    Attributes
    ----------
    psi : ndarray (..., M + 1, d)
        Integrator state before any renormalization (unnormalized ``psi_t`` for ``linear``).
    Psi : ndarray (..., M + 1, d)
        Normalized state.
    norm_sq : ndarray (..., M + 1)
        ``<psi_t|psi_t>``.
    girsanov_weight : ndarray (..., M + 1)
        ``Z_t``; identical to ``norm_sq`` for ``linear`` records, rebuilt from the running
        integrals otherwise.
    running_ldB : ndarray (..., M + 1)
        ``int_0^t sum_k l_k dB_k``.
    running_l2 : ndarray (..., M + 1)
        ``int_0^t sum_k |l_k|^2 ds``.
    """

    grid: TimeGrid
    scheme: str
    psi: np.ndarray
    Psi: np.ndarray
    norm_sq: np.ndarray
    girsanov_weight: np.ndarray
    running_ldB: np.ndarray
    running_l2: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def expectations(ops: OperatorSet, psi, psi0, eps_norm: float = EPS_NORM) -> np.ndarray:
    """``l_k = <psi|Lk|psi> / <psi|psi>``, or ``<psi0|Lk|psi0>`` when ``<psi|psi> <= eps_norm``.

    ``psi`` may carry leading batch axes; the result has shape ``(..., n)``.
    """
    if eps_norm <= 0:
        raise ValueError("eps_norm must be positive")
    psi = np.asarray(psi, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    return _expectations(ops.lindblad_array, psi, psi0, eps_norm)


def _expectations(Ls, psi, psi0, eps_norm, Lpsi=None):
    if Lpsi is None:
        Lpsi = np.einsum("kij,...j->...ki", Ls, psi)
    nrm = np.sum(np.abs(psi) ** 2, axis=-1)
    num = np.einsum("...i,...ki->...k", psi.conj(), Lpsi)
    ok = nrm > eps_norm
    safe = np.where(ok, nrm, 1.0)
    ell = num / safe[..., None]
    if not np.all(ok):
        ell0 = np.einsum("i,kij,j->k", psi0.conj(), Ls, psi0) / np.vdot(psi0, psi0).real
        ell = np.where(ok[..., None], ell, ell0)
    return ell


class _Engine:
    """Precomputed operators for batched Euler-Maruyama steps on states of shape (..., d)."""

    def __init__(self, ops: OperatorSet, psi0, eps_norm=EPS_NORM):
        self.Ls = ops.lindblad_array
        self.K = 1j * ops.hamiltonian + ops.ldag_l_sum
        self.psi0 = psi0
        self.eps_norm = eps_norm

    def prepare(self, psi):
        Lpsi = np.einsum("kij,...j->...ki", self.Ls, psi)
        ell = _expectations(self.Ls, psi, self.psi0, self.eps_norm, Lpsi)
        return Lpsi, ell

    def linear(self, psi, dB, dt, Lpsi):
        return psi + np.einsum("...ki,...k->...i", Lpsi, dB) - dt * (psi @ self.K.T)

    def nonlinear(self, psi, dB, dt, Lpsi, ell):
        noise = np.einsum("...ki,...k->...i", Lpsi, dB) - np.sum(ell * dB, axis=-1)[..., None] * psi
        drift = psi @ self.K.T - np.sum(np.abs(ell) ** 2, axis=-1)[..., None] * psi
        return psi + noise - dt * drift

    def gisin_percival(self, psi, dBp, dt, Lpsi, ell):
        noise = np.einsum("...ki,...k->...i", Lpsi, dBp) - np.sum(ell * dBp, axis=-1)[..., None] * psi
        drift = (psi @ self.K.T + np.sum(np.abs(ell) ** 2, axis=-1)[..., None] * psi
                 - 2 * np.einsum("...ki,...k->...i", Lpsi, ell.conj()))
        return psi + noise - dt * drift


def linear_step(ops: OperatorSet, psi, dB, dt: float) -> np.ndarray:
    """One Euler-Maruyama step of the linear equation."""
    eng = _Engine(ops, np.asarray(psi))
    Lpsi, _ = eng.prepare(np.asarray(psi, complex))
    return eng.linear(np.asarray(psi, complex), np.asarray(dB, complex), dt, Lpsi)


def nonlinear_step(ops: OperatorSet, Psi, dB, dt: float, psi0=None) -> np.ndarray:
    """One Euler-Maruyama step of the normalized diffusion driven by the reference ``B``."""
    Psi = np.asarray(Psi, complex)
    eng = _Engine(ops, Psi if psi0 is None else np.asarray(psi0, complex))
    Lpsi, ell = eng.prepare(Psi)
    return eng.nonlinear(Psi, np.asarray(dB, complex), dt, Lpsi, ell)


def gisin_percival_step(ops: OperatorSet, Psi, dBp, dt: float, psi0=None) -> np.ndarray:
    """One Euler-Maruyama step of the Gisin-Percival equation driven by ``B'``."""
    Psi = np.asarray(Psi, complex)
    eng = _Engine(ops, Psi if psi0 is None else np.asarray(psi0, complex))
    Lpsi, ell = eng.prepare(Psi)
    return eng.gisin_percival(Psi, np.asarray(dBp, complex), dt, Lpsi, ell)


def girsanov_shift(ops: OperatorSet, Psi, dBp, dt: float, psi0=None) -> np.ndarray:
    """Reference increment ``dB = dB' + 2 conj(<L>_Psi) dt``."""
    Psi = np.asarray(Psi, complex)
    ell = expectations(ops, Psi, Psi if psi0 is None else psi0)
    return np.asarray(dBp, complex) + 2 * ell.conj() * dt


def integrate(scheme: str, ops: OperatorSet, psi0, increments: np.ndarray, dt: float,
              renormalize: bool = False, store=None, eps_norm: float = EPS_NORM,
              batch_offset: int = 0) -> dict:
    """Shared Euler-Maruyama driver.

    Parameters
    ----------
    scheme : {"linear", "nonlinear", "gisin-percival"}
    ops : OperatorSet
        Must use ``c = 1``.
    psi0 : array_like, shape (d,)
        Normalized initial state.
    increments : ndarray, shape (..., M, n)
        Complex increments; reference ``dB`` for linear/nonlinear, ``dB'`` for Gisin-Percival.
    dt : float
    renormalize : bool
        Project onto the unit sphere after each step (nonlinear schemes only).
    store : sequence of int, optional
        Grid indices to keep; all ``M + 1`` by default.
    batch_offset : int
        Added to batch indices in error messages.

    Returns
    -------
    dict
        Arrays ``psi``, ``Psi``, ``norm_sq``, ``weight``, ``ldB``, ``l2`` at the stored indices
        (time axis after the batch axes).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    require_unravelable(ops)
    psi0 = as_state_vector(psi0, dim=ops.dim, normalized=True, name="psi0")
    inc = np.asarray(increments, dtype=complex)
    if inc.shape[-1] != ops.n_channels:
        raise ValueError(f"path has {inc.shape[-1]} channels, ops has {ops.n_channels} lindblads")
    if renormalize and scheme == "linear":
        raise ValueError("renormalize is only meaningful for the nonlinear schemes")
    m = inc.shape[-2]
    batch = inc.shape[:-2]
    store = np.arange(m + 1) if store is None else np.asarray(store, dtype=int)
    slot = {int(j): s for s, j in enumerate(store)}

    d = ops.dim
    out = {
        "psi": np.empty(batch + (len(store), d), complex),
        "Psi": np.empty(batch + (len(store), d), complex),
        "norm_sq": np.empty(batch + (len(store),)),
        "ldB": np.empty(batch + (len(store),), complex),
        "l2": np.empty(batch + (len(store),)),
    }
    eng = _Engine(ops, psi0, eps_norm)
    psi = np.broadcast_to(psi0, batch + (d,)).copy()
    ldB = np.zeros(batch, complex)
    l2 = np.zeros(batch)
    # without noise channels every scheme reduces to the Schrodinger equation; solve it exactly
    prop = expm(-1j * dt * ops.hamiltonian).T if ops.n_channels == 0 else None

    def record(j, raw, nsq):
        s = slot.get(j)
        if s is None:
            return
        out["psi"][..., s, :] = raw
        out["Psi"][..., s, :] = raw / np.sqrt(np.where(nsq > 0, nsq, 1.0))[..., None]
        out["norm_sq"][..., s] = nsq
        out["ldB"][..., s] = ldB
        out["l2"][..., s] = l2

    record(0, psi, np.sum(np.abs(psi) ** 2, axis=-1))
    for j in range(m):
        dB = inc[..., j, :]
        Lpsi, ell = eng.prepare(psi)
        if prop is not None:
            new = psi @ prop
            dB_ref = dB
        elif scheme == "linear":
            new = eng.linear(psi, dB, dt, Lpsi)
            dB_ref = dB
        elif scheme == "nonlinear":
            new = eng.nonlinear(psi, dB, dt, Lpsi, ell)
            dB_ref = dB
        else:
            new = eng.gisin_percival(psi, dB, dt, Lpsi, ell)
            dB_ref = dB + 2 * ell.conj() * dt
        if not np.all(np.isfinite(new)):
            bad = np.argwhere(~np.all(np.isfinite(new), axis=-1))
            where = "" if not batch else f" (trajectory {int(bad[0][0]) + batch_offset})"
            raise InvariantError(f"non-finite amplitudes at step {j + 1}{where}", step=j + 1,
                                 quantity="finite")
        ldB = ldB + np.sum(ell * dB_ref, axis=-1)
        l2 = l2 + dt * np.sum(np.abs(ell) ** 2, axis=-1)
        nsq = np.sum(np.abs(new) ** 2, axis=-1)
        record(j + 1, new, nsq)
        psi = new / np.sqrt(nsq)[..., None] if renormalize else new

    if scheme == "linear":
        out["weight"] = out["norm_sq"].copy()
    else:
        out["weight"] = np.exp(2 * out["ldB"].real - 2 * out["l2"])
    return out


def _evolve(scheme, ops, psi0, path: ComplexNoisePath, renormalize):
    res = integrate(scheme, ops, psi0, path.increments, path.grid.dt, renormalize=renormalize)
    return TrajectoryRecord(
        grid=path.grid, scheme=scheme, psi=res["psi"], Psi=res["Psi"], norm_sq=res["norm_sq"],
        girsanov_weight=res["weight"], running_ldB=res["ldB"], running_l2=res["l2"],
    )


def linear_sse_evolve(ops: OperatorSet, psi0, path: ComplexNoisePath) -> TrajectoryRecord:
    """Integrate the linear stochastic Schrodinger equation along ``path``.

    Raises
    ------
    ConventionError
        If ``ops`` is not in the ``c = 1`` convention.
    InvariantError
        On non-finite amplitudes, with the step index.
    """
    return _evolve("linear", ops, psi0, path, False)


def nonlinear_evolve(ops: OperatorSet, Psi0, path: ComplexNoisePath,
                     renormalize: bool = True) -> TrajectoryRecord:
    """Integrate the normalized state diffusion driven by the reference Brownian motion.

    Coarse-graining these trajectories reproduces the master equation only after
    reweighting by ``girsanov_weight``; see :func:`qsdkit.ensemble.run_ensemble`.
    """
    return _evolve("nonlinear", ops, Psi0, path, renormalize)


def gisin_percival_evolve(ops: OperatorSet, Psi0, path: ComplexNoisePath,
                          renormalize: bool = True) -> TrajectoryRecord:
    """Integrate the Gisin-Percival equation; ``path`` is read as ``B'``."""
    return _evolve("gisin-percival", ops, Psi0, path, renormalize)


def norm_closed_form(record: TrajectoryRecord) -> np.ndarray:
    """``exp(2 Re int l dB - 2 int |l|^2 ds)`` from the record's running integrals."""
    return np.exp(2 * record.running_ldB.real - 2 * record.running_l2)


def explicit_solution(ops: OperatorSet, psi_record: TrajectoryRecord,
                      path: ComplexNoisePath) -> np.ndarray:
    """Normalized trajectory ``Psi_t = Phi_t(-l) psi_t`` built from a linear record.

    ``l_j = <L>_{psi_j}`` is read off the stored linear state, so the Phi factor is a
    non-anticipating functional of the same path.

    Returns
    -------
    numpy.ndarray, shape (..., M + 1, d)
    """
    if psi_record.scheme != "linear":
        raise ValueError("explicit_solution needs a record from linear_sse_evolve")
    psi = psi_record.psi
    psi0 = psi.reshape(-1, *psi.shape[-2:])[0, 0]  # every path starts from the same state
    ell = expectations(ops, psi[..., :-1, :], psi0)
    phi = phi_process(TestFunction(path.grid, -ell), path)
    return phi[..., None] * psi


def girsanov_weight(record: TrajectoryRecord, t: float) -> np.ndarray:
    """``Z_t`` at grid time ``t``."""
    return record.girsanov_weight[..., record.grid.index(t)]
