"""Monte Carlo coarse-graining of trajectories into density matrices.

Every trajectory ``i`` draws its noise from stream ``i`` of the master seed.  Trajectories are
processed in fixed-size chunks; each chunk produces partial sums in index order and the chunks
are reduced in chunk order, so results do not depend on how many workers ran them.

Estimators per scheme (``x_i`` is the rank-1 contribution of trajectory ``i``):

``linear``
    ``psi psi^+`` with the unnormalized linear-SSE state.
``linear+reweight``
    ``Z Psi Psi^+`` with ``Psi`` the normalized linear-SSE state and ``Z`` the path functional
    ``exp(2 Re int l.dB - 2 int |l|^2 dt)``.
``nonlinear``
    ``Z Psi Psi^+`` with ``Psi`` from the nonlinear diffusion driven by the reference noise and
    ``Z`` the same path functional accumulated along it.
``gisin-percival``
    ``Psi Psi^+`` with the Gisin-Percival state driven by the innovation noise.
``discrete``
    ``Psi Psi^+`` along a collapse chain whose Kraus family is the exact one-step channel
    ``exp(dt L)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_state_vector
from .core import OperatorSet, master_evolve, semigroup_exact
from .discrete import kraus_from_superoperator, sample_trajectories
from .noise import TimeGrid, sample_complex_paths
from .unravel import integrate, require_unravelable

__all__ = [
    "ENSEMBLE_SCHEMES",
    "EnsembleConfig",
    "EnsembleResult",
    "ComparisonRow",
    "run_ensemble",
    "trace_distance",
    "compare_to_master",
]

ENSEMBLE_SCHEMES = ("linear", "linear+reweight", "nonlinear", "gisin-percival", "discrete")


@dataclass(frozen=True)
class EnsembleConfig:
    """Settings for :func:`run_ensemble`.

    ``store_times`` defaults to the final grid time.  ``chunk_size`` fixes the reduction tree
    and therefore the floating-point result; ``workers`` does not affect it.
    """

    n_traj: int
    master_seed: int
    grid: TimeGrid
    scheme: str = "gisin-percival"
    renormalize: bool = True
    store_times: tuple = ()
    chunk_size: int = 500
    workers: int | None = None

    def __post_init__(self):
        if int(self.n_traj) < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj!r}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.scheme not in ENSEMBLE_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {ENSEMBLE_SCHEMES}")
        if int(self.chunk_size) < 1:
            raise ValueError("chunk_size must be positive")
        times = tuple(float(t) for t in self.store_times) or (self.grid.T,)
        for t in times:
            self.grid.index(t)
        object.__setattr__(self, "store_times", times)

    @property
    def store_indices(self) -> np.ndarray:
        return np.array([self.grid.index(t) for t in self.store_times], dtype=int)


@dataclass
class EnsembleResult:
    times: np.ndarray
    rho_hat: np.ndarray
    stderr: np.ndarray
    n_traj: int
    scheme: str = ""
    meta: dict = field(default_factory=dict)


def _contributions(scheme, ops, psi0, cfg, start, stop, store):
    """Rank-1 contributions ``(size, S, d, d)`` of trajectories ``start..stop-1``."""
    dt = cfg.grid.dt
    if scheme == "discrete":
        family = kraus_from_superoperator(semigroup_exact(ops, dt, picture="schrodinger"))
        _, states, _ = sample_trajectories(family, psi0, cfg.grid.steps, cfg.master_seed,
                                           stop - start, first_stream=start)
        Psi = states[:, store]
        return np.einsum("nsi,nsj->nsij", Psi, Psi.conj())

    paths = sample_complex_paths(cfg.master_seed, cfg.grid, ops.n_channels, range(start, stop))
    base = "linear" if scheme.startswith("linear") else scheme
    renorm = cfg.renormalize and base != "linear"
    res = integrate(base, ops, psi0, paths.increments, dt, renormalize=renorm, store=store,
                    batch_offset=start)
    if scheme == "linear":
        v = res["psi"]
        return np.einsum("nsi,nsj->nsij", v, v.conj())
    Psi = res["Psi"]
    rank1 = np.einsum("nsi,nsj->nsij", Psi, Psi.conj())
    if scheme == "gisin-percival":
        return rank1
    # linear+reweight and nonlinear both carry the path-functional likelihood ratio
    Z = np.exp(2 * res["ldB"].real - 2 * res["l2"])
    return Z[..., None, None] * rank1


def _chunk_partial(args):
    scheme, ops, psi0, cfg, start, stop, store = args
    x = _contributions(scheme, ops, psi0, cfg, start, stop, store)
    return x.sum(axis=0), (np.abs(x) ** 2).sum(axis=0)


def run_ensemble(ops: OperatorSet, psi0, cfg: EnsembleConfig) -> EnsembleResult:
    """Estimate ``rho_t`` at ``cfg.store_times`` from ``cfg.n_traj`` trajectories.

    Raises
    ------
    ConventionError
        For a stochastic scheme with operators not in the ``c = 1`` convention.
    InvariantError
        If a trajectory blows up; the message names the trajectory index.
    """
    psi0 = as_state_vector(psi0, dim=ops.dim, normalized=True, name="psi0")
    if cfg.scheme != "discrete":
        require_unravelable(ops)
    store = cfg.store_indices
    N = int(cfg.n_traj)
    bounds = [(s, min(s + cfg.chunk_size, N)) for s in range(0, N, cfg.chunk_size)]
    jobs = [(cfg.scheme, ops, psi0, cfg, a, b, store) for a, b in bounds]
    workers = cfg.workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        partials = [_chunk_partial(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_chunk_partial, jobs))

    total = np.zeros((len(store), ops.dim, ops.dim), complex)
    total_sq = np.zeros((len(store), ops.dim, ops.dim))
    for s, sq in partials:
        total = total + s
        total_sq = total_sq + sq
    mean = total / N
    if N > 1:
        var = np.maximum(total_sq / N - np.abs(mean) ** 2, 0.0) * N / (N - 1)
        stderr = np.sqrt(var / N).reshape(len(store), -1).max(axis=1)
    else:
        stderr = np.full(len(store), np.inf)
    meta = {"master_seed": int(cfg.master_seed), "dt": cfg.grid.dt, "N": N,
            "scheme": cfg.scheme}
    return EnsembleResult(np.array(cfg.store_times), mean, stderr, N, cfg.scheme, meta)


def trace_distance(rho1, rho2) -> float:
    """Half the trace norm of ``rho1 - rho2``."""
    a = np.asarray(rho1, complex)
    b = np.asarray(rho2, complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.sum(np.linalg.svd(a - b, compute_uv=False)))


@dataclass(frozen=True)
class ComparisonRow:
    time: float
    trace_distance: float
    stderr: float
    tolerance: float
    passed: bool


def compare_to_master(ops: OperatorSet, psi0, cfg: EnsembleConfig, abs_floor: float = 0.02,
                      reference_ops: OperatorSet | None = None, result: EnsembleResult | None = None):
    """Check an ensemble estimate against the master equation at every store time.

    A time passes when the trace distance is at most ``max(abs_floor, 5 * stderr)``.
    ``reference_ops`` defaults to ``ops``; pass a different set to test a mislabeled convention.

    Returns
    -------
    list of ComparisonRow
    """
    psi0 = as_state_vector(psi0, dim=ops.dim, normalized=True, name="psi0")
    ref = ops if reference_ops is None else reference_ops
    res = run_ensemble(ops, psi0, cfg) if result is None else result
    rho_path = master_evolve(ref, np.outer(psi0, psi0.conj()), cfg.grid.T, cfg.grid.dt)
    rows = []
    for t, rho_hat, se in zip(res.times, res.rho_hat, res.stderr):
        td = trace_distance(rho_hat, rho_path[cfg.grid.index(t)])
        tol = max(abs_floor, 5 * float(se)) if np.isfinite(se) else abs_floor
        rows.append(ComparisonRow(float(t), td, float(se), tol, td <= tol))
    return rows
