"""Seeded Brownian paths and Wiener functionals on a uniform time grid.

Real paths carry independent N(0, dt) increments per channel.  Complex paths use
``dB = dB1 + i dB2`` with independent real parts, so that ``E[dB dB*] = 2 dt`` and
``E[dB dB] = 0``.

Every stream is a Philox counter-based generator keyed by ``(master_seed, stream_index)``;
draws are laid out step-major then channel, so step ``j`` of a path never depends on
the total number of steps requested.

Stochastic exponentials (exponential functionals, coherent and Phi processes,
randomized Weyl action) are accumulated in log space with one exact exponential factor
per grid cell.  Non-anticipating integrands are evaluated at the left end of each cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

__all__ = [
    "TimeGrid",
    "NoiseSeed",
    "RealNoisePath",
    "ComplexNoisePath",
    "TestFunction",
    "stream_generator",
    "sample_real_path",
    "sample_complex_path",
    "sample_real_paths",
    "sample_complex_paths",
    "inner",
    "exponential_functional",
    "exponential_inner_product_mc",
    "proposition_check",
    "coherent_process",
    "phi_process",
    "randomized_weyl_apply",
    "weyl_closed_form",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j * dt`` for ``j = 0..steps``."""

    dt: float
    steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_duration(cls, T: float, dt: float) -> "TimeGrid":
        from ._validation import n_steps

        return cls(dt, n_steps(T, dt))

    @property
    def T(self) -> float:
        return self.dt * self.steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def index(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not on the grid."""
        j = int(round(t / self.dt))
        if j < 0 or j > self.steps or abs(j * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} is not on the grid (dt={self.dt}, steps={self.steps})")
        return j

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.dt / factor, self.steps * factor)


class NoiseSeed(NamedTuple):
    master_seed: int
    stream_index: int = 0


def stream_generator(master_seed: int, stream_index: int = 0) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, stream_index)``."""
    key = np.array([int(master_seed) & _MASK64, int(stream_index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _coerce_seed(seed) -> NoiseSeed:
    if isinstance(seed, NoiseSeed):
        return seed
    if isinstance(seed, (tuple, list)):
        return NoiseSeed(*seed)
    return NoiseSeed(int(seed), 0)


@dataclass(frozen=True)
class RealNoisePath:
    """Real Brownian increments, ``increments[..., j, k] = B_k(t_{j+1}) - B_k(t_j)``.

    Leading axes, if any, index independent paths.
    """

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim < 2 or inc.shape[-2] != self.grid.steps:
            raise ValueError(f"increments shape {inc.shape} does not match {self.grid.steps} steps")
        object.__setattr__(self, "increments", inc)

    @property
    def channels(self) -> int:
        return self.increments.shape[-1]

    def cumulative(self) -> np.ndarray:
        """Path values ``B(t_j)``, shape ``(..., steps + 1, channels)``."""
        return _cumulative(self.increments)

    def coarsen(self, factor: int = 2) -> "RealNoisePath":
        return RealNoisePath(_coarsen_grid(self.grid, factor), _coarsen(self.increments, factor))


@dataclass(frozen=True)
class ComplexNoisePath:
    """Complex Brownian increments ``dB_k = dB_{1,k} + i dB_{2,k}``."""

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=complex)
        if inc.ndim < 2 or inc.shape[-2] != self.grid.steps:
            raise ValueError(f"increments shape {inc.shape} does not match {self.grid.steps} steps")
        object.__setattr__(self, "increments", inc)

    @property
    def channels(self) -> int:
        return self.increments.shape[-1]

    def cumulative(self) -> np.ndarray:
        return _cumulative(self.increments)

    def coarsen(self, factor: int = 2) -> "ComplexNoisePath":
        return ComplexNoisePath(_coarsen_grid(self.grid, factor), _coarsen(self.increments, factor))

    def real_view(self) -> RealNoisePath:
        """The 2n real channels ``(Re dB_1..Re dB_n, Im dB_1..Im dB_n)``."""
        inc = np.concatenate([self.increments.real, self.increments.imag], axis=-1)
        return RealNoisePath(self.grid, inc)

    def __getitem__(self, item) -> "ComplexNoisePath":
        """Select paths along the leading batch axis."""
        return ComplexNoisePath(self.grid, self.increments[item])


def _cumulative(inc):
    zero = np.zeros(inc.shape[:-2] + (1, inc.shape[-1]), dtype=inc.dtype)
    return np.concatenate([zero, np.cumsum(inc, axis=-2)], axis=-2)


def _coarsen_grid(grid: TimeGrid, factor: int) -> TimeGrid:
    if grid.steps % factor:
        raise ValueError(f"{grid.steps} steps cannot be coarsened by {factor}")
    return TimeGrid(grid.dt * factor, grid.steps // factor)


def _coarsen(inc, factor):
    shape = inc.shape[:-2] + (inc.shape[-2] // factor, factor, inc.shape[-1])
    return inc.reshape(shape).sum(axis=-2)


def sample_real_path(seed, grid: TimeGrid, m: int) -> RealNoisePath:
    s = _coerce_seed(seed)
    z = stream_generator(s.master_seed, s.stream_index).standard_normal((grid.steps, m))
    return RealNoisePath(grid, np.sqrt(grid.dt) * z)


def sample_complex_path(seed, grid: TimeGrid, n: int) -> ComplexNoisePath:
    """Complex Brownian path for one ``(master_seed, stream_index)`` pair."""
    s = _coerce_seed(seed)
    z = stream_generator(s.master_seed, s.stream_index).standard_normal((grid.steps, n, 2))
    return ComplexNoisePath(grid, np.sqrt(grid.dt) * (z[..., 0] + 1j * z[..., 1]))


def sample_real_paths(master_seed: int, grid: TimeGrid, m: int,
                      streams: Union[int, Sequence[int]]) -> RealNoisePath:
    """Batch of real paths; ``streams`` is a count or an explicit list of stream indices."""
    idx = range(streams) if np.isscalar(streams) else streams
    inc = np.stack([sample_real_path((master_seed, i), grid, m).increments for i in idx])
    return RealNoisePath(grid, inc)


def sample_complex_paths(master_seed: int, grid: TimeGrid, n: int,
                         streams: Union[int, Sequence[int]]) -> ComplexNoisePath:
    idx = range(streams) if np.isscalar(streams) else streams
    inc = np.stack([sample_complex_path((master_seed, i), grid, n).increments for i in idx])
    return ComplexNoisePath(grid, inc)


@dataclass(frozen=True)
class TestFunction:
    """Piecewise-constant ``C^n``-valued function, ``values[j]`` on ``[t_j, t_{j+1})``."""

    __test__ = False  # keep pytest from collecting this class

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim < 2 or v.shape[-2] != self.grid.steps:
            raise ValueError(f"values shape {v.shape} does not match {self.grid.steps} steps")
        if not np.all(np.isfinite(v)):
            raise ValueError("test function has non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def zeros(cls, grid: TimeGrid, channels: int) -> "TestFunction":
        return cls(grid, np.zeros((grid.steps, channels), dtype=complex))

    @classmethod
    def indicator(cls, grid: TimeGrid, channels: int, channel: int = 0, start: float = 0.0,
                  stop: float | None = None, value: complex = 1.0) -> "TestFunction":
        """``value * 1_[start, stop)`` on one channel, zero elsewhere."""
        stop = grid.T if stop is None else stop
        v = np.zeros((grid.steps, channels), dtype=complex)
        v[grid.index(start):grid.index(stop), channel] = value
        return cls(grid, v)

    def norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=(-2, -1)) * self.grid.dt

    def restrict(self, start: float = 0.0, stop: float | None = None) -> "TestFunction":
        stop = self.grid.T if stop is None else stop
        v = np.zeros_like(self.values)
        sl = slice(self.grid.index(start), self.grid.index(stop))
        v[..., sl, :] = self.values[..., sl, :]
        return TestFunction(self.grid, v)

    def refine(self, factor: int = 2) -> "TestFunction":
        return TestFunction(self.grid.refine(factor), np.repeat(self.values, factor, axis=-2))

    def __add__(self, other: "TestFunction") -> "TestFunction":
        _same_grid(self.grid, other.grid)
        return TestFunction(self.grid, self.values + other.values)


def inner(u: TestFunction, v: TestFunction) -> complex:
    """``<u|v> = sum_k int conj(u_k) v_k dt`` (exact for step functions)."""
    _same_grid(u.grid, v.grid)
    return np.sum(u.values.conj() * v.values, axis=(-2, -1)) * u.grid.dt


def _same_grid(a: TimeGrid, b: TimeGrid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def _as_real(path) -> RealNoisePath:
    return path.real_view() if isinstance(path, ComplexNoisePath) else path


def _check_pair(u: TestFunction, path: RealNoisePath):
    _same_grid(u.grid, path.grid)
    if u.channels != path.channels:
        raise ValueError(f"test function has {u.channels} channels, path has {path.channels}")


def _log_exponential(u_values, inc, dt):
    # sum_j u_j . dB_j - 1/2 sum_j u_j . u_j dt  (bilinear, no conjugation)
    return (np.einsum("...jk,...jk->...", u_values, inc)
            - 0.5 * dt * np.einsum("...jk,...jk->...", u_values, u_values))


def exponential_functional(u: TestFunction, path) -> np.ndarray:
    """Exponential random variable ``exp(int u.dB - 1/2 int u.u ds)`` on each path.

    A complex path is read as its ``2n`` real channels (see
    :meth:`ComplexNoisePath.real_view`), so ``u`` must then have ``2n`` channels.
    """
    path = _as_real(path)
    _check_pair(u, path)
    if not np.any(u.values):
        return np.ones(path.increments.shape[:-2], dtype=complex)
    return np.exp(_log_exponential(u.values, path.increments, path.grid.dt))


def _mean_and_stderr(samples: np.ndarray) -> tuple[complex, float]:
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, float("inf")
    var = np.sum(np.abs(samples - mean) ** 2, axis=0) / (n - 1)
    return mean, np.sqrt(var / n)


def exponential_inner_product_mc(u: TestFunction, v: TestFunction, paths) -> tuple[complex, float]:
    """Monte Carlo estimate of ``E[conj(e(u)) e(v)]`` over a batch of paths, with standard error."""
    samples = np.conj(exponential_functional(u, paths)) * exponential_functional(v, paths)
    return _mean_and_stderr(samples.reshape(-1))


def proposition_check(u: TestFunction, v: TestFunction, k: int, t: float, paths):
    """Both sides of ``E[B_k(t) conj(e(u)) e(v)] = exp<u|v> int_0^t (conj(u_k) + v_k) ds``.

    Parameters
    ----------
    u, v : TestFunction
    k : int
        Channel index.
    t : float
        Grid time.
    paths : RealNoisePath or ComplexNoisePath
        Batch of paths (leading axis) used for the Monte Carlo side.

    Returns
    -------
    lhs : complex
        Monte Carlo estimate.
    rhs : complex
        Quadrature of the closed form.
    stderr : float
        Standard error of ``lhs``.
    """
    paths = _as_real(paths)
    j = paths.grid.index(t)
    b_t = paths.cumulative()[..., j, k]
    samples = b_t * np.conj(exponential_functional(u, paths)) * exponential_functional(v, paths)
    lhs, se = _mean_and_stderr(samples.reshape(-1))
    dt = paths.grid.dt
    rhs = np.exp(inner(u, v)) * np.sum(u.values[..., :j, k].conj() + v.values[..., :j, k]) * dt
    return lhs, rhs, se


Integrand = Union[TestFunction, Callable[[int, np.ndarray], np.ndarray]]


def _integrand_values(f: Integrand, j: int, cum: np.ndarray) -> np.ndarray:
    """Value of ``f`` on cell ``j``; callables see the path up to ``t_j`` only."""
    if isinstance(f, TestFunction):
        return f.values[..., j, :]
    return np.asarray(f(j, cum[..., : j + 1, :]), dtype=complex)


def _stochastic_exponential(f: Integrand, path: ComplexNoisePath, sign: float) -> np.ndarray:
    # log X_{j+1} = log X_j + f_j . dB_j + sign * |f_j|^2 dt
    if isinstance(f, TestFunction):
        _same_grid(f.grid, path.grid)
        if f.channels != path.channels:
            raise ValueError(f"integrand has {f.channels} channels, path has {path.channels}")
        incr = (np.einsum("...jk,...jk->...j", f.values, path.increments)
                + sign * path.grid.dt * np.sum(np.abs(f.values) ** 2, axis=-1))
        logx = np.concatenate([np.zeros(incr.shape[:-1] + (1,), complex),
                               np.cumsum(incr, axis=-1)], axis=-1)
        return np.exp(logx)
    cum = path.cumulative()
    m = path.grid.steps
    logx = np.zeros(path.increments.shape[:-2] + (m + 1,), dtype=complex)
    for j in range(m):
        fj = _integrand_values(f, j, cum)
        dBj = path.increments[..., j, :]
        logx[..., j + 1] = (logx[..., j] + np.sum(fj * dBj, axis=-1)
                            + sign * path.grid.dt * np.sum(np.abs(fj) ** 2, axis=-1))
    return np.exp(logx)


def coherent_process(f: Integrand, path: ComplexNoisePath) -> np.ndarray:
    """Randomized coherent process ``alpha(f (+) i f)`` at every grid time.

    Solves ``d alpha = sum_k (f_k dB_k - |f_k|^2 dt) alpha`` with ``alpha(0) = 1`` using the
    exact per-cell factor ``exp(f_j . dB_j - |f_j|^2 dt)``.

    Parameters
    ----------
    f : TestFunction or callable
        Deterministic step function, or ``f(j, B)`` returning the cell-``j`` value from the
        cumulative path ``B[..., :j+1, :]``.
    path : ComplexNoisePath

    Returns
    -------
    numpy.ndarray, shape (..., steps + 1)
    """
    return _stochastic_exponential(f, path, -1.0)


def phi_process(f: Integrand, path: ComplexNoisePath) -> np.ndarray:
    """``Phi_t(f) = exp(2 int |f|^2 ds) alpha_t``, i.e. ``d Phi = sum_k (f_k dB_k + |f_k|^2 dt) Phi``."""
    return _stochastic_exponential(f, path, +1.0)


def randomized_weyl_apply(f: Integrand, u: TestFunction, path, t: float) -> np.ndarray:
    """Randomized Weyl displacement up to time ``t`` applied to ``e(u)``, evaluated per path.

    Returns ``e(u restricted to [t, inf)) * exp(gamma_u(t))`` where::

        d gamma = (f + u) . dB - 1/2 [ f^+ f + (f + u).(f + u) + 2 f^+ u ] dt

    ``f`` may be a deterministic :class:`TestFunction` or a non-anticipating callable
    ``f(j, B)``.  Complex paths are read through their real view.
    """
    path = _as_real(path)
    _check_pair(u, path)
    dt = path.grid.dt
    jt = path.grid.index(t)
    cum = path.cumulative() if not isinstance(f, TestFunction) else None
    gamma = np.zeros(path.increments.shape[:-2], dtype=complex)
    for j in range(jt):
        fj = _integrand_values(f, j, cum)
        uj = u.values[..., j, :]
        dBj = path.increments[..., j, :]
        w = fj + uj
        gamma = gamma + np.sum(w * dBj, axis=-1) - 0.5 * dt * (
            np.sum(np.abs(fj) ** 2, axis=-1) + np.sum(w * w, axis=-1)
            + 2 * np.sum(fj.conj() * uj, axis=-1))
    tail = _log_exponential(u.values[..., jt:, :], path.increments[..., jt:, :], dt)
    return np.exp(tail + gamma)


def weyl_closed_form(f: TestFunction, u: TestFunction, path, t: float) -> np.ndarray:
    """Deterministic-``f`` displacement: ``e(u + 1_[0,t] f) exp(-1/2 int_0^t |f|^2 - int_0^t f^+ u)``."""
    path = _as_real(path)
    ft = f.restrict(0.0, t)
    shifted = exponential_functional(u + ft, path)
    return shifted * np.exp(-0.5 * ft.norm_sq() - inner(ft, u))
