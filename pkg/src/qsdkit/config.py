"""YAML run configuration with strict validation.

Matrices are written as lists of ``[re, im]`` pairs in row-major order, either nested by row
(``d`` rows of ``d`` pairs) or flat (``d*d`` pairs).  Vectors are flat lists of pairs.  A bare
number is accepted as a real entry.  Unknown keys are rejected, and every error names the
offending field, e.g. ``system.lindblads[0]``.

Example::

    system:
      dim: 2
      H: [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
      lindblads:
        - [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]
      prefactor: 1.0
    initial_state: [[0, 0], [1, 0]]
    grid: {dt: 0.001, T: 1.0, store_times: [0.5, 1.0]}
    scheme: gisin-percival
    ensemble: {N: 10000, master_seed: 1234}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import OperatorSet
from .ensemble import ENSEMBLE_SCHEMES, EnsembleConfig
from .noise import TimeGrid

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dump_config",
           "apply_overrides", "STOCHASTIC_SCHEMES"]

STOCHASTIC_SCHEMES = ("linear", "linear+reweight", "nonlinear", "gisin-percival")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class SystemConfig:
    dim: int
    H: tuple
    lindblads: tuple = ()
    prefactor: float = 1.0


@dataclass(frozen=True)
class GridConfig:
    dt: float
    T: float
    store_times: tuple = ()


@dataclass(frozen=True)
class EnsembleSection:
    N: int = 1000
    master_seed: int = 0
    chunk_size: int = 500
    workers: int | None = None
    abs_floor: float = 0.02


@dataclass(frozen=True)
class DiscreteSection:
    mode: str = "sample"
    steps: int | None = None
    n_traj: int = 1
    kraus: tuple | None = None


@dataclass(frozen=True)
class OutputsConfig:
    directory: str | None = None
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    initial_state: tuple
    grid: GridConfig
    scheme: str | None = None
    renormalize: bool = True
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    discrete: DiscreteSection = field(default_factory=DiscreteSection)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    verify: tuple = ()

    def operator_set(self) -> OperatorSet:
        s = self.system
        return OperatorSet(np.array(s.H), tuple(np.array(L) for L in s.lindblads), s.prefactor)

    def psi0(self) -> np.ndarray:
        return np.array(self.initial_state, dtype=complex)

    def time_grid(self) -> TimeGrid:
        return TimeGrid.from_duration(self.grid.T, self.grid.dt)

    def ensemble_config(self, scheme: str | None = None) -> EnsembleConfig:
        e = self.ensemble
        return EnsembleConfig(
            n_traj=e.N, master_seed=e.master_seed, grid=self.time_grid(),
            scheme=scheme or self.scheme or "gisin-percival", renormalize=self.renormalize,
            store_times=self.grid.store_times, chunk_size=e.chunk_size, workers=e.workers,
        )


# ---------------------------------------------------------------- parsing helpers

def _check_keys(raw, allowed, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a mapping, got {type(raw).__name__}")
    for key in raw:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(where, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _require(raw, key, path):
    if key not in raw:
        raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
    return raw[key]


def _number(x, path, kind=float):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(path, f"expected a number, got {x!r}")
    if kind is int:
        if isinstance(x, float) and not x.is_integer():
            raise ConfigError(path, f"expected an integer, got {x!r}")
        return int(x)
    if not np.isfinite(x):
        raise ConfigError(path, "must be finite")
    return float(x)


def _complex(x, path) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(path, f"expected an [re, im] pair, got {x!r}")
        return complex(_number(x[0], path), _number(x[1], path))
    return complex(_number(x, path))


def _vector(raw, dim, path) -> tuple:
    if not isinstance(raw, list) or len(raw) != dim:
        raise ConfigError(path, f"expected a list of {dim} [re, im] pairs")
    return tuple(_complex(v, f"{path}[{i}]") for i, v in enumerate(raw))


def _matrix(raw, dim, path) -> tuple:
    if not isinstance(raw, list):
        raise ConfigError(path, "expected a list of [re, im] pairs")
    if len(raw) == dim * dim and (dim != 1 or not _is_row(raw[0], dim)):
        flat = [_complex(v, f"{path}[{i}]") for i, v in enumerate(raw)]
    elif len(raw) == dim and all(_is_row(r, dim) for r in raw):
        flat = [_complex(v, f"{path}[{i}][{j}]") for i, r in enumerate(raw) for j, v in enumerate(r)]
    else:
        raise ConfigError(path, f"expected {dim} rows of {dim} entries or {dim * dim} row-major entries")
    return tuple(tuple(flat[i * dim:(i + 1) * dim]) for i in range(dim))


def _is_row(r, dim):
    return isinstance(r, list) and len(r) == dim and all(isinstance(v, (list, int, float)) for v in r)


def _hermitian_error(m):
    a = np.array(m)
    return float(np.max(np.abs(a - a.conj().T)))


# ---------------------------------------------------------------- sections

def _parse_system(raw):
    _check_keys(raw, {"dim", "H", "lindblads", "prefactor"}, "system")
    dim = _number(_require(raw, "dim", "system"), "system.dim", int)
    if dim < 1:
        raise ConfigError("system.dim", "must be positive")
    H = _matrix(_require(raw, "H", "system"), dim, "system.H")
    herr = _hermitian_error(H)
    if herr > 1e-12:
        raise ConfigError("system.H", f"Hamiltonian is not Hermitian (max |H - H^dag| = {herr:.3g})")
    Ls_raw = raw.get("lindblads", []) or []
    if not isinstance(Ls_raw, list):
        raise ConfigError("system.lindblads", "expected a list of matrices")
    Ls = tuple(_matrix(L, dim, f"system.lindblads[{k}]") for k, L in enumerate(Ls_raw))
    c = _number(raw.get("prefactor", 1.0), "system.prefactor")
    if c not in (0.5, 1.0):
        raise ConfigError("system.prefactor", f"must be 0.5 or 1.0, got {c!r}")
    return SystemConfig(dim, H, Ls, c)


def _parse_grid(raw):
    _check_keys(raw, {"dt", "T", "store_times"}, "grid")
    dt = _number(_require(raw, "dt", "grid"), "grid.dt")
    T = _number(_require(raw, "T", "grid"), "grid.T")
    if dt <= 0:
        raise ConfigError("grid.dt", "must be positive")
    try:
        grid = TimeGrid.from_duration(T, dt)
    except ValueError as exc:
        raise ConfigError("grid.T", str(exc)) from None
    st = raw.get("store_times", []) or []
    if not isinstance(st, list):
        raise ConfigError("grid.store_times", "expected a list of times")
    times = []
    for i, t in enumerate(st):
        t = _number(t, f"grid.store_times[{i}]")
        try:
            grid.index(t)
        except ValueError as exc:
            raise ConfigError(f"grid.store_times[{i}]", str(exc)) from None
        times.append(t)
    return GridConfig(dt, T, tuple(times))


def _parse_ensemble(raw):
    _check_keys(raw, {"N", "master_seed", "chunk_size", "workers", "abs_floor"}, "ensemble")
    N = _number(raw.get("N", 1000), "ensemble.N", int)
    if N < 1:
        raise ConfigError("ensemble.N", "must be at least 1")
    seed = _number(raw.get("master_seed", 0), "ensemble.master_seed", int)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("ensemble.master_seed", "must be a 64-bit unsigned integer")
    chunk = _number(raw.get("chunk_size", 500), "ensemble.chunk_size", int)
    if chunk < 1:
        raise ConfigError("ensemble.chunk_size", "must be positive")
    workers = raw.get("workers")
    if workers is not None:
        workers = _number(workers, "ensemble.workers", int)
        if workers < 1:
            raise ConfigError("ensemble.workers", "must be positive")
    floor = _number(raw.get("abs_floor", 0.02), "ensemble.abs_floor")
    return EnsembleSection(N, seed, chunk, workers, floor)


def _parse_discrete(raw, dim):
    _check_keys(raw, {"mode", "steps", "n_traj", "kraus"}, "discrete")
    mode = raw.get("mode", "sample")
    if mode not in ("sample", "exhaustive"):
        raise ConfigError("discrete.mode", f"must be 'sample' or 'exhaustive', got {mode!r}")
    steps = raw.get("steps")
    if steps is not None:
        steps = _number(steps, "discrete.steps", int)
        if steps < 0:
            raise ConfigError("discrete.steps", "must be non-negative")
    n_traj = _number(raw.get("n_traj", 1), "discrete.n_traj", int)
    if n_traj < 1:
        raise ConfigError("discrete.n_traj", "must be at least 1")
    kraus = raw.get("kraus")
    if kraus is not None:
        if not isinstance(kraus, list) or not kraus:
            raise ConfigError("discrete.kraus", "expected a non-empty list of matrices")
        kraus = tuple(_matrix(K, dim, f"discrete.kraus[{y}]") for y, K in enumerate(kraus))
        K = np.array(kraus)
        dev = float(np.max(np.abs(np.einsum("yji,yjl->il", K.conj(), K) - np.eye(dim))))
        if dev > 1e-10:
            raise ConfigError("discrete.kraus", f"sum K^dag K deviates from I by {dev:.3g}")
    return DiscreteSection(mode, steps, n_traj, kraus)


def _parse_outputs(raw):
    _check_keys(raw, {"directory", "formats"}, "outputs")
    directory = raw.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ConfigError("outputs.directory", "expected a string")
    formats = raw.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or any(f not in ("csv", "json") for f in formats):
        raise ConfigError("outputs.formats", "expected a list drawn from ['csv', 'json']")
    return OutputsConfig(directory, tuple(formats))


TOP_KEYS = {"system", "initial_state", "grid", "scheme", "renormalize", "ensemble", "discrete",
            "outputs", "verify"}


def parse_config(raw) -> RunConfig:
    """Validate a decoded YAML mapping into a :class:`RunConfig`."""
    from .verify import CHECKS  # late import: verify builds on this module

    _check_keys(raw, TOP_KEYS, "")
    system = _parse_system(_require(raw, "system", ""))
    psi = _vector(_require(raw, "initial_state", ""), system.dim, "initial_state")
    nrm = float(np.linalg.norm(psi))
    if abs(nrm - 1.0) > 1e-10:
        raise ConfigError("initial_state", f"must be normalized, got norm {nrm!r}")
    grid = _parse_grid(_require(raw, "grid", ""))
    scheme = raw.get("scheme")
    if scheme is not None and scheme not in ENSEMBLE_SCHEMES:
        raise ConfigError("scheme", f"unknown scheme {scheme!r}; expected one of {ENSEMBLE_SCHEMES}")
    if scheme in STOCHASTIC_SCHEMES and system.prefactor != 1.0:
        raise ConfigError(
            "system.prefactor",
            f"convention lock: scheme {scheme!r} needs the c = 1 dissipator convention, got "
            f"c = {system.prefactor}; (c = 1/2, L) is the same generator as (c = 1, L/sqrt(2))",
        )
    renorm = raw.get("renormalize", True)
    if not isinstance(renorm, bool):
        raise ConfigError("renormalize", "expected true or false")
    ens = _parse_ensemble(raw.get("ensemble", {}) or {})
    disc = _parse_discrete(raw.get("discrete", {}) or {}, system.dim)
    outs = _parse_outputs(raw.get("outputs", {}) or {})
    checks = raw.get("verify", []) or []
    if not isinstance(checks, list):
        raise ConfigError("verify", "expected a list of check names")
    for i, name in enumerate(checks):
        if name not in CHECKS:
            raise ConfigError(f"verify[{i}]", f"unknown check {name!r}; available: {', '.join(CHECKS)}")
    return RunConfig(system, psi, grid, scheme, renorm, ens, disc, outs, tuple(checks))


def load_config(path, overrides=()) -> RunConfig:
    """Read a YAML file, apply ``key.path=value`` overrides, and validate."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("", f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("", f"YAML parse error: {exc}") from None
    if raw is None:
        raw = {}
    return parse_config(apply_overrides(raw, overrides))


def apply_overrides(raw: dict, overrides) -> dict:
    """Set dotted keys, e.g. ``grid.dt=0.01``; values are parsed as YAML scalars or lists."""
    raw = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for i, part in enumerate(parts[:-1]):
            child = node.get(part)
            if child is None:
                child = {}
            elif not isinstance(child, dict):
                raise ConfigError(".".join(parts[:i + 1]), "cannot override inside a non-mapping")
            node[part] = child = dict(child)
            node = child
        try:
            node[parts[-1]] = yaml.safe_load(val)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"bad override value: {exc}") from None
    return raw


def _pair(z):
    return [float(z.real), float(z.imag)]


def to_dict(cfg: RunConfig) -> dict:
    s = cfg.system
    mat = lambda m: [[_pair(z) for z in row] for row in m]  # noqa: E731
    out = {
        "system": {"dim": s.dim, "H": mat(s.H), "lindblads": [mat(L) for L in s.lindblads],
                   "prefactor": s.prefactor},
        "initial_state": [_pair(z) for z in cfg.initial_state],
        "grid": {"dt": cfg.grid.dt, "T": cfg.grid.T, "store_times": list(cfg.grid.store_times)},
        "scheme": cfg.scheme,
        "renormalize": cfg.renormalize,
        "ensemble": dataclasses.asdict(cfg.ensemble),
        "discrete": {"mode": cfg.discrete.mode, "steps": cfg.discrete.steps,
                     "n_traj": cfg.discrete.n_traj,
                     "kraus": None if cfg.discrete.kraus is None else [mat(K) for K in cfg.discrete.kraus]},
        "outputs": {"directory": cfg.outputs.directory, "formats": list(cfg.outputs.formats)},
        "verify": list(cfg.verify),
    }
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)
