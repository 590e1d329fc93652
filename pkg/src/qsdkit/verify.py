"""Named invariant checks run by ``qsdkit verify``.

Each check takes a :class:`~qsdkit.config.RunConfig`, measures one quantity on the configured
system, and compares it with a tolerance.  Checks that only make sense for some systems (for
example ensemble checks on a system without noise channels) still run and report their value.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import choi_check, liouvillian_matrix, master_evolve, semigroup_exact
from .discrete import channel_apply, coarse_grain_discrete, enumerate_outcomes, kraus_from_superoperator
from .ensemble import compare_to_master
from .noise import sample_complex_paths
from .symmetry import generator_distance, rotate_ops, translate_ops
from .unravel import integrate

__all__ = ["CheckResult", "CHECKS", "DEFAULT_CHECKS", "run_checks"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(d["passed"])
        d["value"] = float(d["value"])
        d["tolerance"] = float(d["tolerance"])
        return d


def _result(name, value, tol, detail="", upper=True):
    ok = bool(value <= tol) if upper else bool(value >= tol)
    return CheckResult(name, ok, float(value), float(tol), detail)


def _rho0(cfg):
    psi = cfg.psi0()
    return np.outer(psi, psi.conj())


def check_master_trace(cfg):
    ops = cfg.operator_set()
    rhos = master_evolve(ops, _rho0(cfg), cfg.grid.T, cfg.grid.dt)
    dev = np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1.0))
    return _result("master_trace", dev, 1e-10, "max |tr rho_t - 1| over the grid")


def check_master_positivity(cfg):
    ops = cfg.operator_set()
    rhos = master_evolve(ops, _rho0(cfg), cfg.grid.T, cfg.grid.dt)
    lam = min(np.linalg.eigvalsh(r)[0] for r in rhos)
    return _result("master_positivity", -lam + 0.0, 1e-9, "negated minimum eigenvalue of rho_t")


def check_master_vs_exact(cfg):
    ops = cfg.operator_set()
    rho_T = master_evolve(ops, _rho0(cfg), cfg.grid.T, cfg.grid.dt)[-1]
    exact = semigroup_exact(ops, cfg.grid.T, picture="schrodinger")(_rho0(cfg))
    return _result("master_vs_exact", np.max(np.abs(rho_T - exact)), 1e-6,
                   "RK4 integration vs matrix exponential at T")


def check_unital(cfg):
    ops = cfg.operator_set()
    T = semigroup_exact(ops, cfg.grid.T)
    dev = np.max(np.abs(T(np.eye(ops.dim)) - np.eye(ops.dim)))
    return _result("unital", dev, 1e-10, "max |T_t(I) - I|")


def check_complete_positivity(cfg):
    ops = cfg.operator_set()
    worst = min(choi_check(semigroup_exact(ops, t))[0] for t in (0.1, 1.0, 10.0))
    return _result("complete_positivity", -worst, 1e-9, "negated min Choi eigenvalue, t in {0.1, 1, 10}")


def check_translation_invariance(cfg):
    ops = cfg.operator_set()
    rng = np.random.default_rng(cfg.ensemble.master_seed)
    worst = 0.0
    for _ in range(10):
        ell = rng.normal(size=ops.n_channels) + 1j * rng.normal(size=ops.n_channels)
        worst = max(worst, generator_distance(ops, translate_ops(ops, ell)))
    return _result("translation_invariance", worst, 1e-10, "10 random translations")


def check_rotation_invariance(cfg):
    from scipy.stats import unitary_group

    ops = cfg.operator_set()
    if ops.n_channels == 0:
        return _result("rotation_invariance", 0.0, 1e-10, "no channels to rotate")
    worst = 0.0
    for s in range(10):
        u = unitary_group.rvs(ops.n_channels, random_state=cfg.ensemble.master_seed + s) \
            if ops.n_channels > 1 else np.array([[np.exp(0.7j * (s + 1))]])
        worst = max(worst, generator_distance(ops, rotate_ops(ops, u)))
    return _result("rotation_invariance", worst, 1e-10, "10 random channel rotations")


def _discrete_family(cfg):
    from .discrete import KrausFamily

    if cfg.discrete.kraus is not None:
        return KrausFamily(tuple(np.array(K) for K in cfg.discrete.kraus))
    return kraus_from_superoperator(semigroup_exact(cfg.operator_set(), cfg.grid.dt, "schrodinger"))


def _discrete_steps(family):
    n = 8
    while family.k ** n > 10 ** 5:
        n -= 1
    return n


def check_discrete_coarse_grain(cfg):
    fam = _discrete_family(cfg)
    n = _discrete_steps(fam)
    rho = _rho0(cfg)
    for _ in range(n):
        rho = channel_apply(fam, rho)
    dev = np.max(np.abs(coarse_grain_discrete(fam, cfg.psi0(), n) - rho))
    return _result("discrete_coarse_grain", dev, 1e-10, f"exhaustive vs iterated channel, n={n}")


def check_discrete_martingale(cfg):
    fam = _discrete_family(cfg)
    n = _discrete_steps(fam)
    _, _, nu = enumerate_outcomes(fam, cfg.psi0(), n)
    dev = abs(np.mean(fam.k ** n * nu) - 1.0)
    return _result("discrete_martingale", dev, 1e-12, f"|E_uniform[Z_n] - 1|, n={n}")


def check_norm_martingale(cfg):
    ops = cfg.operator_set().with_prefactor(1.0)
    grid = cfg.time_grid()
    N = cfg.ensemble.N
    paths = sample_complex_paths(cfg.ensemble.master_seed, grid, ops.n_channels, N)
    res = integrate("linear", ops, cfg.psi0(), paths.increments, grid.dt, store=[grid.steps])
    z = res["norm_sq"][:, 0]
    se = z.std(ddof=1) / np.sqrt(N) if N > 1 else np.inf
    dev = abs(z.mean() - 1.0)
    return _result("norm_martingale", dev, 5 * se if se > 0 else 1e-12,
                   f"|E<psi_T|psi_T> - 1| against 5 stderr, N={N}")


def check_ensemble_vs_master(cfg):
    ops = cfg.operator_set()
    ecfg = cfg.ensemble_config()
    if ecfg.scheme != "discrete":
        ops = ops.with_prefactor(1.0)
    rows = compare_to_master(ops, cfg.psi0(), ecfg, abs_floor=cfg.ensemble.abs_floor)
    worst = max(rows, key=lambda r: r.trace_distance / r.tolerance)
    return CheckResult("ensemble_vs_master", all(r.passed for r in rows), worst.trace_distance,
                       worst.tolerance, f"scheme {ecfg.scheme}, worst time t={worst.time}")


def check_liouvillian_consistency(cfg):
    ops = cfg.operator_set()
    Lh = liouvillian_matrix(ops, "heisenberg").matrix
    Ls = liouvillian_matrix(ops, "schrodinger").matrix
    # tr(L*(rho) X) = tr(rho L(X)) with row-major vec gives Ls = P Lh^T P, P the transpose swap
    d = ops.dim
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[i * d + j, j * d + i] = 1.0
    dev = np.max(np.abs(Ls - P @ Lh.T @ P))
    return _result("liouvillian_duality", dev, 1e-12, "Schrodinger matrix vs transposed Heisenberg")


CHECKS = {
    "master_trace": check_master_trace,
    "master_positivity": check_master_positivity,
    "master_vs_exact": check_master_vs_exact,
    "unital": check_unital,
    "complete_positivity": check_complete_positivity,
    "liouvillian_duality": check_liouvillian_consistency,
    "translation_invariance": check_translation_invariance,
    "rotation_invariance": check_rotation_invariance,
    "discrete_coarse_grain": check_discrete_coarse_grain,
    "discrete_martingale": check_discrete_martingale,
    "norm_martingale": check_norm_martingale,
    "ensemble_vs_master": check_ensemble_vs_master,
}

DEFAULT_CHECKS = (
    "master_trace", "master_positivity", "master_vs_exact", "unital", "complete_positivity",
    "liouvillian_duality", "translation_invariance", "rotation_invariance",
    "discrete_coarse_grain", "discrete_martingale",
)


def run_checks(cfg, names=None) -> list[CheckResult]:
    names = tuple(names or cfg.verify or DEFAULT_CHECKS)
    return [CHECKS[n](cfg) for n in names]
