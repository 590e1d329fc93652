"""Command-line front end.

Usage::

    qsdkit {master,trajectory,ensemble,discrete,verify} CONFIG.yaml [--set key.path=value ...]
           [--out DIR] [--dump-config]

Exit codes: 0 on success, 1 when a check fails or a numerical invariant breaks, 2 on a
configuration error.  The output directory defaults to ``$QSDKIT_OUTPUT_DIR`` and then to
``./qsdkit_output``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from ._validation import ConventionError, InvariantError
from ._version import __version__
from .config import ConfigError, RunConfig, dump_config, load_config
from .core import master_evolve, semigroup_exact
from .discrete import (KrausFamily, channel_apply, coarse_grain_discrete, kraus_from_superoperator,
                       sample_trajectory)
from .ensemble import compare_to_master, run_ensemble
from .noise import sample_complex_path
from .unravel import gisin_percival_evolve, linear_sse_evolve, nonlinear_evolve
from .verify import run_checks

ENV_OUTPUT_DIR = "QSDKIT_OUTPUT_DIR"
SUBCOMMANDS = ("master", "trajectory", "ensemble", "discrete", "verify")


def _output_dir(cfg: RunConfig, override: str | None) -> Path:
    d = override or cfg.outputs.directory or os.environ.get(ENV_OUTPUT_DIR) or "qsdkit_output"
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _meta(cfg: RunConfig, scheme=None, N=None) -> dict:
    return {"master_seed": cfg.ensemble.master_seed, "dt": cfg.grid.dt, "N": N,
            "scheme": scheme or cfg.scheme}


def _write_json(path: Path, payload: dict) -> Path:
    payload = {"tool": "qsdkit", "version": __version__, **payload}
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def _cmd_master(cfg, out, out_lines):
    ops = cfg.operator_set()
    psi = cfg.psi0()
    rhos = master_evolve(ops, np.outer(psi, psi.conj()), cfg.grid.T, cfg.grid.dt)
    if "csv" in cfg.outputs.formats:
        p = io.write_density_series(out / "master.csv", cfg.time_grid().times, rhos,
                                    _meta(cfg, scheme="master", N=1))
        out_lines.append(f"wrote {p}")
    return 0


def _cmd_trajectory(cfg, out, out_lines):
    scheme = cfg.scheme or "gisin-percival"
    if scheme == "discrete":
        raise ConfigError("scheme", "use the 'discrete' subcommand for collapse chains")
    ops = cfg.operator_set()
    path = sample_complex_path((cfg.ensemble.master_seed, 0), cfg.time_grid(), ops.n_channels)
    if scheme in ("linear", "linear+reweight"):
        rec = linear_sse_evolve(ops, cfg.psi0(), path)
    elif scheme == "nonlinear":
        rec = nonlinear_evolve(ops, cfg.psi0(), path, renormalize=cfg.renormalize)
    else:
        rec = gisin_percival_evolve(ops, cfg.psi0(), path, renormalize=cfg.renormalize)
    if "csv" in cfg.outputs.formats:
        p = io.write_trajectory_record(out / "trajectory.csv", rec, _meta(cfg, scheme, 1))
        out_lines.append(f"wrote {p}")
    return 0


def _cmd_ensemble(cfg, out, out_lines):
    ops = cfg.operator_set()
    ecfg = cfg.ensemble_config()
    res = run_ensemble(ops, cfg.psi0(), ecfg)
    rows = compare_to_master(ops, cfg.psi0(), ecfg, abs_floor=cfg.ensemble.abs_floor, result=res)
    if "csv" in cfg.outputs.formats:
        out_lines.append(f"wrote {io.write_ensemble_result(out / 'ensemble.csv', res)}")
    ok = all(r.passed for r in rows)
    for r in rows:
        out_lines.append(f"t={r.time:g} trace_distance={r.trace_distance:.3e} "
                         f"tolerance={r.tolerance:.3e} {'PASS' if r.passed else 'FAIL'}")
    if "json" in cfg.outputs.formats:
        p = _write_json(out / "comparison.json", {
            **_meta(cfg, ecfg.scheme, ecfg.n_traj), "passed": ok,
            "rows": [{"time": r.time, "trace_distance": r.trace_distance, "stderr": r.stderr,
                      "tolerance": r.tolerance, "passed": bool(r.passed)} for r in rows],
        })
        out_lines.append(f"wrote {p}")
    return 0 if ok else 1


def _family(cfg) -> KrausFamily:
    if cfg.discrete.kraus is not None:
        return KrausFamily(tuple(np.array(K) for K in cfg.discrete.kraus))
    return kraus_from_superoperator(semigroup_exact(cfg.operator_set(), cfg.grid.dt, "schrodinger"))


def _cmd_discrete(cfg, out, out_lines):
    fam = _family(cfg)
    n = cfg.discrete.steps if cfg.discrete.steps is not None else cfg.time_grid().steps
    psi = cfg.psi0()
    meta = {**_meta(cfg, "discrete", cfg.discrete.n_traj), "k": fam.k}
    if cfg.discrete.mode == "exhaustive":
        rho = coarse_grain_discrete(fam, psi, n, mode="exhaustive")
        ref = np.outer(psi, psi.conj())
        for _ in range(n):
            ref = channel_apply(fam, ref)
        dev = float(np.max(np.abs(rho - ref)))
        if "csv" in cfg.outputs.formats:
            p = io.write_density_series(out / "coarse_grain.csv", [n], [rho], meta)
            out_lines.append(f"wrote {p}")
        out_lines.append(f"exhaustive coarse-grain vs iterated channel: {dev:.3e}")
        return 0 if dev <= 1e-10 else 1
    for i in range(cfg.discrete.n_traj):
        traj = sample_trajectory(fam, psi, n, (cfg.ensemble.master_seed, i))
        if "csv" in cfg.outputs.formats:
            p = io.write_discrete_trajectory(out / f"discrete_{i:04d}.csv", traj, meta)
            out_lines.append(f"wrote {p}")
    return 0


def _cmd_verify(cfg, out, out_lines):
    results = run_checks(cfg)
    for r in results:
        out_lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}: value={r.value:.3e} "
                         f"tolerance={r.tolerance:.3e}")
    ok = all(r.passed for r in results)
    p = _write_json(out / "report.json", {**_meta(cfg, N=cfg.ensemble.N), "passed": ok,
                                          "checks": [r.as_dict() for r in results]})
    out_lines.append(f"wrote {p}")
    return 0 if ok else 1


HANDLERS = {
    "master": _cmd_master,
    "trajectory": _cmd_trajectory,
    "ensemble": _cmd_ensemble,
    "discrete": _cmd_discrete,
    "verify": _cmd_verify,
}


def run(subcommand: str, config_path, overrides=(), out_dir: str | None = None,
        stdout=None, stderr=None) -> int:
    """Run one subcommand and return its exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if subcommand not in HANDLERS:
        print(f"error: unknown subcommand {subcommand!r}", file=stderr)
        return 2
    lines: list[str] = []
    try:
        cfg = load_config(config_path, overrides)
        out = _output_dir(cfg, out_dir)
        code = HANDLERS[subcommand](cfg, out, lines)
    except (ConfigError, ConventionError) as exc:
        print(f"config error: {exc}", file=stderr)
        return 2
    except InvariantError as exc:
        extra = ""
        if exc.quantity is not None:
            extra = f" [quantity={exc.quantity} value={exc.value} tolerance={exc.tolerance}]"
        print(f"invariant violated: {exc}{extra}", file=stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=stderr)
        return 2
    for line in lines:
        print(line, file=stdout)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdkit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"qsdkit {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="YAML run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field, e.g. grid.dt=0.01")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the validated configuration as YAML and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        try:
            cfg = load_config(args.config, args.overrides)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(dump_config(cfg))
        return 0
    return run(args.subcommand, args.config, args.overrides, args.out)


if __name__ == "__main__":
    sys.exit(main())
