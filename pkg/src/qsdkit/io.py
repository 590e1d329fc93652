"""CSV export for simulation results.

Every file starts with one ``#`` comment line of ``key=value`` pairs (tool version, master
seed, dt, N, scheme) followed by a column header.  Floats use 17 significant digits so that
values round-trip exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ._version import __version__

__all__ = [
    "header_line",
    "parse_header",
    "write_csv",
    "read_csv",
    "write_density_series",
    "write_trajectory_record",
    "write_noise_path",
    "write_discrete_trajectory",
    "write_ensemble_result",
]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def header_line(master_seed=None, dt=None, N=None, scheme=None, **extra) -> str:
    fields = {"tool": "qsdkit", "version": __version__, "master_seed": master_seed, "dt": dt,
              "N": N, "scheme": scheme, **extra}
    parts = [f"{k}={'' if v is None else (_fmt(v) if isinstance(v, float) else v)}"
             for k, v in fields.items()]
    return "# " + " ".join(parts)


def parse_header(line: str) -> dict:
    body = line.lstrip("#").strip()
    return dict(p.split("=", 1) for p in body.split())


def write_csv(path, columns, rows, meta: dict | None = None) -> Path:
    """Write ``rows`` (iterable of sequences) under ``columns`` with the metadata header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(header_line(**(meta or {})) + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns, data)`` with ``data`` a float array."""
    with Path(path).open() as fh:
        meta = parse_header(fh.readline())
        reader = csv.reader(fh)
        columns = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return meta, columns, data.reshape(-1, len(columns))


def _complex_columns(prefix, shape):
    names = []
    for idx in np.ndindex(*shape):
        tag = "".join(str(i) for i in idx)
        names += [f"{prefix}{tag}_re", f"{prefix}{tag}_im"]
    return names


def _split(z):
    z = np.asarray(z, complex).ravel()
    return np.column_stack([z.real, z.imag]).ravel()


def write_density_series(path, times, rhos, meta=None, stderr=None) -> Path:
    """``time``, then ``rho_ij`` (re, im) in row-major order, then optionally ``stderr``."""
    rhos = np.asarray(rhos)
    d = rhos.shape[-1]
    cols = ["time"] + _complex_columns("rho", (d, d)) + (["stderr"] if stderr is not None else [])
    rows = []
    for j, (t, r) in enumerate(zip(times, rhos)):
        row = [float(t), *_split(r)]
        if stderr is not None:
            row.append(float(stderr[j]))
        rows.append(row)
    return write_csv(path, cols, rows, meta)


def write_ensemble_result(path, result) -> Path:
    return write_density_series(path, result.times, result.rho_hat, result.meta, result.stderr)


def write_trajectory_record(path, record, meta=None) -> Path:
    """``time, norm_sq, weight``, then normalized ``Psi`` and raw ``psi`` amplitudes (re, im)."""
    d = record.psi.shape[-1]
    cols = (["time", "norm_sq", "weight"]
            + _complex_columns("Psi", (d,)) + _complex_columns("psi", (d,)))
    rows = [
        [t, record.norm_sq[j], record.girsanov_weight[j], *_split(record.Psi[j]),
         *_split(record.psi[j])]
        for j, t in enumerate(record.times)
    ]
    return write_csv(path, cols, rows, meta)


def write_noise_path(path, noise, meta=None) -> Path:
    """Long format ``step, channel, re, im`` for a single complex path."""
    inc = np.asarray(noise.increments)
    if inc.ndim != 2:
        raise ValueError("expected a single path of shape (M, n)")
    rows = [[j, k, inc[j, k].real, inc[j, k].imag]
            for j in range(inc.shape[0]) for k in range(inc.shape[1])]
    return write_csv(path, ["step", "channel", "re", "im"], rows, meta)


def write_discrete_trajectory(path, traj, meta=None) -> Path:
    """``step, outcome, nu, Z`` and the state amplitudes; step 0 has outcome ``-1``."""
    d = traj.states.shape[-1]
    cols = ["step", "outcome", "nu", "Z"] + _complex_columns("Psi", (d,))
    outcomes = np.concatenate([[-1], traj.outcomes])
    rows = [[j, int(outcomes[j]), traj.nu[j], traj.Z[j], *_split(traj.states[j])]
            for j in range(len(traj.nu))]
    return write_csv(path, cols, rows, meta)
