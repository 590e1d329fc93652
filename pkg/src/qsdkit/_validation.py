"""Input validation helpers and exception types shared across modules."""

from __future__ import annotations

import numpy as np


class ConventionError(ValueError):
    """Raised when an operator set uses the wrong dissipator convention."""


class InvariantError(ArithmeticError):
    """Raised when a numerical invariant is violated during integration.

    Parameters
    ----------
    message : str
        Human-readable description.
    step : int, optional
        Index of the offending integration step.
    quantity : str, optional
        Name of the violated quantity.
    value : float, optional
        Measured value of the quantity.
    tolerance : float, optional
        Tolerance that was exceeded.
    """

    def __init__(self, message, step=None, quantity=None, value=None, tolerance=None):
        super().__init__(message)
        self.step = step
        self.quantity = quantity
        self.value = value
        self.tolerance = tolerance


def as_square_matrix(a, name="matrix", dim=None) -> np.ndarray:
    """Return ``a`` as a complex square 2-D array, checking its shape."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_state_vector(psi, dim=None, normalized=False, name="state", atol=1e-10) -> np.ndarray:
    """Return ``psi`` as a complex 1-D array.

    With ``normalized=True`` the norm must be within ``atol`` of one.
    """
    arr = np.asarray(psi, dtype=complex)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if normalized:
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > atol:
            raise ValueError(f"{name} must be normalized, got norm {norm!r}")
    return arr


def hermiticity_error(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_density_matrix(rho, dim=None, name="rho", herm_atol=1e-10, trace_atol=1e-10,
                         eig_atol=1e-9) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, positive semidefinite."""
    arr = as_square_matrix(rho, name=name, dim=dim)
    herr = hermiticity_error(arr)
    if herr > herm_atol:
        raise ValueError(f"{name} is not Hermitian (max |rho - rho^dag| = {herr:.3g})")
    tr = np.trace(arr).real
    if abs(tr - 1.0) > trace_atol:
        raise ValueError(f"{name} has trace {tr!r}, expected 1")
    lam = np.linalg.eigvalsh(0.5 * (arr + arr.conj().T))[0]
    if lam < -eig_atol:
        raise ValueError(f"{name} has negative eigenvalue {lam:.3g}")
    return arr


def check_unitary(u, name="u", atol=1e-12) -> np.ndarray:
    arr = as_square_matrix(u, name=name)
    err = np.max(np.abs(arr.conj().T @ arr - np.eye(arr.shape[0])))
    if err > atol:
        raise ValueError(f"{name} is not unitary (max |u^dag u - I| = {err:.3g})")
    return arr


def n_steps(T: float, dt: float) -> int:
    """Number of grid cells of width ``dt`` covering ``[0, T]``.

    ``T`` must be an integer multiple of ``dt`` up to 1e-9 relative error.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if T < dt * (1 - 1e-12):
        raise ValueError(f"T must be at least dt, got T={T!r}, dt={dt!r}")
    m = int(round(T / dt))
    if abs(m * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T!r} is not an integer multiple of dt={dt!r}")
    return m
