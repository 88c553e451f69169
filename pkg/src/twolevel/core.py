"""Fixed-size 2x2 complex algebra, state helpers and a classical RK4 stepper.

Operators are plain ``numpy`` arrays of shape ``(2, 2)`` (or stacks of them,
shape ``(..., 2, 2)``); spinors are arrays of shape ``(2,)`` ordered
``(psi_b, psi_a)``.  Nothing here mutates its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

IDENTITY = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

AXES = ("x", "y", "z")

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-12
STATE_TOL = 1e-9


class DiagnosticsError(FloatingPointError):
    """Raised when an integrator produces non-finite values."""


def pauli(axis: str) -> np.ndarray:
    """Return the Pauli matrix for ``axis`` in ``{"x", "y", "z"}``."""
    try:
        return PAULI[AXES.index(axis)].copy()
    except ValueError:
        raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}") from None


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - dagger(m)), initial=0.0) <= tol)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return bool(np.max(np.abs(dagger(u) @ u - IDENTITY), initial=0.0) <= tol)


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Return ``(r_x, r_y, r_z)`` with ``r_i = Tr(rho sigma_i)``.

    Works on a single matrix or on a stack with shape ``(..., 2, 2)``.
    """
    rx = 2.0 * rho[..., 1, 0].real
    ry = 2.0 * rho[..., 1, 0].imag
    rz = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return np.stack([rx, ry, rz], axis=-1)


def density_from_bloch(r) -> np.ndarray:
    """Inverse of :func:`bloch_vector`: ``rho = (I + r.sigma) / 2``."""
    r = np.asarray(r, dtype=float)
    return 0.5 * (IDENTITY + np.tensordot(r, PAULI, axes=([-1], [0])))


def purity(rho: np.ndarray):
    """``Tr(rho^2)``; equals ``(1 + |r|^2) / 2`` for a qubit."""
    return np.einsum("...ij,...ji->...", rho, rho).real


def projector(psi: np.ndarray) -> np.ndarray:
    """``|psi><psi|`` for a spinor or a stack of spinors ``(..., 2)``."""
    return psi[..., :, None] * np.conj(psi[..., None, :])


def check_density(rho: np.ndarray, tol: float = STATE_TOL) -> None:
    """Assert the density-matrix invariants; raises ``ValueError`` on violation."""
    rho = np.asarray(rho)
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0)) > tol:
        raise ValueError(f"trace deviates from 1 by {np.max(np.abs(tr - 1.0)):.3e}")
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    eig = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    if np.min(eig) < -tol:
        raise ValueError(f"negative eigenvalue {np.min(eig):.3e}")


@njit(cache=True)
def expm_hermitian_2x2(h00, h01, h10, h11, dt):
    """Entries of ``exp(-i H dt)`` for a Hermitian 2x2 ``H``.

    Uses ``H = h0 I + h.sigma`` so that the exponential is
    ``exp(-i h0 dt) [cos(|h|dt) I - i sin(|h|dt) h.sigma/|h|]``.
    """
    h0 = 0.5 * (h00.real + h11.real)
    hz = 0.5 * (h00.real - h11.real)
    hx = h10.real
    hy = h10.imag
    a = np.sqrt(hx * hx + hy * hy + hz * hz)
    c = np.cos(a * dt)
    if a * dt > 1e-8:
        s = np.sin(a * dt) / a
    else:
        s = dt * (1.0 - (a * dt) ** 2 / 6.0)
    ph = np.cos(h0 * dt) - 1j * np.sin(h0 * dt)
    u00 = ph * (c - 1j * s * hz)
    u01 = ph * (-1j * s * (hx - 1j * hy))
    u10 = ph * (-1j * s * (hx + 1j * hy))
    u11 = ph * (c + 1j * s * hz)
    return u00, u01, u10, u11


def unitary_step(h: np.ndarray, dt: float) -> np.ndarray:
    """Exact propagator ``exp(-i H dt)`` for Hermitian ``H`` (single or stacked).

    Closed form, no ``scipy.linalg.expm``; agrees with the scalar kernel
    :func:`expm_hermitian_2x2` used inside the trajectory loops.
    """
    h = np.asarray(h, dtype=np.complex128)
    h0 = 0.5 * (h[..., 0, 0].real + h[..., 1, 1].real)
    hz = 0.5 * (h[..., 0, 0].real - h[..., 1, 1].real)
    hx = h[..., 1, 0].real
    hy = h[..., 1, 0].imag
    a = np.sqrt(hx * hx + hy * hy + hz * hz)
    c = np.cos(a * dt)
    small = a * dt <= 1e-8
    safe = np.where(small, 1.0, a)
    s = np.where(small, dt * (1.0 - (a * dt) ** 2 / 6.0), np.sin(a * dt) / safe)
    ph = np.cos(h0 * dt) - 1j * np.sin(h0 * dt)
    u = np.empty(h.shape, dtype=np.complex128)
    u[..., 0, 0] = ph * (c - 1j * s * hz)
    u[..., 0, 1] = ph * (-1j * s * (hx - 1j * hy))
    u[..., 1, 0] = ph * (-1j * s * (hx + 1j * hy))
    u[..., 1, 1] = ph * (c + 1j * s * hz)
    return u


def rk4_step(rhs: Callable[[float, np.ndarray], np.ndarray], state: np.ndarray,
             t: float, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``y' = rhs(t, y)``.

    ``state`` can be any array shape that ``rhs`` accepts, so the same stepper
    advances spinors, density matrices and batches of either.

    Raises
    ------
    DiagnosticsError
        If the updated state is not finite.
    """
    k1 = rhs(t, state)
    k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = rhs(t + dt, state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DiagnosticsError(f"non-finite state in rk4_step at t={t:.6g}")
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0 .. n_steps``."""

    t_final: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= self.dt:
            raise ValueError(f"t_final ({self.t_final}) must be >= dt ({self.dt})")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, level: int) -> "TimeGrid":
        """Same span with ``dt / 2**level``."""
        return TimeGrid(self.t_final, self.dt / 2**level)
