"""Hamiltonians in the lab and rotating frames, noise descriptions, scenarios.

Dimensionless units throughout: hbar = 1, the drive frequency omega = 1,
time in units of 1/omega.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import AXES, PAULI, TimeGrid

DRIVE_FREQUENCY = 1.0


class Frame(str, enum.Enum):
    LAB = "lab"
    RWA = "rwa"
    RWA_NAIVE = "rwa-naive"

    @classmethod
    def parse(cls, value) -> "Frame":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown frame {value!r}; valid frames: {valid}") from None


@dataclass(frozen=True)
class PhysicalParams:
    """Level splitting ``delta`` and Rabi frequency ``rabi`` (both in units of omega)."""

    delta: float = 1.0
    rabi: float = 0.2

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError(f"Rabi frequency must be >= 0, got {self.rabi}")

    @property
    def detuning(self) -> float:
        # Delta = omega - delta, always derived from delta
        return DRIVE_FREQUENCY - self.delta


@dataclass(frozen=True)
class WhiteNoise:
    w0: float

    def __post_init__(self):
        if not self.w0 >= 0:
            raise ValueError(f"volatility w0 must be >= 0, got {self.w0}")


@dataclass(frozen=True)
class OUNoise:
    theta: float
    w0: float
    mu: float = 0.0
    o0: float = 0.0

    def __post_init__(self):
        if not self.w0 >= 0:
            raise ValueError(f"volatility w0 must be >= 0, got {self.w0}")
        if not self.theta > 0:
            raise ValueError(f"mean-reversion rate theta must be > 0, got {self.theta}")


@dataclass(frozen=True)
class NoiseModel:
    """Per-axis noise; a missing axis carries no noise.  All axes share one kind."""

    axes: dict = field(default_factory=dict)

    def __post_init__(self):
        for ax, spec in self.axes.items():
            if ax not in AXES:
                raise ValueError(f"unknown noise axis {ax!r}")
            if not isinstance(spec, (WhiteNoise, OUNoise)):
                raise TypeError(f"axis {ax}: expected WhiteNoise or OUNoise, got {type(spec).__name__}")
        kinds = {type(s) for s in self.axes.values()}
        if len(kinds) > 1:
            raise ValueError("all noise axes must share one kind (white or ou)")

    @classmethod
    def white(cls, w0: float, axes="xyz") -> "NoiseModel":
        return cls({ax: WhiteNoise(w0) for ax in axes})

    @classmethod
    def ou(cls, theta: float, w0: float, axes="xyz", mu: float = 0.0, o0: float = 0.0) -> "NoiseModel":
        return cls({ax: OUNoise(theta, w0, mu, o0) for ax in axes})

    @property
    def kind(self) -> str | None:
        if not self.axes:
            return None
        return "white" if isinstance(next(iter(self.axes.values())), WhiteNoise) else "ou"

    @property
    def active_axes(self) -> tuple[str, ...]:
        """Axes in x, y, z order (axis order fixes the random-stream keys)."""
        return tuple(ax for ax in AXES if ax in self.axes)

    def volatilities(self) -> np.ndarray:
        return np.array([self.axes[ax].w0 for ax in self.active_axes], dtype=float)

    def is_isotropic(self) -> bool:
        if len(self.axes) != 3:
            return False
        return len(set(self.axes.values())) == 1


@dataclass(frozen=True)
class Scenario:
    params: PhysicalParams
    frame: Frame
    noise: NoiseModel
    grid: TimeGrid
    n_realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def with_(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def check_rwa_validity(p: PhysicalParams, detuning_limit: float = 0.3) -> bool:
    """Warn (do not fail) when ``|Delta| << 1`` or ``Omega < 1`` looks violated."""
    ok = abs(p.detuning) < detuning_limit and p.rabi < DRIVE_FREQUENCY
    if not ok:
        warnings.warn(
            f"RWA validity questionable: |Delta|={abs(p.detuning):.3g}, Omega={p.rabi:.3g}",
            stacklevel=2,
        )
    return ok


def lab_hamiltonian(t, p: PhysicalParams) -> np.ndarray:
    """``[[delta/2, Omega sin t], [Omega sin t, -delta/2]]``; ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    h = np.zeros(t.shape + (2, 2), dtype=np.complex128)
    drive = p.rabi * np.sin(DRIVE_FREQUENCY * t)
    h[..., 0, 0] = 0.5 * p.delta
    h[..., 1, 1] = -0.5 * p.delta
    h[..., 0, 1] = drive
    h[..., 1, 0] = drive
    return h


def rwa_hamiltonian(p: PhysicalParams) -> np.ndarray:
    """Time-independent ``[[-Delta, Omega/2], [Omega/2, 0]]``."""
    return np.array([[-p.detuning, 0.5 * p.rabi], [0.5 * p.rabi, 0.0]], dtype=np.complex128)


def rwa_transform(t, p: PhysicalParams) -> np.ndarray:
    """``U(t) = exp(i delta t/2) diag(exp(-i omega t), -i)`` with ``psi = U phi``."""
    t = np.asarray(t, dtype=float)
    glob = np.exp(0.5j * p.delta * t)
    u = np.zeros(t.shape + (2, 2), dtype=np.complex128)
    u[..., 0, 0] = glob * np.exp(-1j * DRIVE_FREQUENCY * t)
    u[..., 1, 1] = -1j * glob
    return u


def stochastic_hamiltonian(b) -> np.ndarray:
    """``b . sigma`` for a field vector ``b`` of shape ``(..., 3)``."""
    b = np.asarray(b, dtype=float)
    return np.tensordot(b, PAULI, axes=([-1], [0]))


def _rotated_offdiag(t, b, phase: bool):
    b = np.asarray(b, dtype=float)
    bm = b[..., 0] - 1j * b[..., 1]
    rot = np.exp(1j * DRIVE_FREQUENCY * np.asarray(t, dtype=float)) if phase else 1.0
    return -1j * rot * bm


def transformed_noise_hamiltonian(t, b) -> np.ndarray:
    """Noise ``b . sigma`` seen in the rotating frame, ``U^dag (b . sigma) U``.

    Off-diagonals are ``-i e^{i omega t} (b_x - i b_y)`` and its conjugate; the
    global phase and the ``delta`` dependence of ``U`` drop out.
    """
    b = np.asarray(b, dtype=float)
    upper = _rotated_offdiag(t, b, phase=True)
    return _assemble(b[..., 2], upper)


def naive_noise_hamiltonian(b) -> np.ndarray:
    """Rotating-frame noise with the ``e^{+-i omega t}`` factors replaced by 1."""
    b = np.asarray(b, dtype=float)
    return _assemble(b[..., 2], _rotated_offdiag(0.0, b, phase=False))


def _assemble(bz, upper) -> np.ndarray:
    upper = np.asarray(upper)
    bz = np.asarray(bz, dtype=float)
    shape = np.broadcast_shapes(bz.shape, upper.shape)
    h = np.zeros(shape + (2, 2), dtype=np.complex128)
    h[..., 0, 0] = bz
    h[..., 1, 1] = -bz
    h[..., 0, 1] = upper
    h[..., 1, 0] = np.conj(upper)
    return h


def deterministic_hamiltonian(t, frame: Frame, p: PhysicalParams) -> np.ndarray:
    """System Hamiltonian of a frame at time(s) ``t`` (noise excluded)."""
    frame = Frame.parse(frame)
    if frame is Frame.LAB:
        return lab_hamiltonian(t, p)
    t = np.asarray(t, dtype=float)
    return np.broadcast_to(rwa_hamiltonian(p), t.shape + (2, 2)).copy()


def noise_operators(t, frame: Frame, axes=AXES) -> np.ndarray:
    """Operators multiplying each field component, shape ``t.shape + (len(axes), 2, 2)``.

    ``Lab``: Pauli matrices; ``RWA``: ``U^dag sigma_i U``; ``RWA_NAIVE``: the
    rotating-frame operators with the oscillating phases dropped.
    """
    frame = Frame.parse(frame)
    t = np.asarray(t, dtype=float)
    idx = [AXES.index(a) for a in axes]
    unit = np.eye(3)[idx]                       # (A, 3) unit field vectors
    if frame is Frame.LAB:
        ops = PAULI[idx]
        return np.broadcast_to(ops, t.shape + ops.shape).copy()
    if frame is Frame.RWA:
        return transformed_noise_hamiltonian(t[..., None], unit)
    ops = naive_noise_hamiltonian(unit)
    return np.broadcast_to(ops, t.shape + ops.shape).copy()


def effective_hamiltonian(t, frame: Frame, p: PhysicalParams, b) -> np.ndarray:
    """Full Hamiltonian of one realization: system part plus noise field ``b``."""
    frame = Frame.parse(frame)
    b = np.asarray(b, dtype=float)
    if frame is Frame.LAB:
        return lab_hamiltonian(t, p) + stochastic_hamiltonian(b)
    if frame is Frame.RWA:
        return rwa_hamiltonian(p) + transformed_noise_hamiltonian(t, b)
    return rwa_hamiltonian(p) + naive_noise_hamiltonian(b)


__all__ = [
    "DRIVE_FREQUENCY", "Frame", "PhysicalParams", "WhiteNoise", "OUNoise", "NoiseModel",
    "Scenario", "check_rwa_validity", "lab_hamiltonian", "rwa_hamiltonian", "rwa_transform",
    "stochastic_hamiltonian", "transformed_noise_hamiltonian", "naive_noise_hamiltonian",
    "deterministic_hamiltonian", "noise_operators", "effective_hamiltonian",
]
