"""Deterministic propagation: Schroedinger, Lindblad and closed-form results.

All integrators use classical RK4 on a uniform grid.  Hamiltonians and
Lindblad operators are tabulated on the half-step grid ``k * dt / 2`` so the
compiled loops see every RK4 stage time exactly, including the
time-dependent rotated operators of the time-local rotating-frame dissipator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import AXES, DiagnosticsError, PAULI, TimeGrid, dagger, purity
from .model import (
    Frame, PhysicalParams, Scenario, deterministic_hamiltonian, lab_hamiltonian, noise_operators,
)
from .sde import INITIAL_STATE, Trajectory


class DissipatorMode(str, enum.Enum):
    STATIC = "static"
    TIME_LOCAL = "time-local"

    @classmethod
    def parse(cls, value) -> "DissipatorMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown dissipator mode {value!r}; valid modes: {valid}") from None


class UnsupportedCombination(ValueError):
    """A scenario/operation pairing that has no master-equation counterpart."""


@dataclass(frozen=True)
class LindbladSet:
    """Hermitian operators ``V_j`` and rates ``w0_j**2``.

    ``ops`` has shape ``(A, 2, 2)`` for fixed operators or ``(T, A, 2, 2)``
    when tabulated in time.
    """

    ops: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.rates) < 0):
            raise ValueError("Lindblad rates must be >= 0")
        if np.asarray(self.ops).shape[-3] != np.asarray(self.rates).shape[0]:
            raise ValueError("one rate per Lindblad operator required")

    @classmethod
    def from_noise(cls, volatilities, axes=AXES) -> "LindbladSet":
        idx = [AXES.index(a) for a in axes]
        return cls(PAULI[idx].copy(), np.asarray(volatilities, dtype=float) ** 2)


@dataclass
class DensitySeries:
    times: np.ndarray
    rho: np.ndarray              # (n_samples, 2, 2)

    @property
    def rho_bb(self) -> np.ndarray:
        return self.rho[:, 0, 0].real

    @property
    def rho_ba(self) -> np.ndarray:
        return self.rho[:, 0, 1]

    @property
    def purity(self) -> np.ndarray:
        return purity(self.rho)


# --------------------------------------------------------------------------
# right-hand sides

def lindblad_rhs(rho, h, ops, rates) -> np.ndarray:
    """``-i[H, rho] + sum_j r_j (V_j rho V_j^dag - {V_j^dag V_j, rho} / 2)``.

    ``rho`` and ``h`` are ``(2, 2)`` (or broadcastable stacks), ``ops`` is
    ``(A, 2, 2)`` and ``rates`` is ``(A,)``.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    out = -1j * (h @ rho - rho @ h)
    ops = np.asarray(ops, dtype=np.complex128)
    for v, r in zip(ops.reshape(-1, 2, 2), np.asarray(rates, dtype=float).reshape(-1)):
        vd = dagger(v)
        vdv = vd @ v
        out = out + r * (v @ rho @ vd - 0.5 * (vdv @ rho + rho @ vdv))
    return out


@njit(cache=True)
def _lindblad_eval(rho, h, ops, rates, out):
    # out = -i[H, rho] + sum_j r_j (V rho V^dag - 1/2 {V^dag V, rho})
    for i in range(2):
        for j in range(2):
            acc = 0j
            for k in range(2):
                acc += h[i, k] * rho[k, j] - rho[i, k] * h[k, j]
            out[i, j] = -1j * acc
    for a in range(ops.shape[0]):
        v = ops[a]
        r = rates[a]
        if r == 0.0:
            continue
        vdv = np.zeros((2, 2), dtype=np.complex128)
        vr = np.zeros((2, 2), dtype=np.complex128)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    vdv[i, j] += np.conj(v[k, i]) * v[k, j]
                    vr[i, j] += v[i, k] * rho[k, j]
        for i in range(2):
            for j in range(2):
                sand = 0j
                anti = 0j
                for k in range(2):
                    sand += vr[i, k] * np.conj(v[j, k])
                    anti += vdv[i, k] * rho[k, j] + rho[i, k] * vdv[k, j]
                out[i, j] += r * (sand - 0.5 * anti)


@njit(cache=True)
def _rk4_master(rho, h_tab, ops_tab, rates, dt, out):
    # h_tab, ops_tab are sampled at t = k dt / 2, k = 0 .. 2n
    n = (h_tab.shape[0] - 1) // 2
    k1 = np.empty((2, 2), dtype=np.complex128)
    k2 = np.empty((2, 2), dtype=np.complex128)
    k3 = np.empty((2, 2), dtype=np.complex128)
    k4 = np.empty((2, 2), dtype=np.complex128)
    out[0] = rho
    for s in range(n):
        m = 2 * s
        _lindblad_eval(rho, h_tab[m], ops_tab[m], rates, k1)
        _lindblad_eval(rho + 0.5 * dt * k1, h_tab[m + 1], ops_tab[m + 1], rates, k2)
        _lindblad_eval(rho + 0.5 * dt * k2, h_tab[m + 1], ops_tab[m + 1], rates, k3)
        _lindblad_eval(rho + dt * k3, h_tab[m + 2], ops_tab[m + 2], rates, k4)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(2):
            for j in range(2):
                if not np.isfinite(rho[i, j].real) or not np.isfinite(rho[i, j].imag):
                    return s
        out[s + 1] = rho
    return -1


@njit(cache=True)
def _rk4_schrodinger(psi, h_tab, dt, out):
    n = (h_tab.shape[0] - 1) // 2
    out[0] = psi
    for s in range(n):
        m = 2 * s
        k1 = -1j * (h_tab[m] @ psi)
        k2 = -1j * (h_tab[m + 1] @ (psi + 0.5 * dt * k1))
        k3 = -1j * (h_tab[m + 1] @ (psi + 0.5 * dt * k2))
        k4 = -1j * (h_tab[m + 2] @ (psi + dt * k3))
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (np.isfinite(psi[0].real) and np.isfinite(psi[0].imag)
                and np.isfinite(psi[1].real) and np.isfinite(psi[1].imag)):
            return s
        out[s + 1] = psi
    return -1


def _half_times(grid: TimeGrid) -> np.ndarray:
    return np.arange(2 * grid.n_steps + 1) * (0.5 * grid.dt)


# --------------------------------------------------------------------------
# propagation

def propagate_schrodinger(h_tab: np.ndarray, dt: float, psi0=INITIAL_STATE) -> np.ndarray:
    """RK4 for ``psi' = -i H psi`` with ``H`` tabulated at half steps ``(2n+1, 2, 2)``."""
    h_tab = np.ascontiguousarray(h_tab, dtype=np.complex128)
    n = (h_tab.shape[0] - 1) // 2
    out = np.empty((n + 1, 2), dtype=np.complex128)
    bad = _rk4_schrodinger(np.asarray(psi0, dtype=np.complex128).copy(), h_tab, dt, out)
    if bad >= 0:
        raise DiagnosticsError(f"non-finite spinor at t={(bad + 1) * dt:.6g}")
    return out


def integrate_schrodinger(scenario: Scenario) -> Trajectory:
    """Noise-free evolution from ``(1, 0)`` in the scenario's frame."""
    if scenario.noise.kind is not None:
        raise UnsupportedCombination("integrate_schrodinger needs a scenario without noise")
    grid = scenario.grid
    h_tab = deterministic_hamiltonian(_half_times(grid), scenario.frame, scenario.params)
    return Trajectory(grid.times, propagate_schrodinger(h_tab, grid.dt))


def _operator_table(t: np.ndarray, scenario: Scenario, mode: DissipatorMode):
    frame = Frame.parse(scenario.frame)
    noise = scenario.noise
    if noise.kind == "ou":
        raise UnsupportedCombination(
            "master equation is not available for OU noise; use 'sim' for colored noise")
    if noise.kind is None:
        return np.zeros(t.shape + (0, 2, 2), dtype=np.complex128), np.zeros(0)
    axes = noise.active_axes
    if mode is DissipatorMode.TIME_LOCAL:
        if frame is not Frame.RWA:
            raise UnsupportedCombination("time-local dissipator requires frame 'rwa'")
        ops = noise_operators(t, Frame.RWA, axes)
    else:
        # static: fixed Pauli operators (the naive frame has its own fixed set)
        ops = noise_operators(t, Frame.RWA_NAIVE if frame is Frame.RWA_NAIVE else Frame.LAB, axes)
    return np.ascontiguousarray(ops), noise.volatilities() ** 2


def lindblad_tables(scenario: Scenario, mode=DissipatorMode.STATIC, t0: float = 0.0):
    """Half-step tables ``(h_tab, ops_tab, rates)`` for :func:`integrate_master`."""
    mode = DissipatorMode.parse(mode)
    t = t0 + _half_times(scenario.grid)
    ops_tab, rates = _operator_table(t, scenario, mode)
    h_tab = deterministic_hamiltonian(t, scenario.frame, scenario.params)
    return h_tab, ops_tab, rates


def integrate_master(scenario: Scenario, mode=DissipatorMode.STATIC, rho0=None) -> DensitySeries:
    """RK4 propagation of the Lindblad equation from ``diag(1, 0)``.

    ``static`` uses the fixed Pauli operators of the noisy axes; ``time-local``
    (rotating frame only) uses the rotated operators ``U^dag sigma_i U``
    evaluated at each RK4 stage time.
    """
    h_tab, ops_tab, rates = lindblad_tables(scenario, mode)
    grid = scenario.grid
    rho = np.diag([1.0 + 0j, 0.0]) if rho0 is None else np.array(rho0, dtype=np.complex128)
    out = np.empty((grid.n_steps + 1, 2, 2), dtype=np.complex128)
    bad = _rk4_master(rho, np.ascontiguousarray(h_tab), ops_tab, np.asarray(rates, dtype=float),
                      grid.dt, out)
    if bad >= 0:
        raise DiagnosticsError(f"non-finite density matrix at t={(bad + 1) * grid.dt:.6g}")
    return DensitySeries(grid.times, out)


def master_step(rho, t: float, dt: float, scenario: Scenario, mode=DissipatorMode.STATIC) -> np.ndarray:
    """One RK4 step from ``rho`` at time ``t`` (for per-step comparisons)."""
    h_tab, ops_tab, rates = lindblad_tables(scenario.with_(grid=TimeGrid(dt, dt)), mode, t0=t)
    out = np.empty((2, 2, 2), dtype=np.complex128)
    _rk4_master(np.array(rho, dtype=np.complex128), h_tab, ops_tab, np.asarray(rates, dtype=float),
                dt, out)
    return out[1]


# --------------------------------------------------------------------------
# closed forms

def generalized_rabi(rabi: float, detuning: float) -> float:
    return float(np.hypot(rabi, detuning))


def bloch_siegert_shift(rabi: float) -> float:
    """Resonance shift ``Omega**2 / (4 omega)`` with ``omega = 1``."""
    return 0.25 * rabi * rabi


def analytic_rwa_density(t, detuning: float, rabi: float, w0: float) -> np.ndarray:
    """Rotating-frame density matrix for isotropic white noise, from ``diag(1, 0)``.

    With ``Og = sqrt(Omega**2 + Delta**2)`` and ``G = 4 w0**2``::

        rho_bb = (1 + e^{-G t} [Delta^2 + Omega^2 cos(Og t)] / Og^2) / 2
        rho_ba = e^{-G t} Omega [Delta (cos(Og t) - 1) + i Og sin(Og t)] / (2 Og^2)

    ``rho_ba`` is the ``[0, 1]`` entry.  Returns shape ``t.shape + (2, 2)``.
    """
    t = np.asarray(t, dtype=float)
    decay = np.exp(-4.0 * w0 * w0 * t)
    og2 = rabi * rabi + detuning * detuning
    if og2 == 0.0:
        bb = 0.5 * (1.0 + decay)
        ba = np.zeros_like(t, dtype=np.complex128)
    else:
        og = np.sqrt(og2)
        c = np.cos(og * t)
        s = np.sin(og * t)
        bb = 0.5 * (1.0 + decay * (detuning**2 + rabi**2 * c) / og2)
        ba = decay * rabi * (detuning * (c - 1.0) + 1j * og * s) / (2.0 * og2)
    rho = np.empty(t.shape + (2, 2), dtype=np.complex128)
    rho[..., 0, 0] = bb
    rho[..., 1, 1] = 1.0 - bb
    rho[..., 0, 1] = ba
    rho[..., 1, 0] = np.conj(ba)
    return rho


# --------------------------------------------------------------------------
# spectral and resonance diagnostics

def amplitude_spectrum(t, y):
    """One-sided amplitude spectrum of ``y - mean(y)`` on a uniform grid.

    Returns angular frequencies and amplitudes; the bin width is ``2 pi / T``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    dt = t[1] - t[0]
    amp = np.abs(np.fft.rfft(y - y.mean())) * 2.0 / y.size
    freq = 2.0 * np.pi * np.fft.rfftfreq(y.size, dt)
    return freq, amp


def spectral_peak(t, y, band=(0.0, np.inf)) -> float:
    """Angular frequency of the largest spectral amplitude inside ``band``."""
    freq, amp = amplitude_spectrum(t, y)
    sel = (freq >= band[0]) & (freq <= band[1]) & (freq > 0)
    if not np.any(sel):
        raise ValueError(f"no frequency bins in band {band}")
    return float(freq[sel][np.argmax(amp[sel])])


def spectral_peaks(t, y, band=(0.0, np.inf), rel_height: float = 0.1) -> np.ndarray:
    """Angular frequencies of local spectral maxima inside ``band``.

    A bin counts as a peak when it exceeds both neighbours and reaches
    ``rel_height`` times the largest amplitude in the band.
    """
    freq, amp = amplitude_spectrum(t, y)
    inner = np.arange(1, freq.size - 1)
    is_max = (amp[inner] > amp[inner - 1]) & (amp[inner] > amp[inner + 1])
    in_band = (freq[inner] >= band[0]) & (freq[inner] <= band[1])
    idx = inner[is_max & in_band]
    if idx.size == 0:
        return idx.astype(float)
    top = amp[(freq >= band[0]) & (freq <= band[1])].max()
    return freq[idx[amp[idx] >= rel_height * top]]


def quasienergy_splitting(delta: float, rabi: float, steps_per_period: int = 2000) -> float:
    """Floquet quasienergy splitting of the lab Hamiltonian, in ``[0, 1/2]``.

    This is the frequency of the slow population oscillation seen
    stroboscopically; it is smallest on resonance.
    """
    dt = 2.0 * np.pi / steps_per_period
    t = np.arange(2 * steps_per_period + 1) * (0.5 * dt)
    h_tab = lab_hamiltonian(t, PhysicalParams(delta, rabi))
    cols = [propagate_schrodinger(h_tab, dt, e)[-1] for e in np.eye(2, dtype=np.complex128)]
    mono = np.stack(cols, axis=1)
    phases = np.angle(np.linalg.eigvals(mono))
    diff = np.angle(np.exp(1j * (phases[0] - phases[1])))
    return abs(diff) / (2.0 * np.pi)


@dataclass
class ResonanceScan:
    deltas: np.ndarray
    splitting: np.ndarray
    delta_res: float

    @property
    def resonant_drive(self) -> float:
        """Resonant drive frequency in units of the level splitting."""
        return 1.0 / self.delta_res

    @property
    def shift(self) -> float:
        return self.resonant_drive - 1.0


def resonance_scan(rabi: float = 0.2, deltas=None, steps_per_period: int = 2000) -> ResonanceScan:
    """Locate the lab-frame resonance as the minimum of the quasienergy splitting.

    The minimum is refined with a parabola through the three lowest-grid points.
    """
    if deltas is None:
        deltas = np.linspace(0.96, 1.06, 101)
    deltas = np.asarray(deltas, dtype=float)
    split = np.array([quasienergy_splitting(d, rabi, steps_per_period) for d in deltas])
    i = int(np.clip(np.argmin(split), 1, len(deltas) - 2))
    x = deltas[i - 1:i + 2]
    a, b, _ = np.polyfit(x - x[1], split[i - 1:i + 2], 2)
    vertex = x[1] - b / (2.0 * a) if a > 0 else x[1]
    return ResonanceScan(deltas, split, float(vertex))


__all__ = [
    "DissipatorMode", "UnsupportedCombination", "LindbladSet", "DensitySeries", "lindblad_rhs",
    "propagate_schrodinger", "integrate_schrodinger", "lindblad_tables", "integrate_master",
    "master_step", "generalized_rabi", "bloch_siegert_shift", "analytic_rwa_density",
    "amplitude_spectrum", "spectral_peak", "spectral_peaks", "quasienergy_splitting", "ResonanceScan", "resonance_scan",
]
