"""Schroedinger-Langevin trajectories for white and Ornstein-Uhlenbeck noise.

White noise (Ito form, Hermitian noise operators ``V_i``)::

    d psi = [-i H - 1/2 sum_i w_i^2 V_i^dag V_i] psi dt - i sum_i w_i V_i psi dW_i

One step applies Euler-Maruyama to the noise terms and then the exact
propagator ``exp(-i H dt)`` of the deterministic Hamiltonian frozen at the
step midpoint.  Noise operators are taken at the left end of the step (Ito).

OU noise enters as a smooth random field, ``d psi = -i [H + sum_i O_i V_i] psi dt``;
the field is frozen at the mean of its two end-point values and the 2x2
step is exponentiated exactly.

Both kernels are compiled with numba and loop over realizations one at a
time, so a realization's numbers do not depend on which block it sits in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import expm_hermitian_2x2, unitary_step, dagger, TimeGrid
from .model import Frame, Scenario, deterministic_hamiltonian, noise_operators
from .noise import NoiseSource, OUState, RngStream, ou_exact_step

CHUNK_STEPS = 2000
INITIAL_STATE = np.array([1.0 + 0j, 0.0 + 0j])


class IntegrationError(RuntimeError):
    def __init__(self, realization: int, time: float, detail: str = "non-finite state"):
        super().__init__(f"realization {realization}: {detail} at t={time:.6g}")
        self.realization = realization
        self.time = time


# --------------------------------------------------------------------------
# compiled kernels

@njit(cache=True)
def _white_step(pb, pa, u, d, v, k, wdw):
    # u, d: (K, 2, 2) tables, v: (K, A, 2, 2); row k is this step
    m00 = d[k, 0, 0]
    m01 = d[k, 0, 1]
    m10 = d[k, 1, 0]
    m11 = d[k, 1, 1]
    for i in range(v.shape[1]):
        c = -1j * wdw[i]
        m00 += c * v[k, i, 0, 0]
        m01 += c * v[k, i, 0, 1]
        m10 += c * v[k, i, 1, 0]
        m11 += c * v[k, i, 1, 1]
    fb = pb + (m00 * pb + m01 * pa)
    fa = pa + (m10 * pb + m11 * pa)
    return u[k, 0, 0] * fb + u[k, 0, 1] * fa, u[k, 1, 0] * fb + u[k, 1, 1] * fa


@njit(cache=True)
def _ou_step(pb, pa, h, v, k, o_mid, dt):
    h00 = h[k, 0, 0]
    h01 = h[k, 0, 1]
    h10 = h[k, 1, 0]
    h11 = h[k, 1, 1]
    for i in range(v.shape[1]):
        h00 += o_mid[i] * v[k, i, 0, 0]
        h01 += o_mid[i] * v[k, i, 0, 1]
        h10 += o_mid[i] * v[k, i, 1, 0]
        h11 += o_mid[i] * v[k, i, 1, 1]
    u00, u01, u10, u11 = expm_hermitian_2x2(h00, h01, h10, h11, dt)
    return u00 * pb + u01 * pa, u10 * pb + u11 * pa


@njit(cache=True)
def _normalize(pb, pa):
    n = math.sqrt(pb.real * pb.real + pb.imag * pb.imag + pa.real * pa.real + pa.imag * pa.imag)
    return pb / n, pa / n


@njit(cache=True)
def _white_block(psi, u_tab, d_tab, v_tab, w, dw, renorm, stride, out, worst):
    n_ax = w.shape[0]
    n_b = psi.shape[0]
    n_f = u_tab.shape[0]
    wdw = np.empty(n_ax)
    for b in range(n_b):
        pb = psi[b, 0]
        pa = psi[b, 1]
        for k in range(n_f):
            for i in range(n_ax):
                wdw[i] = w[i] * dw[i, b, k]
            pb, pa = _white_step(pb, pa, u_tab, d_tab, v_tab, k, wdw)
            if renorm:
                nrm = math.sqrt(pb.real * pb.real + pb.imag * pb.imag + pa.real * pa.real + pa.imag * pa.imag)
                worst[0] = max(worst[0], abs(nrm - 1.0))
                pb = pb / nrm
                pa = pa / nrm
            if (k + 1) % stride == 0:
                if not (np.isfinite(pb.real) and np.isfinite(pb.imag)
                        and np.isfinite(pa.real) and np.isfinite(pa.imag)):
                    return b, k
                j = (k + 1) // stride - 1
                out[b, j, 0] = pb
                out[b, j, 1] = pa
        psi[b, 0] = pb
        psi[b, 1] = pa
    return -1, -1


@njit(cache=True)
def _ou_block(psi, h_tab, v_tab, o, dt, renorm, stride, out, worst):
    n_ax = o.shape[0]
    n_b = psi.shape[0]
    n_f = h_tab.shape[0]
    o_mid = np.empty(n_ax)
    for b in range(n_b):
        pb = psi[b, 0]
        pa = psi[b, 1]
        for k in range(n_f):
            for i in range(n_ax):
                o_mid[i] = 0.5 * (o[i, b, k] + o[i, b, k + 1])
            pb, pa = _ou_step(pb, pa, h_tab, v_tab, k, o_mid, dt)
            if renorm:
                nrm = math.sqrt(pb.real * pb.real + pb.imag * pb.imag + pa.real * pa.real + pa.imag * pa.imag)
                worst[0] = max(worst[0], abs(nrm - 1.0))
                pb = pb / nrm
                pa = pa / nrm
            if (k + 1) % stride == 0:
                if not (np.isfinite(pb.real) and np.isfinite(pb.imag)
                        and np.isfinite(pa.real) and np.isfinite(pa.imag)):
                    return b, k
                j = (k + 1) // stride - 1
                out[b, j, 0] = pb
                out[b, j, 1] = pa
        psi[b, 0] = pb
        psi[b, 1] = pa
    return -1, -1


# --------------------------------------------------------------------------
# single-step operations

def _drift_matrix(ops: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """``-dt/2 sum_i w_i^2 V_i^dag V_i``; ``ops`` has shape ``(..., A, 2, 2)``."""
    vdv = dagger(ops) @ ops
    return -0.5 * dt * np.einsum("a,...aij->...ij", np.asarray(w, dtype=float) ** 2, vdv)


def slsde_white_step(psi, dt: float, h_det, lindblads, dw, renormalize: bool = True) -> np.ndarray:
    """Advance a spinor one white-noise step.

    Parameters
    ----------
    psi : array_like, shape (2,)
    dt : float
    h_det : (2, 2) array
        Deterministic Hamiltonian, already evaluated for this step.
    lindblads : sequence of (operator, w0)
        Hermitian noise operators and their volatilities.
    dw : sequence of float
        Wiener increments, one per operator, each with variance ``dt``.
    renormalize : bool
        Rescale the result to unit norm.
    """
    ops = np.array([np.asarray(v, dtype=np.complex128) for v, _ in lindblads]).reshape(-1, 2, 2)
    w = np.array([w0 for _, w0 in lindblads], dtype=float)
    dw = np.asarray(dw, dtype=float).reshape(-1)
    if dw.shape[0] != w.shape[0]:
        raise ValueError("need one Wiener increment per noise operator")
    u = unitary_step(h_det, dt)
    d = _drift_matrix(ops, w, dt) if len(w) else np.zeros((2, 2), dtype=np.complex128)
    pb, pa = _white_step(complex(psi[0]), complex(psi[1]), u[None], d[None], ops[None], 0, w * dw)
    if renormalize:
        pb, pa = _normalize(pb, pa)
    out = np.array([pb, pa])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite spinor; reduce the step size")
    return out


def dephasing_pair_step(psi, dt: float, h_det, w0: float, dw: float, renormalize: bool = True) -> np.ndarray:
    """Component-wise coding of :func:`slsde_white_step` for ``V = sigma_z``.

    ``d psi_b = -w0^2/2 psi_b dt - i w0 psi_b dW``,
    ``d psi_a = -w0^2/2 psi_a dt + i w0 psi_a dW``, then the Hamiltonian part.
    """
    psi_b, psi_a = complex(psi[0]), complex(psi[1])
    damp = 0.5 * w0 * w0 * dt
    fb = psi_b - damp * psi_b - 1j * w0 * psi_b * dw
    fa = psi_a - damp * psi_a + 1j * w0 * psi_a * dw
    u = unitary_step(h_det, dt)
    nb = u[0, 0] * fb + u[0, 1] * fa
    na = u[1, 0] * fb + u[1, 1] * fa
    if renormalize:
        norm = math.sqrt(abs(nb) ** 2 + abs(na) ** 2)
        nb, na = nb / norm, na / norm
    return np.array([nb, na])


def slsde_ou_step(psi, dt: float, h_mid, ops_mid, ou_states, streams, renormalize: bool = True):
    """Advance the OU fields exactly, then the spinor with the midpoint field.

    ``h_mid`` and ``ops_mid`` (shape ``(A, 2, 2)``) are evaluated at
    ``t + dt/2``.  Returns ``(psi, new_states)``.
    """
    new_states = [ou_exact_step(s, dt, float(st.normals())) for s, st in zip(ou_states, streams)]
    o_mid = np.array([0.5 * (s.value + n.value) for s, n in zip(ou_states, new_states)])
    ops = np.asarray(ops_mid, dtype=np.complex128).reshape(-1, 2, 2)
    h = np.asarray(h_mid, dtype=np.complex128)
    pb, pa = _ou_step(complex(psi[0]), complex(psi[1]), h[None], ops[None], 0, o_mid, dt)
    if renormalize:
        pb, pa = _normalize(pb, pa)
    return np.array([pb, pa]), new_states


# --------------------------------------------------------------------------
# block propagation

def propagate_block(scenario: Scenario, realizations, level: int = 0, renormalize: bool = True,
                    chunk_steps: int = CHUNK_STEPS, diagnostics: np.ndarray | None = None):
    """Propagate a block of realizations from ``psi(0) = (1, 0)``.

    Yields ``(j0, states)`` per chunk, ``states`` of shape ``(B, K, 2)`` holding
    the spinors at base-grid samples ``j0 + 1 .. j0 + K`` (sample 0 is the
    initial state).  ``level`` refines the step to ``dt / 2**level`` while
    keeping the same noise paths and the same sample grid.  If given,
    ``diagnostics[0]`` accumulates the largest ``| |psi| - 1 |`` removed by
    renormalization.
    """
    realizations = list(realizations)
    frame = Frame.parse(scenario.frame)
    p = scenario.params
    grid = scenario.grid
    stride = 2**level
    dt_f = grid.dt / stride
    n = grid.n_steps
    noise = scenario.noise
    kind = noise.kind
    axes = noise.active_axes
    w = noise.volatilities()
    source = NoiseSource(noise, scenario.seed, realizations, grid.dt, level) if kind else None

    psi = np.tile(INITIAL_STATE, (len(realizations), 1))
    worst = np.zeros(1) if diagnostics is None else diagnostics
    done = 0
    while done < n:
        k = min(chunk_steps, n - done)
        kf = k * stride
        t_left = (done * stride + np.arange(kf)) * dt_f
        out = np.empty((len(realizations), k, 2), dtype=np.complex128)
        if kind == "ou":
            o = np.ascontiguousarray(source.next_chunk(k))
            t_mid = t_left + 0.5 * dt_f
            h_tab = deterministic_hamiltonian(t_mid, frame, p)
            v_tab = noise_operators(t_mid, frame, axes)
            bad = _ou_block(psi, h_tab, v_tab, o, dt_f, renormalize, stride, out, worst)
        else:
            u_tab = unitary_step(deterministic_hamiltonian(t_left + 0.5 * dt_f, frame, p), dt_f)
            v_tab = noise_operators(t_left, frame, axes)
            if kind == "white":
                dw = np.ascontiguousarray(source.next_chunk(k))
                d_tab = _drift_matrix(v_tab, w, dt_f)
            else:
                dw = np.zeros((0, len(realizations), kf))
                d_tab = np.zeros((kf, 2, 2), dtype=np.complex128)
            bad = _white_block(psi, u_tab, d_tab, v_tab, w, dw, renormalize, stride, out, worst)
        if bad[0] >= 0:
            raise IntegrationError(realizations[bad[0]], float(t_left[bad[1]] + dt_f))
        yield done, out
        done += k


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (n_samples, 2)

    @property
    def survival(self) -> np.ndarray:
        return np.abs(self.states[:, 0]) ** 2

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.states) ** 2, axis=1))


def integrate_trajectory(scenario: Scenario, realization: int = 0, level: int = 0,
                         renormalize: bool = True) -> Trajectory:
    """Run one realization over the scenario grid and keep every sample."""
    grid = scenario.grid
    states = np.empty((grid.n_steps + 1, 2), dtype=np.complex128)
    states[0] = INITIAL_STATE
    for j0, chunk in propagate_block(scenario, [realization], level, renormalize):
        states[j0 + 1:j0 + 1 + chunk.shape[1]] = chunk[0]
    return Trajectory(grid.times, states)


__all__ = [
    "IntegrationError", "Trajectory", "slsde_white_step", "dephasing_pair_step", "slsde_ou_step",
    "propagate_block", "integrate_trajectory", "TimeGrid", "RngStream", "OUState",
]
