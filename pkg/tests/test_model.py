import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twolevel.core import PAULI, dagger, is_hermitian, is_unitary
from twolevel.model import (
    Frame, NoiseModel, OUNoise, PhysicalParams, Scenario, WhiteNoise, check_rwa_validity,
    effective_hamiltonian, lab_hamiltonian, naive_noise_hamiltonian, noise_operators,
    rwa_hamiltonian, rwa_transform, stochastic_hamiltonian, transformed_noise_hamiltonian,
)
from twolevel.core import TimeGrid

P = PhysicalParams(1.0, 0.2)
field = st.floats(-3, 3, allow_nan=False)
time = st.floats(0, 100, allow_nan=False)


def test_lab_hamiltonian_examples():
    assert np.allclose(lab_hamiltonian(0.0, PhysicalParams(1.3, 0.7)), np.diag([0.65, -0.65]))
    assert np.allclose(lab_hamiltonian(np.pi / 2, P), [[0.5, 0.2], [0.2, -0.5]])
    assert np.allclose(np.linalg.eigvalsh(lab_hamiltonian(0.0, P)), [-0.5, 0.5])


def test_rwa_hamiltonian_examples():
    assert np.allclose(rwa_hamiltonian(P), [[0, 0.1], [0.1, 0]])
    assert np.allclose(rwa_hamiltonian(PhysicalParams(1.2, 0.2)), [[0.2, 0.1], [0.1, 0]])
    assert np.allclose(rwa_hamiltonian(PhysicalParams(1.0, 0.0)), 0)
    assert PhysicalParams(1.2, 0.2).detuning == pytest.approx(-0.2)


def test_rwa_transform_examples():
    assert np.allclose(rwa_transform(0.0, P), [[1, 0], [0, -1j]])
    assert np.allclose(rwa_transform(2 * np.pi, P), [[-1, 0], [0, 1j]], atol=1e-14)


def test_rwa_transform_maps_lab_to_rotating_frame():
    # i d/dt phi = (U^dag H U - i U^dag dU/dt) phi must equal H_RWA plus
    # the counter-rotating terms, which average out over a drive period
    t = np.linspace(0, 2 * np.pi, 4001)[:-1]
    u = rwa_transform(t, P)
    h = 1e-6
    du = (rwa_transform(t + h, P) - rwa_transform(t - h, P)) / (2 * h)
    heff = dagger(u) @ lab_hamiltonian(t, P) @ u - 1j * dagger(u) @ du
    heff -= 0.5 * np.trace(heff, axis1=-2, axis2=-1)[..., None, None] * np.eye(2)
    target = rwa_hamiltonian(P) - 0.5 * np.trace(rwa_hamiltonian(P)) * np.eye(2)
    assert np.max(np.abs(heff.mean(axis=0) - target)) < 1e-6


def test_stochastic_hamiltonian_examples():
    assert np.allclose(stochastic_hamiltonian([0, 0, 1]), np.diag([1, -1]))
    assert np.allclose(stochastic_hamiltonian([1, 0, 0]), PAULI[0])
    assert np.allclose(stochastic_hamiltonian([0, 1, 0]), [[0, -1j], [1j, 0]])


def test_transformed_noise_examples():
    assert np.allclose(transformed_noise_hamiltonian(3.7, [0, 0, 0.4]), np.diag([0.4, -0.4]))
    # U^dag sigma_x U at t = 0 and a quarter period later
    assert np.allclose(transformed_noise_hamiltonian(0.0, [1, 0, 0]), PAULI[1])
    assert np.allclose(transformed_noise_hamiltonian(np.pi / 2, [1, 0, 0]), PAULI[0], atol=1e-15)


@given(time, field, field, field, st.floats(0.5, 1.5))
def test_transformed_noise_is_rotated_field(t, bx, by, bz, delta):
    u = rwa_transform(t, PhysicalParams(delta, 0.2))
    b = [bx, by, bz]
    direct = dagger(u) @ stochastic_hamiltonian(b) @ u
    h = transformed_noise_hamiltonian(t, b)
    assert np.max(np.abs(h - direct)) < 1e-12
    assert is_hermitian(h)
    assert is_unitary(u)


@given(time, field, field, field)
def test_every_hamiltonian_hermitian_traceless(t, bx, by, bz):
    for frame in Frame:
        h = effective_hamiltonian(t, frame, PhysicalParams(1.0, 0.2), [bx, by, bz])
        assert is_hermitian(h)
    for h in (lab_hamiltonian(t, P), stochastic_hamiltonian([bx, by, bz]),
              transformed_noise_hamiltonian(t, [bx, by, bz]), naive_noise_hamiltonian([bx, by, bz])):
        assert abs(np.trace(h)) < 1e-12


@given(time, field, field, field)
def test_frame_relations(t, bx, by, bz):
    zero = [0.0, 0.0, 0.0]
    assert np.array_equal(effective_hamiltonian(t, "rwa", P, zero), effective_hamiltonian(t, "rwa-naive", P, zero))
    z_only = [0.0, 0.0, bz]
    noise = [effective_hamiltonian(t, f, P, z_only) - effective_hamiltonian(t, f, P, zero) for f in Frame]
    for n in noise[1:]:
        assert np.allclose(n, noise[0], atol=1e-14)
    b = [bx, by, bz]
    assert np.allclose(effective_hamiltonian(0.0, "rwa", P, b), effective_hamiltonian(0.0, "rwa-naive", P, b))


def test_naive_noise_drops_phases_only():
    b = [0.3, -0.2, 0.1]
    assert np.allclose(naive_noise_hamiltonian(b), transformed_noise_hamiltonian(0.0, b))
    assert np.allclose(naive_noise_hamiltonian(b), transformed_noise_hamiltonian(2 * np.pi, b), atol=1e-14)


def test_noise_operators_shapes_and_frames():
    t = np.array([0.0, 0.5, 1.0])
    lab = noise_operators(t, "lab", "xz")
    assert lab.shape == (3, 2, 2, 2)
    assert np.array_equal(lab[1, 1], PAULI[2])
    rot = noise_operators(t, "rwa", "x")
    assert np.allclose(rot[2, 0], transformed_noise_hamiltonian(1.0, [1, 0, 0]))


def test_frame_parse_lists_valid_frames():
    assert Frame.parse("rwa-naive") is Frame.RWA_NAIVE
    with pytest.raises(ValueError, match="lab, rwa, rwa-naive"):
        Frame.parse("rotating")


def test_noise_model_validation():
    with pytest.raises(ValueError, match="w0"):
        WhiteNoise(-0.1)
    with pytest.raises(ValueError, match="theta"):
        OUNoise(0.0, 0.1)
    with pytest.raises(ValueError, match="one kind"):
        NoiseModel({"x": WhiteNoise(0.1), "y": OUNoise(1.0, 0.1)})
    with pytest.raises(ValueError, match="axis"):
        NoiseModel({"w": WhiteNoise(0.1)})
    m = NoiseModel.white(0.1, "zx")
    assert m.active_axes == ("x", "z")
    assert m.kind == "white" and not m.is_isotropic()
    assert NoiseModel.white(0.1).is_isotropic()
    assert NoiseModel().kind is None


def test_scenario_validation():
    g = TimeGrid(1.0, 0.1)
    with pytest.raises(ValueError):
        Scenario(P, Frame.LAB, NoiseModel(), g, n_realizations=0)
    with pytest.raises(ValueError):
        Scenario(P, Frame.LAB, NoiseModel(), g, seed=2**64)
    with pytest.raises(ValueError):
        PhysicalParams(1.0, -0.1)


def test_rwa_validity_warns_not_fails():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_rwa_validity(P)
    with pytest.warns(UserWarning, match="RWA"):
        assert not check_rwa_validity(PhysicalParams(0.5, 0.2))
