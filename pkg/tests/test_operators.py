import numpy as np
import pytest

from pulsefam import operators as ops


I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def test_tensor_identity():
    assert ops.allclose(ops.tensor(I2, I2), np.eye(4), 1e-15)


def test_tensor_x_z_entry():
    # X (x) Z by hand: top-right 2x2 block is Z, so entry (0, 2) = 1
    t = ops.tensor(X, Z)
    assert t[0, 2] == 1.0
    assert t[1, 3] == -1.0
    assert t[0, 0] == 0.0


def test_tensor_dimensions():
    a = np.zeros((3, 3))
    assert ops.tensor(a, a).shape == (9, 9)


def test_tensor_associative():
    rng = np.random.default_rng(7)
    mats = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3)]
    left = ops.tensor(ops.tensor(mats[0], mats[1]), mats[2])
    right = ops.tensor(mats[0], ops.tensor(mats[1], mats[2]))
    assert ops.allclose(left, right, 1e-12)


def test_commutator_pauli():
    assert ops.allclose(ops.commutator(X, Y), 2j * Z, 1e-14)
    assert ops.allclose(ops.commutator(X, X), np.zeros((2, 2)), 1e-15)


def test_anticommutator():
    assert ops.allclose(ops.anticommutator(X, X), 2 * I2, 1e-15)


def test_commutator_dim_mismatch():
    with pytest.raises(ValueError):
        ops.commutator(X, np.eye(3))


def test_pauli_basis_rydberg_single():
    basis = ops.pauli_basis("rydberg", 1, 3)
    assert len(basis) == 4
    for p in basis:
        assert p.shape == (3, 3)
        # no support on the Rydberg level
        assert np.all(p[2, :] == 0) and np.all(p[:, 2] == 0)
    assert ops.allclose(basis[3][:2, :2], Z, 1e-15)
    assert basis[3][2, 2] == 0


def test_pauli_basis_two_qubit_count():
    basis = ops.pauli_basis("rydberg", 2, 3)
    assert len(basis) == 16
    assert all(p.shape == (9, 9) for p in basis)


def test_pauli_traces():
    for n in (1, 2):
        basis = ops.pauli_basis("rydberg", n, 3)
        for j, p in enumerate(basis):
            if j != 0:
                assert abs(np.trace(p)) < 1e-12
            for k, q in enumerate(basis):
                expected = 2 ** n if j == k else 0.0
                assert abs(np.trace(p @ q) - expected) < 1e-12


def test_pauli_basis_bad_args():
    with pytest.raises(ValueError):
        ops.pauli_basis("rydberg", 3, 3)
    with pytest.raises(ValueError):
        ops.pauli_basis("cat", 1, 20)  # cat needs the encoded basis
    with pytest.raises(ValueError):
        ops.pauli_basis("weird", 1, 2)


def test_gate_target_identity_angle():
    assert ops.allclose(ops.gate_target("RZ", 0.0), I2, 1e-15)


def test_gate_target_rx_pi():
    assert ops.allclose(ops.gate_target("RX", np.pi), -1j * X, 1e-14)


def test_gate_target_rzz():
    u = ops.gate_target("RZZ", np.pi / 2)
    ket00 = np.zeros(4, dtype=complex)
    ket00[0] = 1.0
    out = u @ ket00
    assert abs(out[0] - np.exp(-1j * np.pi / 4)) < 1e-14
    assert np.max(np.abs(out[1:])) < 1e-14


def test_gate_target_unitary_on_support():
    for gate in ("RX", "RY", "RZ"):
        u = ops.gate_target(gate, 1.234, local_dim=3)
        proj = np.diag([1.0, 1.0, 0.0])
        assert ops.allclose(u.conj().T @ u, proj, 1e-10)
    u = ops.gate_target("RZZ", 0.8, local_dim=3)
    proj1 = np.diag([1.0, 1.0, 0.0])
    assert ops.allclose(u.conj().T @ u, np.kron(proj1, proj1), 1e-10)


def test_gate_target_unknown_gate():
    with pytest.raises(ValueError):
        ops.gate_target("RW", 0.1)
