"""Dense complex linear algebra: operators, Pauli bases, rotation targets.

Everything is a plain ``numpy`` complex array. Operators are square
matrices; density matrices are square matrices that are Hermitian and
(for physical states) trace one. Validation helpers take an explicit
tolerance, never a hidden default.
"""

from __future__ import annotations

import numpy as np

GATES = ("RX", "RY", "RZ", "RZZ")

_SI = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)

#: single-qubit Pauli set in canonical order
PAULIS = {"I": _SI, "X": _SX, "Y": _SY, "Z": _SZ}
PAULI_ORDER = ("I", "X", "Y", "Z")


def as_operator(a) -> np.ndarray:
    """Coerce to a square complex matrix."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"operator must be square, got shape {m.shape}")
    return m


def allclose(a, b, tol: float) -> bool:
    """Entrywise equality with an explicit absolute tolerance."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    return bool(np.max(np.abs(a - b)) <= tol) if a.size else True


def is_hermitian(a, tol: float) -> bool:
    a = as_operator(a)
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def dagger(a) -> np.ndarray:
    return np.asarray(a).conj().T


def tensor(a, b) -> np.ndarray:
    """Kronecker product of two operators."""
    return np.kron(as_operator(a), as_operator(b))


def commutator(a, b) -> np.ndarray:
    """AB - BA. Raises on dimension mismatch."""
    a, b = as_operator(a), as_operator(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    """AB + BA. Raises on dimension mismatch."""
    a, b = as_operator(a), as_operator(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b + b @ a


def embed_qubit_operator(op2, code_basis: np.ndarray) -> np.ndarray:
    """Embed a 2x2 operator into a larger space via a code basis.

    ``code_basis`` is a (d, 2) matrix whose orthonormal columns are the
    computational |0>, |1> states expressed in the housing space. The
    embedded operator is B op2 B^dagger: it acts as ``op2`` on the code
    subspace and annihilates its complement (the identity embeds as the
    projector onto the code subspace).
    """
    basis = np.asarray(code_basis, dtype=complex)
    if basis.ndim != 2 or basis.shape[1] != 2:
        raise ValueError(f"code basis must be (d, 2), got {basis.shape}")
    return basis @ as_operator(op2) @ basis.conj().T


def qubit_code_basis(local_dim: int) -> np.ndarray:
    """Canonical code basis: levels 0 and 1 of a local_dim-level system."""
    if local_dim < 2:
        raise ValueError("local_dim must be >= 2")
    basis = np.zeros((local_dim, 2), dtype=complex)
    basis[0, 0] = 1.0
    basis[1, 1] = 1.0
    return basis


def pauli_basis(kind: str, n_qubits: int, local_dim: int,
                code_basis: np.ndarray | None = None) -> list[np.ndarray]:
    """The 4^N embedded Pauli operators of an N-qubit register.

    For ``kind="rydberg"`` each single-qubit Pauli occupies the top-left
    2x2 block of a local_dim x local_dim matrix (zeros elsewhere, identity
    included as the projector onto levels {0, 1}). For ``kind="cat"`` the
    caller supplies the (local_dim, 2) encoded computational basis and the
    Paulis are outer products of those states. N = 2 returns the 16 tensor
    products, ordered I, X, Y, Z on the first factor (slow index).
    """
    if n_qubits not in (1, 2):
        raise ValueError(f"n_qubits must be 1 or 2, got {n_qubits}")
    if kind == "rydberg":
        basis = qubit_code_basis(local_dim)
    elif kind == "cat":
        if code_basis is None:
            raise ValueError("cat pauli basis requires the encoded code_basis")
        basis = np.asarray(code_basis, dtype=complex)
        if basis.shape != (local_dim, 2):
            raise ValueError(f"code basis must be ({local_dim}, 2), got {basis.shape}")
    else:
        raise ValueError(f"unknown system kind {kind!r}")

    singles = [embed_qubit_operator(PAULIS[name], basis) for name in PAULI_ORDER]
    if n_qubits == 1:
        return singles
    return [tensor(p, q) for p in singles for q in singles]


def _rotation_2x2(axis: np.ndarray, theta: float) -> np.ndarray:
    # exp(-i theta/2 * sigma) = cos(theta/2) I - i sin(theta/2) sigma
    return np.cos(theta / 2) * _SI - 1j * np.sin(theta / 2) * axis


def gate_target(gate: str, theta: float,
                code_basis: np.ndarray | None = None,
                local_dim: int = 2) -> np.ndarray:
    """Target unitary exp(-i theta/2 P), embedded on the code subspace.

    ``P`` is the Pauli matching the gate name (Z tensor Z for RZZ). The
    returned matrix is supported only on the computational subspace, so
    U^dagger U equals the projector onto that subspace. The sign
    convention is immaterial to the phase-insensitive fidelity.
    """
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}; expected one of {GATES}")
    basis = qubit_code_basis(local_dim) if code_basis is None else np.asarray(code_basis, dtype=complex)

    if gate == "RZZ":
        u4 = np.diag(np.exp(-1j * theta / 2 * np.array([1.0, -1.0, -1.0, 1.0])))
        basis2 = np.kron(basis, basis)
        return basis2 @ u4 @ basis2.conj().T

    axis = {"RX": _SX, "RY": _SY, "RZ": _SZ}[gate]
    return embed_qubit_operator(_rotation_2x2(axis, theta), basis)
