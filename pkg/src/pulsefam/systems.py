"""Qubit architectures: Rydberg gg qubits and Kerr-cat qubits.

A SystemModel packages everything the integrator and optimizer need:
dimensions, the drift Hamiltonian, one generator per control channel
(H = drift + sum_c z_c A_c + conj(z_c) A_c^dagger, Hermitian for any
complex channel values), jump operators with rates, the per-gate channel
table with bounds and endpoint constraints, and the encoded
computational basis used for Pauli embedding and gate targets.

All quantities are in characteristic units: the Rydberg coupling bound
Omega_max = 1 sets the Rydberg timescale, the Kerr nonlinearity K = 1
sets the cat timescale, and the tabulated channel bounds and gate times
are dimensionless numbers in those units.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from . import operators as ops
from .pulses import ChannelSpec

GATES = ops.GATES

#: per-gate pulse end times, units 1/Omega_max
RYDBERG_GATE_TIMES = {"RZ": 1.36, "RX": 0.73, "RY": 1.36, "RZZ": 2.83}
#: per-gate pulse end times, units 1/K
CAT_GATE_TIMES = {"RZ": 2.06, "RX": 2.06, "RY": 4.03, "RZZ": 3.00}

CAT_E_MAX = 0.308
CAT_DELTA_MAX = 4.0
CAT_G_MAX = 4.0
CAT_G_ENDPOINT = 4.0
CAT_EXCHANGE_MAX = 0.154


@dataclass(frozen=True)
class RydbergParams:
    """Rydberg gg-qubit parameters (units of Omega_max)."""

    omega_max: float = 1.0
    gamma_1: float = 0.01
    gamma_r: float = 0.01
    c6_over_r6: float = 1e3
    n_qubits: int = 1

    def __post_init__(self):
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.gamma_1 < 0 or self.gamma_r < 0:
            raise ValueError("decay rates must be nonnegative")
        if self.n_qubits not in (1, 2):
            raise ValueError("n_qubits must be 1 or 2")


@dataclass(frozen=True)
class CatParams:
    """Kerr-cat parameters (units of K).

    The coherent amplitude alpha = sqrt(G(0)/K) = 2 follows from the
    tabulated two-photon drive endpoint G(0) = 4. The single-photon loss
    rate gamma is not pinned by the reference tables; 0.01 K is a
    configurable default chosen by analogy with the Rydberg decay rates.
    """

    kerr: float = 1.0
    fock_dim: int = 20
    alpha: float = 2.0
    n_qubits: int = 1
    drive_phase: float = 0.0
    gamma: float = 0.01

    def __post_init__(self):
        if self.kerr <= 0:
            raise ValueError("kerr must be positive")
        if self.fock_dim < 8:
            raise ValueError("fock_dim must be at least 8")
        if self.alpha ** 2 >= self.fock_dim / 2:
            raise ValueError("alpha too large for the Fock truncation")
        if self.n_qubits not in (1, 2):
            raise ValueError("n_qubits must be 1 or 2")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class SystemModel:
    """Immutable description of one (architecture, gate) control problem."""

    kind: str
    gate: str
    n_qubits: int
    dim: int
    fidelity_dim: int
    local_dim: int
    drift: np.ndarray
    controls: dict[str, np.ndarray]
    channel_table: dict[str, ChannelSpec]
    jumps: list[tuple[np.ndarray, float]]
    gate_time: float
    code_basis: np.ndarray
    params: RydbergParams | CatParams

    def pauli_basis(self) -> list[np.ndarray]:
        """The 4^N embedded Pauli operators of this model."""
        return ops.pauli_basis(self.kind, self.n_qubits, self.local_dim,
                               code_basis=self.code_basis)

    def target(self, theta: float) -> np.ndarray:
        """Embedded target unitary for this model's gate at angle theta."""
        return ops.gate_target(self.gate, theta, code_basis=self.code_basis,
                               local_dim=self.local_dim)

    @property
    def fidelity_ceiling(self) -> float:
        """Fidelity of a perfect computational-subspace gate.

        The printed fidelity formula uses the architecture dimension d
        while the embedded Pauli blocks have trace 2^N, so a flawless
        gate scores (4^N 2^N + d^2) / (4^N d + d^2); 1 for cat systems,
        below 1 for Rydberg (17/21 at N = 1).
        """
        d = self.fidelity_dim
        four_n = 4 ** self.n_qubits
        return (four_n * 2 ** self.n_qubits + d * d) / (four_n * d + d * d)

    def descriptor(self) -> dict:
        """JSON-serializable summary for run manifests."""
        return {
            "kind": self.kind,
            "gate": self.gate,
            "n_qubits": self.n_qubits,
            "dim": self.dim,
            "gate_time": self.gate_time,
            "params": asdict(self.params),
            "channels": {
                name: {
                    "bounds": [spec.lower, spec.upper],
                    "endpoint": spec.endpoint_value,
                    "complex": spec.complex_allowed,
                }
                for name, spec in self.channel_table.items()
            },
        }


def assemble_hamiltonian(model: SystemModel, pulse_values: dict[str, complex]) -> np.ndarray:
    """Drift plus control terms for one set of instantaneous channel values."""
    h = model.drift.astype(complex).copy()
    for name in model.channel_table:
        if name not in pulse_values:
            raise ValueError(f"missing value for channel {name!r}")
        v = complex(pulse_values[name])
        a = model.controls[name]
        h += v * a + np.conj(v) * a.conj().T
    return h


def _embed_pair(op: np.ndarray, local_dim: int) -> np.ndarray:
    """op acting identically on both qubits of a 2-qubit register."""
    eye = np.eye(local_dim, dtype=complex)
    return np.kron(op, eye) + np.kron(eye, op)


def _check_gate_qubits(gate: str, n_qubits: int):
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}; expected one of {GATES}")
    expected = 2 if gate == "RZZ" else 1
    if n_qubits != expected:
        raise ValueError(f"gate {gate} needs n_qubits = {expected}, got {n_qubits}")


# ---------------------------------------------------------------------------
# Rydberg
# ---------------------------------------------------------------------------

def build_rydberg(params: RydbergParams, gate: str) -> SystemModel:
    """Three-level-per-qubit Rydberg model for one gate.

    Single-qubit gates drive only the |0><->|1| transition (coupling and
    detuning); the |1><->|r| channels are active only for RZZ, where both
    qubits share one pulse per channel and the van der Waals shift
    C6/R^6 |rr><rr| provides the entangling drift. Decay jumps are
    |0><1| and |1><r| on each qubit.
    """
    _check_gate_qubits(gate, params.n_qubits)
    n = params.n_qubits
    om = params.omega_max

    s01 = np.zeros((3, 3), dtype=complex)
    s01[0, 1] = 1.0
    s1r = np.zeros((3, 3), dtype=complex)
    s1r[1, 2] = 1.0
    proj1 = np.zeros((3, 3), dtype=complex)
    proj1[1, 1] = 1.0
    projr = np.zeros((3, 3), dtype=complex)
    projr[2, 2] = 1.0

    # H = v A + conj(v) A^dagger per channel, laser phase fixed to 0
    gen = {
        "omega_01": 0.5 * s01,
        "delta_1": -0.5 * proj1,
        "omega_1r": 0.5 * s1r,
        "delta_r": -0.5 * projr,
    }
    bound = ChannelSpec(lower=-om, upper=om, endpoint_value=0.0)
    if gate == "RZZ":
        active = ["omega_01", "delta_1", "omega_1r", "delta_r"]
    else:
        active = ["omega_01", "delta_1"]
    table = {name: bound for name in active}

    dim = 3 ** n
    if n == 1:
        controls = {name: gen[name] for name in active}
        drift = np.zeros((3, 3), dtype=complex)
        jumps = [(s01.copy(), params.gamma_1 * om), (s1r.copy(), params.gamma_r * om)]
    else:
        controls = {name: _embed_pair(gen[name], 3) for name in active}
        drift = np.zeros((dim, dim), dtype=complex)
        rr = 2 * 3 + 2
        drift[rr, rr] = params.c6_over_r6 * om
        eye = np.eye(3, dtype=complex)
        jumps = []
        for v, g in ((s01, params.gamma_1 * om), (s1r, params.gamma_r * om)):
            jumps.append((np.kron(v, eye), g))
            jumps.append((np.kron(eye, v), g))

    return SystemModel(
        kind="rydberg", gate=gate, n_qubits=n, dim=dim, fidelity_dim=3 ** n,
        local_dim=3, drift=drift, controls=controls, channel_table=table,
        jumps=jumps, gate_time=RYDBERG_GATE_TIMES[gate],
        code_basis=ops.qubit_code_basis(3), params=params,
    )


# ---------------------------------------------------------------------------
# cat qubits
# ---------------------------------------------------------------------------

def annihilation(dim: int) -> np.ndarray:
    a = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        a[k - 1, k] = np.sqrt(k)
    return a


def photon_parity(dim: int) -> np.ndarray:
    return np.diag((-1.0 + 0j) ** np.arange(dim))


def coherent_state(alpha: float, dim: int) -> np.ndarray:
    """Truncated (unnormalized) coherent state in the Fock basis."""
    c = np.zeros(dim, dtype=complex)
    c[0] = np.exp(-abs(alpha) ** 2 / 2)
    for k in range(1, dim):
        c[k] = c[k - 1] * alpha / np.sqrt(k)
    return c


def cat_computational_basis(params: CatParams) -> tuple[np.ndarray, np.ndarray]:
    """Encoded |0>, |1> built from the even/odd cat states of |+-alpha>.

    Raises if the Fock truncation loses more than 1e-4 of the coherent
    population. The returned pair is exactly orthonormal: even and odd
    cats occupy disjoint Fock parities and each is normalized after
    truncation.
    """
    plus = coherent_state(params.alpha, params.fock_dim)
    minus = coherent_state(-params.alpha, params.fock_dim)
    deficit = 1.0 - float(np.sum(np.abs(plus) ** 2))
    if deficit > 1e-4:
        raise ValueError(
            f"Fock truncation too small: coherent tail mass {deficit:.2e} at "
            f"alpha={params.alpha}, fock_dim={params.fock_dim}")
    cat_even = plus + minus
    cat_odd = plus - minus
    cat_even /= np.linalg.norm(cat_even)
    cat_odd /= np.linalg.norm(cat_odd)
    ket0 = (cat_even + cat_odd) / np.sqrt(2.0)
    ket1 = (cat_even - cat_odd) / np.sqrt(2.0)
    return ket0, ket1


def build_cat(params: CatParams, gate: str) -> SystemModel:
    """Kerr-cat model for one gate, simulated in the truncated Fock space.

    Per qubit: drift -K a^dag2 a^2, two-photon drive G(t)(a^dag2 + a^2),
    detuning -Delta(t) a^dag a, single-photon drive E(t) (complex-valued
    for RY), and for RZZ a photon exchange g(t)(a1 a2^dag + a1^dag a2).
    Both qubits of RZZ share one pulse per channel. Single-photon loss is
    an annihilation jump on each qubit.
    """
    _check_gate_qubits(gate, params.n_qubits)
    n = params.n_qubits
    kerr = params.kerr
    nf = params.fock_dim

    a = annihilation(nf)
    ad = a.conj().T
    drift1 = -kerr * (ad @ ad @ a @ a)

    gen = {
        "E": a * np.exp(-1j * params.drive_phase),
        "Delta": -0.5 * (ad @ a),
        "G": a @ a,
    }
    table = {
        "E": ChannelSpec(-CAT_E_MAX * kerr, CAT_E_MAX * kerr, 0.0,
                         complex_allowed=(gate == "RY")),
        "Delta": ChannelSpec(0.0, CAT_DELTA_MAX * kerr, 0.0),
        "G": ChannelSpec(-CAT_G_MAX * kerr, CAT_G_MAX * kerr, CAT_G_ENDPOINT * kerr),
    }

    dim = nf ** n
    if n == 1:
        controls = dict(gen)
        drift = drift1
        jumps = [(a.copy(), params.gamma * kerr)]
    else:
        controls = {name: _embed_pair(op, nf) for name, op in gen.items()}
        eye = np.eye(nf, dtype=complex)
        controls["g"] = np.kron(a, ad)
        table["g"] = ChannelSpec(0.0, CAT_EXCHANGE_MAX * kerr, 0.0)
        drift = _embed_pair(drift1, nf)
        jumps = [(np.kron(a, eye), params.gamma * kerr),
                 (np.kron(eye, a), params.gamma * kerr)]

    ket0, ket1 = cat_computational_basis(params)
    code_basis = np.stack([ket0, ket1], axis=1)

    return SystemModel(
        kind="cat", gate=gate, n_qubits=n, dim=dim, fidelity_dim=2 ** n,
        local_dim=nf, drift=drift, controls=controls, channel_table=table,
        jumps=jumps, gate_time=CAT_GATE_TIMES[gate], code_basis=code_basis,
        params=params,
    )


def build_system(kind: str, gate: str, params: RydbergParams | CatParams | None = None) -> SystemModel:
    """Convenience dispatcher used by the CLI."""
    n = 2 if gate == "RZZ" else 1
    if kind == "rydberg":
        params = params or RydbergParams(n_qubits=n)
        return build_rydberg(params, gate)
    if kind == "cat":
        if params is None:
            params = CatParams(n_qubits=n, fock_dim=16 if gate == "RZZ" else 20)
        return build_cat(params, gate)
    raise ValueError(f"unknown system kind {kind!r}")
