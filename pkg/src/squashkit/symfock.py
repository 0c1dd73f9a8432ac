"""Dense linear algebra on the symmetric subspace of N two-mode photons.

An N-photon state in a single spatial-temporal mode lives in the
(N+1)-dimensional bosonic symmetric subspace, spanned by the states with
N-b photons in one polarization/path mode and b in the other.  Single-qubit
gates act on such states as the spin-N/2 representation; this module builds
those lifted operators, the basis-change matrices between the z-, x- and
y-labelled symmetric bases, and a brute-force symmetrization oracle used to
cross-check the fast construction.

The canonical storage convention everywhere in this package is the
Z-labelled symmetric basis, component b holding the coefficient of the
basis vector with b photons in the "1" mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import comb, sqrt

import numpy as np

__all__ = [
    "Basis",
    "SymState",
    "OMEGA",
    "X_MODULATION",
    "HADAMARD",
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
    "qubit_frame",
    "qubit_ket",
    "sym_basis_state",
    "change_basis",
    "basis_change_matrix",
    "lift_gate",
    "lift_gate_oracle",
    "projector",
    "ORACLE_PHOTON_CAP",
]


class Basis(Enum):
    """Single-photon basis labelling a symmetric basis family."""

    Z = "z"
    X = "x"
    Y = "y"


#: Eighth root of unity, eigenvalue unit of the quarter-turn below.
OMEGA = np.exp(1j * np.pi / 4)

#: The quarter-turn about the y axis used as the x-basis phase modulation.
#: Not the self-inverse Hadamard: it maps |0_z> -> |0_x>, |1_z> -> -|1_x>,
#: and has eigenvectors |0_y>, |1_y> with eigenvalues OMEGA**-1, OMEGA**+1.
X_MODULATION = np.array([[1, -1], [1, 1]], dtype=complex) / np.sqrt(2.0)

#: The standard self-inverse Hadamard.  Shipped for completeness; protocol
#: code always uses X_MODULATION.
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Columns are the basis kets |0_b>, |1_b> in z coordinates.
_FRAMES = {
    Basis.Z: np.eye(2, dtype=complex),
    Basis.X: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),
    Basis.Y: np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2.0),
}

#: Default cap on the brute-force oracle (full space dimension 2**N).
ORACLE_PHOTON_CAP = 8

_UNITARY_ATOL = 1e-12

for _m in (X_MODULATION, HADAMARD, PAULI_X, PAULI_Y, PAULI_Z, *_FRAMES.values()):
    _m.setflags(write=False)


def qubit_frame(basis: Basis) -> np.ndarray:
    """2x2 matrix whose columns are |0_basis>, |1_basis> in z coordinates."""
    return _FRAMES[basis]


def qubit_ket(bit: int, basis: Basis) -> np.ndarray:
    """Single-qubit basis ket |bit_basis> in z coordinates."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    return _FRAMES[basis][:, bit].copy()


@dataclass(frozen=True)
class SymState:
    """Pure state on the symmetric N-photon subspace.

    Attributes
    ----------
    n_photons : int
        Total photon number N; the subspace has dimension N+1.
    amps : ndarray
        Complex amplitudes of length N+1; component b multiplies the
        symmetric basis vector with b photons in the "1" mode of `basis`.
    basis : Basis
        Which single-photon basis labels the components.
    """

    n_photons: int
    amps: np.ndarray
    basis: Basis = Basis.Z

    def __post_init__(self) -> None:
        if self.n_photons < 0:
            raise ValueError(f"n_photons must be >= 0, got {self.n_photons}")
        amps = np.array(self.amps, dtype=complex)
        if amps.shape != (self.n_photons + 1,):
            raise ValueError(
                f"amps must have length N+1 = {self.n_photons + 1}, "
                f"got shape {amps.shape}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amps must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.n_photons + 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


def sym_basis_state(n_photons: int, b: int, basis: Basis = Basis.Z) -> SymState:
    """Symmetric basis state with N-b photons in mode "0" and b in mode "1".

    Parameters
    ----------
    n_photons : int
        Photon number N >= 0.
    b : int
        Number of photons in the "1" mode, 0 <= b <= N.
    basis : Basis
        Labelling basis of the returned state.
    """
    if not 0 <= b <= n_photons:
        raise ValueError(f"b must satisfy 0 <= b <= {n_photons}, got {b}")
    amps = np.zeros(n_photons + 1, dtype=complex)
    amps[b] = 1.0
    return SymState(n_photons, amps, basis)


def _require_unitary(gate: np.ndarray) -> np.ndarray:
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2):
        raise ValueError(f"gate must be 2x2, got shape {gate.shape}")
    dev = np.max(np.abs(gate.conj().T @ gate - np.eye(2)))
    if dev > _UNITARY_ATOL:
        raise ValueError(f"gate is not unitary (deviation {dev:.3e})")
    return gate


def lift_gate(gate: np.ndarray, n_photons: int) -> np.ndarray:
    """Lift a single-qubit unitary to the symmetric N-photon subspace.

    Returns the (N+1)x(N+1) unitary acting as the restriction of the
    N-fold tensor power of `gate` to the symmetric subspace, in the
    Z-labelled symmetric basis.  Matrix elements are the classic
    transfer-pattern sums

        <S_a| U^(xN) |S_b> = sqrt(C(N,b)/C(N,a)) *
            sum_j C(b,j) C(N-b,a-j) u11^j u10^(a-j) u01^(b-j) u00^(N-a-b+j),

    which keeps the cost polynomial in N instead of the 2^N tensor build.

    Parameters
    ----------
    gate : ndarray
        2x2 unitary (z coordinates).
    n_photons : int
        Photon number N >= 0; N = 0 returns the 1x1 identity.
    """
    u = _require_unitary(gate)
    if n_photons < 0:
        raise ValueError(f"n_photons must be >= 0, got {n_photons}")
    n = n_photons
    if n == 0:
        return np.eye(1, dtype=complex)
    u00, u01 = u[0, 0], u[0, 1]
    u10, u11 = u[1, 0], u[1, 1]
    out = np.empty((n + 1, n + 1), dtype=complex)
    for a in range(n + 1):
        for b in range(n + 1):
            acc = 0j
            for j in range(max(0, a + b - n), min(a, b) + 1):
                term = comb(b, j) * comb(n - b, a - j)
                acc += (
                    term
                    * u11**j
                    * u10 ** (a - j)
                    * u01 ** (b - j)
                    * u00 ** (n - a - b + j)
                )
            out[a, b] = sqrt(comb(n, b) / comb(n, a)) * acc
    return out


def lift_gate_oracle(
    gate: np.ndarray, n_photons: int, max_photons: int = ORACLE_PHOTON_CAP
) -> np.ndarray:
    """Brute-force check value for :func:`lift_gate`.

    Builds the full 2^N-dimensional N-qubit space, the isometry T sending
    each symmetric basis vector to its explicit symmetrized tensor
    expansion, and returns T^dagger U^(xN) T.  Exponential in N, so refuses
    above `max_photons`.
    """
    u = _require_unitary(gate)
    if n_photons < 0:
        raise ValueError(f"n_photons must be >= 0, got {n_photons}")
    if n_photons > max_photons:
        raise ValueError(
            f"oracle refuses N = {n_photons} > cap {max_photons} "
            "(full space dimension 2**N)"
        )
    n = n_photons
    if n == 0:
        return np.eye(1, dtype=complex)
    dim = 2**n
    iso = np.zeros((dim, n + 1), dtype=complex)
    for idx in range(dim):
        b = idx.bit_count()
        iso[idx, b] = 1.0 / sqrt(comb(n, b))
    big = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        big = np.kron(big, u)
    return iso.conj().T @ big @ iso


def basis_change_matrix(n_photons: int, from_basis: Basis, to_basis: Basis) -> np.ndarray:
    """Unitary converting symmetric-state components between basis labels.

    The returned (N+1)x(N+1) matrix U satisfies
    U @ (components in `from_basis`) = (components in `to_basis`), and is
    the symmetric lift of the single-qubit frame change.
    """
    if n_photons < 0:
        raise ValueError(f"n_photons must be >= 0, got {n_photons}")
    q = _FRAMES[to_basis].conj().T @ _FRAMES[from_basis]
    return lift_gate(q, n_photons)


def change_basis(state: SymState, to_basis: Basis) -> SymState:
    """Re-express a symmetric state in another basis label."""
    if state.basis is to_basis:
        return state
    u = basis_change_matrix(state.n_photons, state.basis, to_basis)
    return SymState(state.n_photons, u @ state.amps, to_basis)


def projector(state: SymState) -> np.ndarray:
    """Rank-1 projector |psi><psi| onto a normalized symmetric state."""
    dev = abs(state.norm() - 1.0)
    if dev > 1e-9:
        raise ValueError(f"state is not normalized (norm deviation {dev:.3e})")
    return np.outer(state.amps, state.amps.conj())
