"""Bell states, Bloch-vector observables and two-qubit correlation matrices.

Global conventions
------------------
* Four-qubit register order is (A, B1, B2, C). A basis index is the binary
  number whose most significant bit is A.
* A dichotomic outcome ``a`` in {0, 1} carries the eigenvalue ``(-1)**a``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonUnitVector
from .matcore import as_matrix

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
# identity first, used by the Pauli-tensor fast path
PAULI_BASIS = np.stack([SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z])

UNIT_TOL = 1e-10


class BellKind(enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def label(self) -> tuple[int, int]:
        """Two-bit BSM outcome ``(b0, b1)`` identifying this Bell state.

        ``(-1)**b0`` is the eigenvalue under Z(x)Z and ``(-1)**b1`` the one
        under X(x)X.
        """
        return _LABELS[self]

    @property
    def index(self) -> int:
        b0, b1 = self.label
        return 2 * b0 + b1


_LABELS = {
    BellKind.PHI_PLUS: (0, 0),
    BellKind.PHI_MINUS: (0, 1),
    BellKind.PSI_PLUS: (1, 0),
    BellKind.PSI_MINUS: (1, 1),
}

_AMPLITUDES = {
    BellKind.PHI_PLUS: (1, 0, 0, 1),
    BellKind.PHI_MINUS: (1, 0, 0, -1),
    BellKind.PSI_PLUS: (0, 1, 1, 0),
    BellKind.PSI_MINUS: (0, 1, -1, 0),
}

# Bell-ordered by outcome index 00, 01, 10, 11
BELL_ORDER = (BellKind.PHI_PLUS, BellKind.PHI_MINUS, BellKind.PSI_PLUS, BellKind.PSI_MINUS)


@dataclass(frozen=True)
class BlochVector:
    """Unit vector in R^3 selecting the observable ``n . sigma``."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.x**2 + self.y**2 + self.z**2
        if not math.isfinite(norm2) or abs(norm2 - 1.0) > UNIT_TOL:
            raise NonUnitVector(f"|n|^2 = {norm2!r} for ({self.x}, {self.y}, {self.z})")

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> "BlochVector":
        norm = math.sqrt(x * x + y * y + z * z)
        if norm == 0.0:
            raise NonUnitVector("cannot normalize the zero vector")
        return cls(x / norm, y / norm, z / norm)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BlochVector":
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __neg__(self) -> "BlochVector":
        return BlochVector(-self.x, -self.y, -self.z)


def bell_vector(kind: BellKind) -> np.ndarray:
    return np.array(_AMPLITUDES[kind], dtype=complex) / math.sqrt(2.0)


def bell_state(kind: BellKind) -> np.ndarray:
    """Density matrix of a Bell state, 4x4 with unit trace."""
    v = bell_vector(kind)
    return np.outer(v, v.conj())


def pauli_observable(n: BlochVector) -> np.ndarray:
    """The dichotomic observable ``n . sigma`` with eigenvalues +1 and -1."""
    if not isinstance(n, BlochVector):
        n = BlochVector(*n)
    return n.x * SIGMA_X + n.y * SIGMA_Y + n.z * SIGMA_Z


def outcome_projectors(n: BlochVector) -> tuple[np.ndarray, np.ndarray]:
    """Projectors for outcomes a=0 (eigenvalue +1) and a=1 (eigenvalue -1)."""
    obs = pauli_observable(n)
    return (SIGMA_I + obs) / 2, (SIGMA_I - obs) / 2


def bell_projectors() -> list[tuple[np.ndarray, tuple[int, int]]]:
    """The four Bell projectors with their ``(b0, b1)`` outcome labels."""
    return [(bell_state(k), k.label) for k in BELL_ORDER]


def correlation_matrix(rho) -> np.ndarray:
    """``T[i, j] = Tr[rho sigma_i (x) sigma_j]`` for i, j in {x, y, z}."""
    rho = as_matrix(rho)
    if rho.shape != (4, 4):
        raise ValueError(f"correlation matrix needs a two-qubit state, got {rho.shape}")
    r = rho.reshape(2, 2, 2, 2)
    # Tr[rho (P_i (x) P_j)] = sum rho[a b, a' b'] P_i[a', a] P_j[b', b]
    t = np.einsum("abcd,ica,jdb->ij", r, PAULI_BASIS[1:], PAULI_BASIS[1:])
    return t.real.copy()
