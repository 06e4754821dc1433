"""Tripartite correlators and bilocality parameters.

Two routes compute the same numbers:

* brute force: enumerate joint outcome probabilities
  ``Tr[(Pi_a^x (x) Pi_b (x) Pi_c^z) rho]`` and sum signed entries;
* analytic: contract Bloch vectors with correlation tensors (used by the
  optimizer) and, for TwoTwo, the correlation-matrix maximum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channels import WeightedState
from .errors import DimensionMismatch
from .matcore import as_matrix, eig_sym3
from .states import (
    BELL_ORDER,
    PAULI_BASIS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    BlochVector,
    bell_state,
    correlation_matrix,
    outcome_projectors,
    pauli_observable,
)


class BsmScenario(enum.Enum):
    TWO_TWO = "22"
    ONE_FOUR = "14"
    ONE_THREE = "13"


@dataclass(frozen=True)
class MeasurementSettings:
    a0: BlochVector
    a1: BlochVector
    c0: BlochVector
    c1: BlochVector
    # Bob's separable observables, TwoTwo only
    b0_a: Optional[BlochVector] = None
    b0_c: Optional[BlochVector] = None
    b1_a: Optional[BlochVector] = None
    b1_c: Optional[BlochVector] = None

    @property
    def has_bob(self) -> bool:
        return self.b0_a is not None

    def check(self, scenario: BsmScenario):
        bob = (self.b0_a, self.b0_c, self.b1_a, self.b1_c)
        if scenario is BsmScenario.TWO_TWO and any(b is None for b in bob):
            raise ValueError("TwoTwo settings need all four Bob vectors")
        if scenario is not BsmScenario.TWO_TWO and any(b is not None for b in bob):
            raise ValueError(f"{scenario.name} settings must not carry Bob vectors")

    def vectors(self) -> list[BlochVector]:
        vs = [self.a0, self.a1, self.c0, self.c1]
        if self.has_bob:
            vs += [self.b0_a, self.b0_c, self.b1_a, self.b1_c]
        return vs

    def to_dict(self) -> dict:
        return {name: [v.x, v.y, v.z] for name, v in zip(_SETTING_NAMES, self.vectors())}

    @classmethod
    def from_vectors(cls, vectors) -> "MeasurementSettings":
        return cls(*vectors)


_SETTING_NAMES = ("a0", "a1", "c0", "c1", "b0_a", "b0_c", "b1_a", "b1_c")


@dataclass(frozen=True)
class BilocalityResult:
    i_val: float
    j_val: float
    scenario: BsmScenario
    b_val: float = field(init=False)
    violated: bool = field(init=False)

    def __post_init__(self):
        b = math.sqrt(abs(self.i_val)) + math.sqrt(abs(self.j_val))
        object.__setattr__(self, "b_val", b)
        object.__setattr__(self, "violated", b > 1.0)


@dataclass(frozen=True)
class ProbabilityTable:
    """Joint probabilities indexed by inputs then outcomes.

    TwoTwo: ``probs[x, y, z, a, b, c]`` with b in {0, 1}.
    OneFour: ``probs[x, z, a, b, c]`` with b = 2*b0 + b1.
    OneThree: ``probs[x, z, a, b, c]`` with b in (00, 01, {10 or 11}).
    """

    scenario: BsmScenario
    probs: np.ndarray


def _rho_of(state) -> np.ndarray:
    rho = state.rho if isinstance(state, WeightedState) else state
    rho = as_matrix(rho)
    if rho.shape != (16, 16):
        raise DimensionMismatch(f"expected a 4-qubit state, got shape {rho.shape}")
    return rho


def _party_povms(a: tuple[BlochVector, BlochVector]) -> np.ndarray:
    """Array ``[x, outcome, 2, 2]`` of projectors for a binary-input party."""
    return np.array([outcome_projectors(v) for v in a])


def _bob_povm(scenario: BsmScenario, settings: MeasurementSettings) -> np.ndarray:
    if scenario is BsmScenario.TWO_TWO:
        out = np.zeros((2, 2, 4, 4), dtype=complex)
        for y, (ba, bc) in enumerate(((settings.b0_a, settings.b0_c), (settings.b1_a, settings.b1_c))):
            obs = np.kron(pauli_observable(ba), pauli_observable(bc))
            out[y, 0] = (np.eye(4) + obs) / 2
            out[y, 1] = (np.eye(4) - obs) / 2
        return out
    bells = np.array([bell_state(k) for k in BELL_ORDER])
    if scenario is BsmScenario.ONE_FOUR:
        return bells
    # outcomes 10 and 11 are not resolved
    return np.array([bells[0], bells[1], bells[2] + bells[3]])


def joint_probabilities(state, settings: MeasurementSettings, scenario: BsmScenario) -> ProbabilityTable:
    """Enumerate ``p(a, b, c | x, (y,) z)`` for the normalized 4-qubit state."""
    rho = _rho_of(state)
    settings.check(scenario)
    alice = _party_povms((settings.a0, settings.a1))
    charlie = _party_povms((settings.c0, settings.c1))
    bob = _bob_povm(scenario, settings)
    r = rho.reshape(2, 4, 2, 2, 4, 2)
    # Tr[(PA (x) PB (x) PC) rho] = sum PA[i', i] PB[j', j] PC[k', k] rho[i j k, i' j' k']
    if scenario is BsmScenario.TWO_TWO:
        probs = np.einsum("xaIi,ybJj,zcKk,ijkIJK->xyzabc", alice, bob, charlie, r, optimize=True)
    else:
        probs = np.einsum("xaIi,bJj,zcKk,ijkIJK->xzabc", alice, bob, charlie, r, optimize=True)
    return ProbabilityTable(scenario, probs.real.copy())


# (-1)**b_y weights over Bob's outcomes, keyed by y
_ONE_FOUR_SIGNS = {0: (1, 1, -1, -1), 1: (1, -1, 1, -1)}
# y=1 uses only the b0=0 branch, unnormalized
_ONE_THREE_SIGNS = {0: (1, 1, -1), 1: (1, -1, 0)}
_AC_SIGNS = np.array([[1, -1], [-1, 1]])


def correlator(table: ProbabilityTable, x: int, z: int, y: int) -> float:
    """``<A_x B_y C_z>`` from a probability table."""
    if table.scenario is BsmScenario.TWO_TWO:
        p = table.probs[x, y, z]
        signs = np.einsum("ac,b->abc", _AC_SIGNS, np.array([1, -1]))
        return float(np.sum(signs * p))
    p = table.probs[x, z]
    bob = _ONE_FOUR_SIGNS[y] if table.scenario is BsmScenario.ONE_FOUR else _ONE_THREE_SIGNS[y]
    signs = np.einsum("ac,b->abc", _AC_SIGNS, np.array(bob))
    return float(np.sum(signs * p))


def _combine(corr, scenario: BsmScenario) -> BilocalityResult:
    i_val = sum(corr(x, z, 0) for x in (0, 1) for z in (0, 1)) / 4
    j_val = sum((-1) ** (x + z) * corr(x, z, 1) for x in (0, 1) for z in (0, 1)) / 4
    return BilocalityResult(float(i_val), float(j_val), scenario)


def bilocality_value(state, settings: MeasurementSettings, scenario: BsmScenario) -> BilocalityResult:
    """Brute-force I, J and B from the enumerated probability table."""
    table = joint_probabilities(state, settings, scenario)
    return _combine(lambda x, z, y: correlator(table, x, z, y), scenario)


# --- analytic route -----------------------------------------------------


def pauli_tensor(state) -> np.ndarray:
    """``C[i, j, k, l] = Tr[rho s_i (x) s_j (x) s_k (x) s_l]`` with s_0 = identity."""
    r = _rho_of(state).reshape((2,) * 8)
    P = PAULI_BASIS
    c = np.einsum("abcdefgh,iea,jfb,kgc,lhd->ijkl", r, P, P, P, P, optimize=True)
    return c.real.copy()


# Bob's effective two-qubit observable as Pauli-pair coefficients over
# (xx, yy, zz) for the Bell-basis scenarios
_BOB_OBSERVABLES = {
    (BsmScenario.ONE_FOUR, 0): (0.0, 0.0, 1.0),
    (BsmScenario.ONE_FOUR, 1): (1.0, 0.0, 0.0),
    (BsmScenario.ONE_THREE, 0): (0.0, 0.0, 1.0),
    (BsmScenario.ONE_THREE, 1): (0.5, -0.5, 0.0),
}


class CorrelationEvaluator:
    """Evaluates I, J, B for many settings on one fixed state.

    Contracts Bloch vectors against the precomputed Pauli tensor; agrees with
    :func:`bilocality_value` to round-off.
    """

    def __init__(self, state, scenario: BsmScenario):
        self.scenario = scenario
        self.tensor = pauli_tensor(state)[1:, 1:, 1:, 1:]
        if scenario is not BsmScenario.TWO_TWO:
            self._bob = []
            for y in (0, 1):
                diag = np.zeros((3, 3))
                np.fill_diagonal(diag, _BOB_OBSERVABLES[(scenario, y)])
                # (3, 3) A-C matrix for this Bob observable
                self._bob.append(np.einsum("ijkl,jk->il", self.tensor, diag))

    def ij(self, a: np.ndarray, c: np.ndarray, b: Optional[np.ndarray] = None) -> tuple[float, float]:
        """``a``, ``c``: arrays (2, 3); ``b``: (2, 2, 3) as [y, A/C side, xyz]."""
        if self.scenario is BsmScenario.TWO_TWO:
            m0 = np.einsum("ijkl,j,k->il", self.tensor, b[0, 0], b[0, 1])
            m1 = np.einsum("ijkl,j,k->il", self.tensor, b[1, 0], b[1, 1])
        else:
            m0, m1 = self._bob
        i_val = (a[0] + a[1]) @ m0 @ (c[0] + c[1]) / 4
        j_val = (a[0] - a[1]) @ m1 @ (c[0] - c[1]) / 4
        return float(i_val), float(j_val)

    def b_value(self, a, c, b=None) -> float:
        i_val, j_val = self.ij(a, c, b)
        return math.sqrt(abs(i_val)) + math.sqrt(abs(j_val))

    def result(self, settings: MeasurementSettings) -> BilocalityResult:
        a, c, b = settings_arrays(settings)
        return BilocalityResult(*self.ij(a, c, b), self.scenario)


def settings_arrays(settings: MeasurementSettings):
    a = np.array([settings.a0.as_array(), settings.a1.as_array()])
    c = np.array([settings.c0.as_array(), settings.c1.as_array()])
    b = None
    if settings.has_bob:
        b = np.array(
            [
                [settings.b0_a.as_array(), settings.b0_c.as_array()],
                [settings.b1_a.as_array(), settings.b1_c.as_array()],
            ]
        )
    return a, c, b


def two_qubit_marginals(state) -> tuple[np.ndarray, np.ndarray]:
    """Reduced states ``(rho_AB1, rho_B2C)`` of a 4-qubit register."""
    r = _rho_of(state).reshape((2,) * 8)
    rho_ab = np.einsum("abcdefcd->abef", r).reshape(4, 4)
    rho_bc = np.einsum("abcdabgh->cdgh", r).reshape(4, 4)
    return rho_ab, rho_bc


def b22_from_correlation_matrices(t_ab: np.ndarray, t_bc: np.ndarray, settings: MeasurementSettings) -> float:
    """TwoTwo bilocality parameter of a product state from its two T matrices."""
    a, c, b = settings_arrays(settings)
    first = abs((a[0] + a[1]) @ t_ab @ b[0, 0]) * abs(b[0, 1] @ t_bc @ (c[0] + c[1]))
    second = abs((a[0] - a[1]) @ t_ab @ b[1, 0]) * abs(b[1, 1] @ t_bc @ (c[0] - c[1]))
    return 0.5 * (math.sqrt(first) + math.sqrt(second))


def b22_max_analytic(rho_ab, rho_bc) -> float:
    """Maximum of the TwoTwo parameter over all settings for ``rho_ab (x) rho_bc``."""
    ta = eig_sym3(_tt(rho_ab))
    tc = eig_sym3(_tt(rho_bc))
    return math.sqrt(math.sqrt(ta[0] * tc[0]) + math.sqrt(ta[1] * tc[1]))


def _tt(rho) -> np.ndarray:
    t = correlation_matrix(rho)
    return t.T @ t


def _singular_frame(t: np.ndarray, tol: float = 1e-12):
    """SVD ``t = U diag(s) V^T`` with ties resolved toward x, y, z order.

    Diagonal inputs (every pipeline of this package) use the coordinate
    axes directly so that degenerate spectra give reproducible settings.
    """
    off = t - np.diag(np.diag(t))
    if np.max(np.abs(off)) <= tol:
        d = np.diag(t)
        order = sorted(range(3), key=lambda i: -abs(d[i]))
        s = np.abs(d[order])
        u = np.zeros((3, 3))
        v = np.zeros((3, 3))
        for col, i in enumerate(order):
            u[i, col] = 1.0 if d[i] >= 0 else -1.0
            v[i, col] = 1.0
        return u, s, v
    u, s, vt = np.linalg.svd(t)
    return u, s, vt.T


def optimal_two_two_settings(rho_ab, rho_bc) -> MeasurementSettings:
    """Settings attaining :func:`b22_max_analytic` for ``rho_ab (x) rho_bc``.

    Bob measures along the top two right (left) singular directions of the
    AB (BC) correlation matrix; Alice and Charlie split their two settings
    around the matching singular directions at the angle that balances the
    two square-root terms.
    """
    ua, sa, va = _singular_frame(correlation_matrix(rho_ab))
    uc, sc, vc = _singular_frame(correlation_matrix(rho_bc).T)
    alpha = math.sqrt(sa[0] * sc[0])
    beta = math.sqrt(sa[1] * sc[1])
    theta = math.atan2(beta, alpha) if alpha + beta > 0 else math.pi / 4
    ct, st = math.cos(theta), math.sin(theta)

    def bv(arr):
        return BlochVector.normalized(*arr)

    return MeasurementSettings(
        a0=bv(ct * ua[:, 0] + st * ua[:, 1]),
        a1=bv(ct * ua[:, 0] - st * ua[:, 1]),
        c0=bv(ct * uc[:, 0] + st * uc[:, 1]),
        c1=bv(ct * uc[:, 0] - st * uc[:, 1]),
        b0_a=bv(va[:, 0]),
        b0_c=bv(vc[:, 0]),
        b1_a=bv(va[:, 1]),
        b1_c=bv(vc[:, 1]),
    )
