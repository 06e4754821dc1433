"""Amplitude damping, weak measurement and reversal as single-qubit maps.

Filters (weak and reverse-weak measurement) are single Kraus operators that
do not preserve the trace; the lost trace is the post-selection failure
probability and is tracked on :class:`WeightedState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ParameterOutOfRange, ZeroSuccessProbability
from .matcore import STRUCT_TOL, as_matrix, dagger

ZERO_TRACE = 1e-15


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]
    trace_preserving: bool
    name: str = ""

    def __post_init__(self):
        ops = tuple(as_matrix(k) for k in self.operators)
        object.__setattr__(self, "operators", ops)
        total = sum(dagger(k) @ k for k in ops)
        if self.trace_preserving:
            if np.max(np.abs(total - np.eye(2))) > STRUCT_TOL:
                raise ValueError(f"{self.name or 'channel'}: Kraus operators are not complete")
        elif np.linalg.eigvalsh(np.eye(2) - total).min() < -STRUCT_TOL:
            raise ValueError(f"{self.name or 'filter'}: sum K^dag K exceeds identity")

    def completeness(self) -> np.ndarray:
        return sum(dagger(k) @ k for k in self.operators)


@dataclass(frozen=True)
class WeightedState:
    """A density matrix plus the cumulative post-selection success weight.

    ``rho`` may be unnormalized, in which case ``weight == trace(rho)``; after
    :meth:`normalized` the matrix has unit trace and ``weight`` keeps the
    success probability.
    """

    rho: np.ndarray
    weight: float = 1.0

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.rho.shape[0])))

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def normalized(self) -> "WeightedState":
        tr = self.trace
        if tr < ZERO_TRACE:
            raise ZeroSuccessProbability(f"state trace {tr:.3e} after post-selection")
        weight = self.weight if abs(tr - 1.0) <= STRUCT_TOL else tr
        return WeightedState(self.rho / tr, weight)


def _check_unit(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise ParameterOutOfRange(f"{name} = {value!r} outside [0, 1]")


def adc(p: float) -> KrausChannel:
    """Amplitude damping with decay probability ``p``."""
    _check_unit("p", p)
    k0 = np.diag([1.0, math.sqrt(1.0 - p)])
    k1 = np.array([[0.0, math.sqrt(p)], [0.0, 0.0]])
    return KrausChannel((k0, k1), trace_preserving=True, name=f"adc({p})")


def weak_filter(w: float) -> KrausChannel:
    """Non-detection branch of a weak measurement of strength ``w``."""
    _check_unit("w", w)
    return KrausChannel((np.diag([1.0, math.sqrt(1.0 - w)]),), trace_preserving=False, name=f"weak({w})")


def reverse_weak_filter(r: float) -> KrausChannel:
    """Reversal filter of strength ``r``."""
    _check_unit("r", r)
    return KrausChannel((np.diag([math.sqrt(1.0 - r), 1.0]),), trace_preserving=False, name=f"reverse({r})")


def embed(op, arm_index: int, n_qubits: int) -> np.ndarray:
    """``I (x) ... (x) op (x) ... (x) I`` with ``op`` on qubit ``arm_index``."""
    left = np.eye(2**arm_index)
    right = np.eye(2 ** (n_qubits - arm_index - 1))
    return np.kron(np.kron(left, as_matrix(op)), right)


def apply_on_arm(state: WeightedState, ch: KrausChannel, arm_index: int, n_qubits: int) -> WeightedState:
    rho = as_matrix(state.rho)
    dim = 2**n_qubits
    if rho.shape != (dim, dim):
        raise DimensionMismatch(f"state has shape {rho.shape}, expected {(dim, dim)}")
    if not 0 <= arm_index < n_qubits:
        raise DimensionMismatch(f"arm {arm_index} outside a {n_qubits}-qubit register")

    # act on one tensor leg instead of building 2^n x 2^n embeddings
    left, right = 2**arm_index, 2 ** (n_qubits - arm_index - 1)
    r = rho.reshape(left, 2, right, left, 2, right)
    out = np.zeros_like(r)
    for k in ch.operators:
        out += np.einsum("ij,ajbckd,lk->aibcld", k, r, k.conj(), optimize=True)
    new_rho = out.reshape(dim, dim)

    if ch.trace_preserving:
        return WeightedState(new_rho, state.weight)
    old_tr = float(np.trace(rho).real)
    new_tr = float(np.trace(new_rho).real)
    weight = state.weight * new_tr / old_tr if old_tr > 0 else 0.0
    return WeightedState(new_rho, weight)
