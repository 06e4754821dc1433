"""End-to-end decoherence and weak-measurement-protection pipelines.

Noise cases: damping on Alice's arm only (SINGLE_ARM, "c1") or on both
Alice's and Charlie's arms (BOTH_ARMS, "c2"). Protection cases add a weak
measurement before the damping and a reversal after it on the same arms
("d1", "d2").
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .bilocality import (
    BsmScenario,
    MeasurementSettings,
    b22_max_analytic,
    bilocality_value,
    optimal_two_two_settings,
    two_qubit_marginals,
)
from .channels import WeightedState, adc, apply_on_arm, reverse_weak_filter, weak_filter
from .errors import ParameterOutOfRange, ZeroSuccessProbability
from .states import BellKind, BlochVector, bell_state

N_QUBITS = 4
ARM_A, ARM_C = 0, 3
# largest reverse strength probed; r = 1 annihilates the state
R_MAX = 1.0 - 1e-9


class NoiseCase(enum.Enum):
    SINGLE_ARM = "c1"
    BOTH_ARMS = "c2"


class ProtectionCase(enum.Enum):
    UNPROTECTED = "none"
    WEAK_SINGLE_ARM = "d1"
    WEAK_BOTH_ARMS = "d2"

    @property
    def noise(self) -> Optional[NoiseCase]:
        return _PROTECTION_NOISE[self]


_PROTECTION_NOISE = {
    ProtectionCase.UNPROTECTED: None,
    ProtectionCase.WEAK_SINGLE_ARM: NoiseCase.SINGLE_ARM,
    ProtectionCase.WEAK_BOTH_ARMS: NoiseCase.BOTH_ARMS,
}

AUTO = "auto"


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: BsmScenario
    noise: NoiseCase
    protection: ProtectionCase = ProtectionCase.UNPROTECTED
    p: float = 0.0
    w: float = 0.0
    r: Union[float, str] = AUTO
    initial_bell: BellKind = BellKind.PSI_PLUS

    def __post_init__(self):
        for name in ("p", "w"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterOutOfRange(f"{name} = {value!r} outside [0, 1]")
        if self.r != AUTO and not 0.0 <= float(self.r) <= 1.0:
            raise ParameterOutOfRange(f"r = {self.r!r} outside [0, 1]")
        if self.protection is ProtectionCase.UNPROTECTED and (self.w != 0.0 or self.r != AUTO):
            raise ValueError("w and r apply only to weak-measurement cases")
        if self.protection is not ProtectionCase.UNPROTECTED and self.protection.noise is not self.noise:
            raise ValueError(f"{self.protection.value} protection requires noise case {self.protection.noise.value}")

    @property
    def arms(self) -> tuple[int, ...]:
        return (ARM_A,) if self.noise is NoiseCase.SINGLE_ARM else (ARM_A, ARM_C)

    @property
    def case_label(self) -> str:
        if self.protection is ProtectionCase.UNPROTECTED:
            return self.noise.value
        return self.protection.value


@dataclass(frozen=True)
class ProtocolOutcome:
    final_state: WeightedState
    success_prob: float
    settings_used: Optional[MeasurementSettings]
    r_used: Optional[float] = None


def initial_state(kind: BellKind = BellKind.PSI_PLUS) -> WeightedState:
    """``rho_AB1 (x) rho_B2C`` with both pairs in the same Bell state."""
    bell = bell_state(kind)
    return WeightedState(np.kron(bell, bell), 1.0)


def pipeline_stages(spec: ScenarioSpec, r: Optional[float] = None):
    """Yield ``(stage_name, WeightedState)`` after every operation, unnormalized."""
    protected = spec.protection is not ProtectionCase.UNPROTECTED
    if protected and r is None:
        r = resolve_r(spec)
    state = initial_state(spec.initial_bell)
    yield "initial", state
    if protected:
        for arm in spec.arms:
            state = apply_on_arm(state, weak_filter(spec.w), arm, N_QUBITS)
        yield "weak", state
    for arm in spec.arms:
        state = apply_on_arm(state, adc(spec.p), arm, N_QUBITS)
    yield "damping", state
    if protected:
        for arm in spec.arms:
            state = apply_on_arm(state, reverse_weak_filter(r), arm, N_QUBITS)
        yield "reverse", state


def resolve_r(spec: ScenarioSpec) -> float:
    if spec.protection is ProtectionCase.UNPROTECTED:
        return 0.0
    if spec.r == AUTO:
        return r_opt(spec.scenario, spec.protection, spec.p, spec.w)
    return float(spec.r)


def run_pipeline(spec: ScenarioSpec, settings: Optional[MeasurementSettings] = None) -> ProtocolOutcome:
    """Prepare, filter, damp and post-select; return the normalized state.

    ``settings`` is recorded on the outcome; when omitted the frozen
    unprotected settings for this scenario are used.
    """
    r = resolve_r(spec) if spec.protection is not ProtectionCase.UNPROTECTED else None
    *_, (_, final) = pipeline_stages(spec, r)
    norm = final.normalized()
    if settings is None:
        settings = frozen_settings(spec.scenario, spec.noise, spec.p, spec.initial_bell)
    success = 1.0 if spec.protection is ProtectionCase.UNPROTECTED else norm.weight
    return ProtocolOutcome(WeightedState(norm.rho, success), success, settings, r)


def evaluate(spec: ScenarioSpec, settings: Optional[MeasurementSettings] = None):
    """Brute-force bilocality result of the pipeline output."""
    outcome = run_pipeline(spec, settings)
    return bilocality_value(outcome.final_state, outcome.settings_used, spec.scenario), outcome


# --- closed forms for the unprotected pipelines --------------------------


def closed_form_unprotected(scenario: BsmScenario, noise: NoiseCase, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ParameterOutOfRange(f"p = {p!r} outside [0, 1]")
    s = math.sqrt(1.0 - p)
    if scenario is BsmScenario.TWO_TWO:
        v = 2.0 * s if noise is NoiseCase.SINGLE_ARM else 2.0 * (1.0 - p)
    elif scenario is BsmScenario.ONE_FOUR:
        v = (1.0 + s) * s if noise is NoiseCase.SINGLE_ARM else (1.0 - p) * (2.0 - p)
    else:
        v = s * (1.0 + 2.0 * s) / 2.0 if noise is NoiseCase.SINGLE_ARM else (1.0 - p) * (3.0 - 2.0 * p) / 2.0
    return math.sqrt(v)


# TwoTwo optima as printed with two decimals; normalized on construction
_LITERAL_TWO_TWO = {
    NoiseCase.SINGLE_ARM: dict(
        a0=(-0.77, -0.64, 0), a1=(-0.64, 0.77, 0),
        b0_a=(0.09, -0.99, 0), b1_a=(-0.09, -0.99, 0),
        b0_c=(0, 0, 1), b1_c=(1, 0, 0),
        c0=(1, 0, 1), c1=(-1, 0, 1),
    ),
    NoiseCase.BOTH_ARMS: dict(
        a0=(-0.78, -0.62, 0), a1=(-0.62, 0.78, 0),
        b0_a=(0.99, 0.12, 0), b1_a=(-0.12, -0.99, 0),
        b0_c=(-0.85, 0.52, 0), b1_c=(-0.52, -0.85, 0),
        c0=(-0.97, -0.24, 0), c1=(-0.24, 0.97, 0),
    ),
}


def _xz(cx: float, cz: float) -> BlochVector:
    return BlochVector.normalized(cx, 0.0, cz)


def published_settings(scenario: BsmScenario, noise: NoiseCase, p: float) -> MeasurementSettings:
    """Published optimal observables for the unprotected pipelines.

    OneFour and OneThree settings lie in the x-z plane and depend on ``p``;
    the TwoTwo vectors are fixed two-decimal literals.
    """
    if not 0.0 <= p <= 1.0:
        raise ParameterOutOfRange(f"p = {p!r} outside [0, 1]")
    s = math.sqrt(1.0 - p)
    if scenario is BsmScenario.TWO_TWO:
        lit = {k: BlochVector.normalized(*v) for k, v in _LITERAL_TWO_TWO[noise].items()}
        return MeasurementSettings(**lit)
    if scenario is BsmScenario.ONE_FOUR:
        if noise is NoiseCase.SINGLE_ARM:
            cx, cz = 1.0, math.sqrt(s)
        else:
            cx, cz = 1.0, math.sqrt(1.0 - p)
        a0, a1 = _xz(cx, cz), _xz(-cx, cz)
        return MeasurementSettings(a0, a1, a0, a1)
    if noise is NoiseCase.SINGLE_ARM:
        cx, cz = 1.0, math.sqrt(2.0 * s)
        a0, a1 = _xz(-cx, cz), _xz(cx, cz)
        return MeasurementSettings(a0, a1, a0, a1)
    cx, cz = 1.0, math.sqrt(2.0 * (1.0 - p))
    return MeasurementSettings(_xz(-cx, cz), _xz(cx, cz), _xz(cx, cz), _xz(-cx, cz))


def frozen_settings(
    scenario: BsmScenario, noise: NoiseCase, p: float, bell: BellKind = BellKind.PSI_PLUS
) -> MeasurementSettings:
    """Settings optimal for the unprotected pipeline at damping ``p``.

    For TwoTwo these are built from the correlation matrices of the damped
    state, since the printed literal vectors do not reach the maximum.
    """
    if scenario is not BsmScenario.TWO_TWO:
        return published_settings(scenario, noise, p)
    spec = ScenarioSpec(scenario, noise, ProtectionCase.UNPROTECTED, p, initial_bell=bell)
    *_, (_, damped) = pipeline_stages(spec)
    return optimal_two_two_settings(*two_qubit_marginals(damped.rho))


def b22_unprotected_analytic(noise: NoiseCase, p: float, bell: BellKind = BellKind.PSI_PLUS) -> float:
    spec = ScenarioSpec(BsmScenario.TWO_TWO, noise, ProtectionCase.UNPROTECTED, p, initial_bell=bell)
    *_, (_, damped) = pipeline_stages(spec)
    return b22_max_analytic(*two_qubit_marginals(damped.rho))


# --- protected pipelines -------------------------------------------------


def _check_pw(p: float, w: float):
    for name, value in (("p", p), ("w", w)):
        if not 0.0 <= value <= 1.0:
            raise ParameterOutOfRange(f"{name} = {value!r} outside [0, 1]")


def _denominator(p: float, w: float, r: float) -> float:
    # equals twice the single-arm success probability
    return 2.0 - (1.0 + p * (1.0 - w)) * r - w


def success_probability(protection: ProtectionCase, p: float, w: float, r: float) -> float:
    """Post-selection success probability of the weak/reverse pipeline."""
    if protection is ProtectionCase.UNPROTECTED:
        return 1.0
    single = _denominator(p, w, r) / 2.0
    return single if protection is ProtectionCase.WEAK_SINGLE_ARM else single * single


def protected_expression(scenario: BsmScenario, protection: ProtectionCase, p: float, w: float, r: float) -> float:
    """Protected bilocality value at reverse strength ``r`` with frozen settings.

    Defined for OneFour and OneThree; TwoTwo is only known in closed form at
    the optimal reverse strength (:func:`closed_form_protected`).
    """
    if scenario is BsmScenario.TWO_TWO:
        raise ValueError("no closed form for TwoTwo at arbitrary r")
    if protection is ProtectionCase.UNPROTECTED:
        raise ValueError("protected_expression needs a weak-measurement case")
    _check_pw(p, w)
    q = p * (1.0 - w)
    d = _denominator(p, w, r)
    if d <= 0.0:
        raise ZeroSuccessProbability(f"no surviving state at p={p}, w={w}, r={r}")
    lin = (1.0 - q) * (2.0 - r) - w
    root = math.sqrt(max((1.0 - w) * (1.0 - r), 0.0))
    s = math.sqrt(1.0 - p)
    if scenario is BsmScenario.ONE_FOUR:
        if protection is ProtectionCase.WEAK_SINGLE_ARM:
            return math.sqrt(s / (1.0 + s)) / math.sqrt(d) * (math.sqrt(max(lin, 0.0)) + math.sqrt(2.0 * root))
        return math.sqrt((1.0 - p) / (2.0 - p)) / d * (lin + 2.0 * root)
    if protection is ProtectionCase.WEAK_SINGLE_ARM:
        return math.sqrt(s / (1.0 + 2.0 * s)) / math.sqrt(d) * (math.sqrt(max(2.0 * lin, 0.0)) + math.sqrt(root))
    return math.sqrt(2.0 * (1.0 - p) / (3.0 - 2.0 * p)) / d * (lin + root)


def r_opt_two_two(p: float, w: float) -> float:
    """Optimal reverse strength for TwoTwo, both protection cases."""
    return (2.0 * p + w - 2.0 * p * w) / (1.0 + p - p * w)


def r_opt_published(scenario: BsmScenario, p: float, w: float) -> float:
    """Published closed-form optimum for the two-arm OneFour/OneThree cases.

    Reproduced verbatim for comparison against the numeric argmax; the
    OneThree form does not locate the maximum (see :func:`r_opt`).
    """
    u = 1.0 - w
    den = (1.0 + p - p * w) ** 2
    if scenario is BsmScenario.ONE_FOUR:
        x = (1 - p) * math.sqrt((1 - p) + p * (1 - p) * u + p**2 * (1 - p) ** 2 * u**2)
        inner = (2 + w) + 2 * x * u + 2 * p**2 * (2 - p) * u**2 + 2 * p * w * u
    elif scenario is BsmScenario.ONE_THREE:
        y = (1 - p) * math.sqrt((1 - p) + p * (1 - p) * u + 4 * p**2 * (1 - p) ** 2 * u**2)
        inner = (2 + w) + 4 * y * u + 8 * p**2 * (2 - p) * u**2 + 2 * p * u * (3 - 4 * w)
    else:
        return r_opt_two_two(p, w)
    return (w + p * u * inner) / den


def r_opt(scenario: BsmScenario, protection: ProtectionCase, p: float, w: float, cfg=None) -> float:
    """Reverse strength maximizing the protected value with frozen settings.

    Closed forms are used for TwoTwo (both cases) and OneFour two-arm; the
    remaining cases are maximized numerically by golden-section search.
    """
    _check_pw(p, w)
    if protection is ProtectionCase.UNPROTECTED:
        return 0.0
    if scenario is BsmScenario.TWO_TWO:
        return min(r_opt_two_two(p, w), 1.0)
    if scenario is BsmScenario.ONE_FOUR and protection is ProtectionCase.WEAK_BOTH_ARMS:
        return min(r_opt_published(scenario, p, w), 1.0)
    from .optimizer import maximize_over_r

    spec = ScenarioSpec(scenario, protection.noise, protection, p, w)
    return maximize_over_r(spec, cfg, objective=lambda r: protected_expression(scenario, protection, p, w, r)).best_r


def _degenerate_corner(p: float, w: float) -> bool:
    return p == 1.0 and w == 1.0


def closed_form_protected(scenario: BsmScenario, protection: ProtectionCase, p: float, w: float) -> float:
    """Protected bilocality value at the optimal reverse strength."""
    _check_pw(p, w)
    if _degenerate_corner(p, w):
        raise ZeroSuccessProbability("p = 1 and w = 1 leave no state to post-select")
    if protection is ProtectionCase.UNPROTECTED:
        raise ValueError("closed_form_protected needs a weak-measurement case")
    if scenario is BsmScenario.TWO_TWO:
        q = p * (1.0 - w)
        if protection is ProtectionCase.WEAK_SINGLE_ARM:
            return math.sqrt(2.0) / (1.0 + q) ** 0.25
        return math.sqrt(2.0 / (1.0 + q))
    r = min(r_opt(scenario, protection, p, w), R_MAX)
    return protected_expression(scenario, protection, p, w, r)


def protected_success(scenario: BsmScenario, protection: ProtectionCase, p: float, w: float) -> float:
    """Success probability at the optimal reverse strength."""
    return success_probability(protection, p, w, r_opt(scenario, protection, p, w))


def average_value(scenario: BsmScenario, protection: ProtectionCase, p: float, w: float) -> float:
    """Success-weighted mix of the protected value and the bilocal bound 1."""
    b = closed_form_protected(scenario, protection, p, w)
    ps = protected_success(scenario, protection, p, w)
    return ps * b + (1.0 - ps)


def with_r(spec: ScenarioSpec, r: float) -> ScenarioSpec:
    return replace(spec, r=r)
