"""Derivative-free maximization over settings, reverse strength and damping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .bilocality import (
    BilocalityResult,
    BsmScenario,
    CorrelationEvaluator,
    MeasurementSettings,
    bilocality_value,
)
from .errors import NoCrossing
from .states import BlochVector

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
R_UPPER = 1.0 - 1e-9
COARSE_POINTS = 64


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 32
    max_iters: int = 2000
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")


@dataclass(frozen=True)
class OptimumReport:
    best_value: float
    best_settings: Optional[MeasurementSettings]
    best_r: Optional[float]
    evaluations: int
    result: Optional[BilocalityResult] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "best_value": self.best_value,
            "best_r": self.best_r,
            "evaluations": self.evaluations,
            "best_settings": None if self.best_settings is None else self.best_settings.to_dict(),
        }


# --- settings ------------------------------------------------------------


def _n_vectors(scenario: BsmScenario) -> int:
    return 8 if scenario is BsmScenario.TWO_TWO else 4


def _angles_to_vectors(params: np.ndarray) -> np.ndarray:
    theta, phi = params[0::2], params[1::2]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=1)


def _vectors_to_angles(vectors) -> np.ndarray:
    out = []
    for v in vectors:
        out += [math.acos(max(-1.0, min(1.0, v.z))), math.atan2(v.y, v.x)]
    return np.array(out)


def _split(vecs: np.ndarray, scenario: BsmScenario):
    a, c = vecs[0:2], vecs[2:4]
    b = None
    if scenario is BsmScenario.TWO_TWO:
        # order b0_a, b0_c, b1_a, b1_c
        b = vecs[4:8].reshape(2, 2, 3)
    return a, c, b


def _settings_from_params(params: np.ndarray, scenario: BsmScenario) -> MeasurementSettings:
    vecs = [BlochVector.normalized(*v) for v in _angles_to_vectors(params)]
    return MeasurementSettings.from_vectors(vecs)


def _random_angles(rng: np.random.Generator, n_vectors: int) -> np.ndarray:
    # uniform on the sphere
    z = rng.uniform(-1.0, 1.0, n_vectors)
    phi = rng.uniform(-math.pi, math.pi, n_vectors)
    out = np.empty(2 * n_vectors)
    out[0::2] = np.arccos(z)
    out[1::2] = phi
    return out


def maximize_over_settings(
    state,
    scenario: BsmScenario,
    cfg: Optional[OptimizerConfig] = None,
    initial: Optional[MeasurementSettings] = None,
) -> OptimumReport:
    """Nelder-Mead over Bloch angles with seeded random restarts.

    Restart 0 starts from ``initial`` (normally the published settings) when
    given. The reported value is re-evaluated by brute force.
    """
    cfg = cfg or OptimizerConfig()
    evaluator = CorrelationEvaluator(state, scenario)
    n_vec = _n_vectors(scenario)
    rng = np.random.default_rng(cfg.seed)
    evaluations = 0

    def negative_b(params):
        a, c, b = _split(_angles_to_vectors(params), scenario)
        return -evaluator.b_value(a, c, b)

    best_params, best_val = None, -math.inf
    for k in range(cfg.restarts):
        if k == 0 and initial is not None:
            initial.check(scenario)
            x0 = _vectors_to_angles(initial.vectors())
        else:
            x0 = _random_angles(rng, n_vec)
        res = minimize(
            negative_b,
            x0,
            method="Nelder-Mead",
            options={"maxiter": cfg.max_iters, "maxfev": 2 * cfg.max_iters, "xatol": cfg.tol, "fatol": cfg.tol, "adaptive": True},
        )
        evaluations += int(res.nfev)
        x, val = res.x, -float(res.fun)
        if k == 0 and initial is not None:
            start_val = -negative_b(x0)
            if start_val > val:
                x, val = x0, start_val
        # strict comparison keeps the lowest restart index on ties
        if val > best_val:
            best_params, best_val = x, val

    settings = _settings_from_params(best_params, scenario)
    result = bilocality_value(state, settings, scenario)
    return OptimumReport(result.b_val, settings, None, evaluations + 1, result)


# --- scalar search over r -------------------------------------------------


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float, int]:
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x), evaluations)``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        n += 1
    x = 0.5 * (a + b)
    return x, f(x), n + 1


def scan_then_golden(f: Callable[[float], float], lo: float = 0.0, hi: float = R_UPPER, tol: float = 1e-10):
    """Coarse scan to bracket the global maximum, then golden-section refine."""
    grid = np.linspace(lo, hi, COARSE_POINTS)
    values = [f(float(x)) for x in grid]
    k = int(np.argmax(values))
    best_x, best_v = float(grid[k]), float(values[k])
    if max(values) - min(values) <= 1e-14:
        # flat objective: argmax undefined, keep the smallest r
        return best_x, best_v, len(grid)
    x, v, n = golden_section_max(f, float(grid[max(k - 1, 0)]), float(grid[min(k + 1, len(grid) - 1)]), tol)
    # a refinement that only ties to rounding keeps the grid point, so boundary maxima stay exact
    if v > best_v + 1e-14 * abs(best_v):
        best_x, best_v = x, v
    return best_x, best_v, len(grid) + n


def maximize_over_r(spec, cfg: Optional[OptimizerConfig] = None, *, objective=None, settings=None) -> OptimumReport:
    """Maximize the protected value over the reverse strength ``r``.

    By default the objective is the brute-force pipeline value with the
    frozen unprotected settings; a cheaper scalar ``objective(r)`` may be
    supplied instead.
    """
    from . import protocols

    if spec.protection is protocols.ProtectionCase.UNPROTECTED:
        raise ValueError("maximize_over_r needs a weak-measurement case")
    cfg = cfg or OptimizerConfig()
    if objective is None:
        if settings is None:
            settings = protocols.frozen_settings(spec.scenario, spec.noise, spec.p, spec.initial_bell)

        def objective(r):
            outcome = protocols.run_pipeline(protocols.with_r(spec, r), settings)
            return bilocality_value(outcome.final_state, settings, spec.scenario).b_val

    r, value, n = scan_then_golden(objective, 0.0, R_UPPER, cfg.tol)
    return OptimumReport(float(value), settings, float(r), n)


# --- thresholds ------------------------------------------------------------


def bisect_root(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo > 0) == (ghi > 0):
        raise NoCrossing(f"g({lo}) = {glo:.3g} and g({hi}) = {ghi:.3g} share a sign")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_p(scenario: BsmScenario, noise, cfg: Optional[OptimizerConfig] = None) -> float:
    """Damping at which the unprotected maximum drops to the bilocal bound."""
    from .protocols import closed_form_unprotected

    tol = min((cfg or OptimizerConfig()).tol, 1e-10)
    return bisect_root(lambda p: closed_form_unprotected(scenario, noise, p) - 1.0, 0.0, 1.0, tol)
