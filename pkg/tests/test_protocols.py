import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from nonbilocal import protocols as pr
from nonbilocal.bilocality import BsmScenario, bilocality_value
from nonbilocal.errors import ParameterOutOfRange, ZeroSuccessProbability
from nonbilocal.matcore import is_density_matrix
from nonbilocal.protocols import NoiseCase, ProtectionCase, ScenarioSpec
from nonbilocal.states import BellKind

import oracles

S22, S14, S13 = BsmScenario.TWO_TWO, BsmScenario.ONE_FOUR, BsmScenario.ONE_THREE
C1, C2 = NoiseCase.SINGLE_ARM, NoiseCase.BOTH_ARMS
D1, D2 = ProtectionCase.WEAK_SINGLE_ARM, ProtectionCase.WEAK_BOTH_ARMS
ARMS = {D1: (0,), D2: (0, 3)}

UNPROTECTED = list(itertools.product(BsmScenario, NoiseCase))


def stationary_r(scenario, p, w):
    """Root of d/dr of the two-arm protected value, solved by hand.

    With s = sqrt(1-r) the stationarity condition is the quadratic
    c e s^2 + 4 d q s - c d = 0.
    """
    u = 1 - w
    q, d, e = p * u, (1 - p) * u, 1 + p * u
    c = math.sqrt(u) * (2 if scenario is S14 else 1)
    s = (-2 * d * q + math.sqrt(4 * d * d * q * q + c * c * e * d)) / (c * e)
    return 1 - s * s


class TestSpec:
    def test_rejects_w_without_protection(self):
        with pytest.raises(ValueError):
            ScenarioSpec(S22, C1, w=0.2)

    def test_rejects_mismatched_noise(self):
        with pytest.raises(ValueError):
            ScenarioSpec(S22, C1, D2, 0.1, 0.1)

    @pytest.mark.parametrize("field", ["p", "w"])
    def test_range(self, field):
        kwargs = {"p": 0.1, "w": 0.1, field: 1.5}
        with pytest.raises(ParameterOutOfRange):
            ScenarioSpec(S22, C1, D1, **kwargs)

    def test_arms(self):
        assert ScenarioSpec(S22, C1).arms == (0,)
        assert ScenarioSpec(S22, C2).arms == (0, 3)


class TestPipeline:
    def test_fresh(self):
        out = pr.run_pipeline(ScenarioSpec(S22, C1, p=0.0))
        np.testing.assert_allclose(out.final_state.rho, pr.initial_state().rho, atol=1e-15)
        assert out.success_prob == 1.0

    @pytest.mark.parametrize("p,w", [(0.3, 0.2), (0.7, 0.5), (0.0, 0.9)])
    def test_success_at_r_opt(self, p, w):
        one = pr.run_pipeline(ScenarioSpec(S22, C1, D1, p, w))
        two = pr.run_pipeline(ScenarioSpec(S22, C2, D2, p, w))
        assert one.success_prob == pytest.approx((1 - p) * (1 - w), abs=1e-12)
        assert two.success_prob == pytest.approx(((1 - p) * (1 - w)) ** 2, abs=1e-12)

    @pytest.mark.parametrize("prot", [D1, D2])
    def test_state_matches_oracle(self, prot):
        p, w, r = 0.4, 0.3, 0.6
        spec = ScenarioSpec(S14, prot.noise, prot, p, w, r)
        *_, (_, final) = pr.pipeline_stages(spec)
        np.testing.assert_allclose(final.rho, oracles.protected_state(p, w, r, ARMS[prot]), atol=1e-14)

    def test_stage_names(self):
        names = [n for n, _ in pr.pipeline_stages(ScenarioSpec(S13, C2, D2, 0.2, 0.3, 0.4))]
        assert names == ["initial", "weak", "damping", "reverse"]
        assert [n for n, _ in pr.pipeline_stages(ScenarioSpec(S13, C2, p=0.2))] == ["initial", "damping"]

    @hsettings(max_examples=25, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 0.99), st.floats(0, 0.99), st.sampled_from([D1, D2]))
    def test_physical_stages(self, p, w, r, prot):
        for _, state in pr.pipeline_stages(ScenarioSpec(S14, prot.noise, prot, p, w, r)):
            assert 0 <= state.weight <= 1 + 1e-12
            if state.trace > 1e-9:
                assert is_density_matrix(state.normalized().rho, tol=1e-10)


class TestUnprotectedClosedForms:
    @pytest.mark.parametrize("scenario,noise,p,expected", [
        (S22, C1, 0.75, 1.0),
        (S14, C2, 0.0, math.sqrt(2)),
        (S13, C1, 0.2, math.sqrt(math.sqrt(0.8) * (1 + 2 * math.sqrt(0.8)) / 2)),
        (S22, C1, 0.5, 1.189207115002721),
        (S13, C2, 0.25, math.sqrt(0.75 * 2.5 / 2)),
    ])
    def test_values(self, scenario, noise, p, expected):
        assert pr.closed_form_unprotected(scenario, noise, p) == pytest.approx(expected, abs=1e-12)

    def test_one_three_digits(self):
        assert pr.closed_form_unprotected(S13, C1, 0.2) == pytest.approx(1.116787, abs=1e-6)

    @pytest.mark.parametrize("scenario,noise", UNPROTECTED)
    def test_brute_force_grid(self, scenario, noise):
        for p in np.linspace(0, 1, 101):
            res, _ = pr.evaluate(ScenarioSpec(scenario, noise, p=float(p)))
            assert res.b_val == pytest.approx(pr.closed_form_unprotected(scenario, noise, float(p)), abs=1e-8)

    @pytest.mark.parametrize("scenario,noise", [(S14, C1), (S14, C2), (S13, C1), (S13, C2)])
    def test_against_explicit_oracle(self, scenario, noise):
        p = 0.35
        s = pr.published_settings(scenario, noise, p)
        rho = oracles.protected_state(p, 0.0, 0.0, (0,) if noise is C1 else (0, 3))
        b = oracles.b_value(rho, (s.a0.as_array(), s.a1.as_array()), (s.c0.as_array(), s.c1.as_array()), scenario.value)
        assert b == pytest.approx(pr.closed_form_unprotected(scenario, noise, p), abs=1e-12)

    @pytest.mark.parametrize("noise", list(NoiseCase))
    def test_two_two_analytic(self, noise):
        for p in np.linspace(0, 1, 21):
            assert pr.b22_unprotected_analytic(noise, float(p)) == pytest.approx(
                pr.closed_form_unprotected(S22, noise, float(p)), abs=1e-12)

    @pytest.mark.parametrize("scenario,noise", UNPROTECTED)
    def test_monotone(self, scenario, noise):
        vals = [pr.closed_form_unprotected(scenario, noise, float(p)) for p in np.linspace(0, 1, 101)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("scenario", list(BsmScenario))
    def test_single_arm_dominates(self, scenario):
        for p in np.linspace(0, 1, 101):
            assert pr.closed_form_unprotected(scenario, C1, float(p)) >= pr.closed_form_unprotected(scenario, C2, float(p))


class TestPublishedSettings:
    def test_one_four_p0(self):
        a0 = pr.published_settings(S14, C2, 0.0).a0
        np.testing.assert_allclose(a0.as_array(), [1 / math.sqrt(2), 0, 1 / math.sqrt(2)], atol=1e-15)

    def test_one_three_p1(self):
        a0 = pr.published_settings(S13, C2, 1.0).a0
        np.testing.assert_allclose(a0.as_array(), [-1, 0, 0], atol=1e-15)

    def test_two_two_literal(self):
        a0 = pr.published_settings(S22, C1, 0.4).a0.as_array()
        np.testing.assert_allclose(a0 / np.linalg.norm(a0), np.array([-0.77, -0.64, 0]) / math.hypot(0.77, 0.64))

    def test_frozen_two_two_reach_maximum(self):
        for p in (0.0, 0.3, 0.8):
            for noise in NoiseCase:
                s = pr.frozen_settings(S22, noise, p)
                res, _ = pr.evaluate(ScenarioSpec(S22, noise, p=p), s)
                assert res.b_val == pytest.approx(pr.closed_form_unprotected(S22, noise, p), abs=1e-12)


class TestProtected:
    def test_r_opt_two_two(self):
        assert pr.r_opt(S22, D1, 0.0, 0.0) == 0.0
        assert pr.r_opt(S22, D1, 0.5, 0.0) == pytest.approx(2 / 3)
        assert pr.r_opt(S22, D2, 0.4, 0.2) == pytest.approx(0.84 / 1.32)

    @pytest.mark.parametrize("p", [0.0, 0.3, 0.9, 0.999])
    def test_two_two_d1_w1(self, p):
        assert pr.closed_form_protected(S22, D1, p, 1.0) == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_two_two_d2_example(self):
        assert pr.closed_form_protected(S22, D2, 0.5, 0.5) == pytest.approx(math.sqrt(2 / 1.25), abs=1e-12)
        assert pr.closed_form_protected(S22, D2, 0.5, 0.5) == pytest.approx(1.264911, abs=1e-6)

    def test_corner_raises(self):
        for s, prot in itertools.product(BsmScenario, (D1, D2)):
            with pytest.raises(ZeroSuccessProbability):
                pr.closed_form_protected(s, prot, 1.0, 1.0)

    @pytest.mark.parametrize("prot", [D1, D2])
    def test_two_two_brute(self, prot):
        for p, w in itertools.product(np.linspace(0, 0.95, 6), np.linspace(0, 0.95, 6)):
            p, w = float(p), float(w)
            spec = ScenarioSpec(S22, prot.noise, prot, p, w)
            res, out = pr.evaluate(spec, pr.frozen_settings(S22, prot.noise, p))
            assert res.b_val == pytest.approx(pr.closed_form_protected(S22, prot, p, w), abs=1e-8)

    @pytest.mark.parametrize("scenario,prot", list(itertools.product([S14, S13], [D1, D2])))
    def test_expression_matches_oracle(self, scenario, prot):
        s = pr.published_settings(scenario, prot.noise, 0.0)
        for p, w, r in ((0.3, 0.2, 0.5), (0.6, 0.1, 0.85), (0.05, 0.8, 0.2)):
            s = pr.published_settings(scenario, prot.noise, p)
            rho = oracles.protected_state(p, w, r, ARMS[prot])
            rho = rho / np.trace(rho)
            b = oracles.b_value(rho, (s.a0.as_array(), s.a1.as_array()), (s.c0.as_array(), s.c1.as_array()), scenario.value)
            assert pr.protected_expression(scenario, prot, p, w, r) == pytest.approx(b, abs=1e-12)

    @pytest.mark.parametrize("scenario,prot", list(itertools.product([S14, S13], [D1, D2])))
    def test_r_opt_is_argmax(self, scenario, prot):
        for p, w in ((0.2, 0.0), (0.5, 0.3), (0.8, 0.6)):
            r = pr.r_opt(scenario, prot, p, w)
            best = pr.protected_expression(scenario, prot, p, w, r)
            scan = max(pr.protected_expression(scenario, prot, p, w, float(x)) for x in np.linspace(0, 0.999, 2000))
            assert best >= scan - 1e-9

    @pytest.mark.parametrize("scenario", [S14, S13])
    def test_stationary_root(self, scenario):
        for p, w in itertools.product((0.1, 0.4, 0.7, 0.95), (0.0, 0.3, 0.8)):
            assert pr.r_opt(scenario, D2, p, w) == pytest.approx(stationary_r(scenario, p, w), abs=1e-6)

    def test_one_four_printed_r_opt_holds(self):
        for p, w in itertools.product((0.1, 0.4, 0.7), (0.0, 0.3, 0.8)):
            assert pr.r_opt_published(S14, p, w) == pytest.approx(stationary_r(S14, p, w), abs=1e-9)

    def test_one_three_printed_r_opt_disagrees(self):
        # the printed form is not a stationary point; the numeric argmax is used instead
        assert pr.r_opt_published(S13, 0.2, 0.0) == pytest.approx(0.982546, abs=1e-6)
        assert pr.r_opt(S13, D2, 0.2, 0.0) == pytest.approx(0.649212, abs=1e-5)

    @pytest.mark.parametrize("scenario,prot", list(itertools.product(BsmScenario, [D1, D2])))
    def test_protected_dominates_below_projective(self, scenario, prot):
        for p, w in itertools.product(np.linspace(0, 1, 11), np.linspace(0, 0.9, 10)):
            p, w = float(p), float(w)
            assert pr.closed_form_protected(scenario, prot, p, w) >= pr.closed_form_unprotected(scenario, prot.noise, p) - 1e-9

    def test_projective_limit_loses_one_four(self):
        # w = 1 keeps only |0>, which leaves the BSM correlations of a product state
        assert pr.closed_form_protected(S14, D2, 0.2, 1.0) < pr.closed_form_unprotected(S14, C2, 0.2)

    def test_two_two_d1_always_violates(self):
        for p, w in itertools.product(np.linspace(0, 1, 21), np.linspace(0, 1, 21)):
            if p == 1.0 and w == 1.0:
                continue
            assert pr.closed_form_protected(S22, D1, float(p), float(w)) >= 1.0


class TestAverage:
    @pytest.mark.parametrize("scenario,prot", list(itertools.product(BsmScenario, [D1, D2])))
    def test_fresh(self, scenario, prot):
        assert pr.average_value(scenario, prot, 0.0, 0.0) == pytest.approx(
            pr.closed_form_unprotected(scenario, prot.noise, 0.0), abs=1e-12)

    def test_two_two_d1_example(self):
        expected = 0.375 * (math.sqrt(2) / 1.375**0.25) + 0.625
        assert pr.average_value(S22, D1, 0.5, 0.25) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("scenario,prot", list(itertools.product(BsmScenario, [D1, D2])))
    def test_improves_somewhere(self, scenario, prot):
        better = any(
            pr.average_value(scenario, prot, float(p), float(w)) > pr.closed_form_unprotected(scenario, prot.noise, float(p))
            for p, w in itertools.product(np.linspace(0, 1, 21), np.linspace(0, 0.95, 20))
        )
        assert better

    def test_success_weighting(self):
        p, w = 0.4, 0.3
        b = pr.closed_form_protected(S14, D2, p, w)
        ps = pr.protected_success(S14, D2, p, w)
        assert pr.average_value(S14, D2, p, w) == pytest.approx(ps * b + 1 - ps)


class TestBellIndependence:
    @hsettings(max_examples=10, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 0.95))
    def test_all_cases(self, p, w):
        for scenario in BsmScenario:
            for noise in NoiseCase:
                vals = [pr.evaluate(ScenarioSpec(scenario, noise, p=p, initial_bell=k))[0].b_val for k in BellKind]
                assert max(vals) - min(vals) <= 1e-10
            for prot in (D1, D2):
                runs = [pr.evaluate(ScenarioSpec(scenario, prot.noise, prot, p, w, 0.37, k)) for k in BellKind]
                assert max(r.b_val for r, _ in runs) - min(r.b_val for r, _ in runs) <= 1e-10
                assert max(o.success_prob for _, o in runs) - min(o.success_prob for _, o in runs) <= 1e-10
