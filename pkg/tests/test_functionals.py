import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inhomwh import (
    DriftModel,
    InversionConfig,
    ModelError,
    RegimeSchedule,
    classical_factorize,
    functional,
    matrix_exp,
    pi_minus,
    pi_plus,
    psi_minus,
    psi_plus,
    reflect_problem,
)

from conftest import random_drift, random_generator
from oracles import REFERENCE_WH, mp_fluid_value

seeds = st.integers(0, 2**32 - 1)
Z2 = np.zeros((2, 2))


@pytest.fixture(scope="module")
def fluid_oracle():
    return mp_fluid_value(12)


class TestZeroGenerators:
    def setup_method(self):
        self.sched = RegimeSchedule((1.0, 2.5), [Z2, Z2, Z2])
        self.drift = DriftModel(("u", "d"), (2.0, -1.5))

    def test_pi_plus_from_minus_is_zero(self):
        assert pi_plus(self.sched, self.drift, 0.5, "d", "u").value == pytest.approx(0, abs=1e-12)

    def test_psi_same_state(self):
        # the transform is exactly exp(-ct/v) / (q1 q2); what remains is
        # double-precision noise amplified by the 2-D weights
        fv = psi_plus(self.sched, self.drift, 0.5, 3.0, "u", "u")
        assert fv.value == pytest.approx(np.exp(-0.5 * 3.0 / 2.0), abs=1e-5)
        fv = psi_minus(self.sched, self.drift, 0.5, 3.0, "d", "d")
        assert fv.value == pytest.approx(np.exp(-0.5 * 3.0 / 1.5), abs=1e-5)

    def test_psi_other_state_zero(self):
        sched = RegimeSchedule((1.0,), [np.zeros((3, 3))] * 2)
        d = DriftModel("abc", (1.0, 2.0, -1.0))
        assert psi_plus(sched, d, 0.5, 1.0, "a", "b").value == pytest.approx(0, abs=1e-12)


class TestHomogeneous:
    def test_n0_uses_classical(self, rng):
        G = random_generator(rng, 3)
        d = DriftModel(range(3), (1.0, -1.0, 2.0))
        quad = classical_factorize(G, d, 0.4)
        fv = pi_plus(RegimeSchedule.homogeneous(G), d, 0.4, 1, 2)
        assert fv.value == quad.lambda_plus[0, 1]
        assert fv.diagnostics["method"] == "closed"
        fv = psi_plus(RegimeSchedule.homogeneous(G), d, 0.4, 1.2, 0, 2)
        assert fv.value == pytest.approx(matrix_exp(quad.g_plus, 1.2)[0, 1], abs=1e-15)

    @pytest.mark.parametrize("bps", [(0.7,), (2.0, 8.0), (0.3, 0.9), (0.5, 1.0, 4.0)])
    def test_collapse_default_terms(self, rng, bps):
        G = random_generator(rng, 3)
        d = DriftModel(range(3), (1.5, -1.0, -2.0))
        sched = RegimeSchedule(bps, [G] * (len(bps) + 1))
        quad = classical_factorize(G, d, 0.7)
        for a, i in enumerate(d.minus_states):
            fv = pi_plus(sched, d, 0.7, i, 0)
            assert fv.value == pytest.approx(quad.lambda_plus[a, 0], abs=2e-3)
            assert fv.diagnostics["residual"] <= 1e-8
        fv = psi_plus(sched, d, 0.7, 0.9, 0, 0)
        assert fv.value == pytest.approx(matrix_exp(quad.g_plus, 0.9)[0, 0], abs=2e-3)


class TestFluid:
    def test_reference_value(self, fluid):
        fv = pi_minus(*fluid, "e+", "e-")
        assert abs(fv.value - REFERENCE_WH) <= 2e-3
        assert fv.kind == "Pi-" and fv.diagnostics["in_range"]

    def test_against_high_precision_oracle(self, fluid, fluid_oracle):
        assert fluid_oracle == pytest.approx(0.6495201112, abs=1e-9)
        assert abs(pi_minus(*fluid, "e+", "e-").value - fluid_oracle) <= 1e-4

    def test_talbot_agrees(self, fluid, fluid_oracle):
        tb = pi_minus(*fluid, "e+", "e-", InversionConfig("talbot", 12))
        gs = pi_minus(*fluid, "e+", "e-")
        assert abs(tb.value - gs.value) <= 1e-4
        assert abs(tb.value - fluid_oracle) <= 1e-6

    def test_reflected_identity(self, fluid):
        sched, drift, c = fluid
        a = pi_minus(sched, drift, c, "e+", "e-")
        b = pi_plus(*reflect_problem(sched, drift), c, "e+", "e-")
        assert a.value == b.value
        sched2, drift2 = reflect_problem(sched, drift)
        assert pi_minus(sched2, drift2, c, "e-", "e+").value == pi_plus(sched, drift, c, "e-", "e+").value

    def test_out_of_range_flagged_not_clamped(self, fluid):
        fv = pi_minus(*fluid, "e+", "e-", InversionConfig("gaver-stehfest", 8))
        assert not fv.diagnostics["in_range"]
        assert fv.value < -1

    def test_workers_bitwise(self, fluid):
        a = pi_minus(*fluid, "e+", "e-")
        b = pi_minus(*fluid, "e+", "e-", workers=3)
        assert a.value == b.value

    def test_node_cache(self, fluid):
        fv = pi_minus(*fluid, "e+", "e-", InversionConfig("gaver-stehfest", 4))
        assert fv.diagnostics["nodes"] == 64


class TestErrors:
    def test_wrong_partition(self, fluid):
        with pytest.raises(ModelError):
            pi_plus(*fluid, "e+", "e-")
        with pytest.raises(ModelError):
            psi_plus(*fluid, 1.0, "e-", "e-")

    def test_talbot_needs_scalar(self, rng):
        G = random_generator(rng, 3)
        sched = RegimeSchedule((1.0,), [G, G])
        with pytest.raises(ModelError, match="Talbot"):
            pi_plus(sched, DriftModel("abc", (1, -1, 2)), 0.5, "b", "a", InversionConfig("talbot", 8))

    def test_dispatch(self, fluid):
        with pytest.raises(ModelError):
            functional("Phi", *fluid, "e+", "e-")
        with pytest.raises(ModelError):
            functional("Psi+", *fluid, "e+", "e+")
        assert functional("Pi-", *fluid, "e+", "e-").value == pi_minus(*fluid, "e+", "e-").value

    def test_bad_level(self, fluid):
        with pytest.raises(ValueError):
            psi_plus(*fluid, 0.0, "e+", "e+")


@settings(max_examples=8)
@given(seeds)
def test_discount_monotone(seed):
    rng = np.random.default_rng(seed)
    d = random_drift(rng, 3)
    sched = RegimeSchedule((float(rng.uniform(0.3, 3)),), [random_generator(rng, 3) for _ in range(2)])
    ca, cb = sorted(rng.uniform(0.1, 3, 2))
    i, j = d.minus_states[0], d.plus_states[0]
    a = pi_plus(sched, d, ca, i, j).value
    b = pi_plus(sched, d, cb, i, j).value
    assert a >= b - 2 * 2e-3


@settings(max_examples=8)
@given(seeds)
def test_values_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    d = random_drift(rng, 3)
    n = int(rng.integers(1, 3))
    sched = RegimeSchedule(np.cumsum(rng.uniform(0.3, 3, n)), [random_generator(rng, 3) for _ in range(n + 1)])
    c = float(rng.uniform(0.1, 2))
    fv = pi_plus(sched, d, c, d.minus_states[0], d.plus_states[0])
    assert fv.diagnostics["in_range"] and fv.diagnostics["residual"] <= 1e-8
