import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdpexact import thresholds as th
from fdpexact.analysis import (
    condition_a,
    expected_inverse_rejections_affine,
    fnr_sd,
    fnr_sd_by_duality,
    fnr_su,
    lfc_fdr_compare,
    s_mk_recursion_check,
    var_extrema,
    var_fdp_lsu,
)
from fdpexact.exceptions import DomainError
from fdpexact.models import AlternativeCdf
from fdpexact.orderstats import d_su_vector
from fdpexact.stepup import su_fdp_moment, su_fdr

import oracles

G2 = AlternativeCdf.gaussian_shift(2.0)
DIRAC = AlternativeCdf.dirac_uniform()
UNIF = AlternativeCdf.uniform()
ZERO = AlternativeCdf.zero()


class TestConditionA:
    def test_linear_holds(self):
        rep = condition_a(th.linear(0.05, 50))
        assert rep.holds and rep.first_violation is None and rep.evaluated
        assert len(rep.sequence) == 50

    def test_trust_linear_skips_evaluation(self):
        rep = condition_a(th.linear(0.05, 50), trust_linear=True)
        assert rep.holds and not rep.evaluated

    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.2, 0.5, 0.9])
    @pytest.mark.parametrize("m", [5, 10, 50, 100])
    def test_gavrilov_grid(self, alpha, m):
        assert condition_a(th.gavrilov(alpha, m)).holds

    def test_piecewise_counterexample(self):
        t = th.piecewise_linear(0.5, 0.6, 4, 50)
        assert t.ratio_trend() == "nondecreasing"
        rep = condition_a(t)
        assert not rep.holds
        assert rep.first_violation is not None
        k = rep.first_violation
        assert rep.sequence[k] < rep.sequence[k - 1]

    def test_power_law_holds(self):
        t = th.power_law(0.9, 0.9, 50)
        assert t.ratio_trend() == "nonincreasing"
        assert condition_a(t).holds

    def test_sequence_definition(self):
        t = th.gavrilov(0.2, 8)
        rep = condition_a(t)
        k = np.arange(1, 9)
        assert np.allclose(rep.sequence, t.values / k * rep.s_values, rtol=1e-14)

    def test_last_entry(self):
        # k = m: the inner procedure is empty, A_m = t_m / m
        t = th.gavrilov(0.2, 8)
        assert condition_a(t).sequence[-1] == pytest.approx(t.values[-1] / 8, rel=1e-14)


class TestRecursion:
    @pytest.mark.parametrize("m,alpha", [(2, 0.05), (10, 0.05), (30, 0.2), (60, 0.5)])
    def test_residual(self, m, alpha):
        res = s_mk_recursion_check(m, alpha)
        assert res.ok
        assert res.max_residual < 1e-10

    def test_sum_identity(self):
        res = s_mk_recursion_check(12, 0.1)
        assert res.sum_identity_residual < 1e-14


class TestVariance:
    @pytest.mark.parametrize("F1", [G2, UNIF, DIRAC, ZERO, AlternativeCdf.constant(0.4)], ids=lambda f: f.label())
    @pytest.mark.parametrize("m,pi0", [(3, 0.5), (25, 0.8), (80, 0.95)])
    def test_moment_consistency(self, F1, m, pi0):
        t = th.linear(0.05, m)
        expect = su_fdp_moment(t, pi0, F1, 2) - su_fdr(t, pi0, F1) ** 2
        assert var_fdp_lsu(m, 0.05, pi0, F1) == pytest.approx(expect, abs=1e-12)

    def test_pi0_zero(self):
        assert var_fdp_lsu(10, 0.05, 0.0, G2) == 0.0

    def test_frozen(self, derived):
        ref = derived["var_m50_pi0.8_mu2"]
        got = var_fdp_lsu(50, 0.05, 0.8, G2)
        assert oracles.within_se(got, ref["estimates"]["fdp_variance"], ref["std_errors"]["fdp_variance"])

    def test_constant_alternative_is_eps_max(self):
        got = var_fdp_lsu(40, 0.1, 0.7, AlternativeCdf.constant(0.3))
        assert got == pytest.approx(var_extrema(40, 0.1, 0.7, "F_eps", "max", eps=0.3), abs=1e-12)


class TestVarExtrema:
    CASES = [(2, 0.05, 0.5), (10, 0.2, 0.8), (50, 0.05, 0.95), (120, 0.1, 1.0 - 1e-8), (30, 0.3, 1.0)]

    @pytest.mark.parametrize("m,alpha,pi0", CASES)
    def test_extremal_alternatives(self, m, alpha, pi0):
        pairs = [
            (("F_all", "min", None), DIRAC),
            (("F_all", "max", None), ZERO),
            (("F_prime", "max", None), UNIF),
            (("F_eps", "max", 0.35), AlternativeCdf.constant(0.35)),
        ]
        for (family, which, eps), F1 in pairs:
            closed = var_extrema(m, alpha, pi0, family, which, eps)
            assert closed == pytest.approx(var_fdp_lsu(m, alpha, pi0, F1), abs=1e-12)

    def test_printed_maxima(self):
        a, p = 0.05, 0.7
        assert var_extrema(20, a, p, "F_all", "max") == pytest.approx(a * p * (1 - a * p))
        assert var_extrema(20, a, p, "F_prime", "max") == pytest.approx(a * p * (1 - a) + (1 - p) * p * a * a / 20)

    def test_sparse_example(self):
        assert math.sqrt(var_extrema(10_000, 0.05, 0.99, "F_all", "min")) == pytest.approx(0.0217, abs=5e-4)

    @pytest.mark.parametrize("beta", [0.5, 1.0])
    def test_sparse_scaling(self, beta):
        ms = (100, 1_000, 10_000)
        v = [var_extrema(m, 0.05, 1 - m**-beta, "F_all", "min") for m in ms]
        for a, b in zip(v, v[1:]):
            assert b / a == pytest.approx(10 ** -(1 - beta), rel=0.2)

    @given(st.integers(2, 40), st.floats(0.0, 1.0), st.floats(0.1, 6.0), st.floats(0.01, 0.99))
    def test_sandwich(self, m, pi0, mu, eps):
        alpha = 0.1
        lo = var_extrema(m, alpha, pi0, "F_all", "min")
        for F1, family in ((AlternativeCdf.gaussian_shift(mu), "F_prime"), (AlternativeCdf.constant(eps), "F_all")):
            v = var_fdp_lsu(m, alpha, pi0, F1)
            assert lo - 1e-12 <= v <= var_extrema(m, alpha, pi0, family, "max") + 1e-12
        v = var_fdp_lsu(m, alpha, pi0, AlternativeCdf.constant(eps))
        assert v <= var_extrema(m, alpha, pi0, "F_eps", "max", eps) + 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            var_extrema(10, 0.05, 0.5, "F_eps", "max")
        with pytest.raises(DomainError):
            var_extrema(10, 0.05, 0.5, "F_other", "max")


class TestInverseRejections:
    def test_trivial(self):
        assert expected_inverse_rejections_affine(10, 0.0, 0.0) == pytest.approx(1.0)
        assert expected_inverse_rejections_affine(10, 0.02, 0.02) == pytest.approx(1 - 10 * 0.02)

    @given(st.integers(1, 60), st.floats(0.0, 0.3), st.floats(0.0, 0.01))
    def test_matches_kernel_sum(self, m, beta, gamma):
        if beta + m * gamma > 1.0:
            return
        t = beta + gamma * np.arange(1, m + 1)
        pmf = d_su_vector(t).probs
        direct = float(np.sum(pmf / (np.arange(m + 1) + 1)))
        assert expected_inverse_rejections_affine(m, beta, gamma) == pytest.approx(direct, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(DomainError):
            expected_inverse_rejections_affine(10, 0.5, 0.1)


class TestFnr:
    def test_dirac_is_zero(self):
        assert fnr_sd(th.linear(0.05, 20), 0.6, DIRAC) == pytest.approx(0.0, abs=1e-15)

    def test_zero_threshold(self):
        assert fnr_sd(th.Threshold([0.0] * 6), 0.5, UNIF) == pytest.approx(0.5, abs=1e-14)

    def test_frozen(self, derived):
        ref = derived["fnr_sd_m30_pi0.6_mu2"]
        got = fnr_sd(th.linear(0.05, 30), 0.6, G2)
        assert oracles.within_se(got, ref["estimates"]["fnr"], ref["std_errors"]["fnr"])

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40).map(sorted), st.floats(0.0, 0.99), st.floats(0.1, 4))
    def test_duality(self, t, pi0, mu):
        F1 = AlternativeCdf.gaussian_shift(mu)
        assert fnr_sd(t, pi0, F1) == pytest.approx(fnr_sd_by_duality(t, pi0, F1), abs=1e-10)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4).map(sorted), st.floats(0.0, 0.99))
    def test_small_m_enumeration(self, t, pi0):
        su = oracles.summaries(oracles.enumerate_indep(t, pi0, G2, "SU"), pi0)["fnr"]
        sd = oracles.summaries(oracles.enumerate_indep(t, pi0, G2, "SD"), pi0)["fnr"]
        assert fnr_su(t, pi0, G2) == pytest.approx(su, abs=1e-10)
        assert fnr_sd(t, pi0, G2) == pytest.approx(sd, abs=1e-10)

    def test_all_null_raises(self):
        with pytest.raises(DomainError):
            fnr_sd(th.linear(0.05, 5), 1.0, G2)


class TestLfc:
    def test_su_nondecreasing(self):
        rep = lfc_fdr_compare(th.gavrilov(0.1, 30), 0.6, "SU", (UNIF, DIRAC))
        assert rep.assumption_met and rep.predicted == "<=" and rep.ordering_holds

    def test_su_nonincreasing(self):
        pair = (AlternativeCdf.constant(0.2), AlternativeCdf.constant(0.6))
        rep = lfc_fdr_compare(th.power_law(0.9, 0.9, 30), 0.6, "SU", pair)
        assert rep.predicted == ">=" and rep.ordering_holds

    def test_su_linear_equal(self):
        rep = lfc_fdr_compare(th.linear(0.1, 30), 0.6, "SU", (UNIF, DIRAC))
        assert rep.predicted == "==" and rep.ordering_holds

    def test_sd_dirac_is_least_favorable(self):
        for t in (th.linear(0.05, 40), th.gavrilov(0.1, 40), th.power_law(0.9, 0.9, 40)):
            for mu in (0.5, 2.0, 4.0):
                rep = lfc_fdr_compare(t, 0.7, "SD", (AlternativeCdf.gaussian_shift(mu), DIRAC))
                assert rep.assumption_met and rep.ordering_holds

    def test_sd_assumption_not_met(self):
        rep = lfc_fdr_compare(th.piecewise_linear(0.5, 0.6, 4, 50), 0.7, "SD", (G2, DIRAC))
        assert not rep.assumption_met and rep.ordering_holds is None
        assert "threshold" in rep.reason

    def test_pair_must_be_ordered(self):
        with pytest.raises(DomainError):
            lfc_fdr_compare(th.linear(0.1, 5), 0.5, "SU", (DIRAC, UNIF))

