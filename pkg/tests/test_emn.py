import math

import numpy as np
import pytest

from fdpexact import thresholds as th
from fdpexact.emn import (
    FIGURE_PRESETS,
    QuadratureConfig,
    adaptive_gauss_legendre,
    emn_fdr_rho1,
    emn_quantity,
    figure_data,
    integrate_normal,
    m2_argmax_rho_su_m0_2,
    m2_fdr,
)
from fdpexact.exceptions import AssumptionError, ConvergenceError, DomainError, UnsupportedCaseError
from fdpexact.models import AlternativeCdf, gauss_tail, gauss_tail_inv
from fdpexact.stepdown import sd_fdr, sd_power
from fdpexact.stepup import su_fdp_cdf, su_fdp_moment, su_fdr, su_power

import oracles

G2 = AlternativeCdf.gaussian_shift(2.0)


class TestQuadrature:
    def test_polynomial_exact(self):
        val, err = adaptive_gauss_legendre(lambda x: x**5 - 3 * x**2, -1.0, 2.0, 1e-12, 50)
        assert val == pytest.approx(2**6 / 6 - 1 / 6 - (8 + 1), abs=1e-12)
        assert err <= 1e-12

    def test_kink_with_breakpoint(self):
        val, _ = adaptive_gauss_legendre(lambda x: np.abs(x - 0.3), 0.0, 1.0, 1e-12, 200, breakpoints=[0.3])
        assert val == pytest.approx(0.5 * (0.09 + 0.49), abs=1e-12)

    def test_normal_expectation(self):
        val, _ = integrate_normal(lambda v: v**2)
        assert val == pytest.approx(1.0, abs=1e-8)
        val, _ = integrate_normal(lambda v: v**2, QuadratureConfig(method="gauss_hermite"))
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_nonconvergence(self):
        with pytest.raises(ConvergenceError):
            adaptive_gauss_legendre(lambda x: np.abs(x - 0.3), 0.0, 1.0, 1e-14, 3)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            QuadratureConfig(abs_tol=0.0)
        with pytest.raises(DomainError):
            QuadratureConfig(method="simpson")


class TestRhoZero:
    t = th.gavrilov(0.1, 25)

    def test_fdr(self):
        assert emn_quantity("fdr", "SU", self.t, 0.6, 0.0, 2.0) == pytest.approx(su_fdr(self.t, 0.6, G2), abs=1e-8)
        assert emn_quantity("fdr", "SD", self.t, 0.6, 0.0, 2.0) == pytest.approx(sd_fdr(self.t, 0.6, G2), abs=1e-8)

    def test_power(self):
        assert emn_quantity("power", "SU", self.t, 0.6, 0.0, 2.0) == pytest.approx(su_power(self.t, 0.6, G2), abs=1e-8)
        assert emn_quantity("power", "SD", self.t, 0.6, 0.0, 2.0) == pytest.approx(sd_power(self.t, 0.6, G2), abs=1e-8)

    def test_fdp_law(self):
        got = emn_quantity("fdp_cdf", "SU", self.t, 0.6, 0.0, 2.0, x=0.1)
        assert got == pytest.approx(su_fdp_cdf(self.t, 0.6, G2, 0.1), abs=1e-8)
        got = emn_quantity("moment", "SU", self.t, 0.6, 0.0, 2.0, s=2)
        assert got == pytest.approx(su_fdp_moment(self.t, 0.6, G2, 2), abs=1e-8)

    def test_small_rho_close_to_independent(self):
        indep = su_fdr(self.t, 0.6, G2)
        assert emn_quantity("fdr", "SU", self.t, 0.6, 1e-6, 2.0) == pytest.approx(indep, abs=1e-5)


def test_lsu_small_rho_limit_is_alpha():
    got = emn_quantity("fdr", "SU", th.linear(0.05, 100), 1.0, 1e-4, 2.0)
    assert got == pytest.approx(0.05, abs=1e-4)


class TestRhoOne:
    def test_closed_forms_all_null(self):
        t = th.gavrilov(0.1, 8)
        assert emn_fdr_rho1("SU", t, 1.0, 2.0) == pytest.approx(t.values[-1])
        assert emn_fdr_rho1("SD", t, 1.0, 2.0) == pytest.approx(t.values[0])

    @pytest.mark.parametrize("proc", ["SU", "SD"])
    @pytest.mark.parametrize("pi0", [0.2, 0.5, 1.0])
    def test_piecewise_integration_matches_closed_form(self, proc, pi0):
        for t in (th.linear(0.3, 3), th.gavrilov(0.1, 12), th.linear(0.05, 40)):
            got = emn_quantity("fdr", proc, t, pi0, 1.0, 2.0)
            assert got == pytest.approx(emn_fdr_rho1(proc, t, pi0, 2.0), abs=1e-12)

    def test_frozen_single_gaussian(self, derived):
        ref = derived["emn_sd_rho1_m3_pi0.5_mu2_linear0.3"]
        got = emn_fdr_rho1("SD", th.linear(0.3, 3), 0.5, 2.0)
        assert oracles.within_se(got, ref["estimates"]["fdr"], ref["std_errors"]["fdr"])

    @pytest.mark.parametrize("proc", ["SU", "SD"])
    def test_continuity_discrepancy_shrinks(self, proc):
        t = th.linear(0.05, 20)
        exact = emn_fdr_rho1(proc, t, 0.5, 2.0)
        gaps = [abs(emn_quantity("fdr", proc, t, 0.5, 1 - d, 2.0) - exact) for d in (1e-2, 1e-3, 1e-5)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-3


class TestEmnErrors:
    def test_negative_rho(self):
        with pytest.raises(DomainError):
            emn_quantity("fdr", "SU", th.linear(0.05, 5), 0.5, -0.2, 2.0)

    def test_sd_fdp_law_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            emn_quantity("fdp_cdf", "SD", th.linear(0.05, 5), 0.5, 0.3, 2.0, x=0.1)

    def test_power_all_null(self):
        with pytest.raises(DomainError):
            emn_quantity("power", "SU", th.linear(0.05, 5), 1.0, 0.3, 2.0)

    def test_full_output(self):
        v, info = emn_quantity("fdr", "SU", th.linear(0.05, 5), 0.5, 0.3, 2.0, full_output=True)
        assert 0 <= v <= 1 and info["quadrature_error"] <= 1e-8


class TestM2:
    t = (0.025, 0.05)
    z1, z2 = gauss_tail_inv(0.05), gauss_tail_inv(0.025)

    def test_rho_one_rows(self):
        t1, t2 = self.t
        mu = 0.5
        assert m2_fdr("SU", self.t, 2, 1.0, mu) == pytest.approx(t2)
        assert m2_fdr("SU", self.t, 1, 1.0, mu) == pytest.approx(t2 / 2)
        assert m2_fdr("SD", self.t, 2, 1.0, mu) == pytest.approx(t1)
        assert m2_fdr("SD", self.t, 1, 1.0, mu) == pytest.approx(0.5 * min(t2, gauss_tail(self.z2 - mu)))

    def test_by_attaining_configuration(self):
        assert m2_fdr("SU", self.t, 1, -1.0, self.z1 + self.z2) == pytest.approx(0.75 * 0.05, abs=1e-10)

    def test_sd_negative_one_two_nulls(self):
        assert m2_fdr("SD", (0.1, 0.2), 2, -1.0, 1.0) == pytest.approx(0.2, abs=1e-12)
        assert m2_fdr("SD", (0.6, 0.7), 2, -1.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_independent_frozen(self, derived):
        got = m2_fdr("SU", self.t, 1, 0.0, 3.0)
        assert got == pytest.approx(derived["m2_su_rho0_m0_1_mu3_alpha0.05"]["value"], abs=1e-10)

    @pytest.mark.parametrize("rho", [-0.7, -0.2, 0.4, 0.9])
    @pytest.mark.parametrize("m0", [1, 2])
    @pytest.mark.parametrize("proc", ["SU", "SD"])
    def test_bivariate_oracle(self, rho, m0, proc):
        ref = oracles.bivariate_m2_fdr(proc, self.t, m0, rho, 2.0)
        assert m2_fdr(proc, self.t, m0, rho, 2.0) == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("proc", ["SU", "SD"])
    @pytest.mark.parametrize("m0", [1, 2])
    @pytest.mark.parametrize("sign", [-1, 1])
    def test_branch_continuity_in_rho(self, proc, m0, sign):
        for mu in (0.5, 2.0, 3.6, 5.0):
            edge = m2_fdr(proc, self.t, m0, float(sign), mu)
            near = m2_fdr(proc, self.t, m0, sign * (1 - 1e-6), mu)
            assert near == pytest.approx(edge, abs=1e-4)

    @pytest.mark.parametrize("proc", ["SU", "SD"])
    def test_mu_regimes_continuous(self, proc):
        for mu0 in (2 * self.z1, self.z1 + self.z2, 2 * self.z2):
            lo = m2_fdr(proc, self.t, 1, -1.0, mu0 - 1e-9)
            hi = m2_fdr(proc, self.t, 1, -1.0, mu0 + 1e-9)
            assert lo == pytest.approx(hi, abs=1e-8)

    def test_sd_below_su_for_linear(self):
        for rho in np.linspace(-1, 1, 41):
            for m0 in (1, 2):
                assert m2_fdr("SD", self.t, m0, rho, 2.0) <= m2_fdr("SU", self.t, m0, rho, 2.0) + 1e-8

    def test_m0_two_independent_of_mu(self):
        for rho in (-0.5, 0.3):
            assert m2_fdr("SU", self.t, 2, rho, 1.0) == m2_fdr("SU", self.t, 2, rho, 4.0)

    def test_sd_two_nulls_max_at_minus_one(self):
        t = (0.1, 0.2)
        rhos = np.round(np.linspace(-1, 1, 2001), 10)
        vals = np.array([m2_fdr("SD", t, 2, r, 1.0) for r in rhos])
        assert rhos[np.argmax(vals)] == -1.0
        assert vals.max() == pytest.approx(min(2 * t[0], 1.0), abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            m2_fdr("SU", (0.1, 0.2, 0.3), 1, 0.0, 1.0)
        with pytest.raises(DomainError):
            m2_fdr("SU", self.t, 3, 0.0, 1.0)
        with pytest.raises(DomainError):
            m2_fdr("SU", self.t, 1, 1.5, 1.0)


class TestArgmax:
    def test_alpha_02(self):
        res = m2_argmax_rho_su_m0_2((0.1, 0.2))
        assert -1 < res.rho < 0
        assert res.confirmed
        assert abs(res.rho - res.rho_numeric) <= 1e-4

    def test_derivative_vanishes(self):
        res = m2_argmax_rho_su_m0_2((0.1, 0.2))
        h = 1e-4
        d = (m2_fdr("SU", (0.1, 0.2), 2, res.rho + h, 1.0) - m2_fdr("SU", (0.1, 0.2), 2, res.rho - h, 1.0)) / (2 * h)
        assert abs(d) < 1e-4

    def test_printed_constant_is_not_the_maximizer(self):
        res = m2_argmax_rho_su_m0_2((0.1, 0.2))
        assert abs(res.rho_as_printed - res.rho_numeric) > 1e-2

    def test_alpha_too_large(self):
        with pytest.raises(AssumptionError):
            m2_argmax_rho_su_m0_2((0.3, 0.6))


class TestFigures:
    def test_presets_known(self):
        assert set(FIGURE_PRESETS) == {"fig1-left", "fig1-right", "fig2-grid"}
        with pytest.raises(DomainError):
            figure_data("fig9")

    def test_fig1_right_deterministic(self):
        a = figure_data("fig1-right")
        b = figure_data("fig1-right")
        assert a == b
        cols, rows = a
        assert cols == ("rho", "mu", "fdr") and len(rows) == 4 * 40

    def test_fig2_shape_and_ordering(self):
        cols, rows = figure_data("fig2-grid")
        su2 = [r[-1] for r in rows if r[0] == "SU" and r[1] == 2]
        sd2 = [r[-1] for r in rows if r[0] == "SD" and r[1] == 2]
        assert len(su2) == 101
        # two-null SD curve peaks at rho = -1 with value alpha
        assert sd2[0] == pytest.approx(0.2) and max(sd2) == pytest.approx(0.2)
        # at rho = 1 both procedures reduce to a single null statistic
        assert su2[-1] == pytest.approx(0.2) and sd2[-1] == pytest.approx(0.1)
        assert all(a <= b + 1e-8 for a, b in zip(sd2, su2))

    def test_fig1_right_endpoints(self):
        _, rows = figure_data("fig1-right")
        z1, z2 = gauss_tail_inv(0.05), gauss_tail_inv(0.025)
        by = [r for r in rows if r[0] == -1.0]
        # the mu grid spans the BY-attaining mean z1 + z2
        assert max(r[2] for r in by) <= 0.0375 + 1e-10
        assert min(r[1] for r in by) < z1 + z2 < max(r[1] for r in by)


@pytest.mark.slow
def test_fig1_left_qualitative():
    cols, rows = figure_data("fig1-left")
    assert cols == ("rho", "mu", "fdr", "error_estimate")
    by_rho = {}
    for rho, mu, fdr, err in rows:
        by_rho.setdefault(rho, []).append(fdr)
        assert err <= 1e-8
    # independence gives pi0 alpha for every mu
    assert np.allclose(by_rho[0.0], 0.025, atol=1e-8)
    # positive correlation stays below the independent level
    for rho in (0.2, 0.5, 0.8):
        assert max(by_rho[rho]) <= 0.025 + 1e-8
    assert math.isfinite(sum(by_rho[0.8]))
