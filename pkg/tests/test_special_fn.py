"""
Tests for special functions and closed-form constants.

Core claims:
    - PDParams enforces alpha in (0,1) and theta > -alpha; the theorem range
      alpha/2 < gamma <= alpha is reported by name
    - em_const is -digamma(a+1): Euler's constant at a = 0
    - Beta helpers are symmetric and give exact moments
    - 1/ell agrees with an independent term-by-term lgamma evaluation, and with
      its reduced form at theta = 0
    - The exponential-model candidate constants coincide at beta = 2, kappa = 1
      and separate elsewhere
"""

import math

import numpy as np
import pytest
from pytest import approx

from core.special_fn import (
    EULER_GAMMA,
    PDParams,
    beta_fn,
    beta_moment,
    em_const,
    em_const_oracle,
    em_theorem_constants,
    ell_const,
    ell_inverse,
    exp_gamma_s_infty,
    expected_y_power,
    k_const,
    log_beta,
    pd_sum_limit_mean,
)


def _ell_inverse_lgamma(a, t, g):
    terms = [
        math.log(a / g),
        (t / a) * math.lgamma(1.0 - a),
        -(1.0 + t / a) * math.lgamma(1.0 + g - a),
        math.lgamma(((a + t) / a) * (1.0 - g / a) + 1.0),
        -math.lgamma((a + t) * (1.0 - g / a) + 1.0),
        math.lgamma(1.0 + t),
        math.lgamma(1.0 - t / a),
        -(math.lgamma(1.0 - t / a) + math.lgamma(1.0 + t / a) - math.lgamma(2.0)),
    ]
    return math.exp(math.fsum(terms))


class TestPDParams:
    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            PDParams(1.0, 0.0, 0.5)

    def test_rejects_bad_theta(self):
        with pytest.raises(ValueError, match="theta"):
            PDParams(0.5, -0.5, 0.4)

    def test_theorem_range(self):
        assert PDParams(0.5, 0.0, 0.5).in_theorem_range
        assert not PDParams(0.5, 0.0, 0.2).in_theorem_range
        with pytest.raises(ValueError, match="alpha/2 < gamma <= alpha"):
            PDParams(0.5, 0.0, 0.2).require_theorem_range()


class TestElementary:
    def test_em_const_at_zero_is_euler(self):
        assert em_const(0.0) == approx(EULER_GAMMA, abs=1e-12)

    def test_em_const_matches_oracle(self):
        assert em_const(0.7) == approx(em_const_oracle(0.7), abs=1e-8)

    def test_em_const_domain(self):
        with pytest.raises(ValueError):
            em_const(-1.5)

    def test_beta_symmetry(self):
        assert log_beta(0.3, 2.5) == log_beta(2.5, 0.3)
        assert beta_fn(2.0, 3.0) == approx(1.0 / 12.0, rel=1e-12)

    def test_beta_moments(self):
        assert beta_moment(2.0, 3.0, 1) == approx(0.4)
        assert beta_moment(2.0, 3.0, 2) == approx(0.2)
        assert beta_moment(2.0, 3.0, 0) == 1.0

    def test_expected_y_power_mean(self):
        p = PDParams(0.5, 0.3, 0.5)
        i = np.arange(1, 5)
        expected = (1.0 - p.alpha) / (1.0 - p.alpha + p.theta + i * p.alpha)
        assert expected_y_power(p, i, 1.0) == approx(expected, rel=1e-12)

    def test_k_const_theta_zero(self):
        # K = exp(psi(1) + kappa_0/alpha) = exp(-gamma_E + gamma_E/alpha)
        p = PDParams(0.5, 0.0, 0.5)
        assert k_const(p) == approx(math.exp(EULER_GAMMA), rel=1e-12)

    def test_exp_gamma_s_infty_at_zero(self):
        assert exp_gamma_s_infty(PDParams(0.6, 0.1, 0.5), 0.0) == approx(1.0, rel=1e-14)

    def test_pd_sum_limit_mean_positive(self):
        assert pd_sum_limit_mean(PDParams(0.8, 0.0, 0.5)) > 0.0


class TestEllConstant:
    @pytest.mark.parametrize("a,t,g", [(0.8, 0.0, 0.5), (0.5, 0.2, 0.4), (0.7, -0.3, 0.6), (0.6, 0.5, 0.6)])
    def test_matches_term_by_term_evaluation(self, a, t, g):
        assert ell_inverse(PDParams(a, t, g)) == approx(_ell_inverse_lgamma(a, t, g), rel=1e-12)

    def test_reduced_form_at_theta_zero(self):
        a, g = 0.8, 0.5
        reduced = (a / g) * math.gamma(2.0 - g / a) / (math.gamma(1.0 + g - a) * math.gamma(1.0 + a - g))
        assert ell_inverse(PDParams(a, 0.0, g)) == approx(reduced, rel=1e-12)
        assert ell_const(PDParams(a, 0.0, g)) == approx(1.0 / reduced, rel=1e-12)

    def test_gamma_equal_alpha_theta_zero(self):
        assert ell_inverse(PDParams(0.5, 0.0, 0.5)) == approx(1.0, rel=1e-12)

    def test_requires_theta_below_alpha(self):
        with pytest.raises(ValueError):
            ell_inverse(PDParams(0.5, 0.6, 0.5))

    def test_requires_theorem_range(self):
        with pytest.raises(ValueError, match="alpha/2 < gamma <= alpha"):
            ell_inverse(PDParams(0.5, 0.0, 0.2))


class TestExponentialModelConstants:
    def test_coincide_at_beta_two_kappa_one(self):
        constants = em_theorem_constants(2.0, 1.0)
        assert constants.displayed == approx(1.0, rel=1e-12)
        assert constants.specialized == approx(1.0, rel=1e-12)
        assert constants.coincide

    def test_separate_at_kappa_three_quarters(self):
        constants = em_theorem_constants(2.0, 0.75)
        assert not constants.coincide
        ratio = math.gamma(1.125) / math.gamma(1.875)
        assert constants.displayed / constants.specialized == approx(ratio, rel=1e-10)

    def test_parameter_ranges(self):
        with pytest.raises(ValueError, match="beta"):
            em_theorem_constants(1.0, 0.75)
        with pytest.raises(ValueError, match="kappa"):
            em_theorem_constants(2.0, 0.5)
