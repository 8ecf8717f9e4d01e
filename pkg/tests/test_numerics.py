import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatlab.numerics import (
    DEFAULT_RULE,
    IntegralVerdict,
    NonEvaluableError,
    QuadratureRule,
    combine_verdicts,
    cumulants_to_moments,
    detect_divergence,
    integrate,
    moments_to_cumulants,
)


def composite_simpson_oracle(f, a, b, n):
    """Brute-force oracle used to freeze expected values: plain composite
    Simpson, no adaptivity, no shared code with the quadrature engine."""
    x = np.linspace(a, b, 2 * n + 1)
    y = f(x)
    h = (b - a) / (2 * n)
    return h / 3 * (y[0] + y[-1] + 4 * y[1::2].sum() + 2 * y[2:-1:2].sum())


class TestIntegrate:
    def test_polynomial_antiderivative(self):
        v = integrate(lambda e: e, (0.0, 1.0))
        assert v.is_convergent
        assert v.value == pytest.approx(0.5, abs=1e-12)

    def test_exponential_antiderivative(self):
        v = integrate(lambda e: np.exp(-e), (0.0, math.inf))
        assert v.is_convergent
        assert v.value == pytest.approx(1.0, abs=1e-10)

    def test_oscillatory_dirichlet_kernel(self):
        # (1-cos e)/e^2 written in the cancellation-free half-angle form.
        kernel = lambda e: 2.0 * (np.sin(e / 2) / e) ** 2
        # Oracle: composite Simpson on [1e-8, 4e4]; the kernel integrates to
        # pi/2 and the oracle reproduces it to ~2.5e-5 (truncated tail).
        oracle = composite_simpson_oracle(kernel, 1e-8, 4e4, 2_000_000)
        assert oracle == pytest.approx(math.pi / 2, abs=5e-5)
        v = integrate(kernel, (0.0, math.inf), oscillation=1.0)
        assert v.is_convergent
        assert v.value == pytest.approx(oracle, abs=5e-5)
        assert v.value == pytest.approx(1.5707963267948966, abs=2e-6)

    def test_non_evaluable_interior(self):
        with pytest.raises(NonEvaluableError):
            integrate(lambda e: np.where(e > 0.5, np.nan, 1.0), (0.0, 1.0))

    def test_linearity_on_convergent_inputs(self):
        g1 = lambda e: np.exp(-e)
        g2 = lambda e: np.exp(-2 * e) * (1 + np.sin(e) ** 2)
        i1 = integrate(g1, (0.0, math.inf))
        i2 = integrate(g2, (0.0, math.inf))
        for a, b in [(1.0, 1.0), (3.0, -2.0), (-0.5, 4.0)]:
            combo = integrate(lambda e: a * g1(e) + b * g2(e), (0.0, math.inf))
            expected = a * i1.value + b * i2.value
            tol = abs(a) * i1.err_estimate + abs(b) * i2.err_estimate + combo.err_estimate
            assert combo.is_convergent
            assert abs(combo.value - expected) <= tol + 1e-10


class TestDetectDivergence:
    def test_inverse_square_tail(self):
        v = detect_divergence(lambda e: e**-2.0, (1.0, math.inf))
        assert v.is_convergent
        assert v.value == pytest.approx(1.0, abs=1e-9)

    def test_logarithmic_divergence_reports_zero(self):
        v = detect_divergence(lambda e: 1.0 / e, (1.0, math.inf))
        assert v.is_divergent
        assert v.growth_exponent == 0.0

    def test_power_growth_exponent(self):
        # Fitted slope oracle: partial integrals of sqrt(e) over decade
        # cutoffs have increments (2/3)(L^1.5 - l^1.5), whose log-log slope
        # against the cutoff is exactly 1.5.
        cuts = DEFAULT_RULE.tail_cutoffs
        incs = [2 / 3 * (b**1.5 - a**1.5) for a, b in zip(cuts[:-1], cuts[1:])]
        slope = np.polyfit(np.log(cuts[1:]), np.log(incs), 1)[0]
        assert slope == pytest.approx(1.5, abs=1e-12)
        v = detect_divergence(lambda e: np.sqrt(e), (1.0, math.inf))
        assert v.is_divergent
        assert v.growth_exponent == pytest.approx(1.5, abs=0.02)

    def test_oscillatory_misuse_flagged(self):
        # Mass alternating between decades: increments shrink, then explode,
        # so the cutoff ladder is non-monotone beyond tolerance.
        def alternating(e):
            heavy = ((e >= 10.0) & (e < 100.0)) | (e >= 1000.0)
            return np.where(heavy, e**-0.5, e**-2.0)

        v = detect_divergence(alternating, (1.0, math.inf),
                              breakpoints=(10.0, 100.0, 1000.0))
        assert v.inconclusive

    def test_rejects_negative_density(self):
        with pytest.raises(ValueError):
            detect_divergence(lambda e: -np.ones_like(e), (1.0, math.inf))

    def test_agrees_with_integrate_on_statuses(self):
        densities = [
            lambda e: np.exp(-2 * e),
            lambda e: np.where(e <= 2.0, 1.0, 0.0),
            lambda e: (1 + e) ** -1.2,
            lambda e: (1 + e) ** -0.8,
            lambda e: np.ones_like(e),
        ]
        for d in densities:
            s1 = detect_divergence(d, (0.0, math.inf)).status
            s2 = integrate(d, (0.0, math.inf), nonnegative=True).status
            assert s1 == s2


class TestCumulantAlgebra:
    def test_deterministic_variable(self):
        mu = 1.7
        assert cumulants_to_moments([mu, 0, 0, 0]) == pytest.approx(
            [mu, mu**2, mu**3, mu**4]
        )

    def test_centered_gaussian_second_moment(self):
        assert cumulants_to_moments([0.0, 2.5])[1] == pytest.approx(2.5)

    def test_unit_poisson_fourth_moment(self):
        # Brute-force oracle: sum k^4 e^-1 / k! over the Poisson(1) pmf.
        oracle = sum(k**4 * math.exp(-1) / math.factorial(k) for k in range(60))
        assert oracle == pytest.approx(15.0, abs=1e-12)
        assert cumulants_to_moments([1.0, 1.0, 1.0, 1.0])[3] == pytest.approx(oracle)

    @given(
        st.lists(st.floats(min_value=-3, max_value=3), min_size=1, max_size=8)
    )
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_identity(self, kappa):
        m = cumulants_to_moments(kappa)
        back = moments_to_cumulants(m)
        scale = max(1.0, max(abs(k) for k in kappa))
        assert np.allclose(back, kappa, atol=1e-12 * scale**8, rtol=1e-12)

    def test_requires_nonempty(self):
        with pytest.raises(ValueError):
            cumulants_to_moments([])


class TestVerdictPlumbing:
    def test_rule_validation(self):
        with pytest.raises(ValueError):
            QuadratureRule(abs_tol=-1.0)
        with pytest.raises(ValueError):
            QuadratureRule(tail_cutoffs=(10.0, 5.0, 100.0, 1000.0))
        with pytest.raises(ValueError):
            QuadratureRule(tail_cutoffs=(10.0, 100.0, 1000.0))

    def test_verdict_validation(self):
        with pytest.raises(ValueError):
            IntegralVerdict("weird")
        with pytest.raises(ValueError):
            IntegralVerdict("divergent", growth_exponent=-1.0)

    def test_combine_verdicts(self):
        c1 = IntegralVerdict("convergent", value=2.0, err_estimate=1e-10)
        c2 = IntegralVerdict("convergent", value=3.0, err_estimate=1e-10)
        d = IntegralVerdict("divergent", growth_exponent=1.0)
        s = combine_verdicts([c1, c2], weights=[2.0, -1.0])
        assert s.is_convergent and s.value == pytest.approx(1.0)
        assert combine_verdicts([c1, d]).is_divergent
