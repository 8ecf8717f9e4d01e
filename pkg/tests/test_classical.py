import math

import numpy as np
import pytest

from heatlab.classical import (
    GaussianLaw,
    HarmonicClassicalModel,
    LinearClassicalModel,
    MGFDivergesError,
    harmonic_law,
    harmonic_model_from_modes,
    harmonic_uniform_check,
    linear_delta_q_samples,
    linear_exp_moment,
    linear_gaussian_law,
)

TWO_MODE = LinearClassicalModel(((1.0, 0.7, 0.2), (2.5, -0.3, 0.1)),
                                covariance_scale=1.0)


def random_harmonic(rng, n_modes=2, strength=0.2, covariance=0.5, avoid_minus_one=True):
    dim = 2 * n_modes
    while True:
        v = strength * rng.standard_normal((dim, dim))
        v = 0.5 * (v + v.T)
        if not avoid_minus_one or np.abs(np.linalg.eigvalsh(v) + 1).min() > 1e-6:
            freqs = rng.uniform(0.5, 3.0, n_modes)
            return harmonic_model_from_modes(freqs, v, covariance)


class TestLinearLaw:
    def test_time_zero_is_point_mass(self):
        law = linear_gaussian_law(TWO_MODE, 0.0)
        assert law.mean == 0.0
        assert law.variance == 0.0

    def test_single_mode_block_oracle(self):
        # pure momentum coupling c: the 2x2 rotation block gives the mean
        # c^2 (1 - cos(et)) directly
        c, e = 0.8, 1.7
        model = LinearClassicalModel(((e, c, 0.0),), covariance_scale=0.5)
        for t in (0.4, 2.3, 11.0):
            law = linear_gaussian_law(model, t)
            assert law.mean == pytest.approx(c * c * (1 - math.cos(e * t)), abs=1e-12)

    def test_mean_and_variance_bounds(self):
        norm_sq = TWO_MODE.coupling_norm_sq()
        d_max = max(TWO_MODE.covariance_scale)
        for t in np.linspace(-20, 20, 81):
            law = linear_gaussian_law(TWO_MODE, t)
            assert abs(law.mean) <= 2 * norm_sq + 1e-12
            assert law.variance <= 4 * d_max * norm_sq + 1e-12

    def test_variance_time_reflection(self):
        for t in (0.7, 3.1, 12.9):
            a = linear_gaussian_law(TWO_MODE, t).variance
            b = linear_gaussian_law(TWO_MODE, -t).variance
            assert a == pytest.approx(b, rel=1e-12)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(7)
        t = 1.3
        samples = linear_delta_q_samples(TWO_MODE, t, 100_000, rng)
        law = linear_gaussian_law(TWO_MODE, t)
        se_mean = samples.std() / math.sqrt(samples.size)
        assert abs(samples.mean() - law.mean) <= 3 * se_mean
        se_var = samples.var() * math.sqrt(2.0 / samples.size) * 2
        assert abs(samples.var() - law.variance) <= 3 * se_var + 1e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            LinearClassicalModel(())
        with pytest.raises(ValueError):
            LinearClassicalModel(((0.0, 1.0, 0.0),))
        with pytest.raises(ValueError):
            LinearClassicalModel(((1.0, 1.0, 0.0),), covariance_scale=-1.0)
        with pytest.raises(ValueError):
            GaussianLaw(0.0, -1.0)


class TestLinearExpMoment:
    def test_gamma_zero(self):
        assert linear_exp_moment(TWO_MODE, 0.0, 1.0) == 1.0

    def test_degenerate_variance(self):
        model = LinearClassicalModel(((1.0, 0.5, 0.0),), covariance_scale=1.0)
        val = linear_exp_moment(model, 1.2, 0.0)  # t=0: point mass at 0
        assert val == pytest.approx(1.0)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(11)
        t, gamma = 1.3, 0.5
        samples = linear_delta_q_samples(TWO_MODE, t, 100_000, rng)
        emp = np.exp(gamma * np.abs(samples))
        se = emp.std() / math.sqrt(emp.size)
        assert linear_exp_moment(TWO_MODE, gamma, t) == pytest.approx(
            emp.mean(), abs=3 * se)

    def test_always_finite(self):
        for gamma in (0.5, 2.0, 10.0):
            for t in (0.1, 5.0, 50.0):
                assert math.isfinite(linear_exp_moment(TWO_MODE, gamma, t))


class TestHarmonicLaw:
    def test_time_zero_is_point_mass(self):
        hm = random_harmonic(np.random.default_rng(0))
        law = harmonic_law(hm, 0.0)
        assert np.abs(law.eigenvalues).max() < 1e-12
        assert law.mgf(0.7) == pytest.approx(1.0)

    def test_zero_perturbation(self):
        hm = harmonic_model_from_modes([1.0, 2.0], np.zeros((4, 4)), 1.0)
        for t in (0.5, 3.0):
            law = harmonic_law(hm, t)
            assert np.abs(law.eigenvalues).max() < 1e-12

    def test_flow_preserves_perturbed_energy(self):
        rng = np.random.default_rng(3)
        hm = random_harmonic(rng)
        one_plus_v = np.eye(hm.dim) + hm.v
        for t in (0.9, 4.2, 17.0):
            flow = hm.flow(t)
            assert np.abs(flow.T @ one_plus_v @ flow - one_plus_v).max() < 1e-10

    def test_mgf_matches_monte_carlo(self):
        rng = np.random.default_rng(1)
        hm = random_harmonic(rng)
        law = harmonic_law(hm, 1.7)
        gamma = 0.5 * law.critical_gamma
        z = law.sample(100_000, rng)
        emp = np.exp(gamma * z)
        se = emp.std() / math.sqrt(emp.size)
        assert law.mgf(gamma) == pytest.approx(emp.mean(), abs=3 * se)

    def test_moments_match_sampler(self):
        rng = np.random.default_rng(2)
        hm = random_harmonic(rng)
        law = harmonic_law(hm, 2.4)
        z = law.sample(200_000, rng)
        moments = law.moments(2)
        se1 = z.std() / math.sqrt(z.size)
        assert moments[0] == pytest.approx(z.mean(), abs=3 * se1)
        sq = z * z
        se2 = sq.std() / math.sqrt(sq.size)
        assert moments[1] == pytest.approx(sq.mean(), abs=3 * se2)

    def test_mgf_divergence_reports_critical(self):
        rng = np.random.default_rng(4)
        hm = random_harmonic(rng)
        law = harmonic_law(hm, 1.7)
        with pytest.raises(MGFDivergesError) as err:
            law.mgf(1.5 * law.critical_gamma)
        assert err.value.critical == pytest.approx(law.critical_gamma)

    def test_model_validation(self):
        good = np.zeros((2, 2))
        skew = np.array([[0.0, -1.0], [1.0, 0.0]])
        with pytest.raises(ValueError):
            HarmonicClassicalModel(np.array([[0.0, 1.0], [0.0, 0.0]]), skew, np.eye(2))
        with pytest.raises(ValueError):
            HarmonicClassicalModel(good, np.eye(2), np.eye(2))
        with pytest.raises(ValueError):
            HarmonicClassicalModel(good, skew, -np.eye(2))


class TestUniformCheck:
    def test_zero_perturbation_isometric(self):
        hm = harmonic_model_from_modes([1.0, 2.2], np.zeros((4, 4)), 0.5)
        chk = harmonic_uniform_check(hm, 0.3, np.linspace(0, 20, 41))
        assert chk.certified_bound
        assert chk.flow_norm_defect <= 1e-10  # ||e^{tL0}|| = 1
        assert chk.grid_max == pytest.approx(2.0)

    def test_minus_one_in_spectrum_not_certified(self):
        v = np.diag([-1.0, 0.0, 0.0, 0.0])
        hm = harmonic_model_from_modes([1.0, 2.0], v, 1.0)
        chk = harmonic_uniform_check(hm, 0.1, np.linspace(0, 5, 11))
        assert not chk.certified_bound

    def test_generic_instances_certified(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            hm = random_harmonic(rng)
            chk = harmonic_uniform_check(hm, 0.0, np.linspace(0, 30, 61))
            assert chk.certified_bound
            assert chk.flow_norm_defect <= 1e-8
            gamma = 0.5 * chk.gamma_critical_uniform
            chk2 = harmonic_uniform_check(hm, gamma, np.linspace(0, 30, 61))
            assert chk2.grid_max <= chk2.uniform_bound + 1e-9
