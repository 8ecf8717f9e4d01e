import math

import numpy as np
import pytest

from heatlab.stats import (
    InsufficientTailError,
    TailReport,
    empirical_moments,
    hill_tail_index,
    markov_curve,
    tail_report,
)


class TestEmpiricalMoments:
    def test_constant_samples(self):
        x = np.full(500, 1.7)
        rows = empirical_moments(x, [1, 2, 3])
        for m, est, se in rows:
            assert est == pytest.approx(1.7 ** m, rel=1e-12)
            assert se == pytest.approx(0.0, abs=1e-14)

    def test_standard_normal_fourth_moment(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(100_000)
        [(order, est, se)] = empirical_moments(x, [4])
        assert order == 4
        assert abs(est - 3.0) <= 3 * se

    def test_empty_order_list(self):
        assert empirical_moments(np.ones(200), []) == []

    def test_minimum_sample_size(self):
        with pytest.raises(ValueError):
            empirical_moments(np.ones(50), [1])


class TestHill:
    def test_pareto_recovery(self):
        # synthetic oracle: U^{-1/alpha} is Pareto with tail index alpha
        rng = np.random.default_rng(0)
        x = rng.random(100_000) ** -0.5
        est = hill_tail_index(x, 1000)
        assert abs(est - 2.0) <= 3 * 2.0 / math.sqrt(1000)

    def test_seed_stability(self):
        ests = []
        for seed in range(6):
            rng = np.random.default_rng(seed)
            ests.append(hill_tail_index(rng.random(100_000) ** -0.5, 1000))
        assert np.std(ests) / np.mean(ests) < 0.10

    def test_light_tail_flagged(self):
        rng = np.random.default_rng(1)
        rep = tail_report(rng.exponential(1.0, 100_000), 1000, [1, 2])
        assert rep.light_tailed
        assert rep.hill_drift > 1.2

    def test_heavy_tail_not_flagged(self):
        rng = np.random.default_rng(2)
        rep = tail_report(rng.random(100_000) ** -0.5, 1000, [1])
        assert not rep.light_tailed

    def test_insufficient_tail(self):
        with pytest.raises(InsufficientTailError):
            hill_tail_index(np.zeros(1000), 100)
        with pytest.raises(ValueError):
            hill_tail_index(np.ones(1000), 5)


class TestMarkovCurve:
    def test_dominance_power_mode(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(50_000)
        for e, surv, bound, se in markov_curve(x, 1):
            assert surv <= bound + 3 * se

    def test_chebyshev_type_at_n_zero(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(50_000)
        m2 = float(np.mean(x ** 2))
        rows = markov_curve(x, 0, e_grid=[1.0, 2.0, 3.0])
        for e, surv, bound, se in rows:
            assert bound == pytest.approx(m2 / e ** 2, rel=1e-12)
            assert surv <= bound + 3 * se

    def test_exponential_mode_with_supplied_constant(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(50_000)
        gamma = 0.8
        c = float(np.mean(np.exp(gamma * np.abs(x))))
        rows = markov_curve(x, 1, gamma=gamma, bound_constant=c,
                            e_grid=[1.0, 2.5, 4.0])
        for e, surv, bound, se in rows:
            assert bound == pytest.approx(c * math.exp(-gamma * e), rel=1e-12)
            assert surv <= bound + 3 * se


class TestTailReport:
    def test_fields_and_serialization(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(20_000)
        rep = tail_report(x, 500, [1, 2, 4])
        assert rep.k_used == 500
        assert rep.sample_count == 20_000
        assert rep.hill_positive is not None and rep.hill_negative is not None
        d = rep.to_dict()
        assert len(d["moments"]) == 3
        assert all(row["std_error"] >= 0 for row in d["moments"])

    def test_validation(self):
        with pytest.raises(ValueError):
            TailReport(hill_index=2.0, k_used=10, sample_count=10,
                       moment_table=(), markov_rows=())
