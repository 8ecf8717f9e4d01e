"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured runtime.  Tolerances are pinned here, not configurable."""

import json
import math
import time

import numpy as np

from heatlab.classical import (
    LinearClassicalModel,
    harmonic_law,
    harmonic_model_from_modes,
    harmonic_uniform_check,
    linear_delta_q_samples,
    linear_gaussian_law,
)
from heatlab.cli import main as cli_main
from heatlab.fockttm import (
    FiniteModel,
    TTMSpectralEngine,
    jarzynski_defect,
    law_moments,
    moment_growth_scan,
    tl_convergence_vanhove,
    trend_slope,
)
from heatlab.formfactor import (
    CounterexampleFn,
    ExpTail,
    PowerTail,
    SharpCutoff,
    uv_power_integral,
)
from heatlab.oneparticle import (
    FermiDirac,
    build_one_particle,
    gauss_bath,
    inverse_sqrt_rescaling_check,
    oscillation_infimum,
    propagator_difference_defect,
)
from heatlab.vanhove import (
    IntensityMeasure,
    PoissonLKLaw,
    char_fn,
    detailed_balance_defect,
    equivalence_scan_exp,
    equivalence_scan_moments,
    sample,
)


class Budget:
    def __init__(self, number, seconds, label):
        self.number = number
        self.seconds = seconds
        self.label = label

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            assert elapsed < self.seconds, (
                f"criterion {self.number} exceeded its {self.seconds}s budget "
                f"({elapsed:.1f}s)")
            print(f"ACCEPTANCE {self.number:>2}: PASS "
                  f"({elapsed:6.1f}s / {self.seconds:.0f}s) {self.label}")
        else:
            print(f"ACCEPTANCE {self.number:>2}: FAIL {self.label}")
        return False


def random_battery(seed=20260808, n_models=50, times_each=20):
    rng = np.random.default_rng(seed)
    for _ in range(n_models):
        dim = int(rng.integers(4, 65))
        beta = float(rng.uniform(0.4, 2.0))
        eps = np.sort(rng.uniform(0.0, 3.0, dim))
        h0 = np.diag(eps).astype(complex)
        v = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        v = 0.4 * (v + v.conj().T) / 2
        w = np.exp(-beta * eps)
        w /= w.sum()
        model = FiniteModel(h0, v, w)
        engine = TTMSpectralEngine(model)
        ts = rng.uniform(0.0, 20.0, times_each)
        yield model, engine, beta, eps, ts


def test_criterion_01_normalization_and_support():
    with Budget(1, 10.0, "atom sums 1 +- 1e-12, support in sp H0 - sp H0"):
        for model, engine, beta, eps, ts in random_battery():
            diffs = np.sort((eps[:, None] - eps[None, :]).ravel())
            for t in ts:
                law = engine.distribution(float(t))
                assert abs(law.probabilities().sum() - 1.0) <= 1e-12
                sup = law.support()
                pos = np.clip(np.searchsorted(diffs, sup), 1, diffs.size - 1)
                gaps = np.minimum(np.abs(sup - diffs[pos - 1]),
                                  np.abs(sup - diffs[pos]))
                assert gaps.max() <= 1e-7


def test_criterion_02_jarzynski_identity():
    with Budget(2, 10.0, "Gibbs state: sum e^{-beta dQ} P = 1 +- 1e-10"):
        for model, engine, beta, eps, ts in random_battery():
            for t in ts:
                law = engine.distribution(float(t))
                assert jarzynski_defect(law, beta) <= 1e-10


def test_criterion_03_first_law_in_mean():
    with Budget(3, 10.0, "mean heat equals tr(omega (V - V(t))) +- 1e-10"):
        for model, engine, beta, eps, ts in random_battery():
            h = model.h0 + model.v
            vals, vecs = np.linalg.eigh(h)
            for t in ts:
                law = engine.distribution(float(t))
                u = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
                tau_v = u @ model.v @ u.conj().T
                expected = float(np.real(np.sum(model.omega * np.diag(model.v - tau_v))))
                assert abs(law_moments(law, [1])[0] - expected) <= 1e-10


DB_COMBOS = [
    (ExpTail(rate=1.0, ir_power=1.0), 1.0, math.pi),
    (ExpTail(rate=1.0, ir_power=1.0), 2.0, 1.0),
    (ExpTail(rate=0.5, ir_power=2.0), 1.0, 2.0),
    (ExpTail(rate=2.0, ir_power=1.0), 1.0, 4.0),
    (PowerTail(p=1.6), 1.0, 1.5),
    (PowerTail(p=2.2), 0.7, 3.0),
    (PowerTail(p=3.0, knee=2.0), 2.0, 0.7),
    (SharpCutoff(1.0), 1.0, 2.0),
    (SharpCutoff(2.0), 1.5, math.pi / 2),
    (ExpTail(rate=1.5, ir_power=3.0), 0.5, 5.0),
]


def test_criterion_04_vanhove_exactness():
    with Budget(4, 60.0, "sampled char fn within 4/sqrt(1e5); balance defect <= 1e-8"):
        law = PoissonLKLaw(IntensityMeasure(ExpTail(rate=1.0, ir_power=1.0),
                                            1.0, math.pi))
        n = 100_000
        draws = sample(law, n, 20260808)
        alphas = np.linspace(-3.0, 3.0, 25)
        analytic = np.array([char_fn(law, a) for a in alphas])
        empirical = np.array([np.exp(1j * a * draws).mean() for a in alphas])
        assert np.abs(analytic - empirical).max() <= 4.0 / math.sqrt(n)
        for f, beta, t in DB_COMBOS:
            defect = detailed_balance_defect(PoissonLKLaw(IntensityMeasure(f, beta, t)))
            assert defect <= 1e-8


def test_criterion_05_moment_equivalence_scan():
    with Budget(5, 120.0, "tripartite moment verdicts split at p = n + 1/2"):
        t_grid = np.linspace(0.5, 8.0, 6)
        window = (5.0, 8.0)
        for p in (1.0, 1.4):
            rep = equivalence_scan_moments(PowerTail(p=p), 1.0, 1, t_grid, window)
            assert set(rep.statuses.values()) == {"infinite"}, (p, rep.statuses)
            assert rep.consistent
        for p in (1.6, 2.0):
            rep = equivalence_scan_moments(PowerTail(p=p), 1.0, 1, t_grid, window)
            assert set(rep.statuses.values()) == {"finite"}, (p, rep.statuses)
            assert rep.consistent


def test_criterion_06_exp_equivalence_scan():
    with Budget(6, 60.0, "tripartite exponential verdicts split at gamma = 2"):
        f = ExpTail(rate=1.0, ir_power=1.0)
        t_grid = np.linspace(0.5, 8.0, 6)
        window = (5.0, 8.0)
        for gamma, expected in ((1.0, "finite"), (1.9, "finite"), (2.1, "infinite")):
            rep = equivalence_scan_exp(f, 1.0, gamma, t_grid, window)
            assert set(rep.statuses.values()) == {expected}, (gamma, rep.statuses)
            assert rep.consistent


def test_criterion_07_single_time_counterexample():
    with Budget(7, 60.0, "finite 4th moment at t=2pi despite divergent class"):
        f = CounterexampleFn(1)
        rep = equivalence_scan_moments(f, 1.0, 1, [2 * math.pi], (5.0, 8.0))
        assert rep.statuses["sup_grid"] == "finite"
        assert rep.statuses["window_integral"] == "infinite"
        assert rep.statuses["uv_class"] == "infinite"
        assert uv_power_integral(f, 1).is_divergent
        assert not rep.consistent  # that is the whole point of this family


def test_criterion_08_thermodynamic_limit_vanhove():
    with Budget(8, 600.0, "truncated law within 0.05 of exact; errors monotone"):
        f = ExpTail(rate=1.0, ir_power=3.0)
        alphas = np.linspace(-2.0, 2.0, 17)
        rows = tl_convergence_vanhove(
            f, 2.0, 1.0, alphas, [2, 4, 6], [4, 6, 8], 1e-3,
            lambda d: (1.2 / d, 2.0 + 0.6 * d))
        by_d = {r["D"]: r["sup_err"] for r in rows if r["cap"] == 8}
        by_cap = {r["cap"]: r["sup_err"] for r in rows if r["D"] == 6}
        assert by_d[6] <= 0.05
        assert by_d[4] <= by_d[2] * 1.10
        assert by_d[6] <= by_d[4] * 1.10
        assert by_cap[6] <= by_cap[4] * 1.10
        assert by_cap[8] <= by_cap[6] * 1.10


def test_criterion_09_fermion_moment_growth():
    with Budget(9, 600.0, "cutoff stabilizes (<=20%, flat sup); power tail grows"):
        t_grid = np.linspace(0.0, 50.0, 26)
        rows = moment_growth_scan(SharpCutoff(1.0), "fermion", 1,
                                  [4, 6, 8, 10], 1.0, t_grid)
        maxima = [r["max_moment"] for r in rows]
        assert abs(maxima[-1] - maxima[-2]) <= 0.20 * abs(maxima[-2])
        last = rows[-1]["series"]
        ts = [t for t, _ in last]
        running_max = np.maximum.accumulate([v for _, v in last])
        assert trend_slope(ts, running_max, 25.0) < 1e-3
        rows_p = moment_growth_scan(PowerTail(p=1.0), "fermion", 1,
                                    [4, 6, 8, 10], 1.0, t_grid)
        maxima_p = [r["max_moment"] for r in rows_p]
        assert all(b > a for a, b in zip(maxima_p, maxima_p[1:]))
        assert (maxima_p[-1] - maxima_p[-2]) / maxima_p[-2] >= 0.05


def test_criterion_10_classical_laws():
    with Budget(10, 60.0, "Gaussian/quadratic-form laws match Monte Carlo"):
        rng = np.random.default_rng(7)
        model = LinearClassicalModel(((1.0, 0.7, 0.2), (2.5, -0.3, 0.1)),
                                     covariance_scale=1.0)
        t = 1.3
        draws = linear_delta_q_samples(model, t, 100_000, rng)
        law = linear_gaussian_law(model, t)
        se_mean = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - law.mean) <= 3 * se_mean
        centered = draws - draws.mean()
        se_var = (centered ** 2).std() / math.sqrt(draws.size)
        assert abs(draws.var() - law.variance) <= 3 * se_var

        hm_rng = np.random.default_rng(11)
        v = 0.2 * hm_rng.standard_normal((4, 4))
        v = 0.5 * (v + v.T)
        hm = harmonic_model_from_modes([1.0, 2.2], v, 0.5)
        qlaw = harmonic_law(hm, 1.7)
        gamma = 0.5 * qlaw.critical_gamma
        z = qlaw.sample(100_000, hm_rng)
        emp = np.exp(gamma * z)
        se = emp.std() / math.sqrt(emp.size)
        assert abs(qlaw.mgf(gamma) - emp.mean()) <= 3 * se

        certified = 0
        for _ in range(20):
            w = 0.25 * hm_rng.standard_normal((4, 4))
            w = 0.5 * (w + w.T)
            if np.abs(np.linalg.eigvalsh(w) + 1).min() <= 1e-6:
                continue
            model_h = harmonic_model_from_modes(
                hm_rng.uniform(0.5, 3.0, 2), w, 0.5)
            chk = harmonic_uniform_check(model_h, 0.0, np.linspace(0, 25, 51))
            assert chk.certified_bound and chk.flow_norm_defect <= 1e-8
            gamma_h = 0.5 * chk.gamma_critical_uniform
            chk2 = harmonic_uniform_check(model_h, gamma_h, np.linspace(0, 25, 51))
            assert chk2.grid_max <= chk2.uniform_bound + 1e-9
            certified += 1
        assert certified == 20


def test_criterion_11_one_particle_bound_suite():
    with Budget(11, 60.0, "propagator bound, rescaled spectrum, infimum plateau"):
        rng = np.random.default_rng(13)
        f = ExpTail(rate=1.0, ir_power=1.0)
        t_grid = np.arange(0.0, 100.5, 0.5)
        for _ in range(20):
            size = int(rng.integers(3, 9))
            imp = gauss_bath(f, size, float(rng.uniform(4.0, 10.0)),
                             eps_o=float(rng.uniform(0.5, 2.0)))
            triple = build_one_particle(imp)
            scale = float(rng.uniform(0.3, 2.0))
            triple = type(triple)(triple.h0, triple.psi_o, scale * triple.psi_f)
            assert propagator_difference_defect(triple, 2, t_grid) <= 0.0
            spectrum, expected, _ = inverse_sqrt_rescaling_check(
                triple, t_grid=t_grid[:21])
            assert np.abs(spectrum - expected).max() <= 1e-10

        imp = gauss_bath(f, 4, 6.0, eps_o=1.0)
        triple = build_one_particle(imp)
        psi = np.ones(triple.dim, dtype=complex) / 2.0
        infimum, values, plateau = oscillation_infimum(
            triple, FermiDirac(1.0), psi, (0.0, 2 * math.pi),
            np.linspace(0.0, 400.0, 600))
        assert infimum > 0.0
        assert abs(values[-1] - plateau) <= 0.01 * plateau


def test_criterion_12_determinism(tmp_path):
    with Budget(12, 120.0, "same config and seed give byte-identical outputs"):
        cfg = tmp_path / "vh.toml"
        cfg.write_text("""
model = "vanhove"
seed = 99
beta = 1.0
t_grid = [1.0, 2.0]
alpha_grid = [-1.0, 0.0, 1.0]
n = 1
gamma = 1.0
window = [5.0, 8.0]
n_samples = 5000

[formfactor]
family = "exp_tail"
rate = 1.0
ir_power = 1.0
""")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli_main(["vanhove", "--config", str(cfg), "--out", str(out_a)]) == 0
        assert cli_main(["vanhove", "--config", str(cfg), "--out", str(out_b)]) == 0
        names = ("charfn.csv", "cumulants.csv", "samples.csv", "report.json")
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        report = json.loads((out_a / "report.json").read_text())
        assert report["config_hash"] == json.loads(
            (out_b / "report.json").read_text())["config_hash"]
