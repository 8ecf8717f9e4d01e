"""Classical heat laws for harmonic fields under linear or quadratic kicks.

A linear perturbation V(x) = <f, x> shifts the free rotation and produces
an exactly Gaussian heat law; a quadratic perturbation V(x) = <x, v x>/2
produces the law of a Gaussian quadratic form, whose moment generating
function is the usual determinant expression.  Both live in coordinates
where the phase-space inner product is the standard dot product: mode k
contributes a 2x2 rotation block [[cos et, -sin et], [sin et, cos et]]
after rescaling the position coordinate by its frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import erfc, inf
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .numerics import cumulants_to_moments

__all__ = [
    "LinearClassicalModel",
    "GaussianLaw",
    "HarmonicClassicalModel",
    "QuadraticFormLaw",
    "MGFDivergesError",
    "linear_gaussian_law",
    "linear_exp_moment",
    "linear_delta_q_samples",
    "harmonic_law",
    "harmonic_uniform_check",
    "harmonic_model_from_modes",
    "UniformMgfCheck",
]


class MGFDivergesError(ValueError):
    """Requested gamma at or past the critical value of the determinant MGF."""

    def __init__(self, gamma, critical):
        super().__init__(f"MGF diverges at gamma={gamma}; critical value {critical}")
        self.gamma = gamma
        self.critical = critical


@dataclass(frozen=True)
class LinearClassicalModel:
    """Modes (frequency, momentum coupling, position coupling) plus the
    diagonal covariance of the Gaussian initial state.

    Couplings are the components of the drive vector in each mode's
    (momentum, position) block; the position component uses the raw
    coordinate, the weighted inner product is applied internally.
    """

    modes: tuple[tuple[float, float, float], ...]
    covariance_scale: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        ms = tuple((float(e), float(cp), float(cq)) for e, cp, cq in self.modes)
        if not ms:
            raise ValueError("need at least one mode")
        if any(e <= 0 for e, _, _ in ms):
            raise ValueError("mode frequencies must be positive")
        if not all(np.isfinite(c) for m in ms for c in m):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "modes", ms)
        cov = self.covariance_scale
        if np.isscalar(cov):
            cov = tuple([float(cov)] * len(ms))
        else:
            cov = tuple(float(c) for c in cov)
            if len(cov) != len(ms):
                raise ValueError("per-mode covariance list must match mode count")
        if any(c <= 0 for c in cov):
            raise ValueError("covariance entries must be positive")
        object.__setattr__(self, "covariance_scale", cov)

    def coupling_norm_sq(self) -> float:
        """||f||^2 in the model inner product: c_pi^2 + e^2 c_phi^2 per mode."""
        return sum(cp * cp + e * e * cq * cq for e, cp, cq in self.modes)


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def _mode_rotation(e: float, t: float) -> np.ndarray:
    """exp(t L0) on one (momentum, position) block, L0 = [[0, -e^2], [1, 0]]."""
    c, s = math.cos(e * t), math.sin(e * t)
    return np.array([[c, -e * s], [s / e, c]])


def linear_gaussian_law(model: LinearClassicalModel, t: float) -> GaussianLaw:
    """Gaussian law of the heat variation for a linear drive: mode-by-mode
    mean <f, (1 - e^{tL0}) f> and variance ||D^{1/2} (1 - e^{-tL0}) f||^2,
    both in the weighted phase-space inner product."""
    mean = 0.0
    var = 0.0
    for (e, cp, cq), d in zip(model.modes, model.covariance_scale):
        f = np.array([cp, cq])
        g = np.diag([1.0, e * e])  # weighted inner product on the block
        r_plus = _mode_rotation(e, t)
        r_minus = _mode_rotation(e, -t)
        mean += float(f @ g @ ((np.eye(2) - r_plus) @ f))
        w = (np.eye(2) - r_minus) @ f
        var += d * float(w @ g @ w)
    return GaussianLaw(mean, var)


def _std_normal_cdf(x: float) -> float:
    return 0.5 * erfc(-x / math.sqrt(2.0))


def linear_exp_moment(model: LinearClassicalModel, gamma: float, t: float) -> float:
    """E exp(gamma |heat variation|) in closed form from the Gaussian law:
    two shifted Gaussian MGF halves.  Finite for every gamma >= 0."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    law = linear_gaussian_law(model, t)
    m, s2 = law.mean, law.variance
    if gamma == 0.0:
        return 1.0
    if s2 == 0.0:
        return math.exp(gamma * abs(m))
    s = math.sqrt(s2)
    plus = math.exp(gamma * m + 0.5 * gamma * gamma * s2) * _std_normal_cdf(m / s + gamma * s)
    minus = math.exp(-gamma * m + 0.5 * gamma * gamma * s2) * _std_normal_cdf(-m / s + gamma * s)
    return plus + minus


def linear_delta_q_samples(model: LinearClassicalModel, t: float, n: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo of the heat variation by drawing phase-space points from
    the Gaussian state and pushing them through the shifted rotation."""
    out = np.zeros(n)
    for (e, cp, cq), d in zip(model.modes, model.covariance_scale):
        f = np.array([cp, cq])
        g = np.diag([1.0, e * e])
        shift = (np.eye(2) - _mode_rotation(e, t))
        const = float(f @ g @ (shift @ f))
        # orthonormal directions of the block are (1,0) and (0,1/e)
        gauss = math.sqrt(d) * rng.standard_normal((n, 2))
        x = np.column_stack([gauss[:, 0], gauss[:, 1] / e])
        out += const + x @ (shift.T @ (g @ f))
    return out


@dataclass(frozen=True)
class HarmonicClassicalModel:
    """Quadratic perturbation v, free skew generator l0, state covariance."""

    v: np.ndarray
    l0: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        l0 = np.asarray(self.l0, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        n = v.shape[0]
        if v.shape != (n, n) or l0.shape != (n, n) or sigma.shape != (n, n):
            raise ValueError("v, l0, sigma must be square matrices of equal size")
        if not np.allclose(v, v.T, atol=1e-12):
            raise ValueError("v must be symmetric")
        if not np.allclose(l0, -l0.T, atol=1e-12):
            raise ValueError("l0 must be skew-symmetric")
        if not np.allclose(sigma, sigma.T, atol=1e-12) or np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("sigma must be symmetric positive-definite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "l0", l0)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    def generator(self) -> np.ndarray:
        return self.l0 @ (np.eye(self.dim) + self.v)

    def flow(self, t: float) -> np.ndarray:
        return expm(t * self.generator())


def harmonic_model_from_modes(frequencies: Sequence[float], v: np.ndarray,
                              covariance: float | np.ndarray) -> HarmonicClassicalModel:
    """Block-diagonal free generator from mode frequencies: each mode is the
    2x2 skew block [[0, -e], [e, 0]] in orthonormal coordinates."""
    blocks = []
    for e in frequencies:
        blocks.append(np.array([[0.0, -e], [e, 0.0]]))
    n = 2 * len(blocks)
    l0 = np.zeros((n, n))
    for k, b in enumerate(blocks):
        l0[2 * k:2 * k + 2, 2 * k:2 * k + 2] = b
    sigma = covariance * np.eye(n) if np.isscalar(covariance) else np.asarray(covariance)
    return HarmonicClassicalModel(np.asarray(v, dtype=float), l0, sigma)


class QuadraticFormLaw:
    """Law of z^T M z for standard normal z: the heat variation of the
    harmonic model at a fixed time."""

    def __init__(self, m: np.ndarray):
        m = np.asarray(m, dtype=float)
        if not np.allclose(m, m.T, atol=1e-10):
            raise ValueError("quadratic form matrix must be symmetric")
        self.m = 0.5 * (m + m.T)
        self.eigenvalues = np.linalg.eigvalsh(self.m)

    @property
    def critical_gamma(self) -> float:
        lam_max = self.eigenvalues.max(initial=0.0)
        return inf if lam_max <= 0 else 1.0 / (2.0 * lam_max)

    def mgf(self, gamma: float) -> float:
        """det(I - 2 gamma M)^{-1/2}, finite for 2 gamma lambda_max < 1."""
        factors = 1.0 - 2.0 * gamma * self.eigenvalues
        if factors.min() <= 0.0:
            crit = self.critical_gamma if gamma > 0 else -1.0 / (2.0 * self.eigenvalues.min())
            raise MGFDivergesError(gamma, crit)
        return float(np.prod(factors) ** -0.5)

    def cumulants(self, up_to: int) -> list[float]:
        # j-th cumulant of a Gaussian quadratic form: 2^{j-1} (j-1)! tr(M^j)
        return [
            float(2 ** (j - 1) * math.factorial(j - 1) * np.sum(self.eigenvalues ** j))
            for j in range(1, up_to + 1)
        ]

    def moments(self, up_to: int) -> list[float]:
        return cumulants_to_moments(self.cumulants(up_to))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.eigenvalues.size))
        return (z * z) @ self.eigenvalues


def harmonic_law(model: HarmonicClassicalModel, t: float) -> QuadraticFormLaw:
    """Heat-variation law at time t: the quadratic form with matrix
    M_t = Sigma^{1/2} (v - e^{tL^T} v e^{tL}) Sigma^{1/2} / 2."""
    flow = model.flow(t)
    v_t = flow.T @ model.v @ flow
    w, u = np.linalg.eigh(model.sigma)
    sqrt_sigma = (u * np.sqrt(w)) @ u.T
    m = 0.5 * sqrt_sigma @ (model.v - v_t) @ sqrt_sigma
    return QuadraticFormLaw(m)


@dataclass(frozen=True)
class UniformMgfCheck:
    grid_max: float
    certified_bound: bool
    uniform_bound: float
    gamma_critical_uniform: float
    flow_norm_defect: float


def harmonic_uniform_check(model: HarmonicClassicalModel, gamma: float,
                           t_grid: Sequence[float]) -> UniformMgfCheck:
    """Grid maximum of the two-sided MGF surrogate for E exp(gamma |dQ|)
    (using exp(g|x|) <= exp(gx) + exp(-gx)) together with the uniform
    certificate available when -1 is not an eigenvalue of v:
    ||e^{tL}||^2 <= ||1+v|| ||(1+v)^{-1}||, which caps the quadratic-form
    spectrum uniformly in t and hence bounds the MGF for small gamma."""
    one_plus_v = np.eye(model.dim) + model.v
    ev = np.linalg.eigvalsh(model.v)
    invertible = np.abs(ev + 1.0).min() > 1e-10

    grid_max = 0.0
    for t in t_grid:
        law = harmonic_law(model, t)
        try:
            val = law.mgf(gamma) + law.mgf(-gamma)
        except MGFDivergesError:
            val = inf
        grid_max = max(grid_max, val)

    if not invertible:
        return UniformMgfCheck(grid_max, False, inf, 0.0, inf)

    cond = float(np.linalg.norm(one_plus_v, 2) * np.linalg.norm(np.linalg.inv(one_plus_v), 2))
    defect = -inf
    for t in t_grid:
        defect = max(defect, float(np.linalg.norm(model.flow(t), 2) ** 2) - cond)

    sigma_norm = float(np.linalg.norm(model.sigma, 2))
    v_norm = float(np.linalg.norm(model.v, 2))
    lam_bar = 0.5 * sigma_norm * v_norm * (1.0 + cond)
    gamma_crit = inf if lam_bar == 0 else 1.0 / (2.0 * lam_bar)
    if gamma < gamma_crit:
        uniform_bound = 2.0 * (1.0 - 2.0 * gamma * lam_bar) ** (-model.dim / 2.0) if lam_bar else 2.0
    else:
        uniform_bound = inf
    return UniformMgfCheck(grid_max, True, uniform_bound, gamma_crit, defect)
