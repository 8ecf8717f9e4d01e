"""Exact finite-dimensional two-time measurement engine on Fock spaces.

Measuring the unperturbed energy, evolving under the perturbed Hamiltonian,
and measuring again gives a discrete law over differences of unperturbed
eigenvalues; one eigendecomposition of H0 + V makes every time through the
distribution cheap.  The builders assemble fermionic (Jordan-Wigner signs,
impurity mode first) and bosonic (total-occupation truncation) many-body
operators from one-particle data, plus thermal states with an optional
infrared floor on the one-particle energies, which is what a finite system
needs before its heat law can approach the extended-system one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np

from .formfactor import FormFactor
from .oneparticle import (
    DiscretizedImpurity,
    OneParticleTriple,
    build_one_particle,
    gauss_bath,
)
from .vanhove import IntensityMeasure, PoissonLKLaw, char_fn

__all__ = [
    "FockSpec",
    "FiniteModel",
    "DiscreteAtomicLaw",
    "TTMSpectralEngine",
    "DimensionCapError",
    "StateNotCommutingError",
    "second_quantize",
    "build_quadratic_V",
    "build_linear_V",
    "gibbs_state",
    "ttm_distribution",
    "law_moments",
    "law_char_fn",
    "jarzynski_defect",
    "fermion_impurity_model",
    "boson_impurity_model",
    "vanhove_truncated_model",
    "vanhove_discrete_char",
    "moment_growth_scan",
    "tl_convergence_vanhove",
    "tl_convergence_impurity",
    "trend_slope",
    "iterated_commutator_bounds",
]

FERMION_MODE_CAP = 14        # Fock dimension 2^modes
BOSON_DIM_CAP = 20_000       # C(n_max + modes, modes)


class DimensionCapError(ValueError):
    """Requested truncation exceeds the configured dense-matrix budget."""


class StateNotCommutingError(ValueError):
    """Initial state does not commute with the measured Hamiltonian."""


@dataclass(frozen=True)
class FockSpec:
    """Statistics, mode count and truncation data for a Fock-space build."""

    statistics: str
    modes: int
    boson_total_cap: int = 0
    ir_floor: float = 0.0

    def __post_init__(self):
        if self.statistics not in ("fermion", "boson"):
            raise ValueError("statistics must be 'fermion' or 'boson'")
        if self.modes < 1:
            raise ValueError("need at least one mode")
        if self.ir_floor < 0:
            raise ValueError("ir_floor must be nonnegative")
        if self.statistics == "fermion":
            if self.modes > FERMION_MODE_CAP:
                raise DimensionCapError(
                    f"fermion modes {self.modes} > cap {FERMION_MODE_CAP}")
        else:
            if self.boson_total_cap < 1:
                raise ValueError("boson builds need boson_total_cap >= 1")
            if self.dimension > BOSON_DIM_CAP:
                raise DimensionCapError(
                    f"boson dimension {self.dimension} > cap {BOSON_DIM_CAP}")

    @property
    def dimension(self) -> int:
        if self.statistics == "fermion":
            return 1 << self.modes
        return comb(self.boson_total_cap + self.modes, self.modes)


# ---------------------------------------------------------------------------
# occupation bases


def _fermion_occupations(modes: int) -> np.ndarray:
    states = np.arange(1 << modes, dtype=np.int64)
    return np.stack([(states >> k) & 1 for k in range(modes)], axis=1)


def _boson_basis(modes: int, n_max: int) -> np.ndarray:
    rows: list[tuple[int, ...]] = []

    def rec(prefix, budget, k):
        if k == modes - 1:
            for n in range(budget + 1):
                rows.append(tuple(prefix) + (n,))
            return
        for n in range(budget + 1):
            prefix.append(n)
            rec(prefix, budget - n, k + 1)
            prefix.pop()

    if modes == 1:
        rows = [(n,) for n in range(n_max + 1)]
    else:
        rec([], n_max, 0)
    return np.asarray(rows, dtype=np.int64)


def _boson_lookup(basis: np.ndarray, n_max: int):
    radix = (n_max + 2) ** np.arange(basis.shape[1], dtype=np.int64)
    keys = basis @ radix
    order = np.argsort(keys)
    return radix, keys[order], order


def _boson_find(encoded, sorted_keys, order):
    pos = np.searchsorted(sorted_keys, encoded)
    return order[pos]


def second_quantize(b: np.ndarray, spec: FockSpec) -> np.ndarray:
    """dGamma(b) on the truncated Fock space, in the occupation basis.

    Fermions use Jordan-Wigner sign bookkeeping with the impurity mode
    first; bosons are truncated to total occupation <= boson_total_cap,
    which particle-conserving quadratics never leave.
    """
    b = np.asarray(b, dtype=complex)
    if b.shape != (spec.modes, spec.modes):
        raise ValueError("one-particle matrix size must match spec.modes")
    if spec.statistics == "fermion":
        return _fermion_dgamma(b, spec.modes)
    return _boson_dgamma(b, spec)


def _fermion_dgamma(b: np.ndarray, modes: int) -> np.ndarray:
    dim = 1 << modes
    states = np.arange(dim, dtype=np.int64)
    occ = [(states >> k) & 1 for k in range(modes)]
    out = np.zeros((dim, dim), dtype=complex)
    diag = np.zeros(dim)
    for k in range(modes):
        diag += b[k, k].real * occ[k]
    out[states, states] = diag
    for k in range(modes):
        for l in range(modes):
            if k == l or b[k, l] == 0:
                continue
            mask = (occ[l] == 1) & (occ[k] == 0)
            src = states[mask]
            sign_l = 1 - 2 * ((np.bitwise_count(src & ((1 << l) - 1)) & 1).astype(np.int64))
            mid = src ^ (1 << l)
            sign_k = 1 - 2 * ((np.bitwise_count(mid & ((1 << k) - 1)) & 1).astype(np.int64))
            out[mid | (1 << k), src] += b[k, l] * sign_l * sign_k
    return out


def _boson_dgamma(b: np.ndarray, spec: FockSpec) -> np.ndarray:
    basis = _boson_basis(spec.modes, spec.boson_total_cap)
    radix, sorted_keys, order = _boson_lookup(basis, spec.boson_total_cap)
    dim = basis.shape[0]
    idx = np.arange(dim)
    out = np.zeros((dim, dim), dtype=complex)
    diag = basis @ np.real(np.diag(b))
    out[idx, idx] = diag
    for k in range(spec.modes):
        for l in range(spec.modes):
            if k == l or b[k, l] == 0:
                continue
            mask = basis[:, l] > 0
            src = idx[mask]
            nl = basis[mask, l]
            nk = basis[mask, k]
            tgt_occ = basis[mask].copy()
            tgt_occ[:, l] -= 1
            tgt_occ[:, k] += 1
            tgt = _boson_find(tgt_occ @ radix, sorted_keys, order)
            out[tgt, src] += b[k, l] * np.sqrt(nl * (nk + 1.0))
    return out


def build_quadratic_V(triple: OneParticleTriple, spec: FockSpec) -> np.ndarray:
    """dGamma of the rank-two impurity-bath coupling."""
    if triple.dim != spec.modes:
        raise ValueError("triple dimension must equal spec.modes")
    return second_quantize(triple.v, spec)


def build_linear_V(f_components: np.ndarray, spec: FockSpec) -> np.ndarray:
    """Truncated field operator (a*(f) + a(f)) / sqrt(2) for bosons."""
    if spec.statistics != "boson":
        raise ValueError("linear field couplings are bosonic")
    f = np.asarray(f_components, dtype=complex)
    if f.size != spec.modes:
        raise ValueError("component count must equal spec.modes")
    basis = _boson_basis(spec.modes, spec.boson_total_cap)
    radix, sorted_keys, order = _boson_lookup(basis, spec.boson_total_cap)
    dim = basis.shape[0]
    idx = np.arange(dim)
    totals = basis.sum(axis=1)
    raise_part = np.zeros((dim, dim), dtype=complex)
    for k in range(spec.modes):
        if f[k] == 0:
            continue
        mask = totals < spec.boson_total_cap
        src = idx[mask]
        nk = basis[mask, k]
        tgt_occ = basis[mask].copy()
        tgt_occ[:, k] += 1
        tgt = _boson_find(tgt_occ @ radix, sorted_keys, order)
        raise_part[tgt, src] += f[k] * np.sqrt(nk + 1.0)
    return (raise_part + raise_part.conj().T) / math.sqrt(2.0)


def gibbs_state(h_one: np.ndarray, beta: float, spec: FockSpec):
    """Thermal weights exp(-beta dGamma(p_delta(h_one))) / Z on the truncated
    space; the one-particle energies are floored at spec.ir_floor first.

    Returns the diagonal weight vector when h_one is diagonal (the standard
    case), otherwise a dense density matrix.
    """
    h_one = np.asarray(h_one, dtype=complex)
    if beta <= 0:
        raise ValueError("beta must be positive")
    offdiag = h_one - np.diag(np.diag(h_one))
    if np.abs(offdiag).max(initial=0.0) < 1e-14 * max(1.0, np.abs(h_one).max()):
        energies = np.maximum(np.real(np.diag(h_one)), spec.ir_floor)
        if spec.statistics == "fermion":
            basis = _fermion_occupations(spec.modes)
        else:
            basis = _boson_basis(spec.modes, spec.boson_total_cap)
        state_energy = basis @ energies
        w = np.exp(-beta * (state_energy - state_energy.min()))
        return w / w.sum()
    vals, vecs = np.linalg.eigh(h_one)
    floored = (vecs * np.maximum(vals, spec.ir_floor)) @ vecs.conj().T
    big = second_quantize(floored, spec)
    bvals, bvecs = np.linalg.eigh(big)
    w = np.exp(-beta * (bvals - bvals.min()))
    w /= w.sum()
    return (bvecs * w) @ bvecs.conj().T


# ---------------------------------------------------------------------------
# the TTM engine


@dataclass(frozen=True)
class DiscreteAtomicLaw:
    """Finitely many atoms (heat value, probability)."""

    atoms: tuple[tuple[float, float], ...]
    cluster_tol: float = 1e-9

    def __post_init__(self):
        total = sum(p for _, p in self.atoms)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities sum to {total}, not 1")
        if any(p < -1e-12 for _, p in self.atoms):
            raise ValueError("negative atom probability")

    def support(self) -> np.ndarray:
        return np.array([dq for dq, _ in self.atoms])

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])


def law_moments(law: DiscreteAtomicLaw, orders: Sequence[int]) -> list[float]:
    dq = law.support()
    p = law.probabilities()
    return [float(np.sum(p * dq ** m)) for m in orders]


def law_char_fn(law: DiscreteAtomicLaw, alpha: float) -> complex:
    dq = law.support()
    p = law.probabilities()
    return complex(np.sum(p * np.exp(1j * alpha * dq)))


def jarzynski_defect(law: DiscreteAtomicLaw, beta: float) -> float:
    dq = law.support()
    p = law.probabilities()
    return abs(float(np.sum(p * np.exp(-beta * dq))) - 1.0)


class FiniteModel:
    """(H0, V, omega) with omega commuting with H0.

    ``omega`` may be a full density matrix or, when it is diagonal in the
    basis in which H0 is expressed, just the weight vector.
    """

    def __init__(self, h0, v, omega, cluster_tol: float | None = None):
        self.h0 = np.asarray(h0, dtype=complex)
        self.v = np.asarray(v, dtype=complex)
        omega = np.asarray(omega)
        dim = self.h0.shape[0]
        if self.h0.shape != (dim, dim) or self.v.shape != (dim, dim):
            raise ValueError("H0 and V must be square and of equal size")
        if np.abs(self.h0 - self.h0.conj().T).max() > 1e-10 * max(1.0, np.abs(self.h0).max()):
            raise ValueError("H0 must be Hermitian")
        if np.abs(self.v - self.v.conj().T).max() > 1e-10 * max(1.0, np.abs(self.v).max()):
            raise ValueError("V must be Hermitian")
        self.omega_diag = omega.ndim == 1
        scale = max(np.abs(self.h0).max(), 1e-300)
        if self.omega_diag:
            if omega.shape != (dim,):
                raise ValueError("diagonal omega must have length dim")
            self.omega = np.real(omega).astype(float)
            comm = self.h0 * (self.omega[None, :] - self.omega[:, None])
        else:
            if omega.shape != (dim, dim):
                raise ValueError("omega must be dim x dim")
            self.omega = omega.astype(complex)
            comm = self.h0 @ self.omega - self.omega @ self.h0
        if np.abs(comm).max() > 1e-10 * scale:
            raise StateNotCommutingError(
                "initial state does not commute with H0 within tolerance")
        tr = float(np.sum(self.omega)) if self.omega_diag else float(np.real(np.trace(self.omega)))
        if abs(tr - 1.0) > 1e-12:
            raise ValueError(f"state trace is {tr}, not 1")
        self.cluster_tol = cluster_tol if cluster_tol is not None else 1e-9 * max(scale, 1.0)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]


class TTMSpectralEngine:
    """Shared spectral data for two-time measurement at many times.

    One diagonalization of H0 (skipped when it is already diagonal) and one
    of H0 + V; each requested time then costs a single dense product.
    """

    def __init__(self, model: FiniteModel):
        self.model = model
        h0 = model.h0
        dim = model.dim
        offdiag = h0 - np.diag(np.diag(h0))
        if np.abs(offdiag).max(initial=0.0) < 1e-14 * max(1.0, np.abs(h0).max()):
            self.eps = np.real(np.diag(h0)).copy()
            u0 = None
        else:
            self.eps, u0 = np.linalg.eigh(h0)
        self.lam, w = np.linalg.eigh(h0 + model.v)
        self.basis = w if u0 is None else u0.conj().T @ w
        if model.omega_diag:
            if u0 is None:
                self.weights = model.omega
                self.omega_rot = None
            else:
                om = u0.conj().T @ np.diag(model.omega) @ u0
                self._store_rotated(om)
        else:
            om = model.omega if u0 is None else u0.conj().T @ model.omega @ u0
            self._store_rotated(om)

    def _store_rotated(self, om: np.ndarray):
        off = np.abs(om - np.diag(np.diag(om))).max(initial=0.0)
        if off < 1e-12:
            self.weights = np.real(np.diag(om)).copy()
            self.omega_rot = None
        else:
            self.weights = None
            self.omega_rot = om

    def heat_transition_matrix(self, t: float) -> np.ndarray:
        """G_ab = |<a| e^{-it(H0+V)} |b>|^2 in the H0 eigenbasis."""
        phase = np.exp(-1j * t * self.lam)
        w_t = (self.basis * phase) @ self.basis.conj().T
        return np.abs(w_t) ** 2, w_t

    def distribution(self, t: float) -> DiscreteAtomicLaw:
        tol = self.model.cluster_tol
        g, w_t = self.heat_transition_matrix(t)
        if self.weights is not None:
            prob = g * self.weights[None, :]
        else:
            # blockwise trace over the commuting-state blocks
            groups = _cluster_indices(self.eps, tol)
            prob = np.zeros_like(g)
            for bi in groups:
                blk = self.omega_rot[np.ix_(bi, bi)]
                wt_block = w_t[:, bi]
                prob[:, bi[0]] = np.real(
                    np.einsum("aj,jk,ak->a", wt_block, blk, wt_block.conj()))
            # all block mass assigned to the first column of each block:
            # energies inside a block agree to cluster tolerance
            keep = np.zeros(g.shape[1], dtype=bool)
            for bi in groups:
                keep[bi[0]] = True
            prob[:, ~keep] = 0.0
        dq = self.eps[:, None] - self.eps[None, :]
        return _atoms_from_grid(dq.ravel(), prob.ravel(), tol)

    def moment(self, t: float, order: int) -> float:
        """E[dQ^order] without building the atom list."""
        g, _ = self.heat_transition_matrix(t)
        if self.weights is not None:
            w = self.weights
        else:
            w = np.real(np.diag(self.omega_rot))
        total = 0.0
        for k in range(order + 1):
            left = self.eps ** k
            right = (self.eps ** (order - k)) * w
            total += comb(order, k) * (-1.0) ** (order - k) * float(
                np.real(left @ (g @ right)))
        return total

    def char_grid(self, t: float, alphas: Sequence[float]) -> np.ndarray:
        g, _ = self.heat_transition_matrix(t)
        if self.weights is not None:
            w = self.weights.astype(complex)
        else:
            w = np.diag(self.omega_rot)
        out = np.empty(len(alphas), dtype=complex)
        for i, a in enumerate(alphas):
            right = g @ (w * np.exp(-1j * a * self.eps))
            out[i] = np.sum(np.exp(1j * a * self.eps) * right)
        return out


def _cluster_indices(values: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(values)
    groups = []
    current = [order[0]]
    for idx in order[1:]:
        if values[idx] - values[current[-1]] <= tol:
            current.append(idx)
        else:
            groups.append(np.asarray(current))
            current = [idx]
    groups.append(np.asarray(current))
    return groups


def _atoms_from_grid(dq: np.ndarray, prob: np.ndarray, tol: float) -> DiscreteAtomicLaw:
    mask = prob > 1e-15 * prob.max(initial=0.0)
    dq = dq[mask]
    prob = prob[mask]
    order = np.argsort(dq)
    dq = dq[order]
    prob = prob[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(dq) > tol) + 1))
    masses = np.add.reduceat(prob, starts)
    centers = np.add.reduceat(dq * prob, starts) / masses
    centers[np.abs(centers) <= tol] = 0.0
    return DiscreteAtomicLaw(tuple(zip(centers.tolist(), masses.tolist())),
                             cluster_tol=tol)


def ttm_distribution(model: FiniteModel, t: float) -> DiscreteAtomicLaw:
    """Distribution of the two-time energy difference at time t."""
    return TTMSpectralEngine(model).distribution(t)


# ---------------------------------------------------------------------------
# model builders


def fermion_impurity_model(imp: DiscretizedImpurity, beta: float,
                           ir_floor: float = 0.0) -> tuple[FiniteModel, FockSpec]:
    """Second-quantized impurity in a discretized Fermi bath with its Gibbs
    state; impurity mode first, bath ascending in energy."""
    triple = build_one_particle(imp)
    spec = FockSpec("fermion", triple.dim, ir_floor=ir_floor)
    h0_many = second_quantize(np.diag(triple.h0).astype(complex), spec)
    v_many = build_quadratic_V(triple, spec)
    omega = gibbs_state(np.diag(triple.h0).astype(complex), beta, spec)
    return FiniteModel(h0_many, v_many, omega), spec


def boson_impurity_model(imp: DiscretizedImpurity, beta: float, total_cap: int,
                         ir_floor: float = 1e-3) -> tuple[FiniteModel, FockSpec]:
    """Oscillator-in-a-Bose-bath analogue with total-occupation truncation."""
    triple = build_one_particle(imp)
    spec = FockSpec("boson", triple.dim, boson_total_cap=total_cap, ir_floor=ir_floor)
    h0_many = second_quantize(np.diag(triple.h0).astype(complex), spec)
    v_many = build_quadratic_V(triple, spec)
    omega = gibbs_state(np.diag(triple.h0).astype(complex), beta, spec)
    return FiniteModel(h0_many, v_many, omega), spec


def _vanhove_bath(f: FormFactor, size: int, window: tuple[float, float]):
    x, w = np.polynomial.legendre.leggauss(size)
    lo, hi = window
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x + 1.0)
    weights = half * w
    fvals = np.asarray(f.value(nodes), dtype=complex)
    return nodes, weights, fvals


def vanhove_truncated_model(f: FormFactor, beta: float, size: int, total_cap: int,
                            ir_floor: float, window: tuple[float, float],
                            ) -> tuple[FiniteModel, FockSpec, dict]:
    """Finite Bose field linearly driven through the discretized coupling
    sqrt(w_k) f(e_k); the heat law of this model approaches the exact
    Poisson law as the bath refines and the cap grows."""
    nodes, weights, fvals = _vanhove_bath(f, size, window)
    spec = FockSpec("boson", size, boson_total_cap=total_cap, ir_floor=ir_floor)
    h_one = np.diag(nodes).astype(complex)
    h0_many = second_quantize(h_one, spec)
    v_many = build_linear_V(np.sqrt(weights) * fvals, spec)
    omega = gibbs_state(h_one, beta, spec)
    model = FiniteModel(h0_many, v_many, omega)
    meta = {"nodes": nodes, "weights": weights, "fvals": fvals}
    return model, spec, meta


def vanhove_discrete_char(f: FormFactor, beta: float, size: int, ir_floor: float,
                          window: tuple[float, float], t: float,
                          alphas: Sequence[float]) -> np.ndarray:
    """Closed-form heat characteristic function of the *discretized* field
    model (no occupation cap): a discrete Poisson intensity at the bath
    nodes.  Cross-validates the Fock engine as the cap grows."""
    nodes, weights, fvals = _vanhove_bath(f, size, window)
    floored = np.maximum(nodes, ir_floor)
    occ = 1.0 / np.expm1(beta * floored)
    kern = 2.0 * (np.sin(0.5 * nodes * t) / nodes) ** 2
    mass_up = kern * np.abs(fvals) ** 2 * weights * (1.0 + occ)
    mass_dn = kern * np.abs(fvals) ** 2 * weights * occ
    alphas = np.asarray(alphas, dtype=float)
    out = np.empty(alphas.size, dtype=complex)
    for i, a in enumerate(alphas):
        expo = np.sum((np.exp(1j * a * nodes) - 1.0) * mass_up)
        expo += np.sum((np.exp(-1j * a * nodes) - 1.0) * mass_dn)
        out[i] = np.exp(expo)
    return out


# ---------------------------------------------------------------------------
# scans


def trend_slope(ts: Sequence[float], values: Sequence[float], t_min: float) -> float:
    """Least-squares slope of the series restricted to t >= t_min."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = ts >= t_min
    if mask.sum() < 2:
        raise ValueError("need at least two points past t_min")
    return float(np.polyfit(ts[mask], values[mask], 1)[0])


def moment_growth_scan(f: FormFactor, statistics: str, n: int,
                       d_list: Sequence[int], beta: float,
                       t_grid: Sequence[float], *, eps_o: float = 1.0,
                       e_per_mode: float = 1.0, total_cap: int = 6,
                       ir_floor: float = 1e-3) -> list[dict]:
    """Max over the time grid of the (2n+2)-th heat moment as the bath
    grows: each size D covers the energy window [0, e_per_mode * D], so an
    ultraviolet-regular coupling saturates while an irregular one keeps
    feeding the moment."""
    order = 2 * n + 2
    rows = []
    for d in d_list:
        imp = gauss_bath(f, d, e_per_mode * d, eps_o=eps_o)
        if statistics == "fermion":
            model, spec = fermion_impurity_model(imp, beta)
        else:
            model, spec = boson_impurity_model(imp, beta, total_cap, ir_floor)
        engine = TTMSpectralEngine(model)
        series = [(float(t), engine.moment(t, order)) for t in t_grid]
        values = [v for _, v in series]
        rows.append({
            "D": int(d),
            "dim": spec.dimension,
            "max_moment": float(max(values)),
            "argmax_t": float(series[int(np.argmax(values))][0]),
            "series": series,
        })
    return rows


def tl_convergence_vanhove(f: FormFactor, beta: float, t: float,
                           alphas: Sequence[float], d_list: Sequence[int],
                           cap_list: Sequence[int], ir_floor: float,
                           window_for: Callable[[int], tuple[float, float]],
                           ) -> list[dict]:
    """Truncation study against the exact Poisson law: sup over the alpha
    grid of the distance between the truncated and exact characteristic
    functions, swept over bath size at the largest cap and over cap at the
    largest bath size."""
    law = PoissonLKLaw(IntensityMeasure(f, beta, t))
    exact = np.array([char_fn(law, a) for a in alphas])
    combos = [(d, max(cap_list)) for d in d_list]
    combos += [(max(d_list), c) for c in cap_list if (max(d_list), c) not in combos]
    rows = []
    for d, cap in combos:
        model, spec, _ = vanhove_truncated_model(
            f, beta, d, cap, ir_floor, window_for(d))
        engine = TTMSpectralEngine(model)
        approx = engine.char_grid(t, alphas)
        disc = vanhove_discrete_char(f, beta, d, ir_floor, window_for(d), t, alphas)
        rows.append({
            "D": int(d),
            "cap": int(cap),
            "dim": spec.dimension,
            "sup_err": float(np.abs(approx - exact).max()),
            "sup_err_vs_discrete": float(np.abs(approx - disc).max()),
        })
    return rows


def tl_convergence_impurity(f: FormFactor, statistics: str, beta: float, t: float,
                            alphas: Sequence[float], d_list: Sequence[int],
                            *, eps_o: float = 1.0, e_per_mode: float = 1.0,
                            total_cap: int = 6, ir_floor: float = 1e-3) -> list[dict]:
    """Truncation study with the largest build as its own reference."""
    grids = {}
    for d in d_list:
        imp = gauss_bath(f, d, e_per_mode * d, eps_o=eps_o)
        if statistics == "fermion":
            model, spec = fermion_impurity_model(imp, beta)
        else:
            model, spec = boson_impurity_model(imp, beta, total_cap, ir_floor)
        engine = TTMSpectralEngine(model)
        grids[d] = (engine.char_grid(t, alphas), spec.dimension)
    ref = grids[max(d_list)][0]
    rows = []
    for d in d_list:
        approx, dim = grids[d]
        rows.append({
            "D": int(d),
            "dim": dim,
            "sup_err": float(np.abs(approx - ref).max()),
        })
    return rows


def iterated_commutator_bounds(model: FiniteModel, t_grid: Sequence[float],
                               k_max: int = 2) -> list[dict]:
    """Grid maxima of ||ad_{H0}^k (V - V(t))|| against t-independent bounds
    assembled from ||ad_{H0}^j V|| and ||V|| (orders 1 and 2)."""
    if k_max not in (1, 2):
        raise ValueError("bounds are implemented for k_max in {1, 2}")
    h0, v = model.h0, model.v
    vals, vecs = np.linalg.eigh(h0 + v)

    def ad(h, x):
        return h @ x - x @ h

    def opnorm(x):
        return float(np.linalg.norm(x, 2))

    norm_v = opnorm(v)
    d1 = opnorm(ad(h0, v))
    d2 = opnorm(ad(h0, ad(h0, v)))
    bounds = {1: 2 * d1 + 2 * norm_v ** 2,
              2: 2 * d2 + 8 * norm_v * d1 + 4 * norm_v ** 3}
    rows = []
    for k in range(1, k_max + 1):
        worst = 0.0
        for t in t_grid:
            u = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
            x = v - u @ v @ u.conj().T
            for _ in range(k):
                x = ad(h0, x)
            worst = max(worst, opnorm(x))
        rows.append({"k": k, "grid_max": worst, "bound": bounds[k],
                     "holds": worst <= bounds[k] + 1e-9})
    return rows
