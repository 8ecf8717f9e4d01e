"""Discretized one-particle operators for impurity-bath models.

The continuum bath on the positive half-line is replaced by Gauss-type
nodes and weights; the coupling vector gets components sqrt(w_k) f(e_k)
so that discrete inner products approximate the energy integrals.  On
top of the resulting (impurity + bath) matrices this module certifies
the spectral bounds that control the perturbed dynamics: an affine-in-
time bound on weighted propagator differences, boundedness of weighted
orbits, a strictly positive time-averaged oscillation infimum, and the
closed-form spectrum of the inverse-square-root rescaled Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .formfactor import FormFactor

__all__ = [
    "DiscretizedImpurity",
    "OneParticleTriple",
    "FermiDirac",
    "BoseEinstein",
    "EigenvectorInputError",
    "DegenerateCouplingError",
    "gauss_bath",
    "build_one_particle",
    "propagator_difference_defect",
    "power_weighted_orbit_scan",
    "oscillation_infimum",
    "inverse_sqrt_rescaling_check",
]


class EigenvectorInputError(ValueError):
    """The probe vector is (numerically) an eigenvector of the perturbed
    Hamiltonian, which the oscillation infimum excludes."""


class DegenerateCouplingError(ValueError):
    """Discrete coupling norm hits sqrt(eps_o) exactly; the rescaled
    Hamiltonian then has 0 in its spectrum and the check is void."""


@dataclass(frozen=True)
class FermiDirac:
    beta: float

    def weights(self, energies):
        return 1.0 / (1.0 + np.exp(self.beta * np.asarray(energies, dtype=float)))


@dataclass(frozen=True)
class BoseEinstein:
    beta: float

    def weights(self, energies):
        e = np.asarray(energies, dtype=float)
        return 1.0 / np.expm1(self.beta * e)


@dataclass(frozen=True)
class DiscretizedImpurity:
    """Impurity level eps_o plus a finite bath with quadrature weights."""

    eps_o: float
    bath_energies: tuple[float, ...]
    bath_weights: tuple[float, ...]
    f: FormFactor

    def __post_init__(self):
        es = tuple(float(e) for e in self.bath_energies)
        ws = tuple(float(w) for w in self.bath_weights)
        if self.eps_o <= 0:
            raise ValueError("eps_o must be positive")
        if len(es) != len(ws):
            raise ValueError("bath_energies and bath_weights must have equal length")
        if any(e <= 0 for e in es) or any(b <= a for a, b in zip(es, es[1:])):
            raise ValueError("bath energies must be positive and strictly increasing")
        if any(w <= 0 for w in ws):
            raise ValueError("bath weights must be positive")
        object.__setattr__(self, "bath_energies", es)
        object.__setattr__(self, "bath_weights", ws)

    @property
    def size(self) -> int:
        return len(self.bath_energies)


def gauss_bath(f: FormFactor, size: int, e_max: float, *, e_min: float = 0.0,
               eps_o: float = 1.0) -> DiscretizedImpurity:
    """Gauss-Legendre bath discretization of the energy window [e_min, e_max]."""
    if size < 1:
        raise ValueError("bath needs at least one mode")
    if not 0.0 <= e_min < e_max:
        raise ValueError("need 0 <= e_min < e_max")
    x, w = np.polynomial.legendre.leggauss(size)
    half = 0.5 * (e_max - e_min)
    nodes = e_min + half * (x + 1.0)
    weights = half * w
    return DiscretizedImpurity(eps_o, tuple(nodes), tuple(weights), f)


class OneParticleTriple:
    """(h0, v, h) with h0 diagonal, v the rank-two impurity-bath coupling,
    and h = h0 + v.  Treated as immutable after construction."""

    def __init__(self, h0: np.ndarray, psi_o: np.ndarray, psi_f: np.ndarray):
        self.h0 = np.asarray(h0, dtype=float)
        self.psi_o = np.asarray(psi_o, dtype=complex)
        self.psi_f = np.asarray(psi_f, dtype=complex)
        self.v = np.outer(self.psi_o, self.psi_f.conj()) + np.outer(self.psi_f, self.psi_o.conj())
        self.h = np.diag(self.h0).astype(complex) + self.v
        self._eig = None

    @property
    def dim(self) -> int:
        return self.h0.size

    def eig(self):
        if self._eig is None:
            vals, vecs = np.linalg.eigh(self.h)
            self._eig = (vals, vecs)
        return self._eig

    def propagator(self, t: float) -> np.ndarray:
        vals, vecs = self.eig()
        return (vecs * np.exp(1j * t * vals)) @ vecs.conj().T

    def free_propagator_diag(self, t: float) -> np.ndarray:
        return np.exp(1j * t * self.h0)

    def h0_power(self, alpha: float) -> np.ndarray:
        return self.h0 ** alpha  # diagonal, all entries positive


def build_one_particle(imp: DiscretizedImpurity) -> OneParticleTriple:
    """Assemble h0 = diag(eps_o, e_1..e_D) and the rank-two coupling
    v = psi_o <psi_f, .> + psi_f <psi_o, .> with psi_f,k = sqrt(w_k) f(e_k)."""
    energies = np.asarray(imp.bath_energies, dtype=float)
    fvals = np.asarray(imp.f.value(energies), dtype=complex)
    if not np.all(np.isfinite(fvals)):
        raise ValueError("form factor produced non-finite samples at bath energies")
    h0 = np.concatenate(([imp.eps_o], energies))
    psi_o = np.zeros(imp.size + 1, dtype=complex)
    psi_o[0] = 1.0
    psi_f = np.concatenate(([0.0], np.sqrt(imp.bath_weights) * fvals))
    return OneParticleTriple(h0, psi_o, psi_f)


def _opnorm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))


def propagator_difference_defect(triple: OneParticleTriple, n: int,
                                 t_grid: Sequence[float]) -> float:
    """Max over the grid of ||h0^n (e^{i t h0} - e^{i t h})|| minus the
    affine bound 2 ||h0^{n-1} v|| + |t| ||h0^{n-1} v h||.

    A nonpositive return certifies the bound on every grid point.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    wn = triple.h0_power(n)
    wn1 = triple.h0_power(n - 1)
    vq = wn1[:, None] * triple.v
    c0 = 2.0 * _opnorm(vq)
    c1 = _opnorm(vq @ triple.h)
    worst = -np.inf
    for t in t_grid:
        diff = np.diag(triple.free_propagator_diag(t)) - triple.propagator(t)
        lhs = _opnorm(wn[:, None] * diff)
        worst = max(worst, lhs - (c0 + abs(t) * c1))
    return float(worst)


def power_weighted_orbit_scan(triple: OneParticleTriple, phi: np.ndarray,
                              alpha: float, t_grid: Sequence[float]):
    """Scan ||h0^alpha e^{i t h} phi|| over the grid.

    Returns (max value, growth flag); the flag is raised when the maximum
    over the final tenth of the grid still exceeds everything before it,
    i.e. the scan shows no sign of saturating.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    phi = np.asarray(phi, dtype=complex)
    w = triple.h0_power(alpha)
    vals, vecs = triple.eig()
    coeffs = vecs.conj().T @ phi
    t_arr = np.asarray(list(t_grid), dtype=float)
    norms = np.empty(t_arr.size)
    for i, t in enumerate(t_arr):
        vec = vecs @ (np.exp(1j * t * vals) * coeffs)
        norms[i] = np.linalg.norm(w * vec)
    cut = max(1, int(0.9 * t_arr.size))
    growing = bool(norms[cut:].max() > norms[:cut].max() * (1.0 + 1e-9)) if cut < t_arr.size else False
    return float(norms.max()), growing


def _conjugate_triple(triple: OneParticleTriple) -> OneParticleTriple:
    return OneParticleTriple(triple.h0, triple.psi_o, triple.psi_f.conj())


def oscillation_infimum(triple: OneParticleTriple, occupation, psi: np.ndarray,
                        window: tuple[float, float], e_grid: Sequence[float],
                        *, eigvec_tol: float = 1e-8):
    """Infimum over the energy grid of the time-coherent excitation mass

        Q(e) = || int_{t1}^{t2} A (1 - e^{-i t (hbar - e)}) psi dt ||^2 / (t2 - t1),

    with A the square-root occupation of h0 and hbar the conjugated-coupling
    Hamiltonian.  The time integral is evaluated in closed form from the
    eigendecomposition.  A strictly positive infimum is the expected outcome
    whenever psi is not an eigenvector of h; as e grows past the spectrum the
    oscillating part washes out and Q plateaus at (t2 - t1) ||A psi||^2, so
    the grid should extend well beyond the largest bath energy.
    """
    t1, t2 = float(window[0]), float(window[1])
    if not t2 > t1:
        raise ValueError("window must satisfy t1 < t2")
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise EigenvectorInputError("psi must be nonzero")
    rayleigh = (psi.conj() @ (triple.h @ psi)) / (norm ** 2)
    residual = np.linalg.norm(triple.h @ psi - rayleigh * psi)
    if residual <= eigvec_tol * _opnorm(triple.h) * norm:
        raise EigenvectorInputError("psi is numerically an eigenvector of h")

    a2 = occupation.weights(triple.h0)  # diagonal of A^2 in the h0 basis
    bar = _conjugate_triple(triple)
    d, u = bar.eig()
    c = u.conj().T @ psi
    w_mat = (u.conj().T * a2[None, :]) @ u

    span = t2 - t1

    def osc_integral(x):
        """int_{t1}^{t2} e^{i t x} dt, stable through x = 0."""
        x = np.asarray(x, dtype=float)
        small = np.abs(x) < 1e-12
        xs = np.where(small, 1.0, x)
        out = (np.exp(1j * t2 * xs) - np.exp(1j * t1 * xs)) / (1j * xs)
        return np.where(small, span, out)

    values = np.empty(len(e_grid))
    for i, e in enumerate(e_grid):
        y = span - np.conj(osc_integral(d - e))  # int (1 - e^{-i t (d_j - e)}) dt
        yc = y * c
        values[i] = float(np.real(yc.conj() @ (w_mat @ yc))) / span
    plateau = span * float(np.real(psi.conj() @ (a2 * psi)))
    return float(values.min()), np.asarray(values), plateau


def inverse_sqrt_rescaling_check(triple: OneParticleTriple,
                                 phi: np.ndarray | None = None,
                                 t_grid: Sequence[float] | None = None,
                                 *, degenerate_tol: float = 1e-12):
    """Spectrum of h0^{-1/2} h h0^{-1/2} against its closed form, plus the
    sup over the grid of ||h0^{-1/2} e^{i t h} phi||.

    The closed form is {1 (multiplicity D-1), 1 +- eps_o^{-1/2} ||w||} with
    ||w|| the discrete norm of the inverse-square-root-weighted coupling.
    The check refuses couplings with ||w|| = sqrt(eps_o), where 0 enters
    the spectrum and boundedness of the weighted orbit is lost.
    """
    half = triple.h0_power(-0.5)
    coupling_norm = float(np.linalg.norm(half * triple.psi_f))
    eps_o = float(triple.h0[0])
    if abs(coupling_norm - np.sqrt(eps_o)) < degenerate_tol:
        raise DegenerateCouplingError(
            f"coupling norm {coupling_norm} equals sqrt(eps_o) within {degenerate_tol}"
        )
    s = half[:, None] * triple.h * half[None, :]
    spectrum = np.linalg.eigvalsh(s)
    shift = coupling_norm / np.sqrt(eps_o)
    expected = np.sort(np.concatenate(
        ([1.0 - shift, 1.0 + shift], np.ones(triple.dim - 2))))
    if phi is None:
        phi = np.ones(triple.dim, dtype=complex) / np.sqrt(triple.dim)
    if t_grid is None:
        t_grid = np.linspace(0.0, 100.0, 201)
    vals, vecs = triple.eig()
    coeffs = vecs.conj().T @ np.asarray(phi, dtype=complex)
    sup = 0.0
    for t in t_grid:
        vec = vecs @ (np.exp(1j * t * vals) * coeffs)
        sup = max(sup, float(np.linalg.norm(half * vec)))
    return np.sort(spectrum), expected, sup
