"""Shared quadrature, divergence detection, and cumulant/moment algebra.

All densities passed to this module must accept numpy arrays (vectorized
evaluation).  Semi-infinite integrals are probed over a ladder of tail
cutoffs; convergent values are assembled from panel Gauss-Legendre sums
plus a geometric tail extrapolation, divergent ones report the fitted
growth exponent of the partial-integral increments (logarithmic growth
fits to exponent 0 by construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from math import comb, inf, isfinite
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "QuadratureRule",
    "IntegralVerdict",
    "NonEvaluableError",
    "DEFAULT_RULE",
    "integrate",
    "detect_divergence",
    "combine_verdicts",
    "cumulants_to_moments",
    "moments_to_cumulants",
]


class NonEvaluableError(ValueError):
    """Density returned a non-finite value away from declared singular points."""


@dataclass(frozen=True)
class QuadratureRule:
    """Tolerances and tail-probing schedule for the quadrature engine.

    ``tail_cutoffs`` are the upper limits used to probe semi-infinite
    domains for divergence; they must be strictly increasing and there
    must be at least four of them so a growth trend can be fitted.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 4096
    tail_cutoffs: tuple[float, ...] = (10.0, 1e2, 1e3, 1e4)

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 4:
            raise ValueError("max_subdivisions must be at least 4")
        cuts = tuple(float(c) for c in self.tail_cutoffs)
        if len(cuts) < 4 or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError("tail_cutoffs must be >= 4 strictly increasing values")
        object.__setattr__(self, "tail_cutoffs", cuts)


DEFAULT_RULE = QuadratureRule()


@dataclass(frozen=True)
class IntegralVerdict:
    """Outcome of a finiteness-sensitive integral.

    ``status`` is ``"convergent"`` or ``"divergent"``.  Convergent verdicts
    carry ``value`` and ``err_estimate``; divergent ones carry the fitted
    ``growth_exponent`` (0.0 means logarithmic).  ``inconclusive`` is set
    when the tail increments were non-monotone beyond tolerance, which
    typically signals an oscillatory density fed to a one-sided probe.
    """

    status: str
    value: complex | float = 0.0
    err_estimate: float = 0.0
    growth_exponent: float = 0.0
    inconclusive: bool = False

    def __post_init__(self):
        if self.status not in ("convergent", "divergent"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "convergent" and self.err_estimate < 0:
            raise ValueError("err_estimate must be nonnegative")
        if self.status == "divergent" and self.growth_exponent < 0:
            raise ValueError("growth_exponent must be nonnegative")

    @property
    def is_convergent(self) -> bool:
        return self.status == "convergent"

    @property
    def is_divergent(self) -> bool:
        return self.status == "divergent"

    def to_dict(self) -> dict:
        out = {"status": self.status, "inconclusive": self.inconclusive}
        if self.is_convergent:
            v = self.value
            if isinstance(v, complex):
                out["value"] = {"re": v.real, "im": v.imag}
            else:
                out["value"] = v
            out["err_estimate"] = self.err_estimate
        else:
            out["growth_exponent"] = self.growth_exponent
        return out


@lru_cache(maxsize=None)
def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _evaluate(density, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(density(pts))
    if vals.shape != pts.shape:
        vals = np.broadcast_to(vals, pts.shape)
    finite = np.isfinite(vals)
    if not np.all(finite):
        bad = pts[~finite]
        raise NonEvaluableError(
            f"density not finite at interior point(s), e.g. e={bad.flat[0]!r}"
        )
    return vals


def _panel_sums(density, edges: np.ndarray, order: int):
    """Gauss-Legendre sums over panels.

    Returns (signed integral, integral of |density|, error estimate); the
    error estimate is the discrepancy against an embedded lower-order rule.
    """
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)

    def rule_sums(n):
        x, w = _gauss(n)
        pts = mid[:, None] + half[:, None] * x[None, :]
        vals = _evaluate(density, pts)
        weighted = vals * w[None, :]
        signed = (weighted.sum(axis=1) * half).sum()
        absol = ((np.abs(vals) * w[None, :]).sum(axis=1) * half).sum()
        return signed, absol

    s_hi, a_hi = rule_sums(order)
    s_lo, _ = rule_sums(max(4, (2 * order) // 3))
    return s_hi, float(a_hi), float(abs(s_hi - s_lo))


def _build_edges(a, b, breakpoints, oscillation, singularities, max_panels, refine_depth):
    pts = {float(a), float(b)}
    pts.update(float(p) for p in breakpoints if a < p < b)
    edges = sorted(pts)

    # Default subdivision: each gap gets enough panels that smooth decay
    # (exponential or algebraic) is resolved by the panel rule.
    base_cap = (b - a) / 8.0
    subdivided = [edges[0]]
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((hi - lo) / base_cap))
        subdivided.extend(lo + (hi - lo) * (k + 1) / n for k in range(n))
    edges = subdivided

    if oscillation:
        width_cap = (2.0 * math.pi / abs(oscillation)) / 6.0
        span = b - a
        need = span / width_cap
        if need > max_panels:
            width_cap = span / max_panels
        refined = [edges[0]]
        for lo, hi in zip(edges[:-1], edges[1:]):
            n = max(1, math.ceil((hi - lo) / width_cap))
            refined.extend(lo + (hi - lo) * (k + 1) / n for k in range(n))
        edges = refined

    sing = frozenset(float(s) for s in singularities if a <= s <= b)
    if sing:
        out = []
        arr = edges
        for lo, hi in zip(arr[:-1], arr[1:]):
            out.append(lo)
            w = hi - lo
            lo_s, hi_s = lo in sing, hi in sing
            if lo_s and hi_s:
                out.extend(lo + 0.5 * w * 0.5 ** j for j in range(refine_depth, 0, -1))
                out.extend(hi - 0.5 * w * 0.5 ** j for j in range(1, refine_depth + 1))
            elif lo_s:
                out.extend(lo + w * 0.5 ** j for j in range(refine_depth, 0, -1))
            elif hi_s:
                out.extend(hi - w * 0.5 ** j for j in range(1, refine_depth + 1))
        out.append(arr[-1])
        edges = sorted(set(out))
    return np.asarray(edges, dtype=float)


def _segment_quad(density, a, b, rule, breakpoints, oscillation, singularities, order,
                  refine_depth):
    edges = _build_edges(a, b, breakpoints, oscillation, singularities,
                         max_panels=rule.max_subdivisions, refine_depth=refine_depth)
    return _panel_sums(density, edges, order)


def _fit_growth_exponent(cutoffs, increments):
    """Slope of log(increment) vs log(cutoff); pure powers fit exactly and a
    logarithmic tail gives constant increments, hence slope 0."""
    pts = [(math.log(c), math.log(i)) for c, i in zip(cutoffs, increments) if i > 0]
    if len(pts) < 2:
        return 0.0
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope = float(np.polyfit(xs, ys, 1)[0])
    if abs(slope) < 0.05:
        slope = 0.0
    return max(slope, 0.0)


_RATIO_SPLIT = 0.9  # increment ratio below which the tail counts as decaying


def integrate(
    density: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float],
    rule: QuadratureRule = DEFAULT_RULE,
    *,
    breakpoints: Iterable[float] = (),
    oscillation: float | None = None,
    singularities: Iterable[float] = (),
    nonnegative: bool = False,
    order: int = 16,
    refine_depth: int = 24,
) -> IntegralVerdict:
    """Integrate ``density`` over ``domain``, deciding finiteness on the way.

    ``domain`` is ``(a, b)`` with ``b`` possibly ``math.inf``.  Optional
    hints: interior ``breakpoints`` (kinks, knees, unit-interval poles),
    an ``oscillation`` frequency (panels then resolve the period), and
    ``singularities`` where panels are geometrically refined (integrable
    endpoint singularities only, per the contract).
    """
    a, b = float(domain[0]), float(domain[1])
    if not b > a:
        raise ValueError("domain must satisfy a < b")
    breakpoints = tuple(breakpoints)
    singularities = tuple(singularities)

    if isfinite(b):
        signed, absol, err = _segment_quad(
            density, a, b, rule, breakpoints, oscillation, singularities, order,
            refine_depth)
        if nonnegative:
            signed = float(np.real(signed))
        return IntegralVerdict("convergent", value=_as_scalar(signed), err_estimate=err)

    cutoffs = [c for c in rule.tail_cutoffs if c > a]
    if len(cutoffs) < 4:
        lo = max(a, 1.0)
        cutoffs = [lo * 10.0 ** k for k in range(1, 5)]
    seg_edges = [a] + cutoffs

    signed_incs, abs_incs, errs = [], [], []
    for lo, hi in zip(seg_edges[:-1], seg_edges[1:]):
        s, ab, e = _segment_quad(
            density, lo, hi, rule, breakpoints, oscillation, singularities, order,
            refine_depth)
        signed_incs.append(s)
        abs_incs.append(ab)
        errs.append(e)

    total_abs = sum(abs_incs)
    tol = max(rule.abs_tol, rule.rel_tol * total_abs)
    tail_incs = abs_incs[1:]  # increments across the cutoff ladder

    if all(i <= tol for i in tail_incs[-3:]):
        status, inconclusive = "convergent", False
    else:
        ratios = []
        for prev, cur in zip(tail_incs[:-1], tail_incs[1:]):
            if prev <= tol and cur <= tol:
                ratios.append(0.0)
            elif prev <= 0:
                ratios.append(inf)
            else:
                ratios.append(cur / prev)
        ratios = ratios[-3:]
        decaying = [r < _RATIO_SPLIT for r in ratios]
        if all(decaying):
            status, inconclusive = "convergent", False
        elif not any(decaying):
            status, inconclusive = "divergent", False
        else:
            status = "divergent" if tail_incs[-1] > tail_incs[0] else "convergent"
            inconclusive = True

    if status == "divergent":
        exponent = _fit_growth_exponent(cutoffs[1:], tail_incs)
        return IntegralVerdict("divergent", growth_exponent=exponent,
                               inconclusive=inconclusive)

    value = sum(signed_incs)
    err = sum(errs)
    # Geometric extrapolation of the remaining tail from the cutoff ladder;
    # exact for power-law tails since decade increments are then geometric.
    if abs_incs[-2] > tol and abs_incs[-1] > 0:
        r = abs_incs[-1] / abs_incs[-2]
        if r < 0.95:
            tail_abs = abs_incs[-1] * r / (1.0 - r)
            s_prev, s_last = signed_incs[-2], signed_incs[-1]
            rs = s_last / s_prev if abs(s_prev) > 0 else 0.0
            if nonnegative or (0.0 < abs(rs) < 0.95 and abs(abs(rs) - r) < 0.2 * r):
                rr = r if nonnegative else rs
                value = value + s_last * rr / (1.0 - rr)
                err += 0.1 * tail_abs
            else:
                err += tail_abs
    elif abs_incs[-1] > tol:
        err += abs_incs[-1]

    if nonnegative:
        value = float(np.real(value))
    return IntegralVerdict("convergent", value=_as_scalar(value),
                           err_estimate=err, inconclusive=inconclusive)


def _as_scalar(v):
    v = complex(v)
    if v.imag == 0.0:
        return v.real
    return v


def detect_divergence(
    density: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float],
    rule: QuadratureRule = DEFAULT_RULE,
    *,
    breakpoints: Iterable[float] = (),
    oscillation: float | None = None,
    singularities: Iterable[float] = (),
    order: int = 16,
    refine_depth: int = 24,
) -> IntegralVerdict:
    """Finiteness probe for a nonnegative density on a semi-infinite interval.

    Convergent iff the partial integrals over the tail-cutoff ladder are
    Cauchy within tolerance (geometrically decaying increments); otherwise
    divergent with the increment-fitted growth exponent.
    """

    def guarded(pts):
        vals = np.asarray(density(pts), dtype=float)
        if np.any(vals < -1e-9 * (1.0 + np.max(np.abs(vals)))):
            raise ValueError("detect_divergence requires a nonnegative density")
        return np.clip(vals, 0.0, None)

    return integrate(guarded, domain, rule, breakpoints=breakpoints,
                     oscillation=oscillation, singularities=singularities,
                     nonnegative=True, order=order, refine_depth=refine_depth)


def combine_verdicts(verdicts: Sequence[IntegralVerdict],
                     weights: Sequence[complex] | None = None) -> IntegralVerdict:
    """Weighted sum of verdicts: any divergent part makes the sum divergent."""
    if weights is None:
        weights = [1.0] * len(verdicts)
    inconclusive = any(v.inconclusive for v in verdicts)
    divergent = [v for v in verdicts if v.is_divergent]
    if divergent:
        return IntegralVerdict(
            "divergent",
            growth_exponent=max(v.growth_exponent for v in divergent),
            inconclusive=inconclusive,
        )
    value = sum(w * v.value for w, v in zip(weights, verdicts))
    err = sum(abs(w) * v.err_estimate for w, v in zip(weights, verdicts))
    return IntegralVerdict("convergent", value=_as_scalar(value),
                           err_estimate=err, inconclusive=inconclusive)


def cumulants_to_moments(kappa: Sequence[float]) -> list[float]:
    """Raw moments from cumulants via the complete-Bell recursion
    m_n = sum_j C(n-1, j) kappa_{j+1} m_{n-1-j}."""
    if len(kappa) < 1:
        raise ValueError("need at least one cumulant")
    m = [1.0]
    for n in range(1, len(kappa) + 1):
        m.append(sum(comb(n - 1, j) * kappa[j] * m[n - 1 - j] for j in range(n)))
    return m[1:]


def moments_to_cumulants(moments: Sequence[float]) -> list[float]:
    """Inverse of :func:`cumulants_to_moments`."""
    if len(moments) < 1:
        raise ValueError("need at least one moment")
    m = [1.0] + list(moments)
    kappa: list[float] = []
    for n in range(1, len(moments) + 1):
        k_n = m[n] - sum(comb(n - 1, j) * kappa[j] * m[n - 1 - j] for j in range(n - 1))
        kappa.append(k_n)
    return kappa
