"""Quadratic smoothness functionals on a box, assembled by exact integration.

The central object is the symmetric matrix K with theta' K theta equal to
the integrated squared Hessian norm (or one of the alternative quadratic
criteria) of the polynomial with coefficients theta.  Integrands are
polynomials, so every entry has a closed form; entries are accumulated in
rational arithmetic whenever the box endpoints allow it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .basis import Basis, Monomial
from .errors import DimensionMismatch, InvalidInput

Box = Sequence[tuple[float, float]]
Polynomial = Sequence[tuple[Monomial, float]]

_MAX_EXACT_DENOMINATOR = 10**6


class CriterionKind(str, Enum):
    HESSIAN = "hessian"
    GRADIENT = "gradient"
    VALUE = "value"
    WEIGHTED_HESSIAN = "weighted_hessian"


@dataclass(frozen=True)
class QuadraticCriterion:
    """Which quadratic functional to integrate.

    ``weight_or_target`` carries the weight polynomial for the weighted
    Hessian criterion, or the target polynomial for the value criterion.
    ``mixed_partials`` selects whether the Hessian sum runs over ordered
    index pairs (the trace-of-H-squared convention, default) or counts
    each mixed partial once.
    """

    kind: CriterionKind = CriterionKind.HESSIAN
    weight_or_target: tuple[tuple[Monomial, float], ...] | None = None
    mixed_partials: str = "ordered"

    def __post_init__(self):
        if self.mixed_partials not in ("ordered", "unordered"):
            raise InvalidInput("mixed_partials must be 'ordered' or 'unordered'")
        if self.weight_or_target is not None:
            wt = tuple((m, float(c)) for m, c in self.weight_or_target)
            object.__setattr__(self, "weight_or_target", wt)
        if self.kind is CriterionKind.WEIGHTED_HESSIAN and not self.weight_or_target:
            raise InvalidInput("weighted criterion needs a weight polynomial")


def hessian_criterion(mixed_partials: str = "ordered") -> QuadraticCriterion:
    return QuadraticCriterion(CriterionKind.HESSIAN, mixed_partials=mixed_partials)


def gradient_criterion() -> QuadraticCriterion:
    return QuadraticCriterion(CriterionKind.GRADIENT)


def value_criterion(target: Polynomial | None = None) -> QuadraticCriterion:
    wt = tuple(target) if target is not None else None
    return QuadraticCriterion(CriterionKind.VALUE, weight_or_target=wt)


def weighted_hessian_criterion(
    weight: Polynomial, mixed_partials: str = "ordered"
) -> QuadraticCriterion:
    return QuadraticCriterion(
        CriterionKind.WEIGHTED_HESSIAN,
        weight_or_target=tuple(weight),
        mixed_partials=mixed_partials,
    )


@dataclass(frozen=True)
class SmoothnessForm:
    """Symmetric PSD matrix of a quadratic criterion over a basis.

    ``zero_idx`` indexes the structurally zero rows/columns (for the
    Hessian criterion: all terms of total degree at most one) and
    ``k_tilde`` is the principal submatrix on the complementary
    ``active_idx``.
    """

    k: np.ndarray
    zero_idx: tuple[int, ...]
    active_idx: tuple[int, ...]
    k_tilde: np.ndarray
    criterion: QuadraticCriterion
    box: tuple[tuple[float, float], ...]

    @property
    def size(self) -> int:
        return self.k.shape[0]


def _as_small_fraction(x: float) -> Fraction | None:
    f = Fraction(x).limit_denominator(_MAX_EXACT_DENOMINATOR)
    return f if float(f) == x else None


def monomial_integral(m: Monomial, box: Box) -> float:
    """Integral of x^m over the box, one factor per coordinate."""
    if len(box) != m.dimension:
        raise DimensionMismatch("box and monomial dimension differ")
    val = 1.0
    for e, (a, b) in zip(m.exponents, box):
        val *= (b ** (e + 1) - a ** (e + 1)) / (e + 1)
    return val


class _Integrator:
    """Caches per-coordinate power integrals; exact when the box is rational."""

    def __init__(self, box: Box):
        self.box = [(float(a), float(b)) for a, b in box]
        fracs = [(_as_small_fraction(a), _as_small_fraction(b)) for a, b in self.box]
        self.exact = all(a is not None and b is not None for a, b in fracs)
        self._ab = fracs if self.exact else self.box
        self._cache: list[dict[int, Fraction | float]] = [{} for _ in box]

    def power(self, coord: int, e: int):
        cache = self._cache[coord]
        if e not in cache:
            a, b = self._ab[coord]
            cache[e] = (b ** (e + 1) - a ** (e + 1)) / (e + 1)
        return cache[e]

    def integral(self, exps: Sequence[int]):
        val = Fraction(1) if self.exact else 1.0
        for k, e in enumerate(exps):
            val *= self.power(k, e)
        return val


def _first_partial(exps: tuple[int, ...], i: int):
    if exps[i] == 0:
        return None
    c = exps[i]
    out = list(exps)
    out[i] -= 1
    return c, tuple(out)


def _second_partial(exps: tuple[int, ...], i: int, j: int):
    """Coefficient and exponents of d^2(x^exps)/dx_i dx_j, or None if zero."""
    if i == j:
        if exps[i] < 2:
            return None
        c = exps[i] * (exps[i] - 1)
        out = list(exps)
        out[i] -= 2
        return c, tuple(out)
    if exps[i] == 0 or exps[j] == 0:
        return None
    c = exps[i] * exps[j]
    out = list(exps)
    out[i] -= 1
    out[j] -= 1
    return c, tuple(out)


def _index_pairs(d: int, mixed: str):
    if mixed == "ordered":
        return [(i, j) for i in range(d) for j in range(d)]
    return [(i, j) for i in range(d) for j in range(i, d)]


def _check_weight_nonnegative(weight, box):
    # sampled check only; positivity is not certified
    grids = [np.linspace(a, b, 17) for a, b in box]
    mesh = np.stack([g.ravel() for g in np.meshgrid(*grids)], axis=1)
    vals = np.zeros(len(mesh))
    for mono, c in weight:
        vals += c * np.prod(mesh ** np.array(mono.exponents, dtype=float), axis=1)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < -1e-12 * scale:
        raise InvalidInput("weight polynomial is negative on the box (sampled check)")


def build_form(
    basis: Basis, box: Box, criterion: QuadraticCriterion | None = None
) -> SmoothnessForm:
    """Assemble K for the requested criterion over the box.

    Hessian entries sum products of matching second partials over index
    pairs (i, j); with the default ordered convention each mixed partial
    contributes twice, matching the trace of the squared Hessian.
    """
    criterion = criterion or QuadraticCriterion()
    d = basis.dimension
    if len(box) != d:
        raise DimensionMismatch("box and basis dimension differ")
    box = tuple((float(a), float(b)) for a, b in box)
    if any(a >= b for a, b in box):
        raise InvalidInput("each box interval needs a < b")

    kind = criterion.kind
    wt = criterion.weight_or_target
    if kind is CriterionKind.WEIGHTED_HESSIAN:
        _check_weight_nonnegative(wt, box)

    integ = _Integrator(box)
    weight_terms = None
    if kind is CriterionKind.WEIGHTED_HESSIAN:
        weight_terms = []
        for mono, c in wt:
            cf = _as_small_fraction(c) if integ.exact else None
            weight_terms.append((mono.exponents, cf if cf is not None else c))
        if integ.exact and any(not isinstance(c, Fraction) for _, c in weight_terms):
            integ = _Integrator(box)
            integ.exact = False  # fall back: weight coefficients not small rationals
            integ._ab = integ.box
            integ._cache = [{} for _ in box]
            weight_terms = [(e, float(c)) for e, c in weight_terms]

    def weighted_integral(exps):
        if weight_terms is None:
            return integ.integral(exps)
        total = Fraction(0) if integ.exact else 0.0
        for wexp, wc in weight_terms:
            total += wc * integ.integral([a + b for a, b in zip(exps, wexp)])
        return total

    n_terms = len(basis)
    if kind in (CriterionKind.HESSIAN, CriterionKind.WEIGHTED_HESSIAN):
        pairs = _index_pairs(d, criterion.mixed_partials)
        derivs = []
        for t in basis.terms:
            per = {}
            for i, j in pairs:
                sp = _second_partial(t.exponents, i, j)
                if sp is not None:
                    per[(i, j)] = sp
            derivs.append(per)

        def entry(p, q):
            acc = Fraction(0) if integ.exact else 0.0
            dp, dq = derivs[p], derivs[q]
            for ij, (cp, ep) in dp.items():
                got = dq.get(ij)
                if got is None:
                    continue
                cq, eq = got
                acc += cp * cq * weighted_integral(
                    [a + b for a, b in zip(ep, eq)]
                )
            return acc

    elif kind is CriterionKind.GRADIENT:

        def entry(p, q):
            acc = Fraction(0) if integ.exact else 0.0
            ep_all = basis.terms[p].exponents
            eq_all = basis.terms[q].exponents
            for i in range(d):
                fp = _first_partial(ep_all, i)
                fq = _first_partial(eq_all, i)
                if fp is None or fq is None:
                    continue
                acc += fp[0] * fq[0] * integ.integral(
                    [a + b for a, b in zip(fp[1], fq[1])]
                )
            return acc

    else:  # VALUE: Gram matrix of the basis itself

        def entry(p, q):
            ep = basis.terms[p].exponents
            eq = basis.terms[q].exponents
            return integ.integral([a + b for a, b in zip(ep, eq)])

    k = np.zeros((n_terms, n_terms))
    for p in range(n_terms):
        for q in range(p, n_terms):
            v = float(entry(p, q))
            k[p, q] = v
            k[q, p] = v

    degrees = basis.degrees()
    if kind in (CriterionKind.HESSIAN, CriterionKind.WEIGHTED_HESSIAN):
        zero = tuple(int(i) for i in np.flatnonzero(degrees <= 1))
    elif kind is CriterionKind.GRADIENT:
        zero = tuple(int(i) for i in np.flatnonzero(degrees == 0))
    else:
        zero = ()
    active = tuple(i for i in range(n_terms) if i not in set(zero))
    k_tilde = k[np.ix_(active, active)].copy()
    return SmoothnessForm(
        k=k, zero_idx=zero, active_idx=active, k_tilde=k_tilde,
        criterion=criterion, box=box,
    )


def psi_value(theta: np.ndarray, form: SmoothnessForm) -> float:
    """Quadratic criterion value theta' K theta, clipped at zero."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (form.size,):
        raise DimensionMismatch(
            f"theta has length {theta.shape}, K is {form.size}x{form.size}"
        )
    return max(float(theta @ form.k @ theta), 0.0)


def hessian_frobenius_sq(
    basis: Basis, theta: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Squared Frobenius norm of the Hessian of sum theta_p x^alpha_p at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = basis.dimension
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(len(pts))
    for i in range(d):
        for j in range(d):
            h_ij = np.zeros(len(pts))
            for p, t in enumerate(basis.terms):
                if theta[p] == 0.0:
                    continue
                sp = _second_partial(t.exponents, i, j)
                if sp is None:
                    continue
                c, exps = sp
                h_ij += theta[p] * c * np.prod(
                    pts ** np.array(exps, dtype=float), axis=1
                )
            out += h_ij**2
    return out


def finite_difference_check(basis: Basis, x: Sequence[float], h: float = 1e-4) -> float:
    """Worst deviation of analytic second partials from central differences."""
    if h <= 0:
        raise InvalidInput("h must be positive")
    x = np.asarray(x, dtype=float)
    d = basis.dimension
    if x.shape != (d,):
        raise DimensionMismatch("evaluation point has wrong dimension")

    def mono_val(exps, pt):
        return float(np.prod(pt ** np.array(exps, dtype=float)))

    worst = 0.0
    for t in basis.terms:
        exps = t.exponents
        for i in range(d):
            for j in range(i, d):
                sp = _second_partial(exps, i, j)
                analytic = 0.0 if sp is None else sp[0] * mono_val(sp[1], x)
                ei = np.zeros(d)
                ei[i] = h
                if i == j:
                    fd = (
                        mono_val(exps, x + ei)
                        - 2 * mono_val(exps, x)
                        + mono_val(exps, x - ei)
                    ) / h**2
                else:
                    ej = np.zeros(d)
                    ej[j] = h
                    fd = (
                        mono_val(exps, x + ei + ej)
                        - mono_val(exps, x + ei - ej)
                        - mono_val(exps, x - ei + ej)
                        + mono_val(exps, x - ei - ej)
                    ) / (4 * h**2)
                worst = max(worst, abs(analytic - fd))
    return worst
