"""Monomials, term orders, designs, and rank-inclusion basis selection.

A basis here is an ordered list of monomials attached to a design of
distinct points.  The saturated prefix has exactly as many terms as design
points and evaluates to a nonsingular matrix; any terms past the prefix
form the extension used for smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import BasisSelectionError, DimensionMismatch, InvalidInput


@dataclass(frozen=True)
class Monomial:
    """A power product x1^e1 * ... * xd^ed given by its exponent vector."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) == 0:
            raise InvalidInput("monomial needs at least one variable")
        if any(e < 0 for e in exps):
            raise InvalidInput(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def __str__(self) -> str:
        if self.degree == 0:
            return "1"
        parts = []
        for k, e in enumerate(self.exponents):
            if e == 1:
                parts.append(f"x{k + 1}")
            elif e > 1:
                parts.append(f"x{k + 1}^{e}")
        return "*".join(parts)


class OrderKind(str, Enum):
    DEGLEX = "deglex"
    DEGREVLEX = "degrevlex"
    LEX = "lex"


@dataclass(frozen=True)
class TermOrder:
    """Scan order on monomials of a fixed dimension.

    ``priority`` lists 1-based variable indices from most to least
    significant; ``None`` means natural order (x1 most significant).  For
    the degree-compatible kinds, lower total degree always scans first and
    ties break so that higher-priority variables lead: with x1 > x2 the
    degree-two block scans x1^2, x1*x2, x2^2.  Plain lex scans ascending
    from the constant, so in two or more dimensions only powers of the
    least significant variable are ever reached.
    """

    kind: OrderKind = OrderKind.DEGLEX
    priority: tuple[int, ...] | None = None

    def significance(self, d: int) -> tuple[int, ...]:
        """0-based variable indices, most significant first."""
        if self.priority is None:
            return tuple(range(d))
        if sorted(self.priority) != list(range(1, d + 1)):
            raise InvalidInput(
                f"priority {self.priority} is not a permutation of 1..{d}"
            )
        return tuple(p - 1 for p in self.priority)

    @property
    def graded(self) -> bool:
        return self.kind in (OrderKind.DEGLEX, OrderKind.DEGREVLEX)


def scan_key(m: Monomial, order: TermOrder):
    """Sort key realizing the scan order; smaller key scans earlier."""
    perm = order.significance(m.dimension)
    e = tuple(m.exponents[i] for i in perm)
    if order.kind is OrderKind.DEGLEX:
        return (m.degree, tuple(-v for v in e))
    if order.kind is OrderKind.DEGREVLEX:
        return (m.degree, tuple(reversed(e)))
    return e


def compare(a: Monomial, b: Monomial, order: TermOrder) -> int:
    """Return -1, 0 or 1 as ``a`` scans before, equal to, or after ``b``."""
    if a.dimension != b.dimension:
        raise DimensionMismatch(
            f"cannot compare monomials of dimension {a.dimension} and {b.dimension}"
        )
    ka, kb = scan_key(a, order), scan_key(b, order)
    return (ka > kb) - (ka < kb)


def _exponents_of_degree(d: int, deg: int) -> Iterator[tuple[int, ...]]:
    if d == 1:
        yield (deg,)
        return
    for first in range(deg + 1):
        for rest in _exponents_of_degree(d - 1, deg - first):
            yield (first,) + rest


def _monomial_stream(d: int, order: TermOrder) -> Iterator[Monomial]:
    """Monomials of dimension d in ascending scan order, unbounded."""
    if order.kind is OrderKind.LEX and d > 1:
        least = order.significance(d)[-1]
        k = 0
        while True:
            exps = [0] * d
            exps[least] = k
            yield Monomial(tuple(exps))
            k += 1
    deg = 0
    while True:
        block = [Monomial(e) for e in _exponents_of_degree(d, deg)]
        block.sort(key=lambda m: scan_key(m, order))
        yield from block
        deg += 1


def enumerate_monomials(d: int, order: TermOrder, limit: int) -> list[Monomial]:
    """First ``limit`` monomials in ascending scan order, constant first."""
    if d < 1 or limit < 1:
        raise InvalidInput("need d >= 1 and limit >= 1")
    out = []
    for m in _monomial_stream(d, order):
        out.append(m)
        if len(out) == limit:
            return out
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class Design:
    """n distinct points in R^d plus the box over which smoothness is measured."""

    points: np.ndarray
    box: tuple[tuple[float, float], ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.size == 0:
            raise InvalidInput("design points must form a nonempty 2-D array")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("design points must be finite")
        if len({tuple(row) for row in pts}) != pts.shape[0]:
            raise InvalidInput("design points must be pairwise distinct")
        box = self.box
        if box is None:
            box = tuple((0.0, 1.0) for _ in range(pts.shape[1]))
        box = tuple((float(a), float(b)) for a, b in box)
        if len(box) != pts.shape[1]:
            raise DimensionMismatch(
                f"box has {len(box)} intervals for dimension {pts.shape[1]}"
            )
        if any(a >= b for a, b in box):
            raise InvalidInput("each box interval needs a < b")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "box", box)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def scaled_points(self) -> np.ndarray:
        """Points mapped coordinate-wise onto [0, 1] through the box."""
        lo = np.array([a for a, _ in self.box])
        hi = np.array([b for _, b in self.box])
        return (self.points - lo) / (hi - lo)


@dataclass(frozen=True)
class Basis:
    """Ordered monomial list whose first ``saturated_len`` terms interpolate alone."""

    terms: tuple[Monomial, ...]
    saturated_len: int
    order: TermOrder = field(default_factory=TermOrder)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise InvalidInput("basis needs at least one term")
        d = terms[0].dimension
        if any(t.dimension != d for t in terms):
            raise DimensionMismatch("basis terms of mixed dimension")
        if len(set(terms)) != len(terms):
            raise InvalidInput("duplicate monomials in basis")
        if not 0 <= self.saturated_len <= len(terms):
            raise InvalidInput("saturated_len out of range")
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self.terms)

    @property
    def dimension(self) -> int:
        return self.terms[0].dimension

    @property
    def extension(self) -> tuple[Monomial, ...]:
        return self.terms[self.saturated_len:]

    def exponent_matrix(self) -> np.ndarray:
        return np.array([t.exponents for t in self.terms], dtype=int)

    def degrees(self) -> np.ndarray:
        return self.exponent_matrix().sum(axis=1)


def evaluate_columns(points: np.ndarray, terms: Sequence[Monomial]) -> np.ndarray:
    """Evaluate each monomial at each point; 0^0 = 1."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    exps = np.array([t.exponents for t in terms], dtype=float)
    return np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)


def design_matrix(design: Design, basis: Basis | Sequence[Monomial]) -> np.ndarray:
    """n-by-|basis| evaluation matrix of the basis on the design points."""
    terms = basis.terms if isinstance(basis, Basis) else tuple(basis)
    if terms[0].dimension != design.dimension:
        raise DimensionMismatch(
            f"basis dimension {terms[0].dimension} != design dimension {design.dimension}"
        )
    return evaluate_columns(design.points, terms)


class _RankTracker:
    """Incremental orthonormal column set for greedy rank decisions."""

    def __init__(self, length: int, rank_tol: float):
        self.q = np.empty((length, 0))
        self.rank_tol = rank_tol
        self.max_norm = 0.0

    def try_add(self, col: np.ndarray) -> bool:
        self.max_norm = max(self.max_norm, float(np.linalg.norm(col)))
        r = col - self.q @ (self.q.T @ col)
        r = r - self.q @ (self.q.T @ r)  # re-orthogonalize once
        nrm = float(np.linalg.norm(r))
        if nrm <= self.rank_tol * self.max_norm:
            return False
        self.q = np.column_stack([self.q, r / nrm])
        return True


def good_saturated_basis(
    design: Design,
    order: TermOrder | None = None,
    rank_tol: float = 1e-9,
) -> Basis:
    """Select n monomials by scanning the term order with rank inclusion.

    Columns are evaluated on box-rescaled coordinates for the rank test
    only; the returned basis is used in original coordinates everywhere
    else.
    """
    order = order or TermOrder()
    n, d = design.n, design.dimension
    scaled = design.scaled_points()
    tracker = _RankTracker(n, rank_tol)
    accepted: list[Monomial] = []

    if order.graded:
        # degree n-1 always suffices to interpolate n distinct points
        max_candidates = sum(
            1 for _ in _exponents_of_degree_upto(d, n - 1)
        )
    else:
        max_candidates = n  # higher powers of one variable add no new rank

    stream = _monomial_stream(d, order)
    for _ in range(max_candidates):
        mono = next(stream)
        col = evaluate_columns(scaled, [mono])[:, 0]
        if tracker.try_add(col):
            accepted.append(mono)
            if len(accepted) == n:
                return Basis(tuple(accepted), saturated_len=n, order=order)
    raise BasisSelectionError(
        f"rank inclusion found only {len(accepted)} of {n} independent terms; "
        "the design may be degenerate for this term order"
    )


def _exponents_of_degree_upto(d: int, max_deg: int) -> Iterator[tuple[int, ...]]:
    for deg in range(max_deg + 1):
        yield from _exponents_of_degree(d, deg)


def extend_basis(
    basis: Basis, design: Design, order: TermOrder | None = None, total: int = 0
) -> Basis:
    """Append the next monomials in scan order until the basis has ``total`` terms."""
    order = order or basis.order
    if design.dimension != basis.dimension:
        raise DimensionMismatch("design and basis dimension differ")
    if total < len(basis):
        raise InvalidInput(
            f"total {total} is smaller than the current basis size {len(basis)}"
        )
    present = set(basis.terms)
    terms = list(basis.terms)
    for mono in _monomial_stream(basis.dimension, order):
        if len(terms) == total:
            break
        if mono in present:
            continue
        terms.append(mono)
        present.add(mono)
    return Basis(tuple(terms), saturated_len=basis.saturated_len, order=order)


def is_good_supersaturated(
    design: Design, basis: Basis, rank_tol: float = 1e-9
) -> bool:
    """True when the basis contains a scan-order nonsingular sub-basis of size n."""
    n = design.n
    if len(basis) < n:
        return False
    scaled = design.scaled_points()
    x = evaluate_columns(scaled, basis.terms)
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[min(x.shape) - 1] <= rank_tol * sv[0]:
        return False
    tracker = _RankTracker(n, rank_tol)
    count = 0
    for mono in sorted(basis.terms, key=lambda m: scan_key(m, basis.order)):
        if tracker.try_add(evaluate_columns(scaled, [mono])[:, 0]):
            count += 1
            if count == n:
                return True
    return False


_SOBOL_BITS = 30


def _sobol_direction_numbers() -> tuple[np.ndarray, np.ndarray]:
    # dimension 1: van der Corput in base 2 (all m_k = 1)
    m1 = [1] * _SOBOL_BITS
    # dimension 2: primitive polynomial x + 1, m_1 = 1
    m2 = [1]
    for _ in range(1, _SOBOL_BITS):
        m2.append((2 * m2[-1]) ^ m2[-1])
    v1 = np.array([m << (_SOBOL_BITS - k - 1) for k, m in enumerate(m1)], dtype=np.int64)
    v2 = np.array([m << (_SOBOL_BITS - k - 1) for k, m in enumerate(m2)], dtype=np.int64)
    return v1, v2


def sobol_2d(count: int, skip: int = 1) -> Design:
    """First ``count`` points of the 2-D Sobol sequence after dropping ``skip``.

    Gray-code construction with the classic direction numbers (second
    dimension from the primitive polynomial x + 1), so the stream starts
    (0, 0), (0.5, 0.5), (0.75, 0.25), ...  The default skip of one drops
    the all-zeros point.
    """
    if count < 1:
        raise InvalidInput("count must be >= 1")
    if skip < 0:
        raise InvalidInput("skip must be >= 0")
    v1, v2 = _sobol_direction_numbers()
    total = skip + count
    pts = np.empty((count, 2))
    s1 = s2 = 0
    scale = float(1 << _SOBOL_BITS)
    for k in range(total):
        if k >= skip:
            pts[k - skip] = (s1 / scale, s2 / scale)
        c = (~k & (k + 1)).bit_length() - 1  # lowest zero bit of k
        s1 ^= int(v1[c])
        s2 ^= int(v2[c])
    return Design(pts, box=((0.0, 1.0), (0.0, 1.0)))
