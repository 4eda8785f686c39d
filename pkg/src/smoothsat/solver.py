"""Fitting paths for smoothness-minimizing interpolators.

Every path solves the same constrained problem: minimize the quadratic
criterion theta_1' K~ theta_1 subject to interpolating the observations.
The default is a dense factorization of the block system

    [ X0  X1    0  ] [theta0]   [y]
    [ 0   K~  -X1' ] [theta1] = [0]
    [ 0   0    X0' ] [lambda]   [0]

with rows/columns equilibrated first; the remaining paths (literal
closed forms, the direct inverse for nonsingular K, and the dummy-design
construction) exist as independent cross-checks and all agree with the
block solve on valid instances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .basis import (
    Basis,
    Design,
    design_matrix,
    evaluate_columns,
    is_good_supersaturated,
    sobol_2d,
)
from .errors import (
    BadDummyDesign,
    DimensionMismatch,
    KSingular,
    RankDeficientObservations,
    SingularSystem,
)
from .smoothness import SmoothnessForm

CONDITION_WARN_THRESHOLD = 1e12


class FitMethod(str, Enum):
    BLOCK_KKT = "block_kkt"
    CLOSED_FORM = "closed_form"
    NONSINGULAR_K = "nonsingular_k"
    DUMMY_DESIGN = "dummy_design"


@dataclass(frozen=True)
class FittedModel:
    """Interpolating polynomial with minimal smoothness criterion."""

    basis: Basis
    theta: np.ndarray
    multipliers: np.ndarray
    psi_star: float
    method: FitMethod
    design: Design
    diagnostics: dict = field(default_factory=dict)

    def predict(self, x) -> float:
        return predict(self, x)


@dataclass(frozen=True)
class SmootherMatrix:
    """Linear maps of the fit: theta = B y and psi* = y' Q y."""

    b: np.ndarray
    q: np.ndarray
    variant_diffs: dict | None = None


@dataclass(frozen=True)
class KernelSet:
    """Cardinal kernels k_i(x): one per design point, unity there, zero at the rest."""

    coefficients: np.ndarray  # |basis| x n; column i holds kernel i
    knots: np.ndarray
    basis: Basis
    q_form: np.ndarray

    @property
    def n(self) -> int:
        return self.coefficients.shape[1]

    def evaluate(self, x) -> np.ndarray:
        f = evaluate_columns(np.atleast_2d(np.asarray(x, dtype=float)), self.basis.terms)
        return (f @ self.coefficients)[0]

    def evaluate_batch(self, points) -> np.ndarray:
        f = evaluate_columns(points, self.basis.terms)
        return f @ self.coefficients


class KnotFit(NamedTuple):
    phi: np.ndarray
    psi: float


def _lu_factor_extended(a: np.ndarray):
    """LU with partial pivoting carried out in extended precision."""
    lu = a.astype(np.longdouble).copy()
    n = lu.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if lu[p, k] == 0.0:
            raise SingularSystem("linear system is singular (zero pivot)")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, piv


def _lu_solve_extended(lu: np.ndarray, piv: np.ndarray, b: np.ndarray):
    x = b.astype(np.longdouble)[piv].copy()
    n = lu.shape[0]
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):
        x[k] -= lu[k, k + 1 :] @ x[k + 1 :]
        x[k] /= lu[k, k]
    return x


def solve_dense(a: np.ndarray, b: np.ndarray, refine: int = 2):
    """Equilibrated extended-precision LU solve with iterative refinement.

    High-degree monomial systems are Vandermonde-like and routinely reach
    condition numbers near 1/eps in double precision; factoring in 80-bit
    arithmetic keeps the benchmark-scale systems accurate.  Returns
    (solution, condition estimate of the equilibrated matrix).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    b2 = b[:, None] if vec else b
    if a.shape == (0, 0):
        empty = np.zeros(0) if vec else np.zeros((0, b2.shape[1]))
        return empty, 1.0
    r = np.max(np.abs(a), axis=1)
    r[r == 0.0] = 1.0
    r = 1.0 / r
    ar = r[:, None] * a
    c = np.max(np.abs(ar), axis=0)
    c[c == 0.0] = 1.0
    c = 1.0 / c
    a_s = ar * c[None, :]
    lu, piv = _lu_factor_extended(a_s)
    a_l = a_s.astype(np.longdouble)
    b_l = (r[:, None] * b2).astype(np.longdouble)
    z = _lu_solve_extended(lu, piv, b_l)
    for _ in range(refine):
        z += _lu_solve_extended(lu, piv, b_l - a_l @ z)
    x = c[:, None] * np.asarray(z, dtype=float)
    cond = float(np.linalg.cond(a_s))
    return (x[:, 0] if vec else x), cond


def _relative_rank_gap(mat: np.ndarray) -> tuple[float, float]:
    """Smallest singular value of the column-normalized matrix, raw and relative."""
    norms = np.linalg.norm(mat, axis=0)
    scaled = mat / np.where(norms == 0.0, 1.0, norms)[None, :]
    sv = np.linalg.svd(scaled, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0.0, 0.0
    return float(sv[-1]), float(sv[-1] / sv[0])


def _split(design: Design, basis: Basis, form: SmoothnessForm):
    x = design_matrix(design, basis)
    x0 = x[:, list(form.zero_idx)]
    x1 = x[:, list(form.active_idx)]
    return x, x0, x1


def _check_conditions(x, x0, form, n):
    # trip only on essentially exact singularity; mere ill conditioning
    # is handled by equilibration plus refinement and reported as warnings
    hard = 1e-15
    if x.shape[1] < n:
        raise SingularSystem(
            "condition (i) fails: fewer basis terms than design points",
            condition="i",
        )
    smin, gap = _relative_rank_gap(x)
    if gap <= hard:
        raise SingularSystem(
            f"condition (i) fails: design matrix is rank deficient "
            f"(smallest singular value {smin:.3e})",
            condition="i",
            singular_value=smin,
        )
    if x0.shape[1] > 0:
        if x0.shape[1] > n:
            raise SingularSystem(
                "condition (ii) fails: more structurally-zero terms than points",
                condition="ii",
            )
        smin0, gap0 = _relative_rank_gap(x0)
        if gap0 <= hard:
            raise SingularSystem(
                f"condition (ii) fails: X0 is column rank deficient "
                f"(smallest singular value {smin0:.3e})",
                condition="ii",
                singular_value=smin0,
            )
    kt = form.k_tilde
    if kt.size:
        row_norm = np.max(np.abs(kt), axis=1)
        if np.any(row_norm == 0.0):
            raise SingularSystem(
                "condition (iii) fails: reduced smoothness matrix has a zero "
                f"row at active position {int(np.argmin(row_norm))}",
                condition="iii",
                singular_value=0.0,
            )
        ev = np.linalg.eigvalsh((kt + kt.T) / 2.0)
        if ev[0] < -1e-8 * abs(ev[-1]):
            raise SingularSystem(
                f"condition (iii) fails: reduced smoothness matrix is not "
                f"positive semidefinite (eigenvalue {ev[0]:.3e})",
                condition="iii",
                singular_value=float(ev[0]),
            )


def _validate_fit_inputs(design: Design, basis: Basis, form: SmoothnessForm, y):
    y = np.asarray(y, dtype=float).ravel()
    if basis.dimension != design.dimension:
        raise DimensionMismatch("basis and design dimension differ")
    if form.size != len(basis):
        raise DimensionMismatch("smoothness form size does not match the basis")
    if y.shape[0] != design.n:
        raise DimensionMismatch(
            f"{y.shape[0]} observations for {design.n} design points"
        )
    return y


def _assemble_kkt(x0, x1, kt):
    n = x0.shape[0]
    p = x0.shape[1]
    m = x1.shape[1]
    a = np.zeros((n + m + p, p + m + n))
    a[:n, :p] = x0
    a[:n, p : p + m] = x1
    a[n : n + m, p : p + m] = kt
    a[n : n + m, p + m :] = -x1.T
    a[n + m :, p + m :] = x0.T
    return a


def _warn_condition(cond: float, label: str):
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"{label} condition {cond:.2e} exceeds {CONDITION_WARN_THRESHOLD:.0e}; "
            "results may lose accuracy",
            stacklevel=3,
        )


def _assemble_theta(form: SmoothnessForm, th0, th1):
    theta = np.zeros(form.size)
    theta[list(form.zero_idx)] = th0
    theta[list(form.active_idx)] = th1
    return theta


def _psi_star(form: SmoothnessForm, th1) -> float:
    return max(float(th1 @ form.k_tilde @ th1), 0.0)


def _recover_multipliers(x0, x1, kt, th1):
    lhs = np.vstack([x1.T, x0.T])
    rhs = np.concatenate([kt @ th1, np.zeros(x0.shape[1])])
    lam, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return lam


def _finish_model(design, basis, form, y, theta, lam, method, diagnostics):
    x = design_matrix(design, basis)
    resid = float(np.max(np.abs(x @ theta - y))) if len(y) else 0.0
    scale = max(1.0, float(np.max(np.abs(y)))) if len(y) else 1.0
    diagnostics = dict(diagnostics)
    diagnostics["interpolation_residual"] = resid
    if resid > 1e-8 * scale:
        warnings.warn(
            f"interpolation residual {resid:.2e} exceeds 1e-8 * scale; "
            "the system is severely ill-conditioned",
            stacklevel=3,
        )
    th1 = theta[list(form.active_idx)]
    return FittedModel(
        basis=basis,
        theta=theta,
        multipliers=np.asarray(lam, dtype=float),
        psi_star=_psi_star(form, th1),
        method=method,
        design=design,
        diagnostics=diagnostics,
    )


def fit_block_kkt(
    design: Design, basis: Basis, form: SmoothnessForm, y
) -> FittedModel:
    """Default path: one equilibrated LU solve of the full block system."""
    y = _validate_fit_inputs(design, basis, form, y)
    x, x0, x1 = _split(design, basis, form)
    n, p, m = design.n, x0.shape[1], x1.shape[1]
    _check_conditions(x, x0, form, n)
    a = _assemble_kkt(x0, x1, form.k_tilde)
    rhs = np.concatenate([y, np.zeros(m + p)])
    sol, cond = solve_dense(a, rhs)
    _warn_condition(cond, "block system")
    th0, th1, lam = sol[:p], sol[p : p + m], sol[p + m :]
    theta = _assemble_theta(form, th0, th1)
    return _finish_model(
        design, basis, form, y, theta, lam, FitMethod.BLOCK_KKT,
        {"kkt_condition": cond},
    )


def fit_closed_form(
    design: Design, basis: Basis, form: SmoothnessForm, y
) -> FittedModel:
    """Literal two-stage closed form; verification twin of the block solve.

    theta0 comes from generalized least squares against
    M = X1 K~^-1 X1' + X0 X0', then theta1 solves the normal equations
    (X1'X1 + K~ (I - X1'(XX')^-1 X1) K~) theta1 = X1' (y - X0 theta0).
    """
    y = _validate_fit_inputs(design, basis, form, y)
    x, x0, x1 = _split(design, basis, form)
    n, p, m = design.n, x0.shape[1], x1.shape[1]
    _check_conditions(x, x0, form, n)
    kt = form.k_tilde

    conds = {}
    if p:
        if m:
            kinv_x1t, c1 = solve_dense(kt, x1.T)
            mmat = x1 @ kinv_x1t + x0 @ x0.T
            conds["k_tilde_condition"] = c1
        else:
            mmat = x0 @ x0.T
        minv_x0, c2 = solve_dense(mmat, x0)
        minv_y, _ = solve_dense(mmat, y)
        th0, c3 = solve_dense(x0.T @ minv_x0, x0.T @ minv_y)
        conds["m_condition"] = c2
        conds["theta0_condition"] = c3
        ystar = y - x0 @ th0
    else:
        th0 = np.zeros(0)
        ystar = y

    if m:
        xxt = x @ x.T
        w, c4 = solve_dense(xxt, x1)
        proj = x1.T @ w
        normal = x1.T @ x1 + kt @ (np.eye(m) - proj) @ kt
        th1, c5 = solve_dense(normal, x1.T @ ystar)
        conds["gram_condition"] = c4
        conds["normal_condition"] = c5
        _warn_condition(c5, "closed-form normal equations")
    else:
        th1 = np.zeros(0)

    theta = _assemble_theta(form, th0, th1)
    lam = _recover_multipliers(x0, x1, kt, th1)
    return _finish_model(
        design, basis, form, y, theta, lam, FitMethod.CLOSED_FORM, conds
    )


def fit_nonsingular_k(
    design: Design, basis: Basis, form: SmoothnessForm, y
) -> FittedModel:
    """Direct inverse theta = (X'X + K(I-P)K)^-1 X'y for nonsingular K.

    P = X'(XX')^-1 X projects onto the row space of X; the K(I-P)K term
    regularizes exactly the directions the constraints leave free.
    """
    y = _validate_fit_inputs(design, basis, form, y)
    x = design_matrix(design, basis)
    n, nt = x.shape
    k = form.k
    ev = np.linalg.eigvalsh((k + k.T) / 2.0)
    if ev[0] <= 0.0 or ev[-1] / max(ev[0], np.finfo(float).tiny) > 1e12:
        raise KSingular(
            f"full smoothness matrix condition "
            f"{ev[-1] / max(ev[0], np.finfo(float).tiny):.2e} exceeds 1e12"
        )
    smin, gap = _relative_rank_gap(x)
    if gap <= 2e-14 * max(x.shape):
        raise SingularSystem(
            "design matrix is rank deficient", condition="i", singular_value=smin
        )
    w, _ = solve_dense(x @ x.T, x)
    proj = x.T @ w
    normal = x.T @ x + k @ (np.eye(nt) - proj) @ k
    theta, cond = solve_dense(normal, x.T @ y)
    _warn_condition(cond, "regularized normal equations")
    lam, *_ = np.linalg.lstsq(x.T, k @ theta, rcond=None)
    return _finish_model(
        design, basis, form, y, theta, lam, FitMethod.NONSINGULAR_K,
        {"normal_condition": cond},
    )


def fit_dummy_design(
    design_n: Design,
    dummy_points,
    basis: Basis,
    form: SmoothnessForm,
    y,
) -> tuple[FittedModel, np.ndarray]:
    """Saturate the basis with dummy points and minimize over their pseudo-values.

    With A = X_N^-T K X_N^-1 partitioned by (real, dummy) observations,
    the optimal pseudo-observations are z = -A22^-1 A21 y and the achieved
    criterion is y' Q y with Q the Schur complement A11 - A12 A22^-1 A21.
    """
    y = _validate_fit_inputs(design_n, basis, form, y)
    dummy = np.asarray(dummy_points, dtype=float).reshape(-1, design_n.dimension)
    n, q = design_n.n, dummy.shape[0]
    if n + q != len(basis):
        raise DimensionMismatch(
            f"{n} real + {q} dummy points must equal the basis size {len(basis)}"
        )
    all_pts = np.vstack([design_n.points, dummy])
    if len({tuple(r) for r in all_pts}) != n + q:
        raise BadDummyDesign("dummy points collide with the design")
    full = Design(all_pts, box=design_n.box)
    x_n = design_matrix(full, basis)
    smin, gap = _relative_rank_gap(x_n)
    if gap <= 2e-14 * x_n.shape[0]:
        raise BadDummyDesign(
            f"extended design matrix is singular (smallest singular value {smin:.3e})"
        )
    c_inv, cond = solve_dense(x_n, np.eye(n + q))
    _warn_condition(cond, "extended design matrix")
    a = c_inv.T @ form.k @ c_inv
    a = (a + a.T) / 2.0
    a11, a12 = a[:n, :n], a[:n, n:]
    a21, a22 = a[n:, :n], a[n:, n:]
    if q:
        a22_inv_a21, cond22 = solve_dense(a22, a21)
        _warn_condition(cond22, "dummy block")
        z_hat = -a22_inv_a21 @ y
        q_mat = a11 - a12 @ a22_inv_a21
    else:
        z_hat = np.zeros(0)
        q_mat = a11
    theta = c_inv @ np.concatenate([y, z_hat])
    th1 = theta[list(form.active_idx)]
    lam = _recover_multipliers(
        x_n[:n, list(form.zero_idx)], x_n[:n, list(form.active_idx)],
        form.k_tilde, th1,
    )
    model = _finish_model(
        design_n, basis, form, y, theta, lam, FitMethod.DUMMY_DESIGN,
        {"x_n_condition": cond, "schur_psi": max(float(y @ q_mat @ y), 0.0)},
    )
    return model, z_hat


def smoother_matrix(
    design: Design, basis: Basis, form: SmoothnessForm
) -> SmootherMatrix:
    """Solve the block system against the identity to get theta = B y.

    Q = B' K B is the induced quadratic form in the observations (equal to
    the dummy-design Schur complement, and to (X K^-1 X')^-1 when K is
    nonsingular).  When the structural-zero block is empty the three
    published forms B1, B2, B3 are also computed and their pairwise
    maximum absolute differences reported.
    """
    x, x0, x1 = _split(design, basis, form)
    n, p, m = design.n, x0.shape[1], x1.shape[1]
    _check_conditions(x, x0, form, n)
    a = _assemble_kkt(x0, x1, form.k_tilde)
    rhs = np.zeros((n + m + p, n))
    rhs[:n, :] = np.eye(n)
    sol, cond = solve_dense(a, rhs)
    _warn_condition(cond, "block system")
    b = np.zeros((len(basis), n))
    b[list(form.zero_idx), :] = sol[:p]
    b[list(form.active_idx), :] = sol[p : p + m]
    q_mat = b.T @ form.k @ b
    q_mat = (q_mat + q_mat.T) / 2.0

    variant_diffs = None
    if p == 0:
        k = form.k
        ev = np.linalg.eigvalsh((k + k.T) / 2.0)
        if ev[0] > 0.0 and ev[-1] / ev[0] <= 1e12:
            w, _ = solve_dense(x @ x.T, x)
            proj = x.T @ w
            b1, _ = solve_dense(x.T @ x + k @ (np.eye(len(basis)) - proj) @ k, x.T)
            b2, _ = solve_dense(k, x.T @ q_mat)
            dummy = auto_dummy_points(design, basis)
            _, z_map, c_inv = _dummy_maps(design, dummy, basis, form)
            b3 = c_inv @ np.vstack([np.eye(n), z_map])
            variant_diffs = {
                "b1_b2": float(np.max(np.abs(b1 - b2))),
                "b2_b3": float(np.max(np.abs(b2 - b3))),
                "b1_b3": float(np.max(np.abs(b1 - b3))),
            }
    return SmootherMatrix(b=b, q=q_mat, variant_diffs=variant_diffs)


def _dummy_maps(design, dummy, basis, form):
    n = design.n
    full = Design(np.vstack([design.points, dummy]), box=design.box)
    x_n = design_matrix(full, basis)
    c_inv, _ = solve_dense(x_n, np.eye(len(basis)))
    a = c_inv.T @ form.k @ c_inv
    a = (a + a.T) / 2.0
    z_map, _ = solve_dense(a[n:, n:], -a[n:, :n])
    q_mat = a[:n, :n] + a[:n, n:] @ z_map
    return q_mat, z_map, c_inv


def auto_dummy_points(
    design: Design, basis: Basis, rank_tol: float = 1e-9
) -> np.ndarray:
    """Deterministic dummy points that make the basis saturated for the
    extended design.

    Candidates come from a low-discrepancy stream over the box (golden
    ratio in 1D, Sobol in 2D, van der Corput per coordinate above); each
    is accepted when its basis row enlarges the row space.
    """
    n, d = design.n, design.dimension
    need = len(basis) - n
    if need < 0:
        raise DimensionMismatch("basis smaller than the design")
    if need == 0:
        return np.zeros((0, d))
    lo = np.array([a for a, _ in design.box])
    hi = np.array([b for _, b in design.box])

    def candidates():
        if d == 1:
            golden = (np.sqrt(5.0) - 1.0) / 2.0
            t = 0.5
            while True:
                yield lo + (hi - lo) * t
                t = (t + golden) % 1.0
        elif d == 2:
            k = 0
            while True:
                block = sobol_2d(64, skip=1 + 64 * k).points
                for row in block:
                    yield lo + (hi - lo) * row
                k += 1
        else:
            primes = [2, 3, 5, 7, 11, 13, 17][:d]
            idx = 1
            while True:
                u = np.array([_van_der_corput(idx, p) for p in primes])
                yield lo + (hi - lo) * u
                idx += 1

    rows = design_matrix(design, basis)
    qmat, _ = np.linalg.qr(rows.T)  # orthonormal basis of current row space
    existing = {tuple(r) for r in design.points}
    out = []
    for count, cand in enumerate(candidates()):
        if count > 200 * len(basis):
            raise BadDummyDesign("could not find enough independent dummy points")
        if tuple(cand) in existing:
            continue
        row = evaluate_columns(cand[None, :], basis.terms)[0]
        r = row - qmat @ (qmat.T @ row)
        r = r - qmat @ (qmat.T @ r)
        nrm = np.linalg.norm(r)
        if nrm > rank_tol * max(1.0, np.linalg.norm(row)):
            out.append(cand)
            existing.add(tuple(cand))
            qmat = np.column_stack([qmat, r / nrm])
            if len(out) == need:
                return np.array(out)
    raise BadDummyDesign("candidate stream exhausted")


def _van_der_corput(k: int, base: int) -> float:
    v, denom = 0.0, 1.0
    while k:
        k, rem = divmod(k, base)
        denom *= base
        v += rem / denom
    return v


def kernels(sm: SmootherMatrix, basis: Basis, design: Design) -> KernelSet:
    """Cardinal kernels read off the smoother matrix columns."""
    if sm.b.shape != (len(basis), design.n):
        raise DimensionMismatch("smoother matrix does not match basis/design")
    return KernelSet(
        coefficients=sm.b.copy(), knots=design.points, basis=basis, q_form=sm.q
    )


def predict(model: FittedModel, x) -> float:
    """Evaluate the fitted polynomial at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.basis.dimension:
        raise DimensionMismatch(
            f"point has dimension {x.shape[0]}, model expects {model.basis.dimension}"
        )
    f = evaluate_columns(x[None, :], model.basis.terms)[0]
    return float(f @ model.theta)


def predict_batch(model: FittedModel, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != model.basis.dimension:
        raise DimensionMismatch("query points have the wrong dimension")
    return evaluate_columns(pts, model.basis.terms) @ model.theta


def in_box(box, x) -> bool:
    x = np.asarray(x, dtype=float).ravel()
    return all(a <= v <= b for v, (a, b) in zip(x, box))


def fit_knot_model(kernel_set: KernelSet, obs_design: Design, y_obs) -> KnotFit:
    """Least-squares knot values for observations anywhere in the region.

    The model is phi' k(x); observations need not sit at the knots, but
    the kernel evaluation matrix must have full column rank.
    """
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    if obs_design.n != y_obs.shape[0]:
        raise DimensionMismatch("observation count mismatch")
    if obs_design.n < kernel_set.n:
        raise RankDeficientObservations(
            f"{obs_design.n} observations cannot identify {kernel_set.n} knot values"
        )
    phi_mat = kernel_set.evaluate_batch(obs_design.points)
    sv = np.linalg.svd(phi_mat, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficientObservations(
            f"kernel evaluation matrix is rank deficient "
            f"(singular value ratio {sv[-1] / sv[0]:.3e})"
        )
    phi, *_ = np.linalg.lstsq(phi_mat, y_obs, rcond=None)
    psi = max(float(phi @ kernel_set.q_form @ phi), 0.0)
    return KnotFit(phi=phi, psi=psi)
