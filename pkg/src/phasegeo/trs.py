"""Tangent-constrained trust-region subproblem.

The step ``delta`` at ``z`` is restricted to ``{w : Im(w^* z) = 0}``, a real
subspace of dimension ``2n - 1`` of ``C^n = R^{2n}`` (canonical identification
``w -> (Re w, Im w)``).  With a real-orthonormal basis ``U`` of that subspace
the subproblem becomes the classical one

    minimize  Q(w) = 1/2 w^T A w + b^T w   subject to  ||w|| <= r

over ``w`` in ``R^{2n-1}``.  :func:`solve_trs_exact` solves it by bisection on the
multiplier; :func:`trs_eigen_oracle` is an independent check used in tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .core import MeasurementEnsemble, as_signal
from .errors import ConsistencyError, ContractError, DataError, DegeneratePointError, DimensionError
from .objective import eval_f_grad

INTERIOR = "interior"
BOUNDARY = "boundary"
HARD = "hard"

MIN_ANCHOR_NORM = 1e-150


def to_real(v) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag])


def to_complex(v) -> np.ndarray:
    v = np.asarray(v)
    n = v.shape[0] // 2
    return v[:n] + 1j * v[n:]


@dataclass(frozen=True)
class TangentBasis:
    """Real-orthonormal basis of the tangent-constrained step space at ``z_anchor``.

    ``W`` holds the basis as real ``2n``-vectors (columns), ``U`` the same
    columns as complex ``n``-vectors.  When built by Householder reflection,
    ``householder`` is the reflector vector ``v`` with ``W = (I - 2vv^T/v^Tv)[:, 1:]``;
    the unconstrained fallback has ``W = I`` and ``householder = None``.
    """

    U: np.ndarray
    W: np.ndarray
    z_anchor: np.ndarray
    householder: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def constrained(self) -> bool:
        return self.householder is not None

    def lift(self, xi) -> np.ndarray:
        """Map reduced coordinates to a complex step ``U xi``."""
        return to_complex(self.W @ np.asarray(xi, dtype=np.float64))

    def project(self, H: np.ndarray) -> np.ndarray:
        """``W^T H W`` for a symmetric ``2n x 2n`` real matrix."""
        if self.householder is None:
            return H
        v = self.householder
        tau = 2.0 / (v @ v)
        X = H - tau * np.outer(v, v @ H)
        Y = X - tau * np.outer(X @ v, v)
        A = Y[1:, 1:]
        return 0.5 * (A + A.T)


def build_tangent_basis(z, min_norm: float = MIN_ANCHOR_NORM) -> TangentBasis:
    """Basis of ``{w : Im(w^* z) = 0}`` from a Householder reflector.

    The reflector maps ``e_1`` to the unit real vector of ``i z``; its other
    ``2n - 1`` columns span the orthogonal complement.
    """
    z = as_signal(z)
    nz = np.linalg.norm(z)
    if not nz > min_norm:
        raise DegeneratePointError(f"||z|| = {nz:.3e} is too small to define a tangent basis")
    u = to_real(1j * z) / nz
    v = u.copy()
    # v = u + e1 keeps the reflector well conditioned when u is close to e1
    v[0] += 1.0 if u[0] > 0 else -1.0
    tau = 2.0 / (v @ v)
    H = np.eye(u.size) - tau * np.outer(v, v)
    W = H[:, 1:]
    return TangentBasis(to_complex(W), W, z, v)


def unconstrained_basis(n: int, z_anchor=None) -> TangentBasis:
    """Identity basis of ``R^{2n}`` used at (near-)zero anchors."""
    W = np.eye(2 * n)
    anchor = np.zeros(n, dtype=np.complex128) if z_anchor is None else as_signal(z_anchor)
    return TangentBasis(to_complex(W), W, anchor, None)


def real_gradient_hessian(ensemble: MeasurementEnsemble, z) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Objective, ``grad_z f`` and the derivatives of ``f`` in ``R^{2n}`` coordinates.

    Returns ``(f, grad_z, g, H)`` with ``d/dt f(z + t d) = g . to_real(d)`` and
    ``d^2/dt^2 f(z + t d) = to_real(d)^T H to_real(d)``.

    Writing ``a_k^* z = |u_k| e^{i psi_k}``, the quadratic form splits as
    ``(2/m) sum_k [(3|u_k|^2 - y_k^2) s_k^2 + (|u_k|^2 - y_k^2) t_k^2]`` where
    ``s_k + i t_k = e^{-i psi_k} a_k^* d``, which gives ``H`` as two weighted
    Gram matrices.
    """
    z = as_signal(z, n=ensemble.n)
    f, grad = eval_f_grad(ensemble, z)
    rows, y2, m = ensemble.rows, ensemble.magnitudes_sq, ensemble.m
    u = rows @ z
    au = np.abs(u)
    phase = np.ones_like(u)
    nz = au > 0
    phase[nz] = np.conj(u[nz]) / au[nz]
    G = rows * phase[:, None]
    S = np.hstack([G.real, -G.imag])
    T = np.hstack([G.imag, G.real])
    au2 = au * au
    H = (S.T @ (S * ((3.0 * au2 - y2) * (2.0 / m))[:, None])) + (
        T.T @ (T * ((au2 - y2) * (2.0 / m))[:, None])
    )
    H = 0.5 * (H + H.T)
    return f, grad, 2.0 * to_real(grad), H


@dataclass(frozen=True)
class RealTrsProblem:
    """``min 1/2 w^T A w + b^T w`` subject to ``||w|| <= r``."""

    A: np.ndarray
    b: np.ndarray
    r: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise DimensionError(f"incompatible TRS shapes A{A.shape}, b{b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.isfinite(self.r)):
            raise DataError("TRS data has non-finite entries")
        if not self.r > 0:
            raise ContractError(f"trust radius must be positive, got {self.r}")
        scale = np.max(np.abs(A)) if A.size else 0.0
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * max(scale, np.finfo(float).tiny):
            raise ContractError("A is not symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "r", float(self.r))

    @property
    def d(self) -> int:
        return self.b.size

    def Q(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(0.5 * w @ self.A @ w + self.b @ w)


@dataclass(frozen=True)
class TrsSolution:
    w: np.ndarray
    lam: float
    case: str
    kkt_residual: float
    iterations: int = 0


@dataclass(frozen=True)
class ReducedModel:
    """Reduced subproblem at ``z`` plus the quantities used to build it."""

    problem: RealTrsProblem
    basis: TangentBasis
    f: float
    grad_z: np.ndarray

    def model_value(self, xi) -> float:
        """``f(z) + xi^T b + 1/2 xi^T A xi``."""
        return self.f + self.problem.Q(xi)


def reduce_subproblem(ensemble: MeasurementEnsemble, z, basis: TangentBasis, Delta: float,
                      residue_tol: float = 1e-10) -> ReducedModel:
    """Reduce the tangent-constrained subproblem at ``z`` to a real TRS of radius ``Delta``.

    ``b`` is formed both as ``2 Re(U^* grad_z f)`` and as ``W^T g`` in real
    coordinates; a relative mismatch above ``residue_tol`` raises
    :class:`ConsistencyError`.
    """
    if not Delta > 0:
        raise ContractError(f"Delta must be positive, got {Delta}")
    f, grad, g, H = real_gradient_hessian(ensemble, z)
    b = basis.W.T @ g
    b_complex = basis.U.conj().T @ grad + basis.U.T @ grad.conj()
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    resid = max(np.max(np.abs(b_complex.imag)), np.max(np.abs(b_complex.real - b))) / scale
    if resid > residue_tol and np.linalg.norm(b) > 1e-300:
        raise ConsistencyError(f"reduced gradient residue {resid:.2e} exceeds {residue_tol:.0e}")
    A = basis.project(H)
    return ReducedModel(RealTrsProblem(A, b, Delta), basis, f, grad)


def min_eig_sym(A) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of a symmetric matrix and a unit eigenvector."""
    evals, V = _eigh(A)
    return float(evals[0]), V[:, 0]


def _eigh(A) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise DataError("matrix has non-finite entries")
    scale = np.max(np.abs(A), initial=0.0)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ContractError("matrix is not symmetric")
    return np.linalg.eigh(0.5 * (A + A.T))


def _boundary_completion(w, v, r, Q):
    """Move ``w`` along the unit vector ``v`` until ``||w|| = r``, picking the lower-``Q`` root."""
    wv = w @ v
    wn2 = w @ w
    # ||w + t v||^2 = r^2  ->  t^2 + 2 t wv + wn2 - r^2 = 0
    disc = max(wv * wv - (wn2 - r * r), 0.0)
    t1, t2 = -wv + np.sqrt(disc), -wv - np.sqrt(disc)
    cand = [w + t1 * v, w + t2 * v]
    vals = [Q(c) for c in cand]
    return cand[int(np.argmin(vals))]


def solve_trs_exact(p: RealTrsProblem, eps: float = 1e-10, max_iter: int = 5000) -> TrsSolution:
    """Solve the TRS by bisection on the multiplier.

    1. If ``A`` is positive definite and the Newton point ``-A^{-1} b`` is
       feasible, it is the unique (interior) minimizer.
    2. Otherwise bisect ``lambda`` on ``[0, ||b||/r + d max|A_ij|]``: a
       negative smallest eigenvalue of ``A + lambda I`` raises the lower end;
       otherwise (nudging ``lambda`` by ``eps/10`` when that eigenvalue is
       numerically zero) solve ``(A + lambda I) w = -b`` and move the lower end
       if ``||w|| >= r`` and the upper end if not.
    3. Stop once the bracket is narrower than ``eps`` and the duality gap
       ``lambda (r^2 - ||w||^2) / 2`` is at most ``eps``, which bounds
       ``Q(w) - Q(w*)``, or when the bracket reaches machine resolution.
    4. If ``A + lambda I`` is singular and the minimum-norm solution is
       strictly feasible (the hard case), add a null eigenvector to reach the
       boundary.

    All eigenvalue tests and solves use one eigendecomposition of ``A``; the
    smallest eigenvalue of ``A + lambda I`` is ``lambda_min(A) + lambda``.
    """
    if not eps > 0:
        raise ContractError("eps must be positive")
    A, b, r, d = p.A, p.b, p.r, p.d
    evals, V = _eigh(A)
    lam0 = evals[0]
    bt = V.T @ b
    scale = max(np.max(np.abs(evals)), np.linalg.norm(b) / r, np.finfo(float).tiny)

    def solve(lam):
        return -V @ (bt / (evals + lam))

    def finish(w, lam, case, it):
        res = float(np.linalg.norm(A @ w + lam * w + b))
        return TrsSolution(w, float(lam), case, res, it)

    if lam0 >= 0 and not np.any(b):
        # every minimizer has Q = 0; return the minimum-norm one
        return finish(np.zeros(d), 0.0, INTERIOR, 0)
    if lam0 > 0:
        w = solve(0.0)
        if np.linalg.norm(w) <= r:
            return finish(w, 0.0, INTERIOR, 0)

    hard_tol = max(2.0 * eps, 1e-13 * scale)
    lam_lo = 0.0
    lam_hi = np.linalg.norm(b) / r + d * np.max(np.abs(A), initial=0.0)
    it = 0
    while it < max_iter:
        width = lam_hi - lam_lo
        if width < eps:
            if lam0 + lam_hi <= hard_tol:
                break
            if lam0 + lam_hi > 0:
                w = solve(lam_hi)
                nw = np.linalg.norm(w)
                slack = max(r - nw, 0.0)
                if 0.5 * lam_hi * slack * (r + nw) <= eps and lam_hi * slack <= eps:
                    break
            if width <= 4.0 * np.spacing(max(lam_hi, np.finfo(float).tiny)):
                break
        it += 1
        lam_mid = 0.5 * (lam_lo + lam_hi)
        mu = lam0 + lam_mid
        if mu < 0:
            lam_lo = lam_mid
            continue
        if mu <= eps / 10:
            lam_mid = lam_mid + eps / 10
        if np.linalg.norm(solve(lam_mid)) >= r:
            lam_lo = lam_mid
        else:
            lam_hi = lam_mid

    lam = lam_hi
    mu = lam0 + lam
    if mu <= hard_tol:
        # minimum-norm solution at lambda = -lambda_min(A), null components dropped
        lam_h = max(0.0, -lam0)
        den = evals + lam_h
        keep = den > hard_tol
        coef = np.zeros_like(bt)
        coef[keep] = -bt[keep] / den[keep]
        w = V @ coef
        if np.linalg.norm(w) <= r:
            w = _boundary_completion(w, V[:, 0], r, p.Q)
            return finish(w, lam_h, HARD, it)
    w = solve(lam)
    nw = np.linalg.norm(w)
    if lam > 0 and nw < r and lam * (r - nw) > eps:
        # nearly-hard case left at machine resolution: finish along the bottom eigenvector
        return finish(_boundary_completion(w, V[:, 0], r, p.Q), lam, HARD, it)
    return finish(w, lam, BOUNDARY, it)


def trs_eigen_oracle(p: RealTrsProblem, max_dim: int = 200) -> TrsSolution:
    """Reference TRS solution from a full eigendecomposition.

    Finds the multiplier as the root of the secular equation
    ``1/||w(lambda)|| - 1/r = 0`` on ``(max(0, -lambda_min), inf)`` with Brent's
    method, with an explicit branch for the hard case.  Intended for testing.
    """
    if p.d > max_dim:
        raise DimensionError(f"oracle limited to d <= {max_dim}, got {p.d}")
    A, b, r = p.A, p.b, p.r
    evals, V = scipy.linalg.eigh(A, driver="evr")
    bt = V.T @ b
    lam0 = evals[0]
    scale = max(np.max(np.abs(evals)), np.linalg.norm(b) / r, 1e-300)

    def wnorm(lam):
        den = evals + lam
        out = 0.0
        for bi, di in zip(bt, den):
            if di <= 0:
                if bi != 0:
                    return np.inf
                continue
            out += (bi / di) ** 2
        return np.sqrt(out)

    def w_of(lam):
        return -V @ (bt / (evals + lam))

    def done(w, lam, case):
        res = float(np.linalg.norm(A @ w + lam * w + b))
        return TrsSolution(w, float(lam), case, res, 0)

    if lam0 >= 0 and not np.any(b):
        return done(np.zeros_like(b), 0.0, INTERIOR)
    if lam0 > 0 and np.linalg.norm(w_of(0.0)) <= r:
        return done(w_of(0.0), 0.0, INTERIOR)

    lo = max(0.0, -lam0)
    tol = 1e-12 * scale
    bottom = (evals + lo) <= tol
    if np.all(np.abs(bt[bottom]) <= 1e-10 * max(np.linalg.norm(b), 1e-300)):
        coef = np.zeros_like(bt)
        coef[~bottom] = -bt[~bottom] / (evals[~bottom] + lo)
        wp = V @ coef
        if np.linalg.norm(wp) <= r:
            # hard case: complete along the bottom eigenvector
            v = V[:, 0]
            t = np.sqrt(max(r * r - wp @ wp, 0.0))
            w = wp + t * v if (b @ v) <= 0 else wp - t * v
            return done(w, lo, HARD)

    def secular(lam):
        nw = wnorm(lam)
        return (0.0 if np.isinf(nw) else 1.0 / nw) - 1.0 / r

    hi = max(lo, np.linalg.norm(b) / r - lam0) + 1e-300
    while secular(hi) < 0:
        hi = 2.0 * hi + 1e-12
    if secular(lo) >= 0:
        lam = lo
    else:
        lam = brentq(secular, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return done(w_of(lam), lam, BOUNDARY)


def kkt_report(p: RealTrsProblem, sol: TrsSolution) -> dict:
    """Residuals of the three global optimality conditions."""
    A, b, r = p.A, p.b, p.r
    nw = float(np.linalg.norm(sol.w))
    lmin = float(np.linalg.eigvalsh(A)[0])
    return {
        "stationarity": float(np.linalg.norm(A @ sol.w + sol.lam * sol.w + b)),
        "complementarity": abs(sol.lam * (nw - r)),
        "feasibility": max(nw - r, 0.0),
        "dual_psd": max(-(lmin + sol.lam), 0.0),
        "lam_nonneg": max(-sol.lam, 0.0),
    }


def random_instance(rng: np.random.Generator, d: int, kind: str = "random") -> RealTrsProblem:
    """Random TRS instance; ``kind`` is ``random``, ``interior`` or ``hard``.

    Hard instances have ``b`` orthogonal to the bottom eigenvector of an
    indefinite ``A`` and a radius larger than the minimum-norm solution.
    """
    Qm, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if kind == "interior":
        evals = rng.uniform(0.5, 5.0, d)
        A = (Qm * evals) @ Qm.T
        b = rng.standard_normal(d)
        r = 1.5 * np.linalg.norm(np.linalg.solve(A, b)) + 0.1
    elif kind == "hard":
        evals = np.sort(rng.uniform(-3.0, 5.0, d))
        evals[0] = min(evals[0], -0.5)
        evals[1:] = np.maximum(evals[1:], evals[0] + 0.5)
        A = (Qm * evals) @ Qm.T
        coef = rng.standard_normal(d)
        coef[0] = 0.0
        b = Qm @ coef
        wp = -Qm[:, 1:] @ (coef[1:] / (evals[1:] - evals[0]))
        r = max(np.linalg.norm(wp), 0.1) * rng.uniform(1.2, 3.0)
    else:
        M = rng.standard_normal((d, d))
        A = 0.5 * (M + M.T)
        b = rng.standard_normal(d) * rng.choice([1e-3, 1.0, 10.0])
        r = rng.uniform(0.1, 5.0)
    A = 0.5 * (A + A.T)
    return RealTrsProblem(A, b, r)


def dump_debug(p: RealTrsProblem, sol: TrsSolution, path) -> None:
    """Write ``(A, b, r, w, lambda, case)`` as JSON for failure triage."""
    payload = {
        "A": p.A.tolist(),
        "b": p.b.tolist(),
        "r": p.r,
        "w": np.asarray(sol.w).tolist(),
        "lambda": sol.lam,
        "case": sol.case,
        "kkt_residual": sol.kkt_residual,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
