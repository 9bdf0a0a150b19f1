"""Tangent-constrained trust-region method and the gradient-descent baseline.

Each trust-region iteration builds a real-orthonormal basis ``U`` of the
directions geometrically orthogonal to ``i z``, reduces the quadratic model
of ``f`` to a real ``(2n - 1)``-dimensional trust-region subproblem, solves
it exactly and steps to ``z + U xi``.  At (near) zero iterates the tangent
space is undefined and the full ``2n``-dimensional subproblem is used
instead (step kind ``trm-fallback``).

Gradient norms in traces are always the stacked norm
``sqrt(2) ||grad_z f||``.  Gradient descent stops on the half-gradient norm
``||grad_z f||``, so its threshold is ``tol_grad`` on ``grad_norm / sqrt(2)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as _rng
from .core import MeasurementEnsemble, align_phase, as_signal, estimate_norm_and_radius, guard_radius
from .errors import ContractError, DataError
from .objective import eval_f, eval_f_grad, stacked_norm
from .trs import (
    INTERIOR,
    RealTrsProblem,
    build_tangent_basis,
    min_eig_sym,
    real_gradient_hessian,
    reduce_subproblem,
    solve_trs_exact,
    unconstrained_basis,
)

TRM_FIXED = "trm-fixed"
TRM_ADAPTIVE = "trm-adaptive"
GD = "gd"
ALGOS = (TRM_FIXED, TRM_ADAPTIVE, GD)

STEP_GD = "gd"
STEP_CONSTRAINED = "trm-constrained"
STEP_UNCONSTRAINED = "trm-unconstrained"
STEP_FALLBACK = "trm-fallback"
STEP_REJECTED = "rejected"
STEP_TERMINAL = "terminal"

CONVERGED = "converged"
MAX_ITERS = "max-iters"
DIVERGED = "diverged"

# iterates with ||z|| below this fraction of the norm estimate use the unconstrained fallback
FALLBACK_FRAC = 1e-8
DIVERGENCE_FACTOR = 1e6

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``delta`` is the fixed trust radius (``trm-fixed``) or the initial radius
    (``trm-adaptive``).  ``None`` selects the defaults derived from the norm
    estimate ``x_est = sqrt(mean y^2)``: ``x_est / (n log m)^{7/2}`` for the
    fixed mode and ``x_est / 10`` for the adaptive mode; ``delta_max``
    defaults to ``x_est``.  ``tol_eps_trs`` is relative to ``x_est^4``, the
    scale of ``f``.
    """

    algo: str = TRM_ADAPTIVE
    delta: float | None = None
    delta_max: float | None = None
    eta_accept: float = 0.1
    grow: float = 2.0
    shrink: float = 0.25
    step_mu: float = 0.05
    tol_grad: float = 1e-11
    tol_eps_trs: float = 1e-14
    max_iters: int = 500

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ContractError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if not 0 < self.shrink < 1 < self.grow:
            raise ContractError("need 0 < shrink < 1 < grow")
        if not 0 <= self.eta_accept < 1:
            raise ContractError("need 0 <= eta_accept < 1")
        for name in ("step_mu", "tol_grad", "tol_eps_trs"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        for name in ("delta", "delta_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ContractError(f"{name} must be positive")
        if int(self.max_iters) < 1:
            raise ContractError("max_iters must be positive")

    @classmethod
    def gradient_descent(cls, **kw) -> "SolverConfig":
        """Defaults of the gradient-descent baseline: ``mu = 0.05``, ``||grad_z f|| <= 1e-5``."""
        base = dict(algo=GD, tol_grad=1e-5, max_iters=100_000)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunTrace:
    """Per-iteration records of a solve, plus the final status."""

    algo: str
    iters: list = field(default_factory=list)
    f: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    step_kind: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    model_decrease: list = field(default_factory=list)
    status: str = ""
    lambda_min: float = float("nan")

    COLUMNS = ("iter", "f", "grad_norm", "dist", "step_kind", "delta", "model_decrease")

    def append(self, it, f, gnorm, dist, kind, delta, decrease):
        self.iters.append(int(it))
        self.f.append(float(f))
        self.grad_norm.append(float(gnorm))
        self.dist.append(float(dist))
        self.step_kind.append(kind)
        self.delta.append(float(delta))
        self.model_decrease.append(float(decrease))

    def __len__(self) -> int:
        return len(self.iters)

    @property
    def iterations(self) -> int:
        """Number of steps taken (accepted or rejected)."""
        return self.iters[-1] if self.iters else 0

    def records(self):
        return list(zip(self.iters, self.f, self.grad_norm, self.dist, self.step_kind, self.delta,
                        self.model_decrease))

    def phase_violations(self, near_radius: float | None = None) -> int:
        """Constrained steps taken after the first unconstrained step near ``X``.

        With ``near_radius`` only unconstrained steps taken at recorded
        ``dist <= near_radius`` start the terminal phase; without it (or when
        no distances were recorded) any unconstrained step does.
        """
        seen = False
        bad = 0
        for k, d in zip(self.step_kind, self.dist):
            if k == STEP_UNCONSTRAINED and (near_radius is None or math.isnan(d) or d <= near_radius):
                seen = True
            elif k == STEP_CONSTRAINED and seen:
                bad += 1
        return bad

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for rec in self.records():
                w.writerow([rec[0], repr(rec[1]), repr(rec[2]), repr(rec[3]), rec[4], repr(rec[5]), repr(rec[6])])


def run_summary(trace: RunTrace, config: SolverConfig, seed: int | None, z, x=None) -> dict:
    """Summary record: seed, config, iterations, final relative error and success flag."""
    rel = float("nan")
    if x is not None:
        rel = align_phase(z, x).dist / float(np.linalg.norm(x))
    return {
        "seed": seed,
        "config": config.to_dict(),
        "status": trace.status,
        "iterations": trace.iterations,
        "final_f": trace.f[-1] if trace.f else None,
        "final_grad_norm": trace.grad_norm[-1] if trace.grad_norm else None,
        "final_rel_error": None if math.isnan(rel) else rel,
        "success": bool(rel <= 1e-3) if not math.isnan(rel) else None,
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _norm_estimate(ensemble: MeasurementEnsemble) -> float:
    x_est, _ = estimate_norm_and_radius(ensemble)
    if not x_est > 0:
        raise DataError("all magnitudes are zero; the instance is degenerate")
    return x_est


def theory_delta(ensemble: MeasurementEnsemble, c_d: float = 1.0) -> float:
    """Radius ``c_d x_est / (n^{7/2} log^{7/2} m)`` under which the fixed-radius method is analyzed."""
    x_est = _norm_estimate(ensemble)
    return c_d * x_est / (ensemble.n * math.log(max(ensemble.m, 3))) ** 3.5


def _dist(z, x_opt) -> float:
    return align_phase(z, x_opt).dist if x_opt is not None else float("nan")


def _rho(actual: float, pred: float, f: float, x_est: float) -> float:
    """Actual-over-predicted decrease, with a guard for the rounding regime.

    When the two decreases agree to within the rounding error of evaluating
    ``f`` (about ``eps * x_est^2 * sqrt(f)``), the ratio carries no
    information and the step is treated as a model match.
    """
    noise = 1e2 * _EPS * x_est**2 * (math.sqrt(max(f, 0.0)) + _EPS * x_est**2)
    if abs(actual - pred) <= noise:
        return 1.0
    if pred <= 0:
        return 1.0 if actual >= 0 else -math.inf
    return actual / pred


def trm_solve(ensemble: MeasurementEnsemble, config: SolverConfig, z0, x_opt=None) -> tuple[np.ndarray, RunTrace]:
    """Run the tangent-constrained trust-region method from ``z0``.

    Stops when the stacked gradient norm is at most ``tol_grad`` and the
    smallest eigenvalue of the reduced Hessian is at least
    ``-tol_grad * x_est``, or after ``max_iters`` steps.
    """
    if config.algo not in (TRM_FIXED, TRM_ADAPTIVE):
        raise ContractError(f"trm_solve needs a trust-region algo, got {config.algo!r}")
    z = as_signal(z0, "z0", ensemble.n).copy()
    if x_opt is not None:
        x_opt = as_signal(x_opt, "x_opt", ensemble.n)
    x_est = _norm_estimate(ensemble)
    guard = guard_radius(ensemble)
    if np.linalg.norm(z) > guard:
        raise ContractError(f"||z0|| = {np.linalg.norm(z):.3e} exceeds the guard radius {guard:.3e}")

    fixed = config.algo == TRM_FIXED
    if config.delta is not None:
        delta = config.delta
    else:
        delta = theory_delta(ensemble) if fixed else x_est / 10
    delta_max = config.delta_max if config.delta_max is not None else max(x_est, delta)
    eps_trs = config.tol_eps_trs * x_est**4
    trace = RunTrace(config.algo)

    model = None
    it = 0
    while True:
        if model is None:
            fallback = np.linalg.norm(z) <= FALLBACK_FRAC * x_est
            basis = unconstrained_basis(ensemble.n, z) if fallback else build_tangent_basis(z)
            model = reduce_subproblem(ensemble, z, basis, delta)
            gnorm = stacked_norm(model.grad_z)
            dist = _dist(z, x_opt)
        f = model.f
        if gnorm <= config.tol_grad:
            lmin, _ = min_eig_sym(model.problem.A)
            if lmin >= -config.tol_grad * x_est:
                trace.lambda_min = lmin
                trace.append(it, f, gnorm, dist, STEP_TERMINAL, delta, 0.0)
                trace.status = CONVERGED
                break
        if it >= config.max_iters:
            trace.append(it, f, gnorm, dist, STEP_TERMINAL, delta, 0.0)
            trace.status = MAX_ITERS
            break

        prob = model.problem
        if prob.r != delta:
            prob = RealTrsProblem(prob.A, prob.b, delta)
        sol = solve_trs_exact(prob, eps_trs)
        pred = -prob.Q(sol.w)
        if not model.basis.constrained:
            kind = STEP_FALLBACK
        else:
            kind = STEP_UNCONSTRAINED if sol.case == INTERIOR else STEP_CONSTRAINED
        z_new = z + model.basis.lift(sol.w)
        used = delta
        it += 1
        if fixed:
            trace.append(it - 1, f, gnorm, dist, kind, used, pred)
            z = z_new
            model = None
            continue

        f_new = eval_f(ensemble, z_new)
        rho = _rho(f - f_new, pred, f, x_est)
        if rho < config.eta_accept:
            trace.append(it - 1, f, gnorm, dist, STEP_REJECTED, used, pred)
            delta = config.shrink * delta
            continue
        if rho < 0.25:
            delta = config.shrink * delta
        elif rho > 0.75 and sol.case != INTERIOR:
            delta = min(config.grow * delta, delta_max)
        trace.append(it - 1, f, gnorm, dist, kind, used, pred)
        z = z_new
        model = None
    return z, trace


def gradient_descent(ensemble: MeasurementEnsemble, config: SolverConfig, z0, x_opt=None) -> tuple[np.ndarray, RunTrace]:
    """Fixed-step Wirtinger gradient descent ``z <- z - mu grad_z f``.

    Stops when ``||grad_z f|| <= tol_grad``, after ``max_iters`` steps, or
    with status ``diverged`` once ``f`` exceeds ``1e6 f(z0)``.
    """
    if config.algo != GD:
        raise ContractError(f"gradient_descent needs algo 'gd', got {config.algo!r}")
    z = as_signal(z0, "z0", ensemble.n).copy()
    if x_opt is not None:
        x_opt = as_signal(x_opt, "x_opt", ensemble.n)
    mu = config.step_mu
    trace = RunTrace(GD)
    f, g = eval_f_grad(ensemble, z)
    limit = DIVERGENCE_FACTOR * f
    it = 0
    while True:
        gn = float(np.linalg.norm(g))
        if gn <= config.tol_grad:
            trace.append(it, f, math.sqrt(2.0) * gn, _dist(z, x_opt), STEP_TERMINAL, 0.0, 0.0)
            trace.status = CONVERGED
            break
        if it >= config.max_iters or not math.isfinite(f) or f > limit:
            trace.append(it, f, math.sqrt(2.0) * gn, _dist(z, x_opt), STEP_TERMINAL, 0.0, 0.0)
            trace.status = MAX_ITERS if it >= config.max_iters and math.isfinite(f) and f <= limit else DIVERGED
            break
        # first-order predicted decrease mu * d/dt f(z - t g) = 2 mu ||g||^2
        trace.append(it, f, math.sqrt(2.0) * gn, _dist(z, x_opt), STEP_GD, mu, 2.0 * mu * gn * gn)
        z = z - mu * g
        f, g = eval_f_grad(ensemble, z)
        it += 1
    return z, trace


def solve(ensemble: MeasurementEnsemble, config: SolverConfig, z0, x_opt=None) -> tuple[np.ndarray, RunTrace]:
    """Dispatch on ``config.algo``."""
    if config.algo == GD:
        return gradient_descent(ensemble, config, z0, x_opt)
    return trm_solve(ensemble, config, z0, x_opt)


# --- restricted Hessian bounds ------------------------------------------------


@dataclass(frozen=True)
class HessianProbe:
    """Per-point extreme eigenvalues of the halved reduced Hessian ``A / 2``."""

    point_min: np.ndarray
    point_max: np.ndarray
    x_norm: float
    radius: float

    @property
    def m_H_emp(self) -> float:
        return float(np.min(self.point_min))

    @property
    def M_H_emp(self) -> float:
        return float(np.max(self.point_max))


def hessian_bound_samples(ensemble: MeasurementEnsemble, x, num_points: int, seed: int,
                          radius_frac: float = 0.01) -> HessianProbe:
    """Extreme eigenvalues of ``A / 2`` at points ``x e^{i t} + h`` with ``||h|| <= radius_frac ||x||``.

    ``A`` is the reduced Hessian on the tangent space, so ``xi^T A xi`` is the
    second directional derivative along ``U xi``.  Halving it gives
    ``(1/2)[w; conj w]^* Hess f [w; conj w]``, the normalization of the
    restricted-Hessian bounds ``22/25 ||x||^2`` and ``9/2 ||x||^2``.  Taking
    eigenvalues is the exact min/max over all tangent unit directions.
    """
    x = as_signal(x, "x", ensemble.n)
    xn = float(np.linalg.norm(x))
    g = _rng.stream(seed, _rng.PROBE)
    lo = np.empty(num_points)
    hi = np.empty(num_points)
    for k in range(num_points):
        d = _rng.complex_normal(g, ensemble.n)
        d *= radius_frac * xn * g.random() / np.linalg.norm(d)
        z = x * np.exp(1j * g.uniform(0, 2 * np.pi)) + d
        basis = build_tangent_basis(z)
        A = basis.project(real_gradient_hessian(ensemble, z)[3])
        ev = np.linalg.eigvalsh(0.5 * A)
        lo[k], hi[k] = ev[0], ev[-1]
    return HessianProbe(lo, hi, xn, radius_frac * xn)


def hessian_bound_probe(ensemble: MeasurementEnsemble, x, num_points: int, seed: int,
                        radius_frac: float = 0.01) -> tuple[float, float]:
    """``(m_H_emp, M_H_emp)``: extremes of the halved reduced Hessian near ``X``."""
    p = hessian_bound_samples(ensemble, x, num_points, seed, radius_frac)
    return p.m_H_emp, p.M_H_emp
