"""Experiment drivers behind the command-line interface.

Every driver takes an :class:`ExperimentSpec`, is deterministic given its
seed, and returns a result object whose ``rows`` are written as CSV or JSON.
Trials run in a thread pool capped by the ``PR_THREADS`` environment
variable; results are always collected and written in trial order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import core, landscape, solver, trs
from . import rng as _rng
from .errors import DataError

KINDS = ("figure1", "sweep", "landscape", "certify", "solve", "trs-bench", "gen")
MODEL_ALIASES = {"gaussian": core.GAUSSIAN, "masked-dct": core.MASKED_DCT,
                 core.GAUSSIAN: core.GAUSSIAN, core.MASKED_DCT: core.MASKED_DCT}
SUCCESS_REL = 1e-3
FIGURE1_DIST = 1e-4
INJECTIVITY_RATIO = 4


@dataclass
class ExperimentSpec:
    kind: str
    n: int | None = None
    m: int | None = None
    ratios: list | None = None
    trials: int | None = None
    seed: int = 0
    model: str = "gaussian"
    algo: str | None = None
    delta: float | None = None
    mu: float | None = None
    tol: float | None = None
    max_iters: int | None = None
    log_base: float | None = None
    init: str = "random"
    out: str | None = None
    format: str = "csv"
    grid_mode: str = landscape.POP_REAL
    grid_lo: float = -2.0
    grid_hi: float = 2.0
    grid_steps: int = 81
    num_masks: int = 8
    mask_trials: int = 32
    samples: int | None = None
    ensemble: str | None = None
    target: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown experiment kind {self.kind!r}")
        if self.model not in MODEL_ALIASES:
            raise DataError(f"unknown model {self.model!r}")
        if self.trials is not None and int(self.trials) < 1:
            raise DataError("trials must be at least 1")
        if self.ratios is not None:
            r = [float(v) for v in self.ratios]
            if not r or any(b <= a for a, b in zip(r, r[1:])) or r[0] <= 0:
                raise DataError("ratios must be positive and strictly increasing")
            self.ratios = r
        if self.format not in ("csv", "json"):
            raise DataError(f"format must be csv or json, got {self.format!r}")
        if self.init not in ("random", "target"):
            raise DataError(f"init must be random or target, got {self.init!r}")
        if self.seed < 0:
            raise DataError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    kind: str
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)  # in-memory objects, not serialized

    def to_json_dict(self, spec: ExperimentSpec) -> dict:
        return {
            "kind": self.kind,
            "spec": spec.to_dict(),
            "columns": self.columns,
            "rows": [dict(zip(self.columns, r)) for r in self.rows],
            "summary": self.summary,
        }


def default_m(n: int, log_base: float | None = None) -> int:
    """``ceil(5 n log n)``, natural log unless ``log_base`` is given."""
    lg = math.log(n) if log_base is None else math.log(n) / math.log(log_base)
    return int(math.ceil(5 * n * lg))


def worker_count() -> int:
    env = os.environ.get("PR_THREADS", "")
    cap = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, cap)


def _map_trials(fn, items):
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _model(spec: ExperimentSpec) -> str:
    return MODEL_ALIASES[spec.model]


def make_instance(spec: ExperimentSpec, n: int, m: int, index: int = 0):
    """Target ``x`` (unit norm) and measurement ensemble for one experiment instance.

    The target comes from ``(seed, SIGNAL)``; instance ``index`` of an
    experiment draws its measurements with seed ``derive_seed(seed, ENSEMBLE, index)``.
    """
    sub = _rng.derive_seed(spec.seed, _rng.ENSEMBLE, index)
    if _model(spec) == core.MASKED_DCT:
        x = core.random_real_signal(n, spec.seed)
        return x, core.gen_masked_dct_ensemble(n, max(1, -(-m // n)), x, sub)
    x = core.random_signal(n, spec.seed)
    return x, core.gen_gaussian_ensemble(n, m, x, sub)


def _solver_config(spec: ExperimentSpec, default_algo: str) -> solver.SolverConfig:
    algo = spec.algo or default_algo
    kw = {}
    if spec.delta is not None:
        kw["delta"] = spec.delta
    if spec.mu is not None:
        kw["step_mu"] = spec.mu
    if spec.tol is not None:
        kw["tol_grad"] = spec.tol
    if spec.max_iters is not None:
        kw["max_iters"] = spec.max_iters
    if algo == solver.GD:
        return solver.SolverConfig.gradient_descent(**kw)
    return solver.SolverConfig(algo=algo, **kw)


def _init(spec: ExperimentSpec, ens, x, init_seed: int, trial: int):
    if spec.init == "target":
        return x.copy()
    _, R0 = core.estimate_norm_and_radius(ens)
    return core.random_ball_init(ens.n, R0, init_seed, trial)


def _neg_log10(v: float) -> float:
    return -math.log10(v) if v > 0 else math.inf


def run_figure1(spec: ExperimentSpec) -> ExperimentResult:
    """Gradient descent from ``trials`` random starts on one fixed instance.

    Defaults: ``n = 100``, ``m = ceil(5 n ln n)``, ``mu = 0.05``, stop at
    ``||grad_z f|| <= 1e-5``, 100 trials, starts uniform in the ball of
    radius ``R0``.
    """
    n = spec.n or 100
    m = spec.m or default_m(n, spec.log_base)
    trials = spec.trials or 100
    x, ens = make_instance(spec, n, m)
    cfg = _solver_config(spec, solver.GD)
    xn = float(np.linalg.norm(x))

    def one(t):
        z0 = _init(spec, ens, x, spec.seed, t)
        z, tr = solver.solve(ens, cfg, z0, x)
        d = core.align_phase(z, x).dist
        f = tr.f[-1]
        return [t, d, _neg_log10(d), f, _neg_log10(f), tr.iterations, tr.status, d <= FIGURE1_DIST * xn]

    rows = _map_trials(one, range(trials))
    ok = sum(r[-1] for r in rows)
    summary = {"n": n, "m": m, "trials": trials, "successes": ok, "all_success": ok == trials,
               "algo": cfg.algo, "step_mu": cfg.step_mu, "tol_grad": cfg.tol_grad}
    cols = ["trial", "dist", "neg_log10_dist", "f", "neg_log10_f", "iterations", "status", "success"]
    return ExperimentResult("figure1", cols, rows, summary)


def run_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Recovery probability against ``m / n``; success when ``eps_Rel <= 1e-3``.

    Each ratio uses one fixed instance and ``trials`` random starts.
    """
    n = spec.n or 128
    ratios = spec.ratios or [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    trials = spec.trials or 25
    cfg = _solver_config(spec, solver.TRM_ADAPTIVE)
    rows = []
    for i, ratio in enumerate(ratios):
        m = int(round(ratio * n))
        x, ens = make_instance(spec, n, m, i)
        init_seed = _rng.derive_seed(spec.seed, _rng.INIT, i)

        def one(t, ens=ens, x=x, init_seed=init_seed):
            z0 = _init(spec, ens, x, init_seed, t)
            z, _ = solver.solve(ens, cfg, z0, x)
            return core.relative_error(z, x)

        errs = _map_trials(one, range(trials))
        succ = sum(e <= SUCCESS_REL for e in errs)
        rows.append([ratio, ens.m, succ, trials, succ / trials, float(np.median(errs))])
    summary = {"n": n, "algo": cfg.algo, "success_rel": SUCCESS_REL,
               "injectivity_ratio": INJECTIVITY_RATIO, "model": _model(spec)}
    cols = ["ratio", "m", "successes", "trials", "probability", "median_rel_error"]
    return ExperimentResult("sweep", cols, rows, summary)


def _grid_topology(grid: landscape.LandscapeGrid) -> dict:
    """Interior grid minima and saddles from discrete derivatives."""
    V = grid.values
    xs, ys = grid.x_axis.points(), grid.y_axis.points()
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    gy, gx = np.gradient(V, hy, hx)
    gn = np.hypot(gx, gy)
    fxx = (V[1:-1, 2:] - 2 * V[1:-1, 1:-1] + V[1:-1, :-2]) / hx**2
    fyy = (V[2:, 1:-1] - 2 * V[1:-1, 1:-1] + V[:-2, 1:-1]) / hy**2
    fxy = (V[2:, 2:] - V[2:, :-2] - V[:-2, 2:] + V[:-2, :-2]) / (4 * hx * hy)
    det = fxx * fyy - fxy**2
    minima, saddles = [], []
    for i in range(1, V.shape[0] - 1):
        for j in range(1, V.shape[1] - 1):
            if gn[i, j] > gn[i - 1:i + 2, j - 1:j + 2].min():
                continue
            d = det[i - 1, j - 1]
            pt = [float(xs[j]), float(ys[i]), float(V[i, j])]
            if d > 0 and fxx[i - 1, j - 1] > 0:
                minima.append(pt)
            elif d < 0:
                saddles.append(pt)
    return {"minima": minima, "saddles": saddles}


def run_landscape(spec: ExperimentSpec) -> ExperimentResult:
    """Objective values over a 2D grid for ``x = [1; 0]``."""
    x = np.array([1.0, 0.0], dtype=np.complex128)
    ax = landscape.AxisSpec(spec.grid_lo, spec.grid_hi, spec.grid_steps)
    ens = None
    meta = {"seed": spec.seed}
    if spec.grid_mode == landscape.EMPIRICAL:
        if _model(spec) == core.MASKED_DCT:
            ens = landscape.masked_dct_ensembles(x, spec.num_masks, spec.mask_trials, spec.seed)
            meta.update(num_masks=spec.num_masks, mask_trials=spec.mask_trials)
        else:
            m = spec.m or 10_000
            ens = [core.gen_gaussian_ensemble(2, m, x, spec.seed)]
            meta.update(m=m)
    grid = landscape.landscape_grid_2d(spec.grid_mode, x, ax, ax, ens, meta)
    topo = _grid_topology(grid)
    xs = ax.points()
    rows = [[float(ys), float(xv), float(grid.values[i, j])]
            for i, ys in enumerate(xs) for j, xv in enumerate(xs)]
    summary = {"mode": grid.mode, **topo}
    return ExperimentResult("landscape", ["y", "x", "f"], rows, summary, {"grid": grid})


def run_certify(spec: ExperimentSpec) -> ExperimentResult:
    """Coverage scan and, when ``samples`` is set, empirical region certificates."""
    n = spec.n or 4
    num = spec.trials or 100_000
    x = core.random_signal(n, spec.seed)
    rep = landscape.coverage_scan(x, num, spec.seed)
    rows = [["coverage", "all", num, num - rep.uncovered, (num - rep.uncovered) / num]]
    certs = []
    if spec.samples:
        m = spec.m or default_m(n, spec.log_base)
        x, ens = make_instance(spec, n, m)
        for reg in landscape.REGIONS:
            pts = landscape.sample_region_points(x, reg, spec.samples, spec.seed)
            s, cs = landscape.certify_samples(ens, x, reg, pts)
            rows.append(["certificate", reg, s.samples, s.passed, s.pass_rate])
            certs.extend(cs)
    summary = {"n": n, "uncovered": rep.uncovered, "coverage": rep.to_dict()}
    return ExperimentResult("certify", ["check", "region", "samples", "passed", "rate"], rows, summary,
                            {"certificates": certs})


def run_solve(spec: ExperimentSpec) -> ExperimentResult:
    """One solve; rows are the per-iteration trace."""
    if spec.ensemble:
        ens = core.load_ensemble(spec.ensemble)
        x = core.load_signal(spec.target) if spec.target else None
        if spec.init == "target" and x is None:
            raise DataError("init=target needs a target signal file")
    else:
        n = spec.n or 64
        m = spec.m or default_m(n, spec.log_base)
        x, ens = make_instance(spec, n, m)
    cfg = _solver_config(spec, solver.TRM_ADAPTIVE)
    z0 = _init(spec, ens, x, spec.seed, 0)
    z, tr = solver.solve(ens, cfg, z0, x)
    summary = solver.run_summary(tr, cfg, spec.seed, z, x)
    near = None if x is None else float(np.linalg.norm(x)) / np.sqrt(7.0)
    summary["phase_violations"] = tr.phase_violations(near)
    return ExperimentResult("solve", list(solver.RunTrace.COLUMNS), [list(r) for r in tr.records()],
                            summary, {"z": z, "trace": tr})


def run_trs_bench(spec: ExperimentSpec) -> ExperimentResult:
    """Random TRS instances (a third constructed hard cases), solved and checked against the oracle."""
    count = spec.trials or 200
    eps = spec.tol or 1e-8
    kinds = ("random", "interior", "hard")

    def one(k):
        g = _rng.stream(spec.seed, _rng.TRS, k)
        d = int(g.integers(1, 21))
        kind = kinds[k % 3]
        p = trs.random_instance(g, d, kind)
        sol = trs.solve_trs_exact(p, eps)
        ref = trs.trs_eigen_oracle(p)
        rep = trs.kkt_report(p, sol)
        return [k, kind, d, sol.case, rep["stationarity"], rep["complementarity"], rep["feasibility"],
                rep["dual_psd"], p.Q(sol.w) - p.Q(ref.w), abs(sol.lam - ref.lam), sol.iterations]

    rows = _map_trials(one, range(count))
    cols = ["instance", "kind", "d", "case", "stationarity", "complementarity", "feasibility",
            "dual_psd", "q_gap", "lambda_diff", "iterations"]
    pct = {}
    for c in ("stationarity", "complementarity", "feasibility", "dual_psd", "q_gap"):
        v = np.array([r[cols.index(c)] for r in rows])
        pct[c] = {p: float(np.percentile(v, p)) for p in (50, 90, 99, 100)}
    return ExperimentResult("trs-bench", cols, rows, {"eps": eps, "percentiles": pct})


RUNNERS = {
    "figure1": run_figure1,
    "sweep": run_sweep,
    "landscape": run_landscape,
    "certify": run_certify,
    "solve": run_solve,
    "trs-bench": run_trs_bench,
}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows_csv(columns, rows, dest) -> None:
    """Header row then one row per record; ``dest`` is a path or a text stream."""
    if hasattr(dest, "write"):
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        return
    with open(dest, "w", newline="") as fh:
        write_rows_csv(columns, rows, fh)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_result(result: ExperimentResult, spec: ExperimentSpec, path) -> list[Path]:
    """Write ``result`` to ``path`` in ``spec.format``, plus kind-specific sidecars."""
    path = Path(path)
    written = [path]
    if spec.format == "csv":
        write_rows_csv(result.columns, result.rows, path)
    else:
        write_json(result.to_json_dict(spec), path)
    stem = path.with_suffix("")
    if result.kind == "landscape":
        grid = result.artifacts["grid"]
        landscape.write_grid_csv(grid, f"{stem}.grid.csv")
        landscape.write_grid_meta(grid, f"{stem}.meta.json")
        written += [Path(f"{stem}.grid.csv"), Path(f"{stem}.meta.json")]
    elif result.kind == "certify" and result.artifacts.get("certificates"):
        landscape.write_certificates_csv(result.artifacts["certificates"], f"{stem}.certificates.csv")
        written.append(Path(f"{stem}.certificates.csv"))
    elif result.kind == "solve":
        write_json(result.summary, f"{stem}.summary.json")
        written.append(Path(f"{stem}.summary.json"))
    return written
