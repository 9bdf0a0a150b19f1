"""Region certificates for the landscape of the least-squares objective.

Region membership is decided on population quantities (``m -> infinity``),
which depend on ``z`` only through ``||z||^2``, ``||x||^2`` and
``c = |x^* z|``.  Writing ``phi = arg(x^* z)`` and ``h = z - x e^{i phi}``:

* the population Hessian form along ``x e^{i phi}`` is
  ``8 c^2 + 4 ||x||^2 ||z||^2 - 4 ||x||^4``;
* ``Re(z^* grad E f) = (2 ||z||^2 - ||x||^2) ||z||^2 - c^2``;
* ``Re(h^* grad E f) = Re(z^* grad E f) - 2 (||z||^2 - ||x||^2) c``;
* ``||h||^2 = ||x||^2 + ||z||^2 - 2 c``.

The regions:

* R1: the form along ``x e^{i phi}`` is at most
  ``-||x||^2 ||z||^2 / 100 - ||x||^4 / 50`` (negative curvature);
* R3: ``dist(z, X) <= ||x|| / sqrt(7)`` (restricted strong convexity);
* R2z: ``Re(z^* grad E f) >= ||z||^4 / 100 + ||x||^2 ||z||^2 / 500``;
* R2h: ``Re(h^* grad E f) >= ||x||^2 ||z|| ||h|| / 250`` with
  ``11/20 ||x|| <= ||z|| <= ||x||`` and ``dist >= ||x|| / 3``.

Every point lies in at least one of them.  The finite-sample counterparts
checked by :func:`empirical_certificates` and :func:`certify_samples` are

* R1: (form along ``x e^{i phi}``) / ``||x||^2 <= -||x||^2 / 100``;
* R2z: ``Re(z^* grad f) / ||z|| >= ||x||^2 ||z|| / 1000``;
* R2h: ``Re(h^* grad f) >= ||x||^2 ||z|| ||h|| / 1000``;
* R3: form along ``g = h / ||h||`` at least ``||x||^2 / 4``.

All Hessian forms are the second directional derivative
``[d; conj(d)]^* Hess f [d; conj(d)]``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import rng as _rng
from .core import MeasurementEnsemble, align_phase, as_signal, draw_masks, gen_masked_dct_ensemble
from .errors import DataError, DimensionError, ModelMismatchError
from .objective import (
    eval_f_grad,
    hessian_quadratic_form,
    population_f,
    population_grad,
    population_hessian_form,
    population_real_gaussian_f,
    stacked_norm,
)

REGIONS = ("R1", "R2z", "R2h", "R3")

SAMPLE_CHUNK = 4096
MIXTURE = ("ball", "shell", "near-X", "near-S", "cone")

# finite-sample bounds, in units of ||x||^2 (curvature) or ||x||^2 ||z|| (gradients)
NEG_CURV_BOUND = -1.0 / 100
GRAD_BOUND = 1.0 / 1000
RSC_BOUND = 1.0 / 4

POP_COMPLEX = "population-complex"
POP_REAL = "population-real-gaussian"
EMPIRICAL = "empirical"
GRID_MODES = (POP_COMPLEX, POP_REAL, EMPIRICAL)


@dataclass(frozen=True)
class RegionCertificate:
    """Region flags at ``z`` plus the certificate quantities.

    The flags always come from population quantities.  The numeric fields are
    finite-sample values when an ensemble was supplied (``source ==
    "empirical"``) and population values otherwise.
    """

    in_R1: bool
    in_R2z: bool
    in_R2h: bool
    in_R3: bool
    curvature_along_target: float  # form along x e^{i phi} divided by ||x||^2
    radial_grad: float  # Re(h^* grad_z f)
    z_grad: float  # Re(z^* grad_z f)
    rsc_form: float  # form along g(z)
    dist: float
    z_norm: float
    x_norm: float
    source: str = "population"

    @property
    def covered(self) -> bool:
        return self.in_R1 or self.in_R2z or self.in_R2h or self.in_R3

    def regions(self) -> tuple[str, ...]:
        flags = (self.in_R1, self.in_R2z, self.in_R2h, self.in_R3)
        return tuple(r for r, f in zip(REGIONS, flags) if f)

    def passes(self, region: str) -> bool:
        """Whether the finite-sample bound attached to ``region`` holds."""
        x2 = self.x_norm**2
        if region == "R1":
            return self.curvature_along_target <= NEG_CURV_BOUND * x2
        if region == "R2z":
            return self.z_grad >= GRAD_BOUND * x2 * self.z_norm**2
        if region == "R2h":
            return self.radial_grad >= GRAD_BOUND * x2 * self.z_norm * self.dist
        if region == "R3":
            return self.rsc_form >= RSC_BOUND * x2
        raise ValueError(f"unknown region {region!r}")


def population_region_flags(x_norm2, z_norm2, c) -> dict[str, np.ndarray]:
    """Vectorized region membership from ``||x||^2``, ``||z||^2`` and ``|x^* z|``."""
    x2 = np.asarray(x_norm2, dtype=np.float64)
    z2 = np.asarray(z_norm2, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    znorm = np.sqrt(z2)
    form = 8.0 * c * c + 4.0 * x2 * z2 - 4.0 * x2 * x2
    zg = (2.0 * z2 - x2) * z2 - c * c
    hg = zg - 2.0 * (z2 - x2) * c
    h2 = np.maximum(x2 + z2 - 2.0 * c, 0.0)
    h = np.sqrt(h2)
    xn = np.sqrt(x2)
    r1 = form <= -x2 * z2 / 100.0 - x2 * x2 / 50.0
    r3 = h2 <= x2 / 7.0
    r2z = zg >= z2 * z2 / 100.0 + x2 * z2 / 500.0
    r2h = (hg >= x2 * znorm * h / 250.0) & (znorm >= 0.55 * xn) & (znorm <= xn) & (h >= xn / 3.0)
    return {"R1": r1, "R2z": r2z, "R2h": r2h, "R3": r3}


def tangent_direction(z) -> np.ndarray:
    """Deterministic unit ``h`` with ``Im(h^* z) = 0``.

    The first coordinate vector ``e_1`` with its component along ``i z``
    (in the real geometry) removed, normalized; later coordinate vectors are
    tried if that vanishes.
    """
    z = as_signal(z)
    nz2 = np.vdot(z, z).real
    iz = 1j * z
    for j in range(z.size):
        e = np.zeros(z.size, dtype=np.complex128)
        e[j] = 1.0
        if nz2 > 0:
            e = e - (np.vdot(iz, e).real / nz2) * iz
        ne = np.linalg.norm(e)
        if ne > 1e-8:
            return e / ne
    return z / np.sqrt(nz2)


def _g_direction(z, align) -> np.ndarray:
    if align.dist > 0:
        return align.h / align.dist
    return tangent_direction(z)


def classify_region(x, z, ensemble: MeasurementEnsemble | None = None) -> RegionCertificate:
    """Region flags at ``z`` and the certificate quantities for the same directions."""
    x = as_signal(x, "x")
    z = as_signal(z, "z", x.size)
    xn = float(np.linalg.norm(x))
    if xn == 0:
        raise DataError("x must be nonzero")
    al = align_phase(z, x)
    xt = x * np.exp(1j * al.phi)
    x2 = xn * xn
    z2 = float(np.vdot(z, z).real)
    flags = population_region_flags(x2, z2, abs(np.vdot(x, z)))
    g = _g_direction(z, al)

    if ensemble is None:
        grad = population_grad(x, z)
        curv = population_hessian_form(x, z, xt) / x2
        rsc = population_hessian_form(x, z, g)
        source = "population"
    else:
        if ensemble.n != x.size:
            raise DimensionError(f"ensemble has n={ensemble.n}, x has n={x.size}")
        _, grad = eval_f_grad(ensemble, z)
        curv = hessian_quadratic_form(ensemble, z, xt) / x2
        rsc = hessian_quadratic_form(ensemble, z, g)
        source = "empirical"
    return RegionCertificate(
        in_R1=bool(flags["R1"]),
        in_R2z=bool(flags["R2z"]),
        in_R2h=bool(flags["R2h"]),
        in_R3=bool(flags["R3"]),
        curvature_along_target=float(curv),
        radial_grad=float(np.vdot(al.h, grad).real),
        z_grad=float(np.vdot(z, grad).real),
        rsc_form=float(rsc),
        dist=al.dist,
        z_norm=float(np.sqrt(z2)),
        x_norm=xn,
        source=source,
    )


def empirical_certificates(ensemble: MeasurementEnsemble, x, z) -> tuple[float, float, float]:
    """``(neg_curv, grad_norm, rsc)`` at ``z`` for the given ensemble.

    ``neg_curv`` is the Hessian form along ``x e^{i phi(z)}`` divided by
    ``||x||^2``, ``grad_norm`` is the stacked gradient norm
    ``sqrt(2) ||grad_z f||`` and ``rsc`` the form along ``g(z)``.
    """
    x = as_signal(x, "x", ensemble.n)
    z = as_signal(z, "z", ensemble.n)
    al = align_phase(z, x)
    x2 = float(np.vdot(x, x).real)
    _, grad = eval_f_grad(ensemble, z)
    neg = hessian_quadratic_form(ensemble, z, x * np.exp(1j * al.phi)) / x2
    rsc = hessian_quadratic_form(ensemble, z, _g_direction(z, al))
    return float(neg), stacked_norm(grad), float(rsc)


# --- sampling -----------------------------------------------------------------


def _unit_rows(g: np.random.Generator, k: int, n: int) -> np.ndarray:
    u = _rng.complex_normal(g, (k, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _orth_unit_rows(g: np.random.Generator, k: int, x: np.ndarray) -> np.ndarray:
    """Unit rows orthogonal to ``x`` (complex orthogonality); zeros when ``n == 1``."""
    u = _rng.complex_normal(g, (k, x.size))
    xh = x / np.linalg.norm(x)
    u = u - np.outer(u @ xh.conj(), xh)
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    return np.divide(u, nu, out=np.zeros_like(u), where=nu > 1e-12)


def sample_mixture(x, count: int, seed: int, chunk: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` points from the scan mixture with stream ``(seed, SAMPLE, chunk)``.

    Components, assigned round-robin: uniform ball of radius ``2||x||``;
    uniform direction with radius uniform on ``[0, 2||x||]``; ``x e^{i t}``
    plus a perturbation of log-uniform size in ``[1e-6, 1] ||x||``; a point of
    ``S`` plus such a perturbation; and a point with ``||z|| / ||x||``
    uniform on ``[0, 2]`` and ``|x^* z| / (||x|| ||z||)`` uniform on
    ``[0, 1]``.  Returns the points and the component index of each.
    """
    x = as_signal(x, "x")
    n = x.size
    xn = float(np.linalg.norm(x))
    g = _rng.stream(seed, _rng.SAMPLE, chunk)
    comp = np.arange(count) % len(MIXTURE)
    Z = np.empty((count, n), dtype=np.complex128)
    dirs = _unit_rows(g, count, n)
    rad = g.random(count)
    theta = g.uniform(0.0, 2 * np.pi, count)
    logs = g.uniform(-6.0, 0.0, count)
    orth = _orth_unit_rows(g, count, x)
    lam = g.uniform(0.0, 2.0, count)
    eta = g.random(count)

    xh = x / xn
    ph = np.exp(1j * theta)[:, None]
    pert = (xn * 10.0 ** logs)[:, None] * dirs
    # ball: radius ~ U^(1/2n)
    k = comp == 0
    Z[k] = (2 * xn * rad[k] ** (1.0 / (2 * n)))[:, None] * dirs[k]
    k = comp == 1
    Z[k] = (2 * xn * rad[k])[:, None] * dirs[k]
    k = comp == 2
    Z[k] = ph[k] * x + pert[k]
    k = comp == 3
    Z[k] = ph[k] * (xn / np.sqrt(2)) * orth[k] + pert[k]
    k = comp == 4
    perp = np.sqrt(1.0 - eta[k] ** 2)[:, None] * orth[k]
    if n == 1:
        # no orthogonal complement: |x^* z| = ||x|| ||z|| always
        perp = np.zeros_like(perp)
        eta[k] = 1.0
    Z[k] = (lam[k] * xn)[:, None] * ph[k] * (eta[k][:, None] * xh + perp)
    return Z, comp


def _flags_for(x, Z) -> dict[str, np.ndarray]:
    x2 = float(np.vdot(x, x).real)
    z2 = np.einsum("ij,ij->i", Z.conj(), Z).real
    c = np.abs(Z @ x.conj())
    return population_region_flags(x2, z2, c)


@dataclass
class CoverageReport:
    num_samples: int
    uncovered: int
    region_counts: dict[str, int]
    component_counts: dict[str, int]
    small_norm_samples: int  # points with ||z|| <= ||x|| / 2
    small_norm_not_R1: int
    uncovered_examples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def coverage_scan(x, num_samples: int, seed: int, chunk_size: int = SAMPLE_CHUNK) -> CoverageReport:
    """Count mixture samples that fall in none of R1, R2z, R2h, R3 (expected: 0)."""
    if int(num_samples) < 1:
        raise DataError("num_samples must be at least 1")
    x = as_signal(x, "x")
    xn = float(np.linalg.norm(x))
    if xn == 0:
        raise DataError("x must be nonzero")
    counts = {r: 0 for r in REGIONS}
    comps = {c: 0 for c in MIXTURE}
    uncovered = small = small_bad = 0
    examples = []
    done = 0
    for j in range(-(-int(num_samples) // chunk_size)):
        k = min(chunk_size, num_samples - done)
        Z, comp = sample_mixture(x, k, seed, j)
        fl = _flags_for(x, Z)
        cov = fl["R1"] | fl["R2z"] | fl["R2h"] | fl["R3"]
        for r in REGIONS:
            counts[r] += int(fl[r].sum())
        for i, c in enumerate(MIXTURE):
            comps[c] += int((comp == i).sum())
        uncovered += int((~cov).sum())
        for i in np.flatnonzero(~cov)[: max(0, 10 - len(examples))]:
            examples.append([[float(v.real), float(v.imag)] for v in Z[i]])
        sm = np.linalg.norm(Z, axis=1) <= xn / 2
        small += int(sm.sum())
        small_bad += int((sm & ~fl["R1"]).sum())
        done += k
    return CoverageReport(int(num_samples), uncovered, counts, comps, small, small_bad, examples)


def sample_region_points(x, region: str, count: int, seed: int, components=("cone",),
                         max_chunks: int = 1000) -> np.ndarray:
    """First ``count`` mixture samples (in stream order) whose population flag for ``region`` is set.

    Only samples from the named mixture ``components`` are kept.  The default
    ``cone`` component is uniform in ``(||z||/||x||, |x^* z|/(||x|| ||z||))``,
    the two quantities the population landscape depends on; the ``near-S``
    component concentrates on the thin-margin neighbourhood of the saddles.
    """
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    bad = set(components) - set(MIXTURE)
    if bad or not components:
        raise ValueError(f"unknown mixture components {sorted(bad)}")
    keep = [MIXTURE.index(c) for c in components]
    x = as_signal(x, "x")
    out = []
    have = 0
    for j in range(max_chunks):
        Z, comp = sample_mixture(x, SAMPLE_CHUNK, seed, j)
        sel = Z[_flags_for(x, Z)[region] & np.isin(comp, keep)]
        out.append(sel[: count - have])
        have += len(out[-1])
        if have >= count:
            return np.vstack(out)
    raise DataError(f"only {have} of {count} samples found in {region}")


@dataclass
class CertificateSummary:
    region: str
    samples: int
    passed: int

    @property
    def pass_rate(self) -> float:
        return self.passed / self.samples if self.samples else float("nan")


def certify_samples(ensemble: MeasurementEnsemble, x, region: str, points) -> tuple[CertificateSummary, list[RegionCertificate]]:
    """Empirical certificates at ``points`` and the fraction meeting ``region``'s bound."""
    certs = [classify_region(x, z, ensemble) for z in np.atleast_2d(points)]
    passed = sum(c.passes(region) for c in certs)
    return CertificateSummary(region, len(certs), int(passed)), certs


CERT_COLUMNS = [f.name for f in fields(RegionCertificate)]


def write_certificates_csv(certs, path) -> None:
    """One row per sample with every certificate field and flag."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + CERT_COLUMNS)
        for i, c in enumerate(certs):
            w.writerow([i] + [_fmt(getattr(c, k)) for k in CERT_COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --- 2D grids -------------------------------------------------------------------


@dataclass(frozen=True)
class AxisSpec:
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if int(self.steps) < 2 or not self.hi > self.lo:
            raise DataError(f"invalid axis spec {self}")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.steps))


@dataclass(frozen=True)
class LandscapeGrid:
    """Objective values on a 2D real grid; ``values[i, j]`` is at ``(x_axis[j], y_axis[i])``."""

    mode: str
    x_axis: AxisSpec
    y_axis: AxisSpec
    values: np.ndarray
    target: np.ndarray
    meta: dict = field(default_factory=dict)

    def argmin_points(self, k: int = 2) -> list[tuple[float, float]]:
        """Coordinates of the ``k`` smallest grid values."""
        order = np.argsort(self.values, axis=None)[:k]
        xs, ys = self.x_axis.points(), self.y_axis.points()
        return [(float(xs[j]), float(ys[i])) for i, j in (np.unravel_index(o, self.values.shape) for o in order)]


def _grid_points(xa: AxisSpec, ya: AxisSpec) -> np.ndarray:
    X, Y = np.meshgrid(xa.points(), ya.points())
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _empirical_values(ensemble: MeasurementEnsemble, P: np.ndarray) -> np.ndarray:
    u = ensemble.rows @ P.T.astype(np.complex128)
    r = np.abs(u) ** 2 - ensemble.magnitudes_sq[:, None]
    return 0.5 * np.mean(r * r, axis=0)


def masked_dct_ensembles(x, num_masks: int, trials: int, seed: int) -> list[MeasurementEnsemble]:
    """``trials`` independent masked-DCT ensembles; trial ``t`` uses masks ``t*num_masks ...``."""
    x = as_signal(x, "x")
    n = x.size
    allm = draw_masks(n, num_masks * trials, seed)
    return [
        gen_masked_dct_ensemble(n, num_masks, x, seed, masks=allm[t * num_masks:(t + 1) * num_masks])
        for t in range(trials)
    ]


def landscape_grid_2d(mode: str, x, x_axis: AxisSpec, y_axis: AxisSpec, ensembles=None, meta=None) -> LandscapeGrid:
    """Objective values over a real 2D grid of points ``z = (u, v)``.

    ``population-complex`` evaluates ``E f`` for complex Gaussian
    measurements, ``population-real-gaussian`` the real-Gaussian expectation
    and ``empirical`` the average of ``f`` over ``ensembles`` (for example
    several masked-DCT draws from :func:`masked_dct_ensembles`).
    """
    if mode not in GRID_MODES:
        raise DataError(f"unknown grid mode {mode!r}")
    x = as_signal(x, "x")
    if x.size != 2:
        raise DimensionError(f"landscape grids need n = 2, got n = {x.size}")
    if mode != POP_COMPLEX and np.any(x.imag != 0):
        raise ModelMismatchError(f"{mode} mode needs a real target")
    P = _grid_points(x_axis, y_axis)
    if mode == POP_COMPLEX:
        vals = np.array([population_f(x, p.astype(np.complex128)) for p in P])
    elif mode == POP_REAL:
        vals = np.array([population_real_gaussian_f(x.real, p) for p in P])
    else:
        if not ensembles:
            raise DataError("empirical mode needs at least one ensemble")
        vals = np.mean([_empirical_values(e, P) for e in ensembles], axis=0)
    vals = vals.reshape(int(y_axis.steps), int(x_axis.steps))
    if not np.all(np.isfinite(vals)):
        raise DataError("non-finite landscape values")
    return LandscapeGrid(mode, x_axis, y_axis, vals, x, dict(meta or {}))


def write_grid_csv(grid: LandscapeGrid, path) -> None:
    """Axis rows ``axis,lo,hi,steps`` then the value rows, row-major in ``y``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "lo", "hi", "steps"])
        for name, ax in (("x", grid.x_axis), ("y", grid.y_axis)):
            w.writerow([name, repr(float(ax.lo)), repr(float(ax.hi)), int(ax.steps)])
        for row in grid.values:
            w.writerow([repr(float(v)) for v in row])


def read_grid_csv(path) -> tuple[AxisSpec, AxisSpec, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    xa = AxisSpec(float(rows[1][1]), float(rows[1][2]), int(rows[1][3]))
    ya = AxisSpec(float(rows[2][1]), float(rows[2][2]), int(rows[2][3]))
    vals = np.array([[float(v) for v in r] for r in rows[3:]])
    return xa, ya, vals


def write_grid_meta(grid: LandscapeGrid, path) -> None:
    meta = {
        "mode": grid.mode,
        "x": [[float(v.real), float(v.imag)] for v in grid.target],
        "x_axis": asdict(grid.x_axis),
        "y_axis": asdict(grid.y_axis),
        **grid.meta,
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
