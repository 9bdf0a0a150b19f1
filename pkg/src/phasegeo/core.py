"""Measurement models, phase alignment and initialization.

Signals are plain 1-D ``complex128`` numpy arrays.  A measurement vector
``a_k`` is stored through its conjugate transpose: row ``k`` of
:attr:`MeasurementEnsemble.rows` is ``a_k^*``, so ``rows @ z`` gives the
vector of inner products ``a_k^* z``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from . import rng as _rng
from .errors import DataError, DimensionError, ModelMismatchError

GAUSSIAN = "gaussian-complex"
MASKED_DCT = "masked-dct-real"
MODELS = (GAUSSIAN, MASKED_DCT)

_MAGIC = b"PGEO"
_FORMAT_VERSION = 1


def as_signal(v, name: str = "z", n: int | None = None) -> np.ndarray:
    """Validate and convert ``v`` to a finite 1-D complex128 array."""
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if n is not None and arr.size != n:
        raise DimensionError(f"{name} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} has non-finite entries")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """A phase retrieval instance: sensing rows ``a_k^*`` and magnitudes ``y_k``.

    ``magnitudes_sq`` caches ``y_k**2``, which is all the objective needs.
    Arrays are read-only after construction.
    """

    model: str
    rows: np.ndarray
    magnitudes: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ModelMismatchError(f"unknown model {self.model!r}")
        rows = np.asarray(self.rows, dtype=np.complex128)
        y = np.asarray(self.magnitudes, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DimensionError(f"rows must be an m x n matrix, got shape {rows.shape}")
        if y.shape != (rows.shape[0],):
            raise DimensionError(f"magnitudes must have length m={rows.shape[0]}, got {y.shape}")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise DataError("magnitudes must be finite and non-negative")
        if self.model == MASKED_DCT and np.any(rows.imag != 0):
            raise ModelMismatchError("masked-dct-real rows must have zero imaginary part")
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "magnitudes", _frozen(y))
        object.__setattr__(self, "magnitudes_sq", _frozen(y * y))

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    def measure(self, z) -> np.ndarray:
        """Return ``|a_k^* z|`` for every row."""
        return np.abs(self.rows @ as_signal(z, n=self.n))

    def equals(self, other: "MeasurementEnsemble") -> bool:
        """Bit-level equality of model, rows and magnitudes."""
        return (
            self.model == other.model
            and self.rows.shape == other.rows.shape
            and self.rows.tobytes() == other.rows.tobytes()
            and self.magnitudes.tobytes() == other.magnitudes.tobytes()
        )


@dataclass(frozen=True)
class PhaseAlignment:
    phi: float
    h: np.ndarray
    dist: float


def _check_dims(n: int, m: int):
    if int(n) < 1 or int(m) < 1:
        raise DimensionError(f"n and m must be positive, got n={n}, m={m}")


def random_signal(n: int, seed: int, norm: float = 1.0) -> np.ndarray:
    """Standard complex Gaussian direction scaled to the given norm."""
    _check_dims(n, 1)
    g = _rng.complex_normal(_rng.stream(seed, _rng.SIGNAL), n)
    return g * (norm / np.linalg.norm(g))


def random_real_signal(n: int, seed: int, norm: float = 1.0) -> np.ndarray:
    _check_dims(n, 1)
    g = _rng.stream(seed, _rng.SIGNAL).standard_normal(n)
    return (g * (norm / np.linalg.norm(g))).astype(np.complex128)


def gen_gaussian_ensemble(n: int, m: int, x, seed: int) -> MeasurementEnsemble:
    """Draw ``m`` i.i.d. standard complex Gaussian sensing vectors and measure ``x``.

    Rows are generated in blocks of :data:`phasegeo.rng.ROW_BLOCK`, block ``j``
    from its own child stream, so the result does not depend on scheduling.
    """
    _check_dims(n, m)
    x = as_signal(x, "x", n)
    if np.linalg.norm(x) == 0:
        raise DataError("x must be nonzero")
    n, m = int(n), int(m)
    rows = np.empty((m, n), dtype=np.complex128)
    for j, start in enumerate(range(0, m, _rng.ROW_BLOCK)):
        stop = min(start + _rng.ROW_BLOCK, m)
        a = _rng.complex_normal(_rng.stream(seed, _rng.ENSEMBLE, j), (stop - start, n))
        rows[start:stop] = a.conj()
    return MeasurementEnsemble(GAUSSIAN, rows, np.abs(rows @ x), seed)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT matrix ``D`` with ``D @ v == dct(v, norm='ortho')``."""
    return dct(np.eye(n), type=2, norm="ortho", axis=0)


def draw_masks(n: int, num_masks: int, seed: int) -> np.ndarray:
    """Masks with i.i.d. entries: +1 and -1 w.p. 1/4 each, 0 w.p. 1/2."""
    masks = np.empty((num_masks, n))
    for j in range(num_masks):
        masks[j] = _rng.stream(seed, _rng.MASK, j).choice(
            np.array([1.0, -1.0, 0.0]), size=n, p=[0.25, 0.25, 0.5]
        )
    return masks


def gen_masked_dct_ensemble(n: int, num_masks: int, x, seed: int, masks=None) -> MeasurementEnsemble:
    """Real masked-DCT model: row ``j*n + t`` is DCT row ``t`` times mask ``j``.

    ``masks`` may be given explicitly as a ``(num_masks, n)`` array; otherwise
    they are drawn with :func:`draw_masks`.
    """
    _check_dims(n, num_masks)
    x = as_signal(x, "x", n)
    if np.any(x.imag != 0):
        raise ModelMismatchError("masked-dct-real requires a real-valued signal")
    if masks is None:
        masks = draw_masks(n, num_masks, seed)
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape != (num_masks, n):
        raise DimensionError(f"masks must have shape {(num_masks, n)}, got {masks.shape}")
    d = dct_matrix(n)
    rows = (masks[:, None, :] * d[None, :, :]).reshape(num_masks * n, n)
    rows = rows.astype(np.complex128)
    return MeasurementEnsemble(MASKED_DCT, rows, np.abs(rows @ x), seed)


def align_phase(z, x) -> PhaseAlignment:
    """Closest point of the circle ``{x e^{i phi}}`` to ``z``.

    ``phi = arg(x^* z)``; when ``x^* z == 0`` every phase is optimal and 0 is
    returned.
    """
    x = as_signal(x, "x")
    z = as_signal(z, "z", x.size)
    if np.linalg.norm(x) == 0:
        raise DataError("x must be nonzero")
    ip = np.vdot(x, z)
    phi = float(np.angle(ip)) % (2 * np.pi) if ip != 0 else 0.0
    h = z - x * np.exp(1j * phi)
    return PhaseAlignment(phi, h, float(np.linalg.norm(h)))


def relative_error(z, x) -> float:
    """``dist(z, X) / ||x||``."""
    return align_phase(z, x).dist / float(np.linalg.norm(x))


def estimate_norm_and_radius(ensemble: MeasurementEnsemble) -> tuple[float, float]:
    """Return ``(sqrt(mean y^2), 3 sqrt(mean y^2))``; ``(0, 0)`` signals a degenerate instance."""
    est = float(np.sqrt(np.mean(ensemble.magnitudes_sq)))
    return est, 3.0 * est


def guard_radius(ensemble: MeasurementEnsemble) -> float:
    """Radius ``3 sqrt(n log m) R0`` of the ball containing the initial sublevel set."""
    _, r0 = estimate_norm_and_radius(ensemble)
    return 3.0 * np.sqrt(ensemble.n * np.log(max(ensemble.m, 2))) * r0


def random_ball_init(n: int, R0: float, seed: int, index: int = 0) -> np.ndarray:
    """Uniform draw from the complex ball of radius ``R0`` (a real 2n-ball)."""
    if not R0 > 0:
        raise DataError(f"R0 must be positive, got {R0}")
    _check_dims(n, 1)
    g = _rng.stream(seed, _rng.INIT, index)
    u = g.standard_normal(2 * n)
    u /= np.linalg.norm(u)
    radius = R0 * g.random() ** (1.0 / (2 * n))
    return radius * (u[:n] + 1j * u[n:])


# --- binary serialization ---------------------------------------------------


def _write_blob(path, header: dict, payload: list[np.ndarray]):
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hdr)))
        fh.write(hdr)
        for arr in payload:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise DataError(f"{path}: not a phasegeo binary file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != _FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {header.get('version')}")
    return header, raw[8 + hlen :]


def save_ensemble(ensemble: MeasurementEnsemble, path) -> None:
    """Write the ensemble; layout is described in docs/FORMATS.md."""
    header = {
        "kind": "ensemble",
        "version": _FORMAT_VERSION,
        "model": ensemble.model,
        "n": ensemble.n,
        "m": ensemble.m,
        "seed": ensemble.seed,
    }
    inter = np.empty((ensemble.m, ensemble.n, 2))
    inter[..., 0] = ensemble.rows.real
    inter[..., 1] = ensemble.rows.imag
    _write_blob(path, header, [inter, ensemble.magnitudes])


def load_ensemble(path) -> MeasurementEnsemble:
    header, body = _read_blob(path)
    if header.get("kind") != "ensemble":
        raise DataError(f"{path}: expected an ensemble, found {header.get('kind')!r}")
    m, n = int(header["m"]), int(header["n"])
    data = np.frombuffer(body, dtype="<f8")
    if data.size != 2 * m * n + m:
        raise DataError(f"{path}: payload size {data.size} does not match m={m}, n={n}")
    rows = data[: 2 * m * n].view("<c16").astype(np.complex128).reshape(m, n).copy()
    return MeasurementEnsemble(header["model"], rows, data[2 * m * n :].copy(), header["seed"])


def save_matrix(mat, path, meta: dict | None = None) -> None:
    """Write a real or complex matrix with the same header/payload scheme."""
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise DimensionError("save_matrix expects a 2-D array")
    is_complex = np.iscomplexobj(mat)
    header = {
        "kind": "matrix",
        "version": _FORMAT_VERSION,
        "rows": mat.shape[0],
        "cols": mat.shape[1],
        "complex": bool(is_complex),
        "meta": meta or {},
    }
    if is_complex:
        inter = np.stack([mat.real, mat.imag], axis=-1)
        _write_blob(path, header, [inter])
    else:
        _write_blob(path, header, [mat.astype(np.float64)])


def load_matrix(path) -> np.ndarray:
    header, body = _read_blob(path)
    if header.get("kind") != "matrix":
        raise DataError(f"{path}: expected a matrix, found {header.get('kind')!r}")
    r, c = int(header["rows"]), int(header["cols"])
    data = np.frombuffer(body, dtype="<f8")
    if header["complex"]:
        return data.view("<c16").astype(np.complex128).reshape(r, c).copy()
    return data.reshape(r, c).copy()


def save_signal(x, path, meta: dict | None = None) -> None:
    """Write a signal as an ``n x 1`` complex matrix."""
    x = as_signal(x, "x")
    save_matrix(x.reshape(-1, 1).astype(np.complex128), path, {"role": "signal", **(meta or {})})


def load_signal(path) -> np.ndarray:
    mat = load_matrix(path)
    if mat.ndim != 2 or mat.shape[1] != 1:
        raise DataError(f"{path}: expected an n x 1 signal, found shape {mat.shape}")
    return np.asarray(mat[:, 0], dtype=np.complex128)
