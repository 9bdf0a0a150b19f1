"""Least-squares phase retrieval objective and its Wirtinger derivatives.

For ``f(z) = (1/2m) sum_k (y_k^2 - |a_k^* z|^2)^2``:

* ``grad_z f = (1/m) sum_k (|a_k^* z|^2 - y_k^2) a_k a_k^* z``.  Only this half
  of the stacked Wirtinger gradient ``[grad_z f; conj(grad_z f)]`` is returned.
  :func:`stacked_norm` converts to the norm of the stacked vector, which is
  ``sqrt(2) * ||grad_z f||``.
* The Wirtinger Hessian is ``[[B, C], [conj(C), conj(B)]]`` with
  ``B = (1/m) sum (2|a_k^* z|^2 - y_k^2) a_k a_k^*`` and
  ``C = (1/m) sum (a_k^* z)^2 a_k a_k^T``.

Directional conventions: ``d/dt f(z + t d) = 2 Re(d^* grad_z f)`` and
``d^2/dt^2 f(z + t d) = [d; conj(d)]^* H [d; conj(d)]``, the value returned by
:func:`hessian_quadratic_form`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import MeasurementEnsemble, as_signal
from .errors import CapacityError

DENSE_CAP = 2048


@dataclass(frozen=True)
class WirtingerDerivatives:
    grad_z: np.ndarray
    hess_B: np.ndarray | None = None
    hess_C: np.ndarray | None = None

    def full_hessian(self) -> np.ndarray:
        """The 2n x 2n block matrix ``[[B, C], [conj(C), conj(B)]]``."""
        B, C = self.hess_B, self.hess_C
        return np.block([[B, C], [C.conj(), B.conj()]])

    def quadratic_form(self, delta) -> float:
        d = np.asarray(delta, dtype=np.complex128)
        q = 2.0 * np.vdot(d, self.hess_B @ d) + 2.0 * (d.conj() @ self.hess_C @ d.conj())
        return float(q.real)


def stacked_norm(grad_z) -> float:
    """Norm of ``[grad_z; conj(grad_z)]``."""
    return float(np.sqrt(2.0) * np.linalg.norm(grad_z))


def eval_f(ensemble: MeasurementEnsemble, z) -> float:
    z = as_signal(z, n=ensemble.n)
    return float(kernels.objective(ensemble.rows, ensemble.magnitudes_sq, z))


def eval_f_grad(ensemble: MeasurementEnsemble, z) -> tuple[float, np.ndarray]:
    """Objective value and ``grad_z f`` in one pass over the rows."""
    z = as_signal(z, n=ensemble.n)
    f, g = kernels.objective_grad(ensemble.rows, ensemble.magnitudes_sq, z)
    return float(f), g


def wirtinger_grad(ensemble: MeasurementEnsemble, z) -> WirtingerDerivatives:
    return WirtingerDerivatives(eval_f_grad(ensemble, z)[1])


def hessian_quadratic_form(ensemble: MeasurementEnsemble, z, delta) -> float:
    z = as_signal(z, n=ensemble.n)
    delta = as_signal(delta, "delta", ensemble.n)
    return float(kernels.hessian_form(ensemble.rows, ensemble.magnitudes_sq, z, delta))


def hessian_dense(ensemble: MeasurementEnsemble, z, cap: int = DENSE_CAP) -> WirtingerDerivatives:
    """Gradient plus the dense Hessian blocks ``B`` and ``C``.

    Raises :class:`CapacityError` when ``n > cap``; use
    :func:`hessian_quadratic_form` for large problems.
    """
    if ensemble.n > cap:
        raise CapacityError(
            f"n={ensemble.n} exceeds the dense Hessian cap {cap}; use hessian_quadratic_form instead"
        )
    z = as_signal(z, n=ensemble.n)
    rows, y2, m = ensemble.rows, ensemble.magnitudes_sq, ensemble.m
    u = rows @ z
    au2 = np.abs(u) ** 2
    # a_k = conj(rows[k]); a_k a_k^* = conj(rows[k])^T rows[k]
    a = rows.conj()
    B = (a.T * ((2.0 * au2 - y2) / m)) @ rows
    C = (a.T * (u * u / m)) @ a
    B = 0.5 * (B + B.conj().T)
    C = 0.5 * (C + C.T)
    grad = (a.T @ ((au2 - y2) * u)) / m
    return WirtingerDerivatives(grad, B, C)


# --- population (m -> infinity) objective ------------------------------------


def population_f(x, z) -> float:
    """``E f = ||x||^4 + ||z||^4 - ||x||^2 ||z||^2 - |x^* z|^2``."""
    x = as_signal(x, "x")
    z = as_signal(z, "z", x.size)
    nx2 = np.vdot(x, x).real
    nz2 = np.vdot(z, z).real
    return float(nx2**2 + nz2**2 - nx2 * nz2 - abs(np.vdot(x, z)) ** 2)


def population_grad(x, z) -> np.ndarray:
    """``grad_z E f = (2||z||^2 I - ||x||^2 I - x x^*) z``."""
    x = as_signal(x, "x")
    z = as_signal(z, "z", x.size)
    nx2 = np.vdot(x, x).real
    nz2 = np.vdot(z, z).real
    return (2.0 * nz2 - nx2) * z - x * np.vdot(x, z)


def population_hessian_form(x, z, delta) -> float:
    """``[d; conj(d)]^* (Hessian of E f) [d; conj(d)]``.

    Expands to ``4|z^* d|^2 - 2|x^* d|^2 + 2(2||z||^2 - ||x||^2)||d||^2
    + 4 Re((d^* z)^2)``.
    """
    x = as_signal(x, "x")
    z = as_signal(z, "z", x.size)
    d = as_signal(delta, "delta", x.size)
    nx2 = np.vdot(x, x).real
    nz2 = np.vdot(z, z).real
    dz = np.vdot(d, z)
    return float(
        4.0 * abs(dz) ** 2
        - 2.0 * abs(np.vdot(x, d)) ** 2
        + 2.0 * (2.0 * nz2 - nx2) * np.vdot(d, d).real
        + 4.0 * (dz * dz).real
    )


def population_real_gaussian_f(x, z) -> float:
    """Expected objective for real ``a ~ N(0, I)`` and real ``x``, ``z``.

    ``(3/2)||x||^4 + (3/2)||z||^4 - ||x||^2 ||z||^2 - 2 (x^T z)^2``, from the
    Gaussian fourth-moment identity ``E[(a^T u)^2 (a^T v)^2] = ||u||^2 ||v||^2 + 2 (u^T v)^2``.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    nx2 = x @ x
    nz2 = z @ z
    return float(1.5 * nx2**2 + 1.5 * nz2**2 - nx2 * nz2 - 2.0 * (x @ z) ** 2)
