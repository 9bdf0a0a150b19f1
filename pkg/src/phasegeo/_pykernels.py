"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` exactly in meaning; the compiled module is
preferred when it is importable.
"""

import numpy as np


def objective(rows, y2, z):
    u = rows @ z
    r = u.real * u.real + u.imag * u.imag - y2
    return 0.5 * np.sum(r * r) / rows.shape[0]


def objective_grad(rows, y2, z):
    m = rows.shape[0]
    u = rows @ z
    r = u.real * u.real + u.imag * u.imag - y2
    f = 0.5 * np.sum(r * r) / m
    # sum_k r_k u_k conj(rows[k, :])
    grad = np.conj(rows.T @ np.conj(r * u)) / m
    return f, grad


def hessian_form(rows, y2, z, delta):
    u = rows @ z
    v = rows @ delta
    au2 = u.real * u.real + u.imag * u.imag
    av2 = v.real * v.real + v.imag * v.imag
    cross = np.conj(u) * v
    terms = (2.0 * au2 - y2) * av2 + (cross.real * cross.real - cross.imag * cross.imag)
    return 2.0 * np.sum(terms) / rows.shape[0]
