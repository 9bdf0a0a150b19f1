"""Shared test utilities (independent of the package under test)."""

import numpy as np


def crandn(g, *shape):
    """Standard complex normals drawn with a plain numpy generator."""
    return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / np.sqrt(2)


def central_diff(fun, h):
    """First and second central differences of a scalar function of t at 0."""
    fp, f0, fm = fun(h), fun(0.0), fun(-h)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


def richardson_first(fun, h):
    """Richardson-extrapolated first derivative from steps h and h/2."""
    d1 = (fun(h) - fun(-h)) / (2 * h)
    d2 = (fun(h / 2) - fun(-h / 2)) / h
    return (4 * d2 - d1) / 3, abs(d2 - d1)


def richardson_second(fun, h):
    s1 = (fun(h) - 2 * fun(0.0) + fun(-h)) / (h * h)
    s2 = (fun(h / 2) - 2 * fun(0.0) + fun(-h / 2)) / (h * h / 4)
    return (4 * s2 - s1) / 3, abs(s2 - s1)


def oracle_f(rows, y, z):
    """Direct evaluation of (1/2m) sum (y^2 - |row . z|^2)^2 with a plain loop."""
    total = 0.0
    for k in range(rows.shape[0]):
        u = complex(np.dot(rows[k], z))
        total += (y[k] ** 2 - abs(u) ** 2) ** 2
    return total / (2 * rows.shape[0])
