"""Seedable, splittable random streams.

Every random quantity in the package is drawn from a PCG64 generator whose
``SeedSequence`` is ``SeedSequence(seed, spawn_key=(purpose, index))``.  The
``purpose`` tags below are fixed, so a given ``(seed, purpose, index)`` triple
always yields the same stream regardless of how work is scheduled.

Stream assignment rule:

* measurement rows are drawn in blocks of :data:`ROW_BLOCK` rows; block ``j``
  uses ``(seed, ENSEMBLE, j)``;
* masks of the masked-DCT model use ``(seed, MASK, j)`` for mask ``j``;
* trial ``t`` of an experiment draws its initial point from ``(seed, INIT, t)``;
* the target signal of an experiment uses ``(seed, SIGNAL, 0)``;
* landscape sampling uses ``(seed, SAMPLE, j)`` for chunk ``j``;
* sub-experiments (one instance of a sweep) use :func:`derive_seed`.
"""

from __future__ import annotations

import numpy as np

SIGNAL = 1
ENSEMBLE = 2
MASK = 3
INIT = 4
SAMPLE = 5
PROBE = 6
TRS = 7

ROW_BLOCK = 4096


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Return the generator for ``(seed, purpose, index)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Draw standard complex normals, (X + iY)/sqrt(2) with X, Y ~ N(0, 1)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def derive_seed(seed: int, purpose: int, index: int = 0) -> int:
    """A 63-bit integer seed derived from ``(seed, purpose, index)``.

    Used where a whole sub-experiment (for example one instance of a sweep)
    needs its own seed rather than a single stream.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index), 0xD5))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
