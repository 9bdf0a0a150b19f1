"""Time the compiled and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--n 128] [--ratios 5,10,40] [--repeat 7]

Prints one line per (kernel, m) with the best time of each backend and the
speedup.  Inputs are checked for agreement before timing.
"""

import argparse
import math
import timeit

import numpy as np

from phasegeo import core, kernels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--ratios", default="5,10,40")
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        print("compiled backend not available; rebuild with `pip install -e . --no-build-isolation`")
        return 1
    c, p = kernels.BACKENDS["cython"], kernels.BACKENDS["numpy"]
    n = args.n
    g = np.random.default_rng(0)
    print(f"{'kernel':<16}{'m':>8}{'cython [ms]':>14}{'numpy [ms]':>14}{'speedup':>10}")
    for ratio in (float(r) for r in args.ratios.split(",")):
        m = int(math.ceil(ratio * n * math.log(n)))
        x = core.random_signal(n, 1)
        ens = core.gen_gaussian_ensemble(n, m, x, 1)
        z = x + 0.1 * (g.standard_normal(n) + 1j * g.standard_normal(n))
        d = g.standard_normal(n) + 1j * g.standard_normal(n)
        calls = {
            "objective": (ens.rows, ens.magnitudes_sq, z),
            "objective_grad": (ens.rows, ens.magnitudes_sq, z),
            "hessian_form": (ens.rows, ens.magnitudes_sq, z, d),
        }
        for name, a in calls.items():
            fc, fp = getattr(c, name), getattr(p, name)
            rc, rp = fc(*a), fp(*a)
            if name == "objective_grad":
                assert np.allclose(rc[1], rp[1], rtol=1e-10, atol=1e-14)
            else:
                assert math.isclose(rc, rp, rel_tol=1e-10)
            number = max(1, int(2e5 // m))
            tc = min(timeit.repeat(lambda: fc(*a), number=number, repeat=args.repeat)) / number
            tp = min(timeit.repeat(lambda: fp(*a), number=number, repeat=args.repeat)) / number
            print(f"{name:<16}{m:>8}{1e3 * tc:>14.3f}{1e3 * tp:>14.3f}{tp / tc:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
