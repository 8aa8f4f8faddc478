"""Compare the compiled split-flow kernel against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--points N] [--steps S] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from whisker import _kernels_py
from whisker.flows import composition

try:
    from whisker import _kernels
except ImportError:
    _kernels = None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=256)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    z = np.column_stack([rng.random(args.points), 0.6 + 0.1 * rng.random(args.points),
                         0.05 * rng.standard_normal((args.points, 2))])
    kick, drift = composition("yoshida4")
    call = dict(eps=0.02, lam=np.log(2.0), shear=1.0, h=1.0 / args.steps, nsteps=args.steps,
                kick=kick, drift=drift)
    backends = {"numpy": _kernels_py.split_flow}
    if _kernels is not None:
        backends["cython"] = _kernels.split_flow
    else:
        print("compiled extension not available; timing the fallback only")

    ref = None
    print(f"{args.points} points, {args.steps} steps, yoshida4, best of {args.repeat}")
    for name, fn in backends.items():
        for jac in (False, True):
            out = fn(z, jac=jac, **call)
            t = min(timeit.repeat(lambda: fn(z, jac=jac, **call), number=1, repeat=args.repeat))
            print(f"  {name:<7} jac={str(jac):<5} {1e3 * t:9.2f} ms")
            if jac:
                if ref is None:
                    ref = out
                else:
                    dz = np.max(np.abs(out[0] - ref[0]))
                    dj = np.max(np.abs(out[1] - ref[1]))
                    print(f"  max difference vs numpy: map {dz:.1e}, jacobian {dj:.1e}")


if __name__ == "__main__":
    main()
