"""Time the compiled simulation recursions against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--N 100] [--T 2000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from fcnar._kernels import _fallback
from fcnar.simulate import _csr_arrays, banded_weight_matrix

try:
    from fcnar._kernels import _core
except ImportError:
    _core = None


def network_case(N, T, q, rng):
    A = np.ascontiguousarray(rng.uniform(-0.2, 0.2, (q, N, T)))
    B = np.ascontiguousarray(rng.uniform(-0.2, 0.2, (q, N, T)))
    X = rng.normal(size=(N, T))
    w = _csr_arrays(banded_weight_matrix(N, 2).W)

    def call(mod):
        return lambda: mod.network_recursion(A, B, *w, X.copy(), q)
    return call


def spline_case(N, T, q, rng, order=4, K=10):
    P = order + K
    # intercepts carry the dynamics; tiny higher-order terms keep the run finite
    ca = rng.uniform(-1e-4, 1e-4, (q, N, P))
    cb = rng.uniform(-1e-4, 1e-4, (q, N, P))
    ca[..., 0] = rng.uniform(-0.3, 0.3, (q, N))
    cb[..., 0] = rng.uniform(-0.3, 0.3, (q, N))
    ca, cb = np.ascontiguousarray(ca), np.ascontiguousarray(cb)
    knots = np.ascontiguousarray(np.tile(np.linspace(-2, 2, K), (N, 1)))
    X = rng.normal(size=(N, T))
    w = _csr_arrays(banded_weight_matrix(N, 2).W)

    def call(mod):
        return lambda: mod.spline_recursion(ca, cb, knots, order, 1, *w, X.copy(),
                                            np.full((N, T), np.nan), q)
    return call


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--q", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled kernels are not built; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"N={args.N} T={args.T} q={args.q}, best of {args.repeat}")
    print(f"{'kernel':<20}{'compiled (s)':>14}{'fallback (s)':>14}{'speed-up':>10}")
    for name, case in (("network_recursion", network_case), ("spline_recursion", spline_case)):
        call = case(args.N, args.T, args.q, rng)
        for mod in (_fallback, _core):
            if mod is not None and call(mod)() != -1:
                raise SystemExit(f"{name}: benchmark recursion diverged; pick smaller coefficients")
        slow = min(timeit.repeat(call(_fallback), number=1, repeat=args.repeat))
        if _core is None:
            print(f"{name:<20}{'-':>14}{slow:>14.4f}{'-':>10}")
            continue
        fast = min(timeit.repeat(call(_core), number=1, repeat=args.repeat))
        print(f"{name:<20}{fast:>14.4f}{slow:>14.4f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
