"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are checked for agreement before timing. With numba unavailable or
LRXXZ_DISABLE_NUMBA=1 only the numpy column is printed.
"""
import argparse
import time

import numpy as np

from lrxxz import kernels
from lrxxz._accel import HAVE_NUMBA
from lrxxz.mpo import ModelSpec


def best_of(fn, repeat):
    fn()  # warm-up, also triggers jit compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def random_rhos(k, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((k, 4, 4)) + 1j * rng.standard_normal((k, 4, 4))
    rho = a @ a.conj().transpose(0, 2, 1)
    return rho / np.trace(rho, axis1=1, axis2=2).real[:, None, None]


def cases():
    for n in (10, 12, 14):
        spec = ModelSpec("power_law", 0.5, 1.0, 1.0, 1.0, n)
        pi, pj, pw = spec.pairs()
        args = (n, pi.astype(np.int64), pj.astype(np.int64), pw, spec.j_xy, spec.j_z, spec.h_x, 0.0)
        yield f"xxz_coo N={n}", (lambda a=args: kernels.xxz_coo_numpy(*a)), (lambda a=args: kernels._xxz_coo_numba(*a))
    for k in (100, 10000):
        rhos = random_rhos(k)
        yield (f"concurrence k={k}", (lambda r=rhos: kernels.concurrence_batch_numpy(r)),
               (lambda r=rhos: kernels._concurrence_batch_numba(r, kernels.YY)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, np_fn, nb_fn in cases():
        t_np = best_of(np_fn, args.repeat)
        if not HAVE_NUMBA:
            print(f"{name:<22}{t_np:>12.4g}{'-':>12}{'-':>10}")
            continue
        a, b = np_fn(), nb_fn()
        for x, y in zip(a, b):
            if x.shape != y.shape or not np.allclose(np.sort(x.ravel()), np.sort(y.ravel()), atol=1e-12):
                raise SystemExit(f"{name}: numba and numpy outputs differ")
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<22}{t_np:>12.4g}{t_nb:>12.4g}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
