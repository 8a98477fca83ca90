"""Time the full-batch training kernel: numba loops versus numpy.

    python benchmarks/bench_train.py [--sizes 1,4,10,20] [--iters 2000] [--repeat 3]

Uses a synthetic OBP design matrix (482 rows, 17 columns). The numba column
is empty when numba is not installed or PARKDUR_DISABLE_NUMBA=1 is set.
"""

import argparse
import time

import numpy as np

from parkdur import _kernels as K
from parkdur import network as nn
from parkdur.dataset import fit_transform, load_synth_spec, synthesize


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="1,4,10,20")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    spec = load_synth_spec("obp")
    dm = fit_transform(synthesize(spec), spec.schema)
    X, y = np.ascontiguousarray(dm.data), dm.targets
    print(f"design {X.shape[0]}x{X.shape[1]}, {args.iters} iterations, best of {args.repeat}")
    print(f"{'size':>4} {'numba_s':>9} {'numpy_s':>9} {'speedup':>8} {'max|dW|':>9}")
    for size in (int(s) for s in args.sizes.split(",")):
        net = nn.init(X.shape[1], size, 5, 0.001, seed=1)
        call = (X, y, *net.params(), 0.001, 0.1, args.iters, 1e-12, K.SOFTMAX)
        t_np = best_of(lambda: K.np_train(*call), args.repeat)
        if K.NUMBA:
            K.nb_train(*call)  # compile or load from cache
            t_nb = best_of(lambda: K.nb_train(*call), args.repeat)
            a, b = K.nb_train(*call), K.np_train(*call)
            diff = max(float(np.abs(p - q).max()) for p, q in zip(a[:4], b[:4]))
            print(f"{size:>4} {t_nb:9.3f} {t_np:9.3f} {t_np / t_nb:8.2f} {diff:9.1e}")
        else:
            print(f"{size:>4} {'-':>9} {t_np:9.3f} {'-':>8} {'-':>9}")


if __name__ == "__main__":
    main()
