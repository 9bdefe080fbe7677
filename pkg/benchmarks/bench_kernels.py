"""Time the numba and numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel is warmed up once (numba compiles on first call) and then timed
with ``timeit``; the best of ``--repeat`` runs is reported. The last row times
one training epoch of the default TCN in two subprocesses, one per backend,
since the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from doforecast import kernels

EPOCH_SNIPPET = """
import time
from doforecast.data import make_windows, synth_series
from doforecast.models import build_model
from doforecast.training import TrainConfig, scaler_fit, train
s = synth_series("composite", 3000, seed=0)
ds = make_windows(scaler_fit(s).apply(s.values), 10, 10)
m = build_model("tcn", 10, 10, seed=0)
train(m, ds, TrainConfig(epochs=1))  # warm-up and jit
t = time.perf_counter()
train(m, ds, TrainConfig(epochs=2))
print((time.perf_counter() - t) / 2)
"""


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=128)
    args = ap.parse_args()
    if not kernels.NUMBA_AVAILABLE:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    b, steps, cin, cout, k, d = args.batch, 10, 4, 4, 3, 8
    xpad = rng.normal(size=(b, steps + d * (k - 1), cin))
    w = rng.normal(size=(k, cin, cout))
    bias = rng.normal(size=cout)
    dy = rng.normal(size=(b, steps, cout))
    xp = rng.normal(size=(b, 10, 16))
    _, arg = kernels.maxpool_fwd_numpy(xp, 2)
    dp = rng.normal(size=(b, 5, 16))

    cases = [
        ("conv1d forward", lambda: kernels.conv1d_fwd_numpy(xpad, w, bias, d, steps),
         lambda: kernels.conv1d_fwd_numba(xpad, w, bias, d, steps)),
        ("conv1d backward", lambda: kernels.conv1d_bwd_numpy(xpad, w, dy, d),
         lambda: kernels.conv1d_bwd_numba(xpad, w, dy, d)),
        ("maxpool forward", lambda: kernels.maxpool_fwd_numpy(xp, 2),
         lambda: kernels.maxpool_fwd_numba(xp, 2)),
        ("maxpool backward", lambda: kernels.maxpool_bwd_numpy(dp, arg, 2, 10),
         lambda: kernels.maxpool_bwd_numba(dp, arg, 2, 10)),
    ]
    print(f"{'kernel':<22}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}")
    for name, f_np, f_nb in cases:
        t_np, t_nb = best(f_np, args.repeat), best(f_nb, args.repeat)
        print(f"{name:<22}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.2f}")

    times = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, DOFORECAST_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, check=True,
                             capture_output=True, text=True)
        times[label] = float(out.stdout.strip())
    print(f"{'tcn epoch (3k pts)':<22}{times['numpy'] * 1e6:>12.0f}{times['numba'] * 1e6:>12.0f}"
          f"{times['numpy'] / times['numba']:>9.2f}")


if __name__ == "__main__":
    main()
