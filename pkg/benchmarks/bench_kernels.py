"""Time the numba and pure-numpy kernel backends against each other.

Micro-benchmarks call both kernel namespaces directly in this process; the
end-to-end figure runs the toy trend sweep once per backend in a subprocess
(``DIVDECODE_NO_NUMBA`` selects the backend at import time).

    python3 benchmarks/bench_kernels.py [--repeat 2000] [--skip-sweep]
"""
import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from divdecode._kernels import numba_kernels, numpy_kernels

ROOT = Path(__file__).resolve().parent.parent


def best_of(fn, repeat, rounds=3):
    best = float("inf")
    for _ in range(rounds):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def cases(rng):
    z = rng.normal(size=64)
    p = numpy_kernels.softmax_temperature(z, 1.0)
    X = rng.normal(size=(200, 32))
    C = rng.normal(size=(10, 32))
    labels = rng.integers(0, 10, size=200)
    return {
        "log_softmax V=64": lambda k: k.log_softmax(z),
        "softmax_temperature V=64": lambda k: k.softmax_temperature(z, 0.7),
        "top_s_filter V=64 s=10": lambda k: k.top_s_filter(p, 10),
        "sample_step V=64 s=10": lambda k: k.sample_step(z, 0.7, 10, 0.37),
        "assign 200x32, k=10": lambda k: k.assign(X, C),
        "centroids 200x32, k=10": lambda k: k.centroids(X, labels, 10),
    }


def sweep_time(no_numba):
    env = dict(os.environ, DIVDECODE_NO_NUMBA="1" if no_numba else "0")
    code = ("import time; from divdecode.harness import load_config, run_experiment; "
            f"cfg = load_config({str(ROOT / 'configs' / 'toy_trend.ini')!r}); "
            "run_experiment(cfg, write=False); t0 = time.perf_counter(); "
            "run_experiment(cfg, write=False); print(time.perf_counter() - t0)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--skip-sweep", action="store_true")
    args = ap.parse_args(argv)
    if numba_kernels is None:
        sys.exit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        fn(numba_kernels)  # compile outside the timed region
        t_np = best_of(lambda: fn(numpy_kernels), args.repeat)
        t_nb = best_of(lambda: fn(numba_kernels), args.repeat)
        print(f"{name:28s} {t_np * 1e6:10.2f} {t_nb * 1e6:10.2f} {t_np / t_nb:8.2f}")
    if not args.skip_sweep:
        t_np = sweep_time(True)
        t_nb = sweep_time(False)
        print(f"{'toy_trend sweep (s)':28s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
