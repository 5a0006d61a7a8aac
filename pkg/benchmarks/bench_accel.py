"""Compare the numba kernels against the numpy fallbacks.

    python benchmarks/bench_accel.py [--repeats N]

Times each inner-loop kernel on synthetic inputs of training-suite size,
then times one end-to-end training run per backend in a subprocess (the
backend is chosen at import time through ``GPSL_DISABLE_NUMBA``).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gpsl import _accel

TRAIN = """
import time
from gpsl.corpus import synth_split
from gpsl.inference import TrainOptions, train
from gpsl.evaluation import evaluate
from gpsl.kernel import KernelSpec
from gpsl.model import GPSL2
tr, te = synth_split(3, 10, 40, 20, seed=0)
train(tr, GPSL2, KernelSpec("linear", 1.0), TrainOptions(max_outer=1, learn_hypers=False))
t0 = time.perf_counter()
m = train(tr, GPSL2, KernelSpec("linear", 1.0), TrainOptions(learn_hypers=False))
evaluate(m, te)
print(time.perf_counter() - t0)
"""


def kernel_cases(rng):
    NL, J, R, L = 1000, 3, 2, 10
    u = rng.normal(size=(NL, J))
    G = rng.normal(size=(R, J, J))
    dep = rng.integers(-1, J, size=(NL, R))
    y = rng.integers(0, J, size=NL)
    sig = rng.dirichlet(np.ones(J), size=NL)
    us = rng.normal(size=(L, J))
    offs = np.array([-1, 1], dtype=np.int64)
    E = rng.normal(size=(J, J))
    return {
        "token_scores": lambda b: getattr(_accel, f"token_scores_{b}")(u, dep, G),
        "pair_moments": lambda b: getattr(_accel, f"pair_moments_{b}")(dep[:, 0], y, sig, J),
        "rns_iterate": lambda b: getattr(_accel, f"rns_iterate_{b}")(us, G * 0.1, offs, 1e-6, 100),
        "viterbi": lambda b: getattr(_accel, f"viterbi_{b}")(us, E),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        sys.exit("numba is not installed; nothing to compare")
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<14}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, call in cases.items():
        call("numba")  # compile outside the timing
        t = {b: min(timeit.repeat(lambda: call(b), number=args.repeats, repeat=3)) / args.repeats * 1e6
             for b in ("numpy", "numba")}
        print(f"{name:<14}{t['numpy']:>12.1f}{t['numba']:>12.1f}{t['numpy'] / t['numba']:>10.1f}")

    wall = {}
    for backend, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, GPSL_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN], env=env, check=True, capture_output=True, text=True)
        wall[backend] = float(out.stdout.split()[-1])
    print(f"\ntrain+eval GPSL2, NL=400: numpy {wall['numpy']:.2f}s, numba {wall['numba']:.2f}s, "
          f"speedup {wall['numpy'] / wall['numba']:.2f}")


if __name__ == "__main__":
    main()
