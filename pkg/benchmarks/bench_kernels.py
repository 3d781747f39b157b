"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both implementations directly. The certify loop runs
once per backend in a subprocess, since the backend is fixed at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

from smoothcert import _pykernels, kernels
from smoothcert.numerics import clopper_pearson_lower

CERTIFY_SNIPPET = """
import time
import numpy as np
from smoothcert import kernels
from smoothcert.classifier import Classifier
from smoothcert.numerics import FeedForwardNet, Layer
from smoothcert.smoothing import CertifyParams, SmoothedPipeline, certify
clf = Classifier(FeedForwardNet([Layer([[-1.0], [1.0]], [0.0, 0.0])], 1))
pipe = SmoothedPipeline(clf, 1.0)
start = time.perf_counter()
for run in range(200):
    certify(pipe, np.array([0.5]), CertifyParams(n0=100, n=1000, seed=run))
print(kernels.BACKEND, time.perf_counter() - start)
"""


def best(stmt, repeat, number):
    return min(timeit.repeat(stmt, repeat=repeat, number=number)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    if kernels.BACKEND != "cython":
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    compiled = kernels._impl
    rows = []
    for name, impl in (("cython", compiled), ("python", _pykernels)):
        g = best(lambda: kernels.gaussian_rows(1, 2, range(1000), 144, impl=impl), args.repeat, 5)
        t = best(lambda: kernels.binom_upper_tail(7000, 10_000, 0.69, impl=impl), args.repeat, 50)
        rows.append((name, g, t))
    cp = best(lambda: clopper_pearson_lower(9970, 10_000, 0.001), args.repeat, 5)

    print(f"{'backend':<8} {'gaussian 1000x144':>18} {'binom tail n=1e4':>17}")
    for name, g, t in rows:
        print(f"{name:<8} {g * 1e3:15.3f} ms {t * 1e6:14.1f} us")
    print(f"speedup  {rows[1][1] / rows[0][1]:16.1f}x {rows[1][2] / rows[0][2]:16.1f}x")
    print(f"clopper_pearson_lower(9970, 10000) on {kernels.BACKEND}: {cp * 1e3:.2f} ms")

    print("\ncertify loop, 200 runs of n0=100, n=1000 on a 1-D pipeline:")
    for pure in ("0", "1"):
        env = {**os.environ, "SMOOTHCERT_PURE": pure}
        out = subprocess.run([sys.executable, "-c", CERTIFY_SNIPPET], env=env, capture_output=True, text=True,
                             check=True).stdout.split()
        print(f"  {out[0]:<8} {float(out[1]):.2f} s")


if __name__ == "__main__":
    main()
