"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel timings run in-process (both flavours are importable when numba is
installed). The end-to-end line runs the `image` command on the small
scenario twice, once with TDIMAGING_NO_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
import timeit
from pathlib import Path

import numpy as np

from tdimaging import _accel, _kernels
from tdimaging.coremath import sphere_mesh

ROOT = Path(__file__).resolve().parents[1]


def cases():
    rng = np.random.default_rng(0)
    Z = rng.uniform(-1, 1, (200, 3))
    Y = sphere_mesh(60.0, 2000).nodes
    hk = sphere_mesh(250.0, 20000)
    x, y = np.array([0.5, -1.0, 2.0]), np.array([-1.0, 0.3, 0.2])
    X = sphere_mesh(60.0, 1500).nodes
    V = rng.standard_normal((1500, 3, 8)) + 0j
    return {
        "green_block 200x2000 (+curl)": lambda f: f(Z, Y, 1.0, 1.0, True),
        "hk_partials 20000 nodes": lambda f: f(hk.nodes, hk.normals, hk.weights[0], x, y, 1.0, 1.0, 2),
        "offdiag_apply 1500 nodes x 8": lambda f: f(X, V, 1.0, 1.0),
    }


def flavours(name):
    base = {"green_block": "green_block", "hk_partials": "hk_partials",
            "offdiag_apply": "offdiag_apply"}[name.split()[0]]
    return getattr(_kernels, base + "_numba"), getattr(_kernels, base + "_numpy")


def end_to_end(no_numba):
    env = dict(os.environ)
    if no_numba:
        env["TDIMAGING_NO_NUMBA"] = "1"
    with tempfile.TemporaryDirectory() as out:
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "tdimaging.cli", "image", "--scenario",
                        str(ROOT / "scenarios" / "small.yaml"), "--out", out],
                       env=env, check=True, capture_output=True)
        return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not available (or TDIMAGING_NO_NUMBA is set)")
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, call in cases().items():
        fn, fp = flavours(name)
        call(fn)                                   # compile / warm cache
        tn = min(timeit.repeat(lambda: call(fn), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: call(fp), number=1, repeat=args.repeat))
        print(f"{name:34s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}")
    a, b = end_to_end(False), end_to_end(True)
    print(f"{'image small.yaml (wall, subprocess)':34s} {a:10.2f} {b:10.2f} {b / a:8.1f}")


if __name__ == "__main__":
    main()
