"""Time the numba and numpy flavours of every hot kernel, then the pipeline under each.

    python benchmarks/bench_kernels.py [--repeat 20] [--pipeline]

The pipeline comparison runs ``deepgun unmix`` in two subprocesses, one with
``DEEPGUN_DISABLE_NUMBA=1``, on a freshly synthesised 20x20 cube.
"""

import argparse
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from deepgun.kernels import NUMBA_KERNELS, NUMPY_KERNELS
from deepgun.neural import VaeModel
from deepgun.solvers.latent import PackedDecoders


def cases(rng):
    P, N, H, W, L, K = 3, 2500, 50, 50, 50, 2
    V = rng.normal(size=(P, N))
    M = rng.uniform(0.05, 0.95, size=(L, P))
    G = M.T @ M
    A = rng.dirichlet(np.ones(P), size=N).T
    Y = M @ A + 0.01 * rng.normal(size=(L, N))
    B = M.T @ Y
    c = np.ones(N)
    step = 1.0 / np.linalg.norm(G, 2)
    X = rng.normal(size=(P, H, W))
    Gn = rng.normal(size=(N, P, P))
    models = [VaeModel.initialize(L, K, rng) for _ in range(P)]
    packed = PackedDecoders.from_models(models)
    Z = rng.normal(size=(P, K))
    return {
        "project_simplex_cols": (V,),
        "fcls_cols": (G, B, c, np.full((P, N), 1.0 / P), step, 1e-10, 500),
        "grad_h": (X,),
        "grad_v": (X,),
        "grad_h_adj": (X,),
        "grad_v_adj": (X,),
        "group_shrink": (V, 0.3),
        "batched_matvec": (Gn, V),
        "latent_value_grad": (packed.params, packed.dims, packed.acts, Z, A[:, 0].copy(),
                              Y[:, 0].copy(), Z.copy(), 0.1),
    }


def best_time(fn, args, repeat):
    fn(*args)  # compile / warm up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speed-up':>9s}")
    for name, args in cases(rng).items():
        t_nb = best_time(NUMBA_KERNELS[name], args, repeat)
        t_np = best_time(NUMPY_KERNELS[name], args, repeat)
        print(f"{name:24s} {1e3 * t_nb:12.4f} {1e3 * t_np:12.4f} {t_np / t_nb:9.2f}")


def pipeline_table():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["deepgun", "synth", "--out-dir", f"{tmp}/syn", "--quiet"], check=True)
        for label, flag in (("numba", "0"), ("numpy", "1")):
            env = dict(os.environ, DEEPGUN_DISABLE_NUMBA=flag)
            t = time.perf_counter()
            subprocess.run(["deepgun", "unmix", "--cube", f"{tmp}/syn/cube.hcube",
                            "--materials", "3", "--pure-count", "10", "--threads", "1",
                            "--out-dir", f"{tmp}/{label}", "--quiet"], check=True, env=env)
            print(f"unmix 20x20 ({label}): {time.perf_counter() - t:.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--pipeline", action="store_true", help="also time a full unmix run")
    args = ap.parse_args()
    kernel_table(args.repeat)
    if args.pipeline:
        pipeline_table()
    return 0


if __name__ == "__main__":
    sys.exit(main())
