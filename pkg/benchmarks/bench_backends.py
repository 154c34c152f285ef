"""Compare the numba kernels with the pure-numpy fallback.

Both flavours are importable in one process regardless of NDGKIT_BACKEND,
so this times them side by side on the same fields.

    python benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from ndgkit import EquationModel, Mesh, RHSOperator, init_euler_subsonic, init_multisine
from ndgkit import kernels

CASES = [
    ("advection 1D order 8", 1, (512,), 8, "advection"),
    ("advection 2D order 4", 2, (128, 128), 4, "advection"),
    ("advection 2D order 8", 2, (64, 64), 8, "advection"),
    ("euler 2D order 4", 2, (96, 96), 4, "euler"),
    ("euler 3D order 4", 3, (12, 12, 12), 4, "euler"),
]


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"{'case':24s} {'dof':>9s} {'numba ns/dof':>13s} {'numpy ns/dof':>13s} {'speedup':>8s} {'max diff':>9s}")
    for label, dim, cells, order, eq in CASES:
        mesh = Mesh(dim, cells, order)
        if eq == "advection":
            model = EquationModel.advection((1.0, 0.5, 0.25)[:dim])
            u = init_multisine(mesh, model, 8, seed=3)
        else:
            model = EquationModel.euler(dim)
            u = init_euler_subsonic(mesh, model, seed=3)
        dof = mesh.dof(model.n_var)
        outs = {}
        times = {}
        for backend in ("numba", "numpy"):
            op = RHSOperator(mesh, model, backend=backend)
            out = np.empty_like(u)
            times[backend] = best_of(lambda: op(u, out), args.repeat)
            outs[backend] = out.copy()
        diff = np.max(np.abs(outs["numba"] - outs["numpy"]))
        print(f"{label:24s} {dof:9d} {times['numba'] / dof * 1e9:13.1f} "
              f"{times['numpy'] / dof * 1e9:13.1f} {times['numpy'] / times['numba']:8.2f} {diff:9.1e}")

    y = np.random.default_rng(0).random(1 << 20)
    x = np.random.default_rng(1).random(1 << 20)
    tn = best_of(lambda: kernels.axpy_numba(y, 1e-3, x), args.repeat)
    tp = best_of(lambda: kernels.axpy_numpy(y, 1e-3, x), args.repeat)
    print(f"{'axpy 2^20':24s} {y.size:9d} {tn / y.size * 1e9:13.2f} {tp / y.size * 1e9:13.2f} {tp / tn:8.2f}")


if __name__ == "__main__":
    main()
