"""Time the numba and numpy kernel backends on the pipeline's hot paths.

    python benchmarks/bench_kernels.py [--size 128] [--repeat 5]

Numba timings exclude the first (compiling) call. Each row reports the
median over ``--repeat`` runs and the largest difference between the two
backends' outputs.
"""
import argparse
import statistics
import time

import numpy as np

from detaildepth import (
    BilateralParams,
    CameraModel,
    FusionParams,
    SurfaceSpec,
    corrupt,
    generate,
    normals_from_depth,
    refine,
)
from detaildepth._backend import use_backend
from detaildepth.decompose import bilateral_base


def _time(fn, repeat):
    fn()  # compile / warm caches
    runs = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        runs.append(time.perf_counter() - t)
    return statistics.median(runs), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cam = CameraModel.orthographic(0.01)
    gt, normals = generate(SurfaceSpec("wrinkled-plane", args.size, args.size, seed=1), cam)
    noisy = corrupt(gt, "seeded-noise", 0.01, seed=1)
    cases = {
        "bilateral r=8": lambda: bilateral_base(noisy, BilateralParams(kernel_radius=8)).values,
        "plane_fit r=1": lambda: normals_from_depth(noisy, cam).normals,
        "fusion x5": lambda: refine(noisy, normals, cam, FusionParams()).values,
    }

    print(f"{args.size}x{args.size}, median of {args.repeat}")
    print(f"{'kernel':<16}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max diff':>11}")
    for name, fn in cases.items():
        use_backend("numpy")
        t_np, a = _time(fn, args.repeat)
        use_backend("numba")
        t_nb, b = _time(fn, args.repeat)
        diff = float(np.nanmax(np.abs(a - b)))
        print(f"{name:<16}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
