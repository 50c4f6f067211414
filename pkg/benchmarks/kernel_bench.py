"""Compare the compiled kernels against the pure-NumPy fallback.

Times the fan-beam projector pair, the FBP backprojection, the 3x3
unfold, and a full denoiser training step on both backends.  Run with
``python benchmarks/kernel_bench.py [--size 128] [--angles 360]``.
"""

import argparse
import time

import numpy as np

from tomoforge import backend
from tomoforge._kernels_py import BACKEND_NAME as _PY_NAME  # noqa: F401
from tomoforge.geometry import FanBeamGeometry
from tomoforge.phantom import shepp_logan
from tomoforge.projector import backproject, project


def timeit(fn, repeats=5):
    fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_ray_kernels(geom, image, results):
    sino = project(image, geom)
    for k in backend.available_backends():
        name = k.BACKEND_NAME
        results.setdefault("fan_project", {})[name] = timeit(
            lambda: project(image, geom, kernels=k))
        results.setdefault("fan_backproject", {})[name] = timeit(
            lambda: backproject(sino, geom, kernels=k))
        from tomoforge.fbp import FilterSpec, fbp_reconstruct
        results.setdefault("fbp_reconstruct", {})[name] = timeit(
            lambda: fbp_reconstruct(sino, geom, FilterSpec(), kernels=k))


def bench_unfold(image_size, results):
    x = np.random.default_rng(0).standard_normal(
        (1, 64, image_size, image_size)).astype(np.float32)
    x = np.ascontiguousarray(x)
    for k in backend.available_backends():
        results.setdefault("unfold3x3 (64ch)", {})[k.BACKEND_NAME] = timeit(
            lambda: k.unfold3x3(x))


def bench_training_step(geom, image, results):
    """One forward+backward of the 30-layer denoiser (BLAS-bound, shared)."""
    from tomoforge.nn import build_denoiser
    net = build_denoiser(seed=0)
    x = image.astype(np.float32)[None, None]
    net.forward(x)

    def step():
        out = net.forward(x)
        net.backward(out)

    results["denoiser fwd+bwd (both backends use BLAS)"] = {
        backend.backend_name(): timeit(step, repeats=3)}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--angles", type=int, default=360)
    parser.add_argument("--skip-network", action="store_true")
    args = parser.parse_args()

    geom = FanBeamGeometry.create(args.angles, 4 * args.size, 500.0, 500.0,
                                  (args.size, args.size), 0.5)
    image = shepp_logan(args.size)
    results = {}
    bench_ray_kernels(geom, image, results)
    bench_unfold(args.size, results)
    if not args.skip_network:
        bench_training_step(geom, image, results)

    names = [k.BACKEND_NAME for k in backend.available_backends()]
    print(f"\nkernel timings (s), image {args.size}^2, {args.angles} angles, "
          f"{4 * args.size} bins; active backend: {backend.backend_name()}")
    header = f"{'kernel':44s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for op, by_backend in results.items():
        row = f"{op:44s}"
        for n in names:
            row += f"{by_backend[n]:12.4f}" if n in by_backend else f"{'-':>12s}"
        if len(by_backend) == 2:
            ratio = by_backend["python"] / by_backend["compiled"]
            row += f"{ratio:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
