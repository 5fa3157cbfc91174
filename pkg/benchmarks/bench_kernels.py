"""Compare the numpy and numba render kernels on the same image.

    python benchmarks/bench_kernels.py [--size 64] [--samples 64] [--repeats 3]
"""

import argparse
import time

import numpy as np

from relit.kernels import numba_supported
from relit.render import RenderOptions, orbit_camera, render_image
from relit.scene_io import SyntheticSceneSpec, generate_synthetic_scene
from relit.sh import directional_light


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--samples", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    spec = SyntheticSceneSpec(kind="analytic-sphere", resolution=128, channels=8, n_features=4)
    field = generate_synthetic_scene(spec)
    cam = orbit_camera(width=args.size, distance=2.7)
    env = directional_light((0.3, 0.5, 1.0), ambient=0.2)
    rays = args.size * args.size
    results = {}
    backends = ["numpy"] + (["numba"] if numba_supported(field) else [])
    for backend in backends:
        opt = RenderOptions(samples=args.samples, backend=backend)
        if backend == "numba":
            render_image(field, env, orbit_camera(width=4), opt)  # compile outside the timing
        secs, out = best_time(lambda: render_image(field, env, cam, opt), args.repeats)
        results[backend] = out
        rate = rays * args.samples / secs / 1e6
        print(f"{backend:>6}: {secs:8.3f} s  ({rate:6.2f} M samples/s, {rays} rays x {args.samples} samples)")
    if len(results) == 2:
        diff = float(np.max(np.abs(results["numpy"].color - results["numba"].color)))
        print(f"max |numpy - numba| color difference: {diff:.2e}")
    else:
        print("numba unavailable; only the numpy kernel was timed")


if __name__ == "__main__":
    main()
