"""Compare the numba and numpy RANSAC kernels on identical synthetic problems.

    python benchmarks/bench_backends.py [--repeats 5] [--outlier-ratio 0.8]

Both backends draw the same hypotheses, so counters and poses must agree;
the script checks that before printing timings.
"""
import argparse
import time

import numpy as np

from gdcransac.ransac import RansacConfig, estimate, warmup
from gdcransac.synthetic import SceneConfig, generate


def run(backend, scenes, cfgs):
    reports = []
    t0 = time.perf_counter()
    for sc, cfg in zip(scenes, cfgs):
        reports.append(estimate(sc.matches, cfg, backend=backend))
    return time.perf_counter() - t0, reports


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--outlier-ratio", type=float, default=0.8)
    ap.add_argument("--strategies", nargs="+", default=["classic", "gdc-filtered", "gdc-doubly-nested"])
    args = ap.parse_args(argv)

    scenes = [generate(SceneConfig(outlier_ratio=args.outlier_ratio, pixel_noise_sigma=0.5,
                                   depth_noise_sigma=0.005, seed=s)) for s in range(args.scenes)]
    t0 = time.perf_counter()
    warmup("numba")
    print(f"numba warmup (compile or cache load): {time.perf_counter() - t0:.2f} s")

    print(f"{'strategy':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  agree")
    for strat in args.strategies:
        cfgs = [RansacConfig(strategy=strat, seed=k) for k in range(args.scenes)]
        best = {}
        reps = {}
        for backend in ("numba", "numpy"):
            times = []
            for _ in range(args.repeats):
                dt, reps[backend] = run(backend, scenes, cfgs)
                times.append(dt)
            best[backend] = min(times) / args.scenes * 1e3
        agree = all(a.hypotheses_formed == b.hypotheses_formed
                    and a.hypotheses_evaluated == b.hypotheses_evaluated
                    and np.array_equal(a.inlier_mask, b.inlier_mask)
                    and np.allclose(a.pose.rotation, b.pose.rotation, atol=1e-12)
                    for a, b in zip(reps["numba"], reps["numpy"]))
        print(f"{strat:<20}{best['numba']:>12.3f}{best['numpy']:>12.3f}"
              f"{best['numpy'] / best['numba']:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
