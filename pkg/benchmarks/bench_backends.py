"""Compare the numba and numpy backends on the detector hot loops.

Usage: python3 benchmarks/bench_backends.py [--size 256] [--repeat 3]
"""
import argparse
import time

import numpy as np

from sogdd import kernels as K
from sogdd._accel import HAVE_NUMBA
from sogdd.detector import DetectorConfig
from sogdd.filterbank import build_bank


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (args.size, args.size))
    cfg = DetectorConfig()
    bank = build_bank(cfg.sigma, cfg.K)
    padded = np.pad(img, bank.radius, mode="edge")
    taps = bank.stacked()
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])

    results = {}
    for be in backends:
        # warm-up compiles the numba kernels
        resp = K.convolve_stack(padded, taps, True, be)
        m = K.measure_map(resp, 3, 3, cfg.eps, "det", be)
        K.local_maxima(m, 1, 9, cfg.threshold, be)
        t_conv, resp = best_of(lambda: K.convolve_stack(padded, taps, True, be), args.repeat)
        t_det, m = best_of(lambda: K.measure_map(resp, 3, 3, cfg.eps, "det", be), args.repeat)
        t_eig, _ = best_of(lambda: K.measure_map(resp, 3, 3, cfg.eps, "eigen", be), args.repeat)
        t_nms, keep = best_of(lambda: K.local_maxima(m, 1, 9, cfg.threshold, be), args.repeat)
        results[be] = (t_conv, t_det, t_eig, t_nms, resp, m, keep)

    print(f"image {args.size}x{args.size}, K={cfg.K}, radius {bank.radius}, best of {args.repeat}")
    print(f"{'stage':<14}" + "".join(f"{be:>12}" for be in backends))
    for i, stage in enumerate(["convolution", "measure det", "measure eigen", "nms"]):
        print(f"{stage:<14}" + "".join(f"{results[be][i]:>11.4f}s" for be in backends))
    if len(backends) == 2:
        same = all(np.array_equal(results["numpy"][j], results["numba"][j]) for j in (4, 5, 6))
        print(f"outputs bit-identical across backends: {same}")


if __name__ == "__main__":
    main()
