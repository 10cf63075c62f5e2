"""Time the compiled and pure-numpy likelihood kernels on identical inputs.

Usage: python3 benchmarks/bench_kernels.py [--records 85] [--repeat 20]
"""
import argparse
import time

import numpy as np

from fatiguelife import _kernels_py
from fatiguelife.models import ModelKind

try:
    from fatiguelife import _kernels
except ImportError:
    _kernels = None

PARAMS = {
    ModelKind.Ia: (7.38, -2.01, 35.04, 0.5628, 0.5274),
    ModelKind.Ib: (6.72, -1.57, 36.21, 0.5510, 4.55, -2.89),
    ModelKind.IIa: (6.53, -1.51, 1.58, 0.0473, 0.4888, 0.1447),
    ModelKind.IIb: (6.51, -1.47, 1.60, 0.0385, 0.4886, 0.0852),
    ModelKind.IIc: (6.43, -1.44, 1.58, 0.0408, 0.4923, 2.68, -1.97),
    ModelKind.IId: (6.49, -1.46, 1.60, 0.0366, 0.4904, 0.66, -0.94),
}


def bench(mod, kind, theta, s, u, failed, repeat):
    mod.loglik_terms(kind.code, theta, s, u, failed)  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = mod.loglik_terms(kind.code, theta, s, u, failed)
    return (time.perf_counter() - t0) / repeat, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--records", type=int, default=85)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    s = rng.uniform(36.5, 80.0, args.records)
    u = rng.uniform(4.0, 7.0, args.records)
    failed = (rng.random(args.records) > 0.15).astype(np.uint8)
    print(f"{'kind':<6}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}{'max |diff|':>13}")
    for kind, theta in PARAMS.items():
        theta = np.array(theta)
        tp, vp = bench(_kernels_py, kind, theta, s, u, failed, args.repeat)
        if _kernels is None:
            print(f"{kind.name:<6}{tp * 1e3:>12.3f}{'n/a':>12}")
            continue
        tc, vc = bench(_kernels, kind, theta, s, u, failed, args.repeat)
        same = vp == vc  # equal infinities count as agreement
        with np.errstate(invalid="ignore"):
            diff = np.max(np.where(same, 0.0, np.abs(vp - vc)))
        print(f"{kind.name:<6}{tp * 1e3:>12.3f}{tc * 1e3:>12.3f}{tp / tc:>10.1f}{diff:>13.2e}")


if __name__ == "__main__":
    main()
