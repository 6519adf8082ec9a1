"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both flavours are imported explicitly, so ISPCA_NO_NUMBA does not matter
here. The first numba call (compilation or cache load) is excluded.
"""
import argparse
import timeit

import numpy as np

from ispca import _kernels as k


def cases(rng):
    X = rng.standard_normal((50, 500))
    a = X.T @ rng.standard_normal(50)
    v0 = np.linalg.svd(X, full_matrices=False)[2][0].copy()
    R = np.abs(np.corrcoef(rng.standard_normal((200, 300)), rowvar=False))
    M = rng.standard_normal((200, 120))
    return {
        "l1_project p=500": (k.l1_project_numpy, k.l1_project_numba, (a, 5.0)),
        "pmd_loop 50x500": (k.pmd_loop_numpy, k.pmd_loop_numba, (X, v0, 5.0, 200, 1e-8)),
        "components p=300": (k.components_numpy, k.components_numba, (R, 0.15)),
        "power_norm 200x120": (k.power_norm_numpy, k.power_norm_numba, (M, 10_000, 1e-12)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (f_np, f_nb, fargs) in cases(rng).items():
        f_nb(*fargs)  # compile / load cache
        t_np = min(timeit.repeat(lambda: f_np(*fargs), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*fargs), number=1, repeat=args.repeat))
        print(f"{name:<22}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
