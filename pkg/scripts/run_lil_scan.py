"""Running-max LIL statistics on the scales ``t_n = phi(r^n)``.

Prints median (and 10/90% quantiles) of the running max for each kind,
once over the whole scan and once over the last five scales only.
"""

import argparse

import numpy as np

from cbext.asymptotics import simulate_scan
from cbext.kernel import build_kernel
from cbext.mechanism import MechanismSpec, make_mechanism
from cbext.paths import RelativeMove

PRESETS = {"stable": MechanismSpec.stable(1.0, 1.5), "quadratic": MechanismSpec.quadratic(1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=sorted(PRESETS), default="stable")
    ap.add_argument("--n-paths", type=int, default=200)
    ap.add_argument("--r", type=float, default=2.0)
    ap.add_argument("--n0", type=int, default=3)
    ap.add_argument("--n1", type=int, default=20)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    m = make_mechanism(PRESETS[args.preset])
    k = build_kernel(m)
    kinds = ("reversed", "reflected_reversed", "future_infimum")
    full = simulate_scan(m, k, args.n_paths, kinds, r=args.r, n0=args.n0, n1=args.n1,
                         policy=RelativeMove(args.eps), seed=args.seed, workers=args.workers)
    for kind, rep in full.items():
        print(f"{kind.value}: full window, n={rep.n_index[0]}..{rep.n_index[-1]}")
        for n, a, b, c in zip(rep.n_index, rep.q10, rep.q50, rep.q90):
            print(f"  n={n:3d}  q10={a:7.3f}  median={b:7.3f}  q90={c:7.3f}")
    tail = simulate_scan(m, k, args.n_paths, kinds, r=args.r, n0=args.n0, n1=args.n1, window_start=args.n1 - 4,
                         policy=RelativeMove(args.eps), seed=args.seed, workers=args.workers)
    for kind, rep in tail.items():
        print(f"{kind.value}: last five scales, medians {np.round(rep.q50, 3).tolist()}")


if __name__ == "__main__":
    main()
