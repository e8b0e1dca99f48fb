"""Compare simulated extinction times with ``P_x(T0 <= t) = exp(-x varphi(t))``.

    python scripts/extinction_law.py --preset stable --n-paths 2000
"""

import argparse

import numpy as np
from scipy import stats

from cbext.kernel import build_kernel
from cbext.lamperti import simulate_ensemble
from cbext.mechanism import MechanismSpec, make_mechanism
from cbext.paths import AdaptiveLamperti

PRESETS = {
    "stable": MechanismSpec.stable(1.0, 1.5),
    "quadratic": MechanismSpec.quadratic(1.0),
    "stable_gaussian": MechanismSpec.stable_gaussian(1.0, 1.5, 1.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=sorted(PRESETS), default="stable")
    ap.add_argument("--x0", type=float, default=1.0)
    ap.add_argument("--n-paths", type=int, default=1000)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    m = make_mechanism(PRESETS[args.preset])
    k = build_kernel(m)
    ens = simulate_ensemble(m, args.x0, args.n_paths, AdaptiveLamperti(args.eps), seed=args.seed,
                            workers=args.workers)
    t0 = ens.extinction_times[np.isfinite(ens.extinction_times)]
    ks = stats.kstest(t0, lambda t: k.extinction_cdf(args.x0, np.maximum(t, 1e-300)))
    print(f"{m.describe()}  x0={args.x0}  paths={t0.size}/{args.n_paths}")
    print(f"KS statistic {ks.statistic:.4f}  p-value {ks.pvalue:.3f}")
    print(f"{'q':>5} {'empirical':>12} {'exact':>12}")
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        print(f"{q:5.2f} {np.quantile(t0, q):12.5f} {k.sample_extinction_time(args.x0, q):12.5f}")


if __name__ == "__main__":
    main()
