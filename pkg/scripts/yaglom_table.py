"""Print the conditional Laplace transform of ``varphi(t) Y_t`` against its limit."""

import argparse

import numpy as np

from cbext.kernel import build_kernel, yaglom_check
from cbext.mechanism import MechanismSpec, make_mechanism


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, nargs="+", default=[1.2, 1.5, 2.0])
    ap.add_argument("--x0", type=float, default=1.0)
    args = ap.parse_args()

    t = np.logspace(0, 6, 7)
    lam = [0.25, 1.0, 4.0]
    for alpha in args.alpha:
        tab = yaglom_check(build_kernel(make_mechanism(MechanismSpec.stable(1.0, alpha))), args.x0, t, lam)
        print(f"alpha={alpha}  limit at lambda={lam}: {np.round(tab.limits, 6).tolist()}")
        for ti, err in zip(tab.t, tab.sup_error):
            print(f"  t={ti:9.0e}  sup |error| = {err:.3e}")


if __name__ == "__main__":
    main()
