#!/usr/bin/env python3
"""Exit-probability bias along an eps sweep for the width-step family.

Prints |p_hat - p_plus| with its standard error per eps. The target 2/3
comes from the limit scale function; the bias should sink into the noise
as the tube narrows.
"""

import argparse

import numpy as np

from narrowtube import (
    ExampleFamilySpec,
    build_example_family,
    gluing_parameters,
    limiting_scale_speed,
    mc_exit_statistics,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, default=0.2)
    ap.add_argument("--eps", type=float, nargs="+",
                    default=[0.08, 0.04, 0.02])
    ap.add_argument("--n-paths", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    spec = ExampleFamilySpec(v1=(1.0,), beta=args.beta)
    table = limiting_scale_speed(spec, np.linspace(-1.0, 1.0, 41))
    target = gluing_parameters(table).p_plus
    print(f"p_plus target = {target:.6f}")
    print(f"{'eps':>6} {'p_hat':>9} {'stderr':>9} {'|bias|':>9}")
    for eps in args.eps:
        fam = build_example_family(spec, eps)
        y0 = 0.5 * fam.upper(0.0)[0]
        dt = min(1e-6, eps * eps / 25.0)
        prob, _ = mc_exit_statistics(
            fam, (0.0, y0), (-args.kappa, args.kappa), dt,
            args.n_paths, args.seed)
        print(f"{eps:>6.3f} {prob.mean:>9.5f} {prob.std_error:>9.5f} "
              f"{abs(prob.mean - target):>9.5f}")


if __name__ == "__main__":
    main()
