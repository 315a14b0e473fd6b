"""Time the compiled and numpy path simulators on the same workload.

Usage: python benchmarks/bench_mc.py [--paths N] [--horizon T] [--bridge]
"""

import argparse
import time

from dividend_eq import ModelParams, PseudoExponential, solve_equilibrium
from dividend_eq import mc
from dividend_eq.mc import SimConfig, simulate_payoff


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--horizon", type=float, default=5.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--x0", type=float, default=1.0)
    ap.add_argument("--bridge", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = ModelParams(1.0, 1.0, 1.0, 1.0, 1.2)
    disc = PseudoExponential(0.3, 0.6, 1.0)
    sol = solve_equilibrium(params, disc)
    cfg = SimConfig(dt=args.dt, horizon=args.horizon, n_paths=args.paths, seed=1, bridge_correction=args.bridge)
    steps = args.paths * round(args.horizon / args.dt)

    print(f"{args.paths} paths x {round(args.horizon / args.dt)} steps, bridge={args.bridge}")
    results = {}
    for backend in mc.AVAILABLE_BACKENDS:
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            rep = simulate_payoff(params, sol.policy, disc, args.x0, cfg, backend=backend)
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, rep)
        # path-steps include those skipped after ruin, so this is an upper bound on work done
        print(f"{backend:>9}: {best:8.3f} s  {steps / best / 1e6:8.1f} M path-steps/s  mean={rep.mean:.6f}")
    if len(results) == 2:
        (tc, rc), (tp, rp) = results["compiled"], results["python"]
        print(f"speed-up: {tp / tc:.1f}x, |mean difference| = {abs(rc.mean - rp.mean):.2e}")


if __name__ == "__main__":
    main()
