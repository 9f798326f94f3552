"""Take-one-out cross-validation of several models on a simulated scenario.

The first model listed is the %red baseline.

    python3 scripts/cross_validation.py --models brma nma_1a nma_1d
"""

import argparse
import time

from bvnma import McmcSettings, builtin_scenario, simulate
from bvnma.prediction import cross_validate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="scenario1")
    ap.add_argument("--data-seed", type=int, default=42)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--chains", type=int, default=2)
    ap.add_argument("--warmup", type=int, default=2000)
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--models", nargs="+", default=["brma", "nma_1a"])
    args = ap.parse_args()

    data = simulate(builtin_scenario(args.scenario), seed=args.data_seed)
    settings = McmcSettings(n_chains=args.chains, n_warmup=args.warmup,
                            n_samples=args.samples, seed=args.seed)
    print(f"{'model':8s} {'n':>3s} {'p_overlap':>9s} {'|diff|':>7s} {'width':>6s} "
          f"{'pi':>6s} {'%red':>7s} {'secs':>5s}")
    base = None
    for variant in args.models:
        t0 = time.perf_counter()
        res = cross_validate(data, variant, settings, baseline=base, n_jobs=args.jobs)
        o = res.overall
        pct = "" if o.pct_reduction is None else f"{o.pct_reduction:7.2f}"
        print(f"{variant:8s} {o.n:3d} {o.p_overlap:9.2f} {o.mean_abs_diff:7.2f} "
              f"{o.width_ratio:6.2f} {o.pi_score:6.2f} {pct:>7s} "
              f"{time.perf_counter() - t0:5.0f}", flush=True)
        if base is None:
            base = res


if __name__ == "__main__":
    main()
