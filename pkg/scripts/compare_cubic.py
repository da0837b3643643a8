"""Monte Carlo comparison of the iterated filters on the cubic sensor.

Prints mean final error, RMSE and mean iteration count per filter for the
default and the high-noise parameter sets.

    python scripts/compare_cubic.py --runs 500 --seed 42 --workers 4
"""

import argparse

from slqn.harness.config import RunConfig
from slqn.harness.montecarlo import run_monte_carlo

FILTERS = ["iekf", "qniekf_exact", "iplf", "iplf_prior", "iukf"]
PARAM_SETS = {
    "default": {},
    "high-noise": {"prior_var": 4.0, "R": 4.0},
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=500)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    for label, params in PARAM_SETS.items():
        cfg = RunConfig.from_dict({
            "scenario": "CUBIC", "filters": FILTERS, "monte_carlo_runs": args.runs,
            "seed": args.seed, "params": params,
        })
        summary = run_monte_carlo(cfg, workers=args.workers).summary
        print(f"\n{label} {params or ''}")
        print(f"{'filter':<14}{'mean err':>10}{'rmse':>10}{'iters':>8}{'diverged':>10}")
        for name in FILTERS:
            s = summary[name]
            if s["mean_final_error"] is None:
                print(f"{name:<14}{'-':>10}{'-':>10}{'-':>8}{s['divergence_count']:>10}")
                continue
            print(f"{name:<14}{s['mean_final_error']:>10.4f}{s['rmse']:>10.4f}"
                  f"{s['mean_iterations']:>8.2f}{s['divergence_count']:>10}")


if __name__ == "__main__":
    main()
