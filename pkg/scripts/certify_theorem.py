"""Certify the exact quasi-Newton form of the IPLF and IUKF on random
polynomial problems, one line per (mode, rule) combination.

    python scripts/certify_theorem.py --instances 200
"""

import argparse
import time

from slqn.harness.config import VerifyConfig
from slqn.harness.verify import run_verification


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--instances", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-dim", type=int, default=4)
    parser.add_argument("--max-degree", type=int, default=3)
    args = parser.parse_args()

    print(f"{'mode':<6}{'rule':<11}{'iters':>7}{'max dev':>12}{'max secant':>12}"
          f"{'singular':>10}{'time':>7}  stop reasons")
    for mode in ("iplf", "iukf"):
        for rule in ({"kind": "unscented"}, {"kind": "cubature"}):
            cfg = VerifyConfig.from_dict({
                "mode": mode, "instances": args.instances, "rules": [rule], "seed": args.seed,
                "max_dim": args.max_dim, "max_degree": args.max_degree,
            })
            start = time.perf_counter()
            res = run_verification(cfg)
            took = time.perf_counter() - start
            print(f"{mode:<6}{rule['kind']:<11}{res['certified_iterations']:>7}"
                  f"{res['max_deviation']:>12.2e}{res['max_secant_residual']:>12.2e}"
                  f"{res['singular_count']:>10}{took:>6.1f}s  {res['stop_reasons']}")


if __name__ == "__main__":
    main()
