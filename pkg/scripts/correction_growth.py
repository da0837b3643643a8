"""How the Hessian correction responds to measurement noise.

For the scalar quadratic sensor ``g(x) = x^2`` the IUKF correction vector
``p`` is traced over a grid of noise levels, alongside the scalar family
``|p| = Omega / (R (1 + R + Omega))``.

    python scripts/correction_growth.py
"""

import numpy as np

from slqn import GaussianBelief, IterationConfig, MeasurementFn, MeasurementProblem, SigmaPointRule
from slqn.bridge import certify_exact_qn, compute_p_iukf
from slqn.statlin import AffineLinearization


def family(R, omega):
    lin = AffineLinearization(np.eye(1), np.zeros(1), np.array([[omega]]))
    S = np.array([[1.0 / (1.0 + R + omega)]])
    return abs(compute_p_iukf(lin, np.array([[R]]), S, [1.0])[0])


def main():
    print("scalar family, H = P = eps = 1")
    print(f"{'R':>6}" + "".join(f"{'Om=' + str(om):>10}" for om in (0, 1, 2, 4)))
    for R in (0.25, 0.5, 1.0, 2.0, 4.0):
        print(f"{R:>6}" + "".join(f"{family(R, om):>10.4f}" for om in (0, 1, 2, 4)))

    print("\nquadratic sensor, prior N(1, 1), y = 3: largest |p| along the IUKF run")
    g = MeasurementFn(lambda x: x**2, lambda x: np.diag(2 * x))
    for R in (0.05, 0.1, 0.5, 1.0, 5.0):
        prob = MeasurementProblem(g, np.array([[R]]), np.array([3.0]), GaussianBelief([1.0], [[1.0]]))
        rep = certify_exact_qn(prob, IterationConfig(rule=SigmaPointRule.unscented(2.0)), "iukf")
        p_max = max((c.p_norm for c in rep.checks), default=0.0)
        print(f"R={R:<5} iterations={len(rep.checks):<3} max|p|={p_max:.4f} "
              f"max dev={rep.max_deviation:.1e} ({rep.reason})")


if __name__ == "__main__":
    main()
