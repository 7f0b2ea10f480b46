#!/usr/bin/env python3
"""Scan rank-one gain directions and optimize the certificate for each.

The synthesis fixes K = q*k with a deterministic direction q; this script
maps how the optimized certified gain depends on the direction angle for
the two-input case study, which shows the floor of the achievable
small-gain constant over the whole rank-one family.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sdcontrol import build_heat_system, optimize_parameters
from sdcontrol.errors import ToolkitError
from sdcontrol.predictor import (PredictorDesign, TransitionSignal,
                                 _ackermann, diagonal_exponential,
                                 solve_lyapunov)


def rank_one_design(sys_, theta, poles, delay=0.1, t0=0.2):
    """Design with an explicit direction angle instead of the default seed."""
    n0 = len(poles)
    lam = sys_.eigenvalues[:n0]
    b_n0 = sys_.input_coeffs[:n0]
    exp_da = diagonal_exponential(np.diag(lam), -delay)
    q = np.array([math.cos(theta), math.sin(theta)])
    bq = (exp_da @ b_n0) @ q
    k = _ackermann(lam, bq, np.sort_complex(np.asarray(poles, dtype=complex)))
    gain = np.outer(q, k)
    a_cl = np.diag(lam) + exp_da @ b_n0 @ gain
    return PredictorDesign(
        delay=delay, n0=n0, a_n0=np.diag(lam), b_n0=b_n0, exp_da=exp_da,
        gain=gain, a_cl=a_cl, lyap=solve_lyapunov(a_cl),
        desired_poles=np.sort_complex(np.asarray(poles, dtype=complex)),
        transition=TransitionSignal(t0))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta-min", type=float, default=5.0, help="degrees")
    ap.add_argument("--theta-max", type=float, default=85.0)
    ap.add_argument("--steps", type=int, default=17)
    args = ap.parse_args()

    sys_ = build_heat_system(a=5.0, c=2.5, L=2 * np.pi, n_max=10)
    print(f"{'theta_deg':>10} {'|K|':>10} {'sg_const':>12}")
    best = (None, math.inf)
    for deg in np.linspace(args.theta_min, args.theta_max, args.steps):
        theta = math.radians(float(deg))
        try:
            design = rank_one_design(sys_, theta, [-3.0, -3.0])
            bundle = optimize_parameters(sys_, design)
        except (ToolkitError, np.linalg.LinAlgError) as exc:
            print(f"{deg:10.2f}  failed: {exc}")
            continue
        k_norm = float(np.linalg.norm(design.gain, 2))
        print(f"{deg:10.2f} {k_norm:10.4f} {bundle.small_gain_constant:12.4f}")
        if bundle.small_gain_constant < best[1]:
            best = (float(deg), bundle.small_gain_constant)
    if best[0] is not None:
        print(f"best direction {best[0]:.2f} deg, "
              f"small_gain_constant {best[1]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
