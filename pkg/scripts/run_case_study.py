#!/usr/bin/env python3
"""Reproduce the built-in reaction-diffusion case study end to end.

Writes the generated config, validation report, design report, certificate,
trajectory CSV and run summary into the output directory. Exit code follows
the CLI contract (4 flags a nonpositive interconnection margin; the
simulation artifacts are still produced in that case).
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sdcontrol.cli import cmd_case_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="case_study_out",
                    help="output directory (default: ./case_study_out)")
    ap.add_argument("--no-disturbance", action="store_true",
                    help="zero the exogenous input and the feedback coupling")
    ap.add_argument("--open-loop", action="store_true",
                    help="run with zero gain")
    ap.add_argument("--t-end", type=float, default=None,
                    help="override the simulation horizon")
    args = ap.parse_args()
    code = cmd_case_study(Path(args.out), no_disturbance=args.no_disturbance,
                          open_loop=args.open_loop, t_end=args.t_end)
    print(f"done, exit code {code}, artifacts in {args.out}/")
    return code


if __name__ == "__main__":
    sys.exit(main())
