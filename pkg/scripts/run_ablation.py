#!/usr/bin/env python3
"""Timestep-range ablation: one DACL encoder per range (Early 1-16, Mid 17-33, Late 34-50).

Thin wrapper over ``dacl ablate`` with the seeds 0-4 default.
"""

import sys

from dacl.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--seeds") for a in argv):
        argv += ["--seeds", "0,1,2,3,4"]
    if not any(a.startswith("--out") for a in argv):
        argv += ["--out", "runs/ablation"]
    sys.exit(main(["ablate", *argv]))
