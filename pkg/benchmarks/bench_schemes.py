"""Contraction wall time and mid-bond size per scheme on a spin-boson instance.

    python3 benchmarks/bench_schemes.py --modes 8 --mode-dim 3 --steps 60 --eps 1e-7
"""
import argparse
import json
import time

import numpy as np

from treeace.contraction import CompressionPolicy, ContractionPlan, contract
from treeace.models import SpectralDensityQD, discretize_bosonic
from treeace.ptmpo import sv_spectrum

VARIANTS = {
    "sequential": ("sequential", 1.0, 1),
    "sequential_preselect": ("sequential_preselect", 1.0, 1),
    "tree(1,1)": ("tree", 1.0, 1),
    "tree(1,100)": ("tree", 100.0, 1),
    "tree(2,100)": ("tree", 100.0, 2),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--modes", type=int, default=8)
    ap.add_argument("--mode-dim", type=int, default=3)
    ap.add_argument("--dt", type=float, default=0.1)
    ap.add_argument("--steps", type=int, default=60)
    ap.add_argument("--eps", type=float, default=1e-7)
    ap.add_argument("--only", help="comma-separated subset of " + ", ".join(VARIANTS))
    args = ap.parse_args()

    modes = discretize_bosonic(SpectralDensityQD(), 7.0, args.modes, args.mode_dim, 4.0, args.dt)
    names = args.only.split(",") if args.only else list(VARIANTS)
    rows = []
    for name in names:
        scheme, r, sweeps = VARIANTS[name]
        t0 = time.perf_counter()
        pt = contract(modes, args.steps, CompressionPolicy(args.eps, r, sweeps),
                      ContractionPlan(scheme=scheme))
        seconds = time.perf_counter() - t0
        spec = sv_spectrum(pt, args.steps // 2)
        rows.append({"variant": name, "seconds": round(seconds, 3), "max_bond": pt.max_bond,
                     "mid_count": int(np.count_nonzero(spec >= args.eps))})
        print(json.dumps(rows[-1]), flush=True)


if __name__ == "__main__":
    main()
