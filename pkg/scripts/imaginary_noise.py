"""Density matrices from collapse and unitary noise couplings, compared entrywise."""
import argparse

import numpy as np

from qmupl.ensemble import EnsembleConfig, imaginary_noise_compare
from qmupl.params import Exponential
from qmupl.validation import MASTER_SEED


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--t", type=float, default=1.0, help="final time in units of 1/omega")
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--out", help="npz file with both density matrices")
    args = ap.parse_args()
    cfg = EnsembleConfig(Exponential(args.gamma), args.t, 200, args.paths, seed=MASTER_SEED)
    cmp_ = imaginary_noise_compare(cfg)
    print(f"max deviation {cmp_.max_deviation:.2f} SE, trace {cmp_.trace_collapse:.4f} "
          f"+- {cmp_.trace_se_collapse:.4f}, effective sample fraction {cmp_.ess_fraction:.3f}")
    if args.out:
        np.savez(args.out, x=cmp_.x, rho_collapse=cmp_.collapse.rho, rho_unitary=cmp_.unitary.rho)


if __name__ == "__main__":
    main()
