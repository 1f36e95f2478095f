"""Log-log slopes of <q>, <p> and <p>/m fluctuations against mass."""
import argparse

from qmupl.ensemble import EnsembleConfig, variance_scaling
from qmupl.params import Exponential
from qmupl.validation import MASTER_SEED


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=4000)
    ap.add_argument("--masses", default="1,10,100")
    ap.add_argument("--xi-mode", default="unitary", choices=("unitary", "collapse"))
    args = ap.parse_args()
    cfg = EnsembleConfig(Exponential(1.0), 5.0, 500, args.paths, seed=MASTER_SEED, xi_mode=args.xi_mode)
    fit = variance_scaling(cfg, [float(m) for m in args.masses.split(",")])
    for name, val in (("q", fit.slope_q), ("p", fit.slope_p), ("v", fit.slope_v)):
        print(f"slope {name}: {val:+.3f} +- {fit.slope_se:.3f}")


if __name__ == "__main__":
    main()
