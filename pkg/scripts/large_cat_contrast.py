"""Same |alpha| = 7.8 odd cat fitted in the number basis and in the 8 dB squeezed basis.

The squeezed basis pulls the revival in from about 60 carrier periods to about 11,
which keeps the fit well conditioned inside the same probe window.
"""

import argparse
import warnings

import numpy as np

from ioncat.fit import FitOptions, RevivalCoverageWarning, cat_prior, fit_populations, parity_report, revival_cycles
from ioncat.fock import ProbeBasis, aligned_squeeze_phase, db_to_r
from ioncat.spin import DecoherenceSpec
from ioncat.synth import DecayModel, SequenceConfig, calibrate_herald, run_full_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--bootstrap", type=int, default=50)
    args = ap.parse_args()

    alpha = 7.8j
    bases = {"number": ProbeBasis.number(),
             "squeezed 8 dB": ProbeBasis.squeezed(db_to_r(8.0), aligned_squeeze_phase(alpha))}
    for name, basis in bases.items():
        cfg = SequenceConfig(alpha=alpha, branch="minus", basis=basis, decay=DecayModel("exponential", 300.0),
                             times=np.arange(0, 645e-6 + 1e-9, 2e-6), sequences=750, herald=calibrate_herald(),
                             decoherence=DecoherenceSpec(heating_rate=10.0), seed=args.seed, threads=args.threads)
        res = run_full_sequence(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RevivalCoverageWarning)
            est = fit_populations(res.trace, "exponential", None,
                                  FitOptions(seed=args.seed, bootstrap=args.bootstrap, threads=args.threads),
                                  prior=cat_prior(alpha, basis))
        rc = revival_cycles(res.trace, est)
        print(f"{name}: nbar {rc['n_bar_fit']:.2f}, revival {rc.get('revival_cycles', float('nan')):.1f} periods, "
              f"true parity {res.metadata['true_parity']:+.3f}")
        print("  " + parity_report(est))


if __name__ == "__main__":
    main()
