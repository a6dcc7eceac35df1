"""Quantum-jump trajectories against the master equation for a heated odd cat."""

import argparse

import numpy as np

from ioncat.fock import cat_state
from ioncat.open_system import evolve_master_equation, mcwf_trajectories
from ioncat.spin import DecoherenceSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=2.0)
    ap.add_argument("--rate", type=float, default=10.0, help="heating rate, quanta/s")
    ap.add_argument("--trajectories", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dim = 32
    psi = cat_state(args.alpha, "-", dim).amps
    dec = DecoherenceSpec(heating_rate=args.rate)
    times = np.linspace(0, 0.1, 6)
    traj = mcwf_trajectories(psi, None, dec, times, args.trajectories, seed=args.seed, spin=False, threads=4)
    me = evolve_master_equation(np.outer(psi, psi.conj()), None, dec, times, spin=False)
    sign = (-1.0) ** np.arange(dim)
    print("t_ms   parity_me  parity_mcwf  max|dp|/sigma")
    for k, rho in enumerate(me):
        p = np.real(np.diag(rho))
        sig = np.maximum(traj.sem[k], np.sqrt(p * (1 - p) / traj.n_traj))
        z = np.max(np.abs(traj.mean[k] - p) / np.where(sig > 0, sig, np.inf))
        print(f"{times[k] * 1e3:5.1f}  {sign @ p:+.4f}    {sign @ traj.mean[k]:+.4f}      {z:.2f}")


if __name__ == "__main__":
    main()
