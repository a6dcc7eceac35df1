"""Wigner grid of a small odd cat and a squeezed-basis cut of a large one, with the fringe fit."""

import argparse
from pathlib import Path

import numpy as np

from ioncat.fock import aligned_squeeze_phase, cat_state
from ioncat.io import write_pgm, write_wigner
from ioncat.wigner import fringe_fit, grid_points, reconstruct_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="out/wigner")
    ap.add_argument("--source", default="simulated", choices=["oracle", "simulated", "fitted"])
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    pts, shape = grid_points(np.linspace(-3.2, 3.2, 17), np.linspace(-2.0, 2.0, 21))
    grid = reconstruct_grid(cat_state(2.1, "-"), pts, source=args.source, threads=args.threads, shape=shape)
    write_wigner(grid, out / "grid.csv")
    write_pgm(grid.as_image(), out / "grid.pgm")
    print(f"grid: W(0) = {grid.W[np.argmin(np.abs(pts))]:+.4f}")

    a = 4.25
    x = np.linspace(-0.9, 0.9, 73)
    cut = reconstruct_grid(cat_state(a, "-"), 1j * x, r=0.5, phi_s=aligned_squeeze_phase(a), source=args.source,
                           threads=args.threads)
    write_wigner(cut, out / "cut.csv")
    print(fringe_fit(cut, a).summary(), end="")


if __name__ == "__main__":
    main()
