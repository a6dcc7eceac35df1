"""Plain-text interchange formats: spin traces, estimates, Wigner grids, state vectors.

Headers are ``# key: value`` comment lines ahead of a CSV table. Units sit in
the column names or keys (t_us, omega_rad_s).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .fock import FockVector, ProbeBasis, normalized
from .synth import SpinTrace


def _f(x) -> str:
    return repr(float(x))


def _write_header(fh, header: dict) -> None:
    for k, v in header.items():
        fh.write(f"# {k}: {v}\n")


def _read_table(path):
    header = {}
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            header[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    rows = list(reader)
    return header, reader.fieldnames or [], rows


def _basis_header(basis: ProbeBasis) -> dict:
    return {"basis": basis.kind, "beta_re": _f(basis.beta.real), "beta_im": _f(basis.beta.imag),
            "r": _f(basis.r), "phi_s_rad": _f(basis.phi_s)}


def _basis_from_header(h: dict) -> ProbeBasis:
    return ProbeBasis(h.get("basis", "number"), complex(float(h.get("beta_re", 0)), float(h.get("beta_im", 0))),
                      float(h.get("r", 0)), float(h.get("phi_s_rad", 0)))


def write_trace(trace: SpinTrace, path) -> None:
    header = {"format": "spin-trace v1", **_basis_header(trace.basis), "omega_rad_s": _f(trace.omega_probe)}
    for k, v in trace.metadata.items():
        header[f"meta.{k}"] = json.dumps(v, default=str)
    with open(path, "w", newline="") as fh:
        _write_header(fh, header)
        fh.write("t_us,p_down,shots\n")
        for t, p, n in zip(trace.times, trace.p_down, trace.shots):
            fh.write(f"{_f(t * 1e6)},{_f(p)},{int(n)}\n")


def read_trace(path) -> SpinTrace:
    h, cols, rows = _read_table(path)
    missing = {"t_us", "p_down", "shots"} - set(cols)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    t = np.array([float(r["t_us"]) for r in rows]) * 1e-6
    p = np.array([float(r["p_down"]) for r in rows])
    n = np.array([int(r["shots"]) for r in rows])
    meta = {k[5:]: json.loads(v) for k, v in h.items() if k.startswith("meta.")}
    return SpinTrace(t, p, n, _basis_from_header(h), float(h.get("omega_rad_s", 1.0)), meta)


def write_estimate(est, path, summary_path=None) -> None:
    """Per-level populations (n, p, sem) and a key: value summary next to it."""
    with open(path, "w", newline="") as fh:
        _write_header(fh, {"format": "populations v1", **_basis_header(est.basis)})
        fh.write("n,p,sem\n")
        for n, (p, s) in enumerate(zip(est.p, est.p_sem)):
            fh.write(f"{n},{_f(p)},{_f(s)}\n")
    if summary_path is not None:
        Path(summary_path).write_text(estimate_summary(est))


def estimate_summary(est) -> str:
    lines = {
        "omega_rad_s": est.omega_fit,
        "omega_sem_rad_s": est.omega_sem,
        "gamma": est.gamma_fit,
        "gamma_units": "1/s" if est.decay_kind == "exponential" else "1/s^2",
        "gamma_sem": est.gamma_sem,
        "decay_kind": est.decay_kind,
        "parity": est.parity,
        "parity_sem": est.parity_sem,
        "n_levels": est.n_levels,
        "residual_rms": est.residual_rms,
        "ill_conditioned": est.ill_conditioned,
        "covers_mix_revival": est.covers_revival,
    }
    return "".join(f"{k}: {v:.10g}\n" if isinstance(v, float) else f"{k}: {v}\n" for k, v in lines.items())


def read_estimate(path):
    h, _, rows = _read_table(path)
    p = np.array([float(r["p"]) for r in rows])
    s = np.array([float(r["sem"]) for r in rows])
    return p, s, _basis_from_header(h)


def write_wigner(grid, path) -> None:
    with open(path, "w", newline="") as fh:
        hdr = {"format": "wigner-grid v1", "source": grid.source}
        if grid.shape is not None:
            hdr["shape"] = f"{grid.shape[0]}x{grid.shape[1]}"
        _write_header(fh, hdr)
        fh.write("re_beta,im_beta,W,sem\n")
        for b, w, s in zip(grid.points, grid.W, grid.sem):
            fh.write(f"{_f(b.real)},{_f(b.imag)},{_f(w)},{_f(s)}\n")


def read_wigner(path):
    from .wigner import WignerGrid

    h, _, rows = _read_table(path)
    pts = np.array([complex(float(r["re_beta"]), float(r["im_beta"])) for r in rows])
    W = np.array([float(r["W"]) for r in rows])
    s = np.array([float(r["sem"]) for r in rows])
    shape = tuple(int(v) for v in h["shape"].split("x")) if "shape" in h else None
    return WignerGrid(pts, W, s, h.get("source", "oracle"), shape)


def write_pgm(image: np.ndarray, path, vmin: float = -2 / math.pi, vmax: float = 2 / math.pi) -> None:
    """ASCII (P2) greymap; row 0 is the top edge, so the Im axis is flipped to point up.

    Values are mapped linearly from [vmin, vmax] to 0..255; NaN holes are black.
    """
    img = np.flipud(np.asarray(image, dtype=float))
    scaled = np.clip((img - vmin) / (vmax - vmin), 0, 1) * 255
    scaled = np.where(np.isfinite(img), np.round(scaled), 0).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n# W from {vmin:.4f} (black) to {vmax:.4f} (white)\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in scaled:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_vector(state: FockVector, path) -> None:
    with open(path, "w", newline="") as fh:
        _write_header(fh, {"format": "fock-vector v1", "dim": state.dim})
        fh.write("index,re,im\n")
        for i, a in enumerate(state.amps):
            fh.write(f"{i},{_f(a.real)},{_f(a.imag)}\n")


def read_vector(path) -> FockVector:
    _, _, rows = _read_table(path)
    amps = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return normalized(amps, check_tail=False)


def write_operator(op: np.ndarray, path) -> None:
    """Dense matrix as (row, col, re, im) entries, zeros skipped."""
    op = np.asarray(op, dtype=complex)
    with open(path, "w", newline="") as fh:
        _write_header(fh, {"format": "operator v1", "shape": f"{op.shape[0]}x{op.shape[1]}"})
        fh.write("row,col,re,im\n")
        for i, j in zip(*np.nonzero(op)):
            fh.write(f"{i},{j},{_f(op[i, j].real)},{_f(op[i, j].imag)}\n")


def read_operator(path) -> np.ndarray:
    h, _, rows = _read_table(path)
    shape = tuple(int(v) for v in h["shape"].split("x"))
    op = np.zeros(shape, dtype=complex)
    for r in rows:
        op[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return op
