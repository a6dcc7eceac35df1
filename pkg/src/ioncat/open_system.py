"""Lindblad master equation (dense, small dims) and Monte-Carlo wavefunction trajectories."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eig, expm
from scipy.optimize import brentq
from scipy.sparse.linalg import expm_multiply

from .spin import DecoherenceSpec, check_hermitian, collapse_operators

ME_MAX_N = 64


class DimensionError(ValueError):
    """Raised when a dense master-equation run would exceed the supported dimension."""


def liouvillian(H: np.ndarray, c_ops: list[np.ndarray]) -> sp.csr_matrix:
    """Sparse Lindblad generator acting on column-stacked density matrices."""
    d = H.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    Hs = sp.csr_matrix(H)
    L = -1j * (sp.kron(eye, Hs) - sp.kron(Hs.T, eye))
    for c in c_ops:
        cs = sp.csr_matrix(c)
        cdc = (cs.conj().T @ cs).tocsr()
        L = L + sp.kron(cs.conj(), cs) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    return L.tocsr()


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


def evolve_master_equation(rho: np.ndarray, H: np.ndarray, dec: DecoherenceSpec, t,
                           spin: bool = True, max_n: int = ME_MAX_N):
    """rho(t) under the Lindblad equation with jump operators from ``dec``.

    ``t`` may be a scalar or a sequence of times; a list of density matrices is
    returned in the latter case. ``spin`` says whether ``rho`` lives on the
    2 n_max joint space or on the oscillator alone.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    n_max = d // 2 if spin else d
    if n_max > max_n:
        raise DimensionError(f"dense master equation limited to n_max {max_n}, got {n_max}")
    H = np.zeros((d, d), dtype=complex) if H is None else np.asarray(H, dtype=complex)
    check_hermitian(H)
    L = liouvillian(H, collapse_operators(dec, n_max, spin=spin))
    scalar = np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and sorted")
    out = []
    v = _vec(rho)
    last = 0.0
    for tk in times:
        if tk > last:
            v = expm_multiply(L * (tk - last), v)
            last = tk
        r = _unvec(v, d)
        out.append((r + r.conj().T) / 2)
    return out[0] if scalar else out


def heat_density(rho: np.ndarray, dec: DecoherenceSpec, t: float) -> np.ndarray:
    """Free (undriven) decoherence of an oscillator density matrix."""
    return evolve_master_equation(rho, None, dec, t, spin=False, max_n=max(ME_MAX_N, rho.shape[0]))


# -- Monte-Carlo wavefunction -----------------------------------------------


@dataclass
class MCWFResult:
    times: np.ndarray
    mean: np.ndarray  # (n_times, dim) basis populations averaged over trajectories
    sem: np.ndarray
    n_traj: int
    jumps: np.ndarray  # jumps per trajectory
    final_states: np.ndarray | None = None

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t_us,level,population,sem\n")
            for i, t in enumerate(self.times):
                for k in range(self.mean.shape[1]):
                    fh.write(f"{t * 1e6:.9g},{k},{self.mean[i, k]:.12g},{self.sem[i, k]:.6g}\n")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


class _NonHermitianEvolver:
    # exp(-i H_eff tau) psi through an eigendecomposition of H_eff, with a dense
    # expm fallback when the eigenbasis is ill-conditioned.
    def __init__(self, H_eff: np.ndarray):
        self.H_eff = H_eff
        lam, V = eig(H_eff)
        ok = np.all(np.isfinite(V))
        if ok:
            cond = np.linalg.cond(V)
            ok = cond < 1e8
        if ok:
            Vinv = np.linalg.inv(V)
            ok = np.max(np.abs((V * lam) @ Vinv - H_eff)) < 1e-9 * max(1.0, np.max(np.abs(H_eff)))
        if ok:
            self.lam, self.V, self.Vinv = lam, V, Vinv
        else:
            self.lam = None

    def coeffs(self, psi):
        return self.Vinv @ psi if self.lam is not None else psi

    def at(self, c, tau):
        if self.lam is not None:
            return self.V @ (np.exp(-1j * self.lam * tau) * c)
        return expm(-1j * self.H_eff * tau) @ c


def _run_trajectory(psi0, evolver, c_ops, times, rng):
    psi = psi0.copy()
    t_now = 0.0
    pops = np.empty((times.size, psi0.size))
    threshold = rng.random()
    c = evolver.coeffs(psi)
    jumps = 0
    for i, t_out in enumerate(times):
        while True:
            tau = t_out - t_now
            phi = evolver.at(c, tau)
            nrm2 = float(np.vdot(phi, phi).real)
            if nrm2 > threshold:
                break
            # jump inside (t_now, t_out]: find when the norm reaches the threshold
            tau_j = brentq(lambda s: float(np.vdot(evolver.at(c, s), evolver.at(c, s)).real) - threshold,
                           0.0, tau, xtol=1e-15, rtol=1e-12)
            phi = evolver.at(c, tau_j)
            weights = np.array([np.vdot(op @ phi, op @ phi).real for op in c_ops])
            k = rng.choice(len(c_ops), p=weights / weights.sum())
            psi = c_ops[k] @ phi
            psi /= np.linalg.norm(psi)
            t_now += tau_j
            c = evolver.coeffs(psi)
            threshold = rng.random()
            jumps += 1
        psi_t = phi / math.sqrt(nrm2)
        pops[i] = np.abs(psi_t) ** 2
        # restart from the renormalized state so the threshold refers to the current norm
        threshold = threshold / nrm2
        c = evolver.coeffs(psi_t)
        t_now = t_out
    return pops, jumps, psi_t


def mcwf_trajectories(psi0: np.ndarray, H: np.ndarray | None, dec: DecoherenceSpec, times,
                      n_traj: int, seed: int, spin: bool = True, threads: int = 1,
                      keep_states: bool = False) -> MCWFResult:
    """Average basis populations over quantum-jump trajectories.

    Trajectory ``i`` draws from its own Philox stream keyed by (seed, i), so
    results do not depend on ``threads``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    psi0 = psi0 / np.linalg.norm(psi0)
    d = psi0.size
    H = np.zeros((d, d), dtype=complex) if H is None else np.asarray(H, dtype=complex)
    check_hermitian(H)
    n_max = d // 2 if spin else d
    c_ops = collapse_operators(dec, n_max, spin=spin)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and sorted")
    H_eff = H.copy()
    for c in c_ops:
        H_eff -= 0.5j * c.conj().T @ c
    evolver = _NonHermitianEvolver(H_eff)
    if not c_ops:
        c_ops = [np.zeros((d, d), dtype=complex)]

    def one(i):
        return _run_trajectory(psi0, evolver, c_ops, times, trajectory_rng(seed, i))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(n_traj)))
    else:
        results = [one(i) for i in range(n_traj)]
    pops = np.stack([r[0] for r in results])
    jumps = np.array([r[1] for r in results])
    mean = pops.mean(axis=0)
    sem = pops.std(axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.zeros_like(mean)
    states = np.stack([r[2] for r in results]) if keep_states else None
    return MCWFResult(times, mean, sem, n_traj, jumps, states)
