"""Wigner-function points from displaced-basis parities, grids, and the interference-fringe fit."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .fock import (FockVector, PopulationVector, ProbeBasis, TruncationError, _support, cat_normalization,
                   displacement_operator, populations_from_density,
                   populations_in_basis)

TWO_OVER_PI = 2 / math.pi
SOURCES = ("simulated", "fitted", "oracle")


@dataclass
class WignerGrid:
    """W at phase-space points; NaN marks a point whose reconstruction failed."""

    points: np.ndarray
    W: np.ndarray
    sem: np.ndarray
    source: str = "oracle"
    shape: tuple | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex).ravel()
        self.W = np.asarray(self.W, dtype=float).ravel()
        self.sem = np.broadcast_to(np.asarray(self.sem, dtype=float), self.W.shape).copy()
        if not (self.points.size == self.W.size == self.sem.size):
            raise ValueError("points, W and sem must have equal length")
        if self.points.size == 0:
            raise ValueError("empty Wigner grid")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        ok = np.isfinite(self.W)
        if np.any(np.abs(self.W[ok]) > TWO_OVER_PI + 3 * self.sem[ok] + 1e-9):
            raise ValueError("|W| exceeds 2/pi beyond 3 sem")

    @property
    def holes(self) -> np.ndarray:
        return np.nonzero(~np.isfinite(self.W))[0]

    def axis_cut(self, axis: str = "im", tol: float = 1e-9) -> "WignerGrid":
        """Points on the imaginary (or real) axis, sorted along it."""
        on = np.abs(self.points.real if axis == "im" else self.points.imag) <= tol
        x = self.points.imag if axis == "im" else self.points.real
        idx = np.nonzero(on)[0]
        idx = idx[np.argsort(x[idx])]
        return WignerGrid(self.points[idx], self.W[idx], self.sem[idx], self.source)

    def as_image(self) -> np.ndarray:
        if self.shape is None:
            raise ValueError("grid has no rectangular shape")
        return self.W.reshape(self.shape)


@dataclass
class FringeFit:
    """f(x) = (2/pi) A exp(-2 x^2) cos(4 alpha x) along x = Im(beta)."""

    A: float
    A_err: float
    alpha_fit: float
    alpha_err: float
    residual_rms: float
    aliased: bool = False
    axis: str = "Im"

    def __post_init__(self):
        if not self.alpha_fit > 0:
            raise ValueError("alpha_fit must be positive")

    def summary(self) -> str:
        alias = " (ALIASED: sampling below 4 points per fringe)" if self.aliased else ""
        return (f"axis = {self.axis}\nalpha = {self.alpha_fit:.4f} +/- {self.alpha_err:.4f}\n"
                f"A = {self.A:.4f} +/- {self.A_err:.4f} (signed; negative for odd parity at the origin)\n"
                f"|A| = {abs(self.A):.4f} +/- {self.A_err:.4f}\nresidual_rms = {self.residual_rms:.3g}{alias}\n")


def basis_point_for(target: complex, r: float = 0.0, phi_s: float = 0.0) -> complex:
    """Displacement beta whose squeezed-displaced basis probes W at ``target``."""
    t = complex(target)
    return t * math.cosh(r) + t.conjugate() * np.exp(1j * phi_s) * math.sinh(r)


def wigner_point_from_populations(pops: PopulationVector, p_sem=None, parity_sem: float | None = None):
    """(beta_eff, W, sem) from displaced(-squeezed) basis populations.

    W = (2/pi) sum (-1)^n p_n is attributed to beta_eff = beta cosh r - beta^* e^{i phi_s} sinh r.
    Without a parity error, level errors are added in quadrature.
    """
    basis = pops.basis
    if not basis.is_displaced:
        raise ValueError(f"Wigner points need a displaced basis, got {basis.kind!r}")
    p = pops.p
    par = float(np.sum(p * (-1.0) ** np.arange(p.size)))
    if parity_sem is None:
        parity_sem = float(np.sqrt(np.sum(np.asarray(p_sem, dtype=float) ** 2))) if p_sem is not None else 0.0
    return basis.effective_point, TWO_OVER_PI * par, TWO_OVER_PI * parity_sem


def wigner_oracle(state, point: complex, loss_tol: float = 1e-9, max_dim: int = 4096) -> float:
    """(2/pi) sum (-1)^n |<n| D(-point) |state>|^2, evaluated directly.

    ``state`` is a FockVector or an oscillator density matrix.
    """
    beta = complex(point)
    rho = None
    if isinstance(state, FockVector):
        psi0 = state.amps[: _support(state.populations)]
        sup = psi0.size
    else:
        rho = np.asarray(state, dtype=complex)
        sup = _support(np.real(np.diag(rho)))
        rho = rho[:sup, :sup]
    m = int(max(sup + 10, 32, math.ceil(abs(beta) ** 2 + 8 * abs(beta) + 10)))
    while True:
        D = displacement_operator(-beta, m, check=False)[:, :sup]
        if rho is None:
            p = np.abs(D @ psi0) ** 2
            total = 1.0
        else:
            p = np.real(np.einsum("ij,jk,ik->i", D, rho, D.conj()))
            total = float(np.real(np.trace(rho)))
        if total - p.sum() <= loss_tol:
            return TWO_OVER_PI * float(np.sum(p * (-1.0) ** np.arange(m)))
        if 2 * m > max_dim:
            raise TruncationError(f"displaced state loses {total - p.sum():.2e} at dim {m}")
        m *= 2


def cat_wigner(alpha: complex, parity_sign: int, beta) -> np.ndarray:
    """Closed-form W of the normalized cat (|alpha> + s|-alpha>)."""
    a = complex(alpha)
    b = np.asarray(beta, dtype=complex)
    n2 = cat_normalization(a, parity_sign) ** 2
    g = np.exp(-2 * np.abs(b - a) ** 2) + np.exp(-2 * np.abs(b + a) ** 2)
    fringe = 2 * np.exp(-2 * np.abs(b) ** 2) * np.cos(4 * np.imag(b * np.conj(a)))
    return TWO_OVER_PI * n2 * (g + parity_sign * fringe)


def mixture_wigner(alpha: complex, beta) -> np.ndarray:
    """W of the equal mixture of |alpha> and |-alpha>."""
    a = complex(alpha)
    b = np.asarray(beta, dtype=complex)
    return TWO_OVER_PI * 0.5 * (np.exp(-2 * np.abs(b - a) ** 2) + np.exp(-2 * np.abs(b + a) ** 2))


def grid_points(re_values, im_values) -> tuple[np.ndarray, tuple]:
    """Row-major rectangular grid: rows follow Im, columns follow Re."""
    re_values = np.asarray(re_values, dtype=float)
    im_values = np.asarray(im_values, dtype=float)
    if re_values.size == 0 or im_values.size == 0:
        raise ValueError("grid axes must be non-empty")
    R, I = np.meshgrid(re_values, im_values)
    return (R + 1j * I).ravel(), (im_values.size, re_values.size)


def _state_populations(state, basis: ProbeBasis) -> PopulationVector:
    if isinstance(state, FockVector):
        return populations_in_basis(state, basis)
    return populations_from_density(state, basis)


def reconstruct_grid(state, points, r: float = 0.0, phi_s: float = 0.0, source: str = "oracle",
                     fit_config: dict | None = None, threads: int = 1, shape: tuple | None = None) -> WignerGrid:
    """W at each target phase point.

    source "oracle" evaluates the state directly; "simulated" goes through the
    exact populations of the squeezed-displaced basis that maps onto the target;
    "fitted" synthesizes a finite-shot trace in that basis and fits it with
    frozen decay (keys of ``fit_config``: omega, gamma, decay_kind, times,
    shots, n_levels, seed, eta, bootstrap). Failed points are left as NaN.
    """
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size == 0:
        raise ValueError("empty grid")
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}")
    cfg = dict(fit_config or {})

    def one(i):
        target = pts[i]
        try:
            if source == "oracle":
                return wigner_oracle(state, target), 0.0
            basis = ProbeBasis.displaced_squeezed(basis_point_for(target, r, phi_s), r, phi_s) if r > 0 \
                else ProbeBasis.displaced(target)
            pops = _state_populations(state, basis)
            if source == "simulated":
                _, W, _ = wigner_point_from_populations(pops)
                return W, 0.0
            return _fitted_point(pops, basis, cfg, i)
        except Exception:  # noqa: BLE001 - a failed point becomes a hole
            return float("nan"), float("nan")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, range(pts.size)))
    else:
        rows = [one(i) for i in range(pts.size)]
    W, sem = np.array(rows).T
    return WignerGrid(pts, W, np.nan_to_num(sem, nan=0.0), source, shape)


def _fitted_point(pops: PopulationVector, basis: ProbeBasis, cfg: dict, index: int):
    from .fit import FitOptions, default_n_levels, fit_populations
    from .spin import rabi_frequencies
    from .synth import DecayModel, sample_trace, trace_model

    omega = cfg.get("omega", 2 * math.pi * 31e3)
    decay = DecayModel(cfg.get("decay_kind", "exponential"), cfg.get("gamma", 0.0))
    times = np.asarray(cfg.get("times", np.linspace(0, 300e-6, 121)), dtype=float)
    eta = cfg.get("eta", 0.0)
    n_levels = cfg.get("n_levels") or default_n_levels(pops.p)
    p = np.zeros(n_levels)
    k = min(n_levels, pops.p.size)
    p[:k] = pops.p[:k]
    rabi = rabi_frequencies(basis, omega, eta, n_levels)
    values = trace_model(p, rabi, decay, times)
    trace = sample_trace(values, times, cfg.get("shots", 250), cfg.get("seed", 0) * 100003 + index,
                         basis, omega)
    opts = FitOptions(eta=eta, gamma=decay.gamma, bootstrap=cfg.get("bootstrap", 50), seed=index)
    est = fit_populations(trace, decay.kind, n_levels, opts)
    return TWO_OVER_PI * est.parity, TWO_OVER_PI * est.parity_sem


def fringe_model(x, A, alpha):
    return TWO_OVER_PI * A * np.exp(-2 * x ** 2) * np.cos(4 * alpha * x)


def fringe_fit(cut, alpha_guess: float, sem=None, span: float = 0.3) -> FringeFit:
    """Fit the fringe model to an imaginary-axis cut (WignerGrid or (x, W) pair).

    A coarse alpha scan with A solved linearly seeds a weighted nonlinear fit.
    """
    if isinstance(cut, WignerGrid):
        c = cut.axis_cut("im")
        x, W, s = c.points.imag, c.W, c.sem
    else:
        x, W = (np.asarray(v, dtype=float) for v in cut)
        s = np.zeros_like(x) if sem is None else np.broadcast_to(np.asarray(sem, dtype=float), x.shape)
    ok = np.isfinite(W)
    x, W, s = x[ok], W[ok], s[ok]
    if x.size < 3 or alpha_guess <= 0:
        raise ValueError("fringe fit needs >= 3 points and a positive alpha guess")
    period = math.pi / (2 * alpha_guess)
    aliased = bool(np.max(np.diff(np.sort(x))) > period / 4)
    weights = 1 / s if np.all(s > 0) else np.ones_like(x)
    best = None
    for a in np.linspace(alpha_guess * (1 - span), alpha_guess * (1 + span), 601):
        g = fringe_model(x, 1.0, a) * weights
        den = float(g @ g)
        A = float(g @ (W * weights)) / den if den > 0 else 0.0
        cost = float(np.sum((A * g - W * weights) ** 2))
        if best is None or cost < best[0]:
            best = (cost, A, a)
    _, A0, a0 = best
    sig = s if np.all(s > 0) else None
    try:
        popt, pcov = curve_fit(fringe_model, x, W, p0=(A0, a0), sigma=sig, absolute_sigma=sig is not None,
                               maxfev=20000)
        perr = np.sqrt(np.clip(np.diag(pcov), 0, None))
        if not np.all(np.isfinite(perr)):
            perr = np.zeros(2)
    except RuntimeError:
        popt, perr = np.array([A0, a0]), np.zeros(2)
    A, alpha = float(popt[0]), float(popt[1])
    if alpha < 0:
        alpha = -alpha
    resid = float(np.sqrt(np.mean((fringe_model(x, A, alpha) - W) ** 2)))
    return FringeFit(A, float(perr[0]), alpha, float(perr[1]), resid, aliased)


def zero_crossings(x, W) -> np.ndarray:
    """Linearly interpolated zeros of a sampled cut."""
    x = np.asarray(x, dtype=float)
    W = np.asarray(W, dtype=float)
    s = np.sign(W)
    i = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return x[i] - W[i] * (x[i + 1] - x[i]) / (W[i + 1] - W[i])

