"""Population, decay and Rabi-rate estimation from spin traces."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls

from .fock import PopulationVector, ProbeBasis, cat_state, populations_in_basis
from .spin import rabi_frequencies
from .synth import DecayModel, SpinTrace, carrier_period, design_matrix, find_revival, point_rng, revival_times

PRIOR_MASS = 0.999
GUARD_LEVELS = 4
CENTRAL_MASS = 0.90


class FitError(RuntimeError):
    """Outer optimizer failed to converge."""


class RevivalCoverageWarning(UserWarning):
    """Trace ends before the neighbour-level revival, so decay and parity are poorly separated."""


@dataclass
class FitOptions:
    """Knobs shared by the population and mixture fits.

    ``gamma`` or ``omega`` freeze that parameter. ``gamma_bounds`` is in units
    of 1/T_max (1/T_max^2 for the Gaussian forms).
    """

    eta: float = 0.0
    omega_prior: float | None = None
    omega_span: float = 0.10
    gamma: float | None = None
    omega: float | None = None
    gamma_bounds: tuple = (1e-3, 20.0)
    grid: int = 21
    strict_sum: bool = False
    bootstrap: int = 200
    bootstrap_refit: bool = True
    seed: int = 0
    threads: int = 1
    variant: str = "red"
    maxiter: int = 400


@dataclass
class PopulationEstimate:
    p: np.ndarray
    p_sem: np.ndarray
    omega_fit: float
    gamma_fit: float
    n_levels: int
    residual_rms: float
    parity_sem: float = 0.0
    omega_sem: float = 0.0
    gamma_sem: float = 0.0
    basis: ProbeBasis = field(default_factory=ProbeBasis)
    decay_kind: str = "exponential"
    ill_conditioned: bool = False
    covers_revival: bool = True

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0) or self.p.sum() > 1 + 1e-6:
            raise ValueError("estimate needs p >= 0 and sum(p) <= 1")

    @property
    def parity(self) -> float:
        return float(np.sum(self.p * (-1.0) ** np.arange(self.p.size)))

    @property
    def populations(self) -> PopulationVector:
        return PopulationVector(self.p / max(1.0, self.p.sum()), self.basis)


@dataclass
class MixtureEstimate:
    xi_mix: float
    xi_sem: float
    alpha_model: complex
    omega_fit: float
    gamma_fit: float
    residual_rms: float
    parity: float = 0.0
    parity_sem: float = 0.0

    def __post_init__(self):
        if not 0 <= self.xi_mix <= 1:
            raise ValueError("xi_mix must lie in [0, 1]")


def default_n_levels(prior) -> int:
    """Smallest n holding PRIOR_MASS of the prior populations, plus guard levels."""
    p = np.asarray(getattr(prior, "p", prior), dtype=float)
    c = np.cumsum(p)
    n = int(np.searchsorted(c, PRIOR_MASS * c[-1])) + 1
    return n + GUARD_LEVELS


def ill_conditioned(rabi: np.ndarray, t_max: float, p=None, mass: float = CENTRAL_MASS) -> bool:
    """True if adjacent cosine frequencies in the populated range are closer than 1/t_max.

    Frequencies are Omega_n / (4 pi) under the trace convention. The populated
    range is the central ``mass`` of the populations, so isolated noise-level
    entries far out in the tail do not trip the flag. Without populations
    every fitted level counts.
    """
    f = np.asarray(rabi, dtype=float) / (4 * math.pi)
    gaps = np.abs(np.diff(f))
    if p is None or np.sum(p) <= 0:
        return bool(np.any(gaps < 1.0 / t_max))
    q = np.asarray(p, dtype=float)[: f.size]
    c = np.cumsum(q) / q.sum()
    lo = int(np.searchsorted(c, (1 - mass) / 2))
    hi = int(np.searchsorted(c, (1 + mass) / 2))
    hi = min(max(hi, lo + 1), gaps.size)
    return bool(np.any(gaps[lo:hi] < 1.0 / t_max))


# -- inner linear problem ---------------------------------------------------------


def solve_populations(X: np.ndarray, y: np.ndarray, w: np.ndarray, strict: bool = False):
    """Weighted NNLS for p with sum(p) <= 1 (== 1 when ``strict``).

    The sum constraint is enforced through a heavily weighted extra row when
    the unconstrained solution violates it.
    """
    A = X * w[:, None]
    b = y * w
    p, _ = nnls(A, b, maxiter=50 * X.shape[1])
    if strict or p.sum() > 1:
        lam = 1e4 * max(1.0, float(np.linalg.norm(A, ord=2)))
        A2 = np.vstack([A, lam * np.ones((1, X.shape[1]))])
        b2 = np.append(b, lam)
        p, _ = nnls(A2, b2, maxiter=50 * X.shape[1])
        s = p.sum()
        if s > 1:
            p = p / s
    r = (X @ p - y) * w
    return p, float(r @ r)


class _Problem:
    # Separable least-squares problem in dimensionless outer variables
    # u = Omega / Omega_prior and v = ln(Gamma * T^k).

    def __init__(self, trace: SpinTrace, decay_kind: str, n_levels: int, opts: FitOptions, y=None):
        self.trace = trace
        self.t_max = float(trace.times.max())
        self.tau = trace.times / self.t_max  # the search runs in units of the probe window
        self.kind = decay_kind
        self.power = 1 if decay_kind == "exponential" else 2
        self.n_levels = n_levels
        self.opts = opts
        self.omega0 = opts.omega_prior or trace.omega_probe
        self.shape = rabi_frequencies(trace.basis, 1.0, opts.eta, n_levels)
        y = trace.p_down if y is None else y
        self.y = 1 - y if opts.variant == "blue" else y
        self.w = np.sqrt(trace.shots / trace.shots.mean())

    def omega(self, u):
        return self.omega0 * u if self.opts.omega is None else self.opts.omega

    def gamma(self, v):
        if self.opts.gamma is not None:
            return self.opts.gamma
        return math.exp(v) / self.t_max ** self.power

    def _scaled(self, u, v):
        # Rabi rate and decay constant in units of the probe window
        w = (self.omega0 * self.t_max) * u if self.opts.omega is None else self.opts.omega * self.t_max
        g = math.exp(v) if self.opts.gamma is None else self.opts.gamma * self.t_max ** self.power
        return w, g

    def design(self, u, v):
        w, g = self._scaled(u, v)
        return design_matrix(w * self.shape, DecayModel(self.kind, g), self.tau)

    def solve(self, u, v):
        return solve_populations(self.design(u, v), self.y, self.w, self.opts.strict_sum)

    def cost(self, x):
        return self.solve(*x)[1]

    def populations(self, x):
        return self.solve(*x)[0]

    def gradient(self, x):
        """d cost / d(u, v) with the inner solution held at its optimum (envelope theorem)."""
        u, v = x
        p = self.populations(x)
        w, g = self._scaled(u, v)
        ph = np.outer(self.tau, w * self.shape) / 2
        fac = DecayModel(self.kind, g).factors(self.tau, self.n_levels).T
        r = 2 * (design_matrix(w * self.shape, DecayModel(self.kind, g), self.tau) @ p - self.y) * self.w ** 2
        out = np.zeros(2)
        if self.opts.omega is None:
            out[0] = r @ ((0.5 * fac * np.sin(ph) * ph / u) @ p)
        if self.opts.gamma is None:
            expo = self.tau[:, None] ** self.power
            if self.kind == "gaussian_level_scaled":
                expo = expo * (np.arange(self.n_levels) + 1)[None, :]
            out[1] = r @ ((0.5 * np.cos(ph) * g * expo * fac) @ p)
        return out

    def free(self):
        return self.opts.omega is None, self.opts.gamma is None

    def bounds(self):
        s = self.opts.omega_span
        lo, hi = self.opts.gamma_bounds
        return [(1 - s, 1 + s), (math.log(lo), math.log(hi))]

    def grid(self):
        (ulo, uhi), (vlo, vhi) = self.bounds()
        fu, fv = self.free()
        us = np.linspace(ulo, uhi, self.opts.grid) if fu else np.array([1.0])
        vs = np.linspace(vlo, vhi, self.opts.grid) if fv else np.array([0.0])
        return [(u, v) for u in us for v in vs]


def _optimize(prob: _Problem, start=None, threads: int = 1):
    fu, fv = prob.free()
    if start is None:
        cells = prob.grid()
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                costs = list(ex.map(prob.cost, cells))
        else:
            costs = [prob.cost(c) for c in cells]
        start = cells[int(np.argmin(costs))]
    if not (fu or fv):
        return np.array(start, dtype=float)
    idx = [i for i, f in enumerate((fu, fv)) if f]
    x0 = np.array(start, dtype=float)
    bnds = [prob.bounds()[i] for i in idx]

    def f(z):
        x = x0.copy()
        x[idx] = z
        return prob.cost(x)

    res = minimize(f, x0[idx], method="Nelder-Mead", bounds=bnds,
                   options={"xatol": 1e-10, "fatol": 1e-14 * max(1.0, f(x0[idx])),
                            "maxiter": prob.opts.maxiter * len(idx), "adaptive": False})
    if not res.success and res.status != 2:
        raise FitError(f"outer optimizer stalled: {res.message}")
    x = x0.copy()
    x[idx] = res.x
    return _polish(prob, x, idx, bnds)


def _polish(prob: _Problem, x: np.ndarray, idx: list, bnds: list, steps: int = 6) -> np.ndarray:
    # Newton iterations on the analytic gradient. A simplex only locates a flat
    # minimum to about sqrt(machine eps); this takes it to rounding level.
    for _ in range(steps):
        act = [i for i, (lo, hi) in zip(idx, bnds) if lo + 1e-9 < x[i] < hi - 1e-9]
        if not act:
            break
        g = prob.gradient(x)[act]
        H = np.empty((len(act), len(act)))
        for j, i in enumerate(act):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            H[:, j] = (prob.gradient(xp)[act] - prob.gradient(xm)[act]) / (2 * h)
        H = 0.5 * (H + H.T)
        if np.any(np.linalg.eigvalsh(H) <= 0):
            break
        step = np.linalg.solve(H, g)
        if np.max(np.abs(step)) > 1e-3:
            break
        xn = x.copy()
        xn[act] -= step
        for i, (lo, hi) in zip(idx, bnds):
            xn[i] = min(max(xn[i], lo), hi)
        # near the minimum the cost change is below rounding, so progress is judged on the gradient
        if np.linalg.norm(prob.gradient(xn)[act]) >= np.linalg.norm(g):
            break
        x = xn
        if np.max(np.abs(step)) < 1e-14:
            break
    return x


def _bootstrap(prob: _Problem, fitted: np.ndarray, x: np.ndarray, extract, n_boot: int, seed: int,
               threads: int, refit: bool):
    shots = prob.trace.shots
    mu = np.clip(fitted, 0, 1)

    def one(k):
        rng = point_rng(seed, 1_000_000 + k)
        y = rng.binomial(shots, mu) / shots
        sub = _Problem(prob.trace, prob.kind, prob.n_levels, prob.opts, y=y)
        sub.shape = prob.shape
        xb = _optimize(sub, start=x) if refit else x
        return extract(sub, xb)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, range(n_boot)))
    return [one(k) for k in range(n_boot)]


def fit_populations(trace: SpinTrace, decay_kind: str = "exponential", n_levels: int | None = None,
                    options: FitOptions | None = None, prior=None) -> PopulationEstimate:
    """Separable fit of the trace model: NNLS for p inside a 2-D search over (Omega, Gamma).

    Errors come from a parametric bootstrap: binomial resampling at the fitted
    probabilities followed by a refit.
    """
    opts = options or FitOptions()
    if n_levels is None:
        if prior is None:
            raise ValueError("give n_levels or prior populations")
        n_levels = default_n_levels(prior)
    if len(trace) < 3 * n_levels:
        raise ValueError(f"{len(trace)} points cannot constrain {n_levels} levels (need >= {3 * n_levels})")
    prob = _Problem(trace, decay_kind, n_levels, opts)
    x = _optimize(prob, threads=opts.threads)
    X = prob.design(*x)
    p, cost = solve_populations(X, prob.y, prob.w, opts.strict_sum)
    model = X @ p
    fitted = 1 - model if opts.variant == "blue" else model
    resid = float(np.sqrt(np.mean((model - prob.y) ** 2)))
    omega, gamma = prob.omega(x[0]), prob.gamma(x[1])

    def extract(sub, xb):
        pb, _ = sub.solve(*xb)
        return np.concatenate([pb, [sub.omega(xb[0]), sub.gamma(xb[1])]])

    if opts.bootstrap > 1:
        boots = np.array(_bootstrap(prob, fitted, x, extract, opts.bootstrap, opts.seed, opts.threads,
                                    opts.bootstrap_refit))
        pb = boots[:, :n_levels]
        p_sem = pb.std(axis=0, ddof=1)
        par_sem = float(np.std(pb @ (-1.0) ** np.arange(n_levels), ddof=1))
        om_sem, g_sem = boots[:, n_levels:].std(axis=0, ddof=1)
    else:
        p_sem = np.zeros(n_levels)
        par_sem = om_sem = g_sem = 0.0
    n_bar = float(np.dot(np.arange(n_levels), p) / max(p.sum(), 1e-300))
    t_mix = revival_times(n_bar, omega)["t_mix"]
    covers = prob.t_max >= t_mix
    if not covers:
        warnings.warn(f"trace ends at {prob.t_max * 1e6:.1f} us, before the neighbour-level revival at "
                      f"{t_mix * 1e6:.1f} us; parity and decay are not separately constrained",
                      RevivalCoverageWarning, stacklevel=2)
    return PopulationEstimate(p, p_sem, omega, gamma, n_levels, resid, par_sem, float(om_sem), float(g_sem),
                              trace.basis, decay_kind, ill_conditioned(omega * prob.shape, prob.t_max, p),
                              covers)


def fit_mixture(trace: SpinTrace, alpha_model: complex, decay_kind: str = "exponential",
                n_levels: int | None = None, options: FitOptions | None = None) -> MixtureEstimate:
    """Fit xi in p = xi p_minus + (1 - xi) p_plus, with Omega and Gamma as in fit_populations."""
    opts = options or FitOptions()
    basis = trace.basis
    pm = populations_in_basis(cat_state(alpha_model, -1), basis).p
    pp = populations_in_basis(cat_state(alpha_model, +1), basis).p
    if n_levels is None:
        n_levels = default_n_levels(0.5 * (_pad(pm, pp.size) + _pad(pp, pm.size)))
    pm, pp = _pad(pm, n_levels), _pad(pp, n_levels)
    prob = _Problem(trace, decay_kind, n_levels, opts)

    def xi_solve(sub, x):
        X = sub.design(*x)
        base = X @ pp
        d = X @ (pm - pp)
        wd = d * sub.w
        den = float(wd @ wd)
        xi = float(np.clip(wd @ ((sub.y - base) * sub.w) / den, 0, 1)) if den > 0 else 0.5
        r = (base + xi * d - sub.y) * sub.w
        return xi, float(r @ r), base + xi * d

    prob.cost = lambda x: xi_solve(prob, x)[1]
    prob.populations = lambda x: pp + xi_solve(prob, x)[0] * (pm - pp)
    x = _optimize(prob, threads=opts.threads)
    xi, _, model = xi_solve(prob, x)
    fitted = 1 - model if opts.variant == "blue" else model
    resid = float(np.sqrt(np.mean((model - prob.y) ** 2)))

    def extract(sub, xb):
        sub.cost = lambda z: xi_solve(sub, z)[1]
        sub.populations = lambda z: pp + xi_solve(sub, z)[0] * (pm - pp)
        if opts.bootstrap_refit:
            xb = _optimize(sub, start=xb)
        return xi_solve(sub, xb)[0]

    xi_sem = 0.0
    if opts.bootstrap > 1:
        boots = np.array(_bootstrap(prob, fitted, x, extract, opts.bootstrap, opts.seed, opts.threads, False))
        xi_sem = float(boots.std(ddof=1))
    sign = (-1.0) ** np.arange(n_levels)
    par_m, par_p = float(pm @ sign), float(pp @ sign)
    par = xi * par_m + (1 - xi) * par_p
    return MixtureEstimate(xi, xi_sem, complex(alpha_model), prob.omega(x[0]), prob.gamma(x[1]), resid, par,
                           abs(par_m - par_p) * xi_sem)


def _pad(p: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    k = min(n, p.size)
    out[:k] = p[:k]
    return out


def cat_prior(alpha: complex, basis: ProbeBasis) -> np.ndarray:
    """Even plus odd cat populations in ``basis``; sets the level count for either parity."""
    pe = populations_in_basis(cat_state(alpha, +1), basis).p
    po = populations_in_basis(cat_state(alpha, -1), basis).p
    n = max(pe.size, po.size)
    return np.pad(pe, (0, n - pe.size)) + np.pad(po, (0, n - po.size))


def revival_cycles(trace: SpinTrace, est: PopulationEstimate) -> dict:
    """Fitted mean level, and where the trace covers it, the cat revival in carrier periods.

    Everything is taken from the fit (mean level, Rabi rate), not from any known truth.
    """
    n_bar = float(np.dot(np.arange(est.n_levels), est.p) / max(est.p.sum(), 1e-300))
    out = {"n_bar_fit": n_bar}
    period = carrier_period(n_bar, est.omega_fit)
    t_cat = revival_times(n_bar, est.omega_fit)["t_cat"]
    if trace.times.max() >= t_cat * 1.1:
        t_rev = find_revival(trace.times, trace.p_down, t_cat, period)
        out.update({"revival_us": t_rev * 1e6, "revival_cycles": t_rev / period})
    return out


def parity_report(est) -> str:
    """One-line parity summary, e.g. 'parity = -0.880 +/- 0.040 (12 levels, ...)'."""
    if isinstance(est, MixtureEstimate):
        return (f"parity = {est.parity:.3f} +/- {est.parity_sem:.3f} (mixture fit, xi = {est.xi_mix:.3f} "
                f"+/- {est.xi_sem:.3f})")
    if est is None or np.size(est.p) == 0:
        raise ValueError("empty estimate")
    flag = ", ill-conditioned" if est.ill_conditioned else ""
    return (f"parity = {est.parity:.3f} +/- {est.parity_sem:.3f} ({est.n_levels} levels, "
            f"omega/2pi = {est.omega_fit / (2 * math.pi) * 1e-3:.3f} kHz, gamma = {est.gamma_fit:.4g}, "
            f"rms = {est.residual_rms:.4f}{flag})")
