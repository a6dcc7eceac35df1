"""Synthetic heralded sequences and finite-shot spin traces."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import brentq
from scipy.stats import poisson

from .fock import (FockVector, PopulationVector, ProbeBasis, default_n_max, parity,
                   populations_from_density)
from .open_system import heat_density
from .spin import (DecoherenceSpec, HamiltonianSpec, Propagator, SpinFockState, build_hamiltonian,
                   carrier_pi, probe_hamiltonian, rabi_frequencies, sdf_alpha)

DECAY_KINDS = ("exponential", "gaussian", "gaussian_level_scaled")
DETECT_TIME = 75e-6


@dataclass
class SpinTrace:
    """Measured P(down) against probe time, with the shot count behind each point."""

    times: np.ndarray
    p_down: np.ndarray
    shots: np.ndarray
    basis: ProbeBasis = field(default_factory=ProbeBasis)
    omega_probe: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_down = np.asarray(self.p_down, dtype=float)
        self.shots = np.asarray(self.shots, dtype=np.int64)
        if not (self.times.shape == self.p_down.shape == self.shots.shape) or self.times.ndim != 1:
            raise ValueError("times, p_down and shots must be equal-length 1-D arrays")
        if np.any(self.shots < 1):
            raise ValueError("every point needs shots >= 1")
        if np.any((self.p_down < 0) | (self.p_down > 1)):
            raise ValueError("p_down must lie in [0, 1]")
        if self.omega_probe <= 0:
            raise ValueError("omega_probe must be > 0")

    def __len__(self):
        return self.times.size

    @property
    def sem(self) -> np.ndarray:
        p = self.p_down
        return np.sqrt(p * (1 - p) / self.shots)

    def truncated(self, t_max: float) -> "SpinTrace":
        keep = self.times <= t_max
        return SpinTrace(self.times[keep], self.p_down[keep], self.shots[keep], self.basis,
                         self.omega_probe, dict(self.metadata))


@dataclass(frozen=True)
class DecayModel:
    """gamma_n(t): exp(-G t), exp(-G t^2) or exp(-G (n+1) t^2)."""

    kind: str = "exponential"
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in DECAY_KINDS:
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")

    def factors(self, times, n_levels: int) -> np.ndarray:
        """(n_levels, n_times) array of decay factors."""
        t = np.asarray(times, dtype=float)[None, :]
        if self.kind == "exponential":
            f = np.exp(-self.gamma * t)
        elif self.kind == "gaussian":
            f = np.exp(-self.gamma * t ** 2)
        else:
            n = np.arange(n_levels)[:, None]
            return np.exp(-self.gamma * (n + 1) * t ** 2)
        return np.broadcast_to(f, (n_levels, t.size))

    def with_gamma(self, gamma: float) -> "DecayModel":
        return DecayModel(self.kind, gamma)


def design_matrix(rabi, decay: DecayModel, times) -> np.ndarray:
    """X[t, n] = (1 - gamma_n(t) cos(Omega_n t / 2)) / 2, so P(down) = X @ p."""
    rabi = np.asarray(rabi, dtype=float)
    times = np.asarray(times, dtype=float)
    g = decay.factors(times, rabi.size)
    return 0.5 * (1 - (g * np.cos(np.outer(rabi, times) / 2)).T)


def trace_model(populations, rabi, decay: DecayModel, times, variant: str = "red") -> np.ndarray:
    """P(down, t) = sum_n p_n (1 - gamma(t) cos(Omega_{n,n+1} t / 2)) / 2.

    ``variant="blue"`` returns 1 - P for a repumped spin probed on the blue
    sideband.
    """
    p = np.asarray(getattr(populations, "p", populations), dtype=float)
    if p.sum() > 1 + 1e-9:
        raise ValueError("populations sum above 1")
    rabi = np.asarray(rabi, dtype=float)
    if rabi.size < p.size:
        raise ValueError(f"need {p.size} Rabi rates, got {rabi.size}")
    P = design_matrix(rabi[: p.size], decay, times) @ p
    if variant == "blue":
        P = 1 - P
    elif variant != "red":
        raise ValueError("variant must be 'red' or 'blue'")
    return np.clip(P, 0.0, 1.0)


def down_start_model(populations, rabi, decay: DecayModel, times) -> np.ndarray:
    """P(down, t) under the red-sideband probe when the spin starts in down.

    Level n >= 1 flops with the n-1 -> n rate; |down, 0> is dark.
    """
    p = np.asarray(getattr(populations, "p", populations), dtype=float)
    rabi = np.asarray(rabi, dtype=float)
    out = np.full(np.size(times), p[0] if p.size else 0.0)
    if p.size > 1:
        X = design_matrix(rabi[: p.size - 1], decay, times)
        out = out + (1 - X) @ p[1:]
    return np.clip(out, 0.0, 1.0)


def revival_times(n_bar: float, omega: float) -> dict:
    """Neighbour-level (t_mix) and next-neighbour (t_cat) rephasing times."""
    if n_bar < 0 or omega <= 0:
        raise ValueError("need n_bar >= 0 and omega > 0")
    t_mix = 4 * math.pi / (omega * (math.sqrt(n_bar + 1) - math.sqrt(n_bar)))
    t_cat = 4 * math.pi / (omega * (math.sqrt(n_bar + 2) - math.sqrt(n_bar)))
    return {"t_mix": t_mix, "t_cat": t_cat}


def carrier_period(n_bar: float, omega: float) -> float:
    """Oscillation period of the mean level under the trace convention."""
    return 4 * math.pi / (omega * math.sqrt(n_bar + 1))


def envelope(times, values, period: float, baseline=None):
    """Deviation |P - baseline| smoothed over one carrier period, on a uniform grid.

    Without an explicit baseline the mean of the whole trace is used, which
    approaches sum(p)/2 once the oscillations have collapsed.
    """
    times = np.asarray(times, dtype=float)
    dt = float(np.min(np.diff(times)))
    grid = np.arange(times[0], times[-1] + dt / 2, dt)
    v = np.interp(grid, times, np.asarray(values, dtype=float))
    w = max(1, int(round(period / dt)))
    base = float(np.mean(v)) if baseline is None else baseline
    return grid, uniform_filter1d(np.abs(v - base), w, mode="nearest")


def find_revival(times, values, guess: float, period: float, window: float = 0.25,
                 baseline=None) -> float:
    """Revival time near ``guess``: envelope maximum refined by a parabola through three points."""
    grid, env = envelope(times, values, period, baseline)
    sel = np.nonzero((grid >= guess * (1 - window)) & (grid <= guess * (1 + window)))[0]
    if sel.size < 3:
        raise ValueError("revival window is not covered by the trace")
    k = sel[np.argmax(env[sel])]
    if 0 < k < grid.size - 1:
        y0, y1, y2 = env[k - 1], env[k], env[k + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            return float(grid[k] + 0.5 * (y0 - y2) / den * (grid[1] - grid[0]))
    return float(grid[k])


# -- sampling -----------------------------------------------------------------


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for trace point ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_trace(values, times, shots, seed: int, basis: ProbeBasis | None = None,
                 omega_probe: float = 1.0, metadata: dict | None = None) -> SpinTrace:
    """Binomial projection noise on model values, one RNG stream per point."""
    values = np.asarray(values, dtype=float)
    shots = np.broadcast_to(np.asarray(shots, dtype=np.int64), values.shape)
    if np.any(shots < 1):
        raise ValueError("shots must be >= 1")
    counts = np.array([point_rng(seed, i).binomial(int(n), float(v))
                       for i, (n, v) in enumerate(zip(shots, values))], dtype=np.int64)
    return SpinTrace(times, counts / shots, shots.copy(), basis or ProbeBasis(), omega_probe,
                     dict(metadata or {}))


# -- heralding ----------------------------------------------------------------


@dataclass(frozen=True)
class HeraldModel:
    """Photon-count discrimination: up is declared when the count is <= threshold.

    ``threshold = -1`` declares everything down.
    """

    bright_mean: float
    dark_mean: float
    threshold: int = 1
    detect_time: float = DETECT_TIME

    def __post_init__(self):
        if self.dark_mean < 0 or self.threshold < -1 or self.detect_time < 0:
            raise ValueError("need dark_mean >= 0, threshold >= -1, detect_time >= 0")
        if not self.bright_mean > max(self.threshold, self.dark_mean):
            raise ValueError("bright_mean must exceed both the threshold and dark_mean")

    @property
    def p_down_as_up(self) -> float:
        return float(poisson.cdf(self.threshold, self.bright_mean)) if self.threshold >= 0 else 0.0

    @property
    def p_up_as_down(self) -> float:
        return float(poisson.sf(self.threshold, self.dark_mean)) if self.threshold >= 0 else 1.0

    def to_dict(self) -> dict:
        return {"bright_mean": self.bright_mean, "dark_mean": self.dark_mean,
                "threshold": self.threshold, "detect_time": self.detect_time}

    @classmethod
    def from_dict(cls, d: dict) -> "HeraldModel":
        unknown = set(d) - {"bright_mean", "dark_mean", "threshold", "detect_time"}
        if unknown:
            raise ValueError(f"unknown herald keys {sorted(unknown)}")
        return cls(**d)


def calibrate_herald(p_down_as_up: float = 0.008, p_up_as_down: float = 2e-5, threshold: int = 1,
                     detect_time: float = DETECT_TIME) -> HeraldModel:
    """Poisson means that reproduce the two misdeclaration rates at ``threshold``."""
    if threshold < 0:
        raise ValueError("calibration needs threshold >= 0")
    bright = brentq(lambda m: poisson.cdf(threshold, m) - p_down_as_up, threshold + 1e-9, 1e3)
    dark = brentq(lambda m: poisson.sf(threshold, m) - p_up_as_down, 1e-12, threshold + 1.0)
    return HeraldModel(float(bright), float(dark), threshold, detect_time)


def herald_detection(spin_is_up: bool, model: HeraldModel, seed) -> dict:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = int(rng.poisson(model.dark_mean if spin_is_up else model.bright_mean))
    return {"counted_photons": count, "declared_up": count <= model.threshold}


# -- full sequence --------------------------------------------------------------

BRANCHES = ("minus", "plus", "mixture")


@dataclass
class SequenceConfig:
    """One synthetic data set: cat creation, herald, optional heating, probe trace.

    ``branch``: "minus" heralds up directly, "plus" flips the spin first,
    "mixture" repumps and probes on the blue sideband. ``herald=None`` is an
    error-free herald. ``probe="hamiltonian"`` replaces the closed-form trace
    by evolution under the probe Hamiltonian, damped by ``decay``.
    """

    alpha: complex = 3.0
    branch: str = "minus"
    basis: ProbeBasis = field(default_factory=ProbeBasis)
    omega_probe: float = 2 * math.pi * 31e3
    eta: float = 0.0
    decay: DecayModel = field(default_factory=DecayModel)
    times: np.ndarray = field(default_factory=lambda: np.linspace(0, 450e-6, 121))
    sequences: int = 250
    herald: HeraldModel | None = None
    decoherence: DecoherenceSpec = field(default_factory=DecoherenceSpec)
    sdf_omega: float = 2 * math.pi * 50e3
    probe: str = "model"
    n_max: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.alpha = complex(self.alpha)
        self.times = np.asarray(self.times, dtype=float)
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}")
        if self.probe not in ("model", "hamiltonian"):
            raise ValueError("probe must be 'model' or 'hamiltonian'")
        if self.sequences < 1:
            raise ValueError("sequences must be >= 1")
        if self.times.ndim != 1 or self.times.size == 0 or np.any(self.times < 0):
            raise ValueError("times must be a non-empty list of non-negative values")
        if self.omega_probe <= 0 or self.sdf_omega <= 0:
            raise ValueError("Rabi rates must be > 0")


@dataclass
class SequenceResult:
    trace: SpinTrace
    populations: PopulationVector
    model: np.ndarray
    metadata: dict


def _prepare(cfg: SequenceConfig, n_max: int) -> SpinFockState:
    sdf = HamiltonianSpec("sdf", cfg.sdf_omega, phase=float(np.angle(1j * cfg.alpha)))
    H = build_hamiltonian(sdf, n_max)
    t = 2 * abs(cfg.alpha) / cfg.sdf_omega
    ground = np.zeros(2 * n_max, dtype=complex)
    ground[0] = 1.0
    state = SpinFockState.from_vector(Propagator(H).apply(ground, t))
    assert abs(sdf_alpha(cfg.sdf_omega, t, sdf.phase) - cfg.alpha) < 1e-9 * max(1.0, abs(cfg.alpha))
    return carrier_pi(state) if cfg.branch == "plus" else state


def _decohere(rho: np.ndarray, cfg: SequenceConfig, window: float) -> np.ndarray:
    if cfg.decoherence.is_zero or window <= 0:
        return rho
    return heat_density(rho, cfg.decoherence, window)


def _hamiltonian_trace(rho: np.ndarray, cfg: SequenceConfig, start: str, n_levels: int) -> np.ndarray:
    # P(down, t) from the probe Hamiltonian acting on the motional state rho in the lab basis.
    # Squeezed ladders reach number states near n cosh 2r, so the space is padded.
    m = rho.shape[0]
    if cfg.basis.is_squeezed:
        m = max(m, int(2 * (n_levels + 10) * math.cosh(2 * cfg.basis.r)))
        pad = np.zeros((m, m), dtype=complex)
        pad[: rho.shape[0], : rho.shape[0]] = rho
        rho = pad
    if cfg.branch == "mixture":
        spec = HamiltonianSpec("blue", cfg.omega_probe / 2, cfg.eta)
    else:
        spec = probe_hamiltonian(cfg.basis, cfg.omega_probe, cfg.eta)
    H = build_hamiltonian(spec, m)
    E, V = np.linalg.eigh(H)
    s = 1 if start == "up" else 0
    R = np.zeros((2 * m, 2 * m), dtype=complex)
    R[s * m:(s + 1) * m, s * m:(s + 1) * m] = rho
    Rt = V.conj().T @ R @ V
    Pd = V[:m].conj().T @ V[:m]  # projector on spin down, eigenbasis
    out = np.empty(cfg.times.size)
    for i, t in enumerate(cfg.times):
        ph = np.exp(-1j * E * t)
        out[i] = np.real(np.sum(Pd.T * (ph[:, None] * Rt * ph.conj()[None, :])))
    return out


def _branch_trace(rho: np.ndarray, cfg: SequenceConfig, start: str):
    pops = populations_from_density(rho, cfg.basis)
    p = pops.p
    rabi = rabi_frequencies(cfg.basis, cfg.omega_probe, cfg.eta, p.size + 1)
    if cfg.probe == "hamiltonian":
        if cfg.decay.kind == "gaussian_level_scaled":
            raise ValueError("Hamiltonian probe supports only level-independent decay")
        raw = _hamiltonian_trace(rho, cfg, start, p.size)
        g = cfg.decay.factors(cfg.times, 1)[0]
        if cfg.branch == "mixture":
            centre = 1 - 0.5 * p.sum()
        elif start == "up":
            centre = 0.5 * p.sum()
        else:
            centre = 0.5 * (p.sum() + p[0])
        return pops, np.clip(centre + g * (raw - centre), 0, 1)
    if cfg.branch == "mixture":
        return pops, trace_model(pops, rabi, cfg.decay, cfg.times, variant="blue")
    if start == "up":
        return pops, trace_model(pops, rabi, cfg.decay, cfg.times)
    return pops, down_start_model(pops, rabi, cfg.decay, cfg.times)


def _sample_point(i, cfg: SequenceConfig, p_up: float, P_true: float, P_false: float, herald):
    rng = point_rng(cfg.seed, i)
    if herald is None and cfg.branch == "mixture":
        n = cfg.sequences
        return n, n, 0, int(rng.binomial(n, P_true))
    total = acc_true = acc_false = 0
    while acc_true + acc_false == 0:
        n = cfg.sequences
        true_up = rng.random(n) < p_up
        if herald is None:
            declared_up = true_up
        else:
            counts = rng.poisson(np.where(true_up, herald.dark_mean, herald.bright_mean))
            declared_up = counts <= herald.threshold
        total += n
        acc_true += int(np.sum(declared_up & true_up))
        acc_false += int(np.sum(declared_up & ~true_up))
    k = int(rng.binomial(acc_true, P_true)) if acc_true else 0
    if acc_false:
        k += int(rng.binomial(acc_false, P_false))
    return total, acc_true + acc_false, acc_false, k


def run_full_sequence(cfg: SequenceConfig) -> SequenceResult:
    """Ground state -> state-dependent force -> (flip) -> herald -> probe trace.

    Each trace point repeats ``cfg.sequences`` full sequences; rejected ones
    are dropped, and if none survive the batch is repeated.
    """
    n_max = cfg.n_max or default_n_max(cfg.alpha)
    state = _prepare(cfg, n_max)
    up, down = state.up, state.down
    p_up = float(np.vdot(up, up).real)
    window = cfg.herald.detect_time if cfg.herald is not None else DETECT_TIME
    if cfg.branch == "mixture":
        rho = np.outer(up, up.conj()) + np.outer(down, down.conj())
        rho_true = _decohere(rho, cfg, window)
        pops, P_true = _branch_trace(rho_true, cfg, "down")
        rho_false, P_false = None, np.zeros_like(P_true)
    else:
        rho_true = _decohere(np.outer(up, up.conj()) / p_up, cfg, window)
        pops, P_true = _branch_trace(rho_true, cfg, "up")
        rho_false = _decohere(np.outer(down, down.conj()) / (1 - p_up), cfg, window)
        P_false = _branch_trace(rho_false, cfg, "down")[1]
    herald = cfg.herald
    if herald is not None and cfg.branch == "mixture":
        herald = None

    def one(i):
        return _sample_point(i, cfg, p_up, float(P_true[i]), float(P_false[i]), herald)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            rows = list(ex.map(one, range(cfg.times.size)))
    else:
        rows = [one(i) for i in range(cfg.times.size)]
    rows = np.array(rows, dtype=np.int64)
    total, shots, false_acc, k = rows.T
    if herald is None:
        w_false = 0.0
    else:
        a_true = p_up * (1 - herald.p_up_as_down)
        a_false = (1 - p_up) * herald.p_down_as_up
        w_false = a_false / (a_true + a_false)
    model = (1 - w_false) * P_true + w_false * P_false
    meta = {
        "alpha": cfg.alpha,
        "branch": cfg.branch,
        "branch_probability": p_up if cfg.branch != "mixture" else 1.0,
        "acceptance_rate": float(shots.sum() / total.sum()),
        "sequences_run": int(total.sum()),
        "false_herald_fraction": float(false_acc.sum() / shots.sum()),
        "true_populations": pops.p.copy(),
        "true_parity": parity(pops),
        "n_max": n_max,
        "seed": cfg.seed,
    }
    trace = SpinTrace(cfg.times, k / shots, shots, cfg.basis, cfg.omega_probe,
                      {"branch": cfg.branch, "eta": cfg.eta})
    return SequenceResult(trace, pops, model, meta)


def ideal_branch_state(alpha: complex, branch: str, n_max: int | None = None) -> FockVector:
    """Motional state of a perfectly heralded branch (odd cat for "minus", even for "plus")."""
    from .fock import cat_state

    if branch == "minus":
        return cat_state(alpha, -1, n_max)
    if branch == "plus":
        return cat_state(alpha, +1, n_max)
    raise ValueError("pure branch must be 'minus' or 'plus'")
