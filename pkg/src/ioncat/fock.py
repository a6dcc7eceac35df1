"""Truncated Fock-space numerics for a single bosonic mode.

States are dense complex amplitude vectors over ``|0>, ..., |N-1>``; operators
are dense ``N x N`` numpy arrays. Displacement and squeeze operators have two
independent constructions (closed-form recurrences and a matrix exponential
of the truncated generator) that serve as oracles for each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, roots_hermite

NORM_TOL = 1e-10
TAIL_TOL = 1e-8
TAIL_WIDTH = 5
UNITARY_TOL = 1e-8
MAX_SQUEEZE_R = 1.5


class TruncationError(ValueError):
    """Raised when a truncated Fock space cannot represent a state or operator."""


def default_n_max(alpha: complex = 0.0, r: float = 0.0) -> int:
    """Truncation size that keeps the tail-mass invariant up to |alpha| of about 8 with 1.5 squeezing."""
    a = abs(alpha)
    n = math.ceil(a * a + 8 * a + 30)
    if r > 0.5:
        n *= 2
    return n


def db_to_r(db: float) -> float:
    """Squeeze parameter for a squeezing level in dB (dB = 10 log10 e^{2r})."""
    return db * math.log(10) / 20


def r_to_db(r: float) -> float:
    return 20 * r / math.log(10)


def annihilation(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max, dtype=float)), 1).astype(complex)


def number_op(n_max: int) -> np.ndarray:
    return np.diag(np.arange(n_max, dtype=float)).astype(complex)


def parity_op(n_max: int) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(n_max)).astype(complex)


@dataclass(frozen=True)
class FockVector:
    """Pure oscillator state over a truncated number basis."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.array(self.amps, dtype=complex)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("amplitudes must be a non-empty 1-D array")
        if abs(np.vdot(a, a).real - 1) > NORM_TOL:
            raise ValueError("amplitudes are not normalized; use normalized()")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def dim(self) -> int:
        return self.amps.size

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.populations)))

    def tail_mass(self, width: int = TAIL_WIDTH) -> float:
        return float(np.sum(self.populations[max(self.dim - width, 0):]))

    def mean_n(self) -> float:
        return float(np.dot(np.arange(self.dim), self.populations))

    def padded(self, n_max: int) -> "FockVector":
        if n_max < self.dim:
            if np.sum(self.populations[n_max:]) > TAIL_TOL:
                raise TruncationError(f"cannot shrink state to dim {n_max}")
            return normalized(self.amps[:n_max], check_tail=False)
        out = np.zeros(n_max, dtype=complex)
        out[: self.dim] = self.amps
        return FockVector(out)

    def overlap(self, other: "FockVector") -> complex:
        n = max(self.dim, other.dim)
        return complex(np.vdot(self.padded(n).amps, other.padded(n).amps))

    def fidelity(self, other: "FockVector") -> float:
        return abs(self.overlap(other)) ** 2


def normalized(amps, check_tail: bool = True) -> FockVector:
    """Normalize ``amps`` and enforce the tail-mass invariant."""
    a = np.asarray(amps, dtype=complex)
    nrm = np.linalg.norm(a)
    if nrm == 0:
        raise ValueError("zero vector cannot be normalized")
    v = FockVector(a / nrm)
    if check_tail and v.tail_mass() >= TAIL_TOL:
        raise TruncationError(
            f"tail mass {v.tail_mass():.3g} in the top {TAIL_WIDTH} levels of a "
            f"dim-{v.dim} space; increase n_max"
        )
    return v


def fock_state(n: int, n_max: int) -> FockVector:
    if not 0 <= n < n_max:
        raise ValueError("level outside truncated space")
    a = np.zeros(n_max, dtype=complex)
    a[n] = 1.0
    return FockVector(a)


def _coherent_amps(alpha: complex, n_max: int) -> np.ndarray:
    n = np.arange(n_max)
    if alpha == 0:
        a = np.zeros(n_max, dtype=complex)
        a[0] = 1.0
        return a
    logmag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, n_max: int | None = None) -> FockVector:
    if n_max is None:
        n_max = default_n_max(alpha)
    return normalized(_coherent_amps(complex(alpha), n_max))


def cat_state(alpha: complex, parity_sign: int | str, n_max: int | None = None) -> FockVector:
    """Even (+) or odd (-) superposition of ``|alpha>`` and ``|-alpha>``."""
    sign = _sign(parity_sign)
    if n_max is None:
        n_max = default_n_max(alpha)
    c = _coherent_amps(complex(alpha), n_max)
    n = np.arange(n_max)
    return normalized(c * (1 + sign * (-1.0) ** n))


def _sign(parity_sign) -> int:
    if parity_sign in (1, "+", "even", "plus"):
        return 1
    if parity_sign in (-1, "-", "odd", "minus"):
        return -1
    raise ValueError(f"parity sign must be + or -, got {parity_sign!r}")


def cat_normalization(alpha: complex, parity_sign) -> float:
    """Normalization of (|a> +- |-a>): 1/sqrt(2(1 +- e^{-2|a|^2}))."""
    sign = _sign(parity_sign)
    return 1 / math.sqrt(2 * (1 + sign * math.exp(-2 * abs(alpha) ** 2)))


# -- displacement -----------------------------------------------------------


def _displacement_closed(beta: complex, n_max: int) -> np.ndarray:
    # Lower triangle D[j+k, j] = beta^k e^{-x/2} sqrt(j!/(j+k)!) L_j^(k)(x) with the
    # Laguerre factor carried as U_j^(k) = sqrt(j! k!/(j+k)!) L_j^(k)(x), which obeys
    # a well-scaled three-term recurrence in j.
    x = abs(beta) ** 2
    k = np.arange(n_max, dtype=float)
    if beta == 0:
        return np.eye(n_max, dtype=complex)
    logpref = k * math.log(abs(beta)) - 0.5 * gammaln(k + 1) - x / 2
    pref = np.exp(logpref) * np.exp(1j * k * np.angle(beta))
    D = np.zeros((n_max, n_max), dtype=complex)
    u_prev = np.zeros(n_max)
    u = np.ones(n_max)
    for j in range(n_max):
        kk = np.arange(n_max - j)
        D[j + kk, j] = pref[: n_max - j] * u[: n_max - j]
        kf = k[: n_max - j - 1]
        nxt = ((2 * j + 1 + kf - x) * u[: n_max - j - 1]
               - math.sqrt(j) * np.sqrt(j + kf) * u_prev[: n_max - j - 1]) / (
            np.sqrt((j + 1) * (j + 1 + kf)))
        u_prev, u = u[: n_max - j - 1], nxt
    iu = np.triu_indices(n_max, 1)
    kdiff = iu[1] - iu[0]
    D[iu] = (-1.0) ** kdiff * np.conj(D[iu[1], iu[0]])
    return D


def _displacement_expm(beta: complex, n_max: int) -> np.ndarray:
    a = annihilation(n_max)
    return expm(beta * a.conj().T - np.conj(beta) * a)


@lru_cache(maxsize=64)
def _displacement_cached(beta: complex, n_max: int, method: str) -> np.ndarray:
    D = _displacement_closed(beta, n_max) if method == "closed" else _displacement_expm(beta, n_max)
    D.setflags(write=False)
    return D


def displacement_operator(beta: complex, n_max: int, method: str = "closed",
                          check: bool = True) -> np.ndarray:
    """Matrix of D(beta) = exp(beta a^+ - beta^* a) in a dim-``n_max`` space.

    ``method="closed"`` gives the exact matrix elements (Laguerre form);
    ``method="expm"`` exponentiates the truncated generator. Raises
    TruncationError if the operator is not unitary to 1e-8 on the block
    ``n < n_max/2``.
    """
    if method not in ("closed", "expm"):
        raise ValueError(f"unknown method {method!r}")
    D = _displacement_cached(complex(beta), int(n_max), method)
    if check:
        _check_unitary_block(D, f"displacement |beta|={abs(beta):.3g}")
    return D


def displacement_element(m: int, n: int, beta: complex) -> complex:
    """Single matrix element <m|D(beta)|n>, evaluated in log space."""
    if m < n:
        return (-1) ** (n - m) * np.conj(displacement_element(n, m, beta))
    k = m - n
    x = abs(beta) ** 2
    if beta == 0:
        return 1.0 + 0j if k == 0 else 0j
    u_prev, u = 0.0, 1.0
    for j in range(n):
        u_prev, u = u, ((2 * j + 1 + k - x) * u - math.sqrt(j * (j + k)) * u_prev) / math.sqrt(
            (j + 1) * (j + 1 + k))
    logpref = k * math.log(abs(beta)) - 0.5 * math.lgamma(k + 1) - x / 2
    return complex(math.exp(logpref) * u * np.exp(1j * k * np.angle(beta)))


# -- squeezing ---------------------------------------------------------------


def _squeezed_vacuum_amps(r: float, phi: float, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=complex)
    if r == 0:
        out[0] = 1.0
        return out
    m = np.arange((size + 1) // 2)
    t = math.tanh(r)
    logmag = (-0.5 * math.log(math.cosh(r)) + m * math.log(t)
              + 0.5 * gammaln(2 * m + 1) - m * math.log(2) - gammaln(m + 1))
    out[2 * m] = np.exp(logmag) * (-np.exp(1j * phi)) ** m
    return out


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized oscillator eigenfunctions psi_n(x), n < n_max, as rows.

    The recurrence runs on e^{x^2/2} psi_n with a per-point log scale so large
    |x| neither underflows at the start nor overflows later.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max, x.size))
    logscale = -x * x / 2
    prev = np.zeros_like(x)
    cur = np.full_like(x, math.pi ** -0.25)
    out[0] = cur * np.exp(logscale)
    for n in range(n_max - 1):
        nxt = math.sqrt(2 / (n + 1)) * x * cur - math.sqrt(n / (n + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if np.any(big):
            cur[big] *= 1e-150
            prev[big] *= 1e-150
            logscale[big] += 150 * math.log(10)
        out[n + 1] = cur * np.exp(np.minimum(logscale, 700.0))
    return out


def _squeeze_closed(r: float, phi: float, n_max: int) -> np.ndarray:
    # Real squeezing rescales position, (S(r) psi)(y) = e^{r/2} psi(e^r y), so
    # <m|S(r)|n> is an overlap of Hermite functions; Gauss-Hermite quadrature with
    # n_max nodes is exact for it. The phase enters as e^{i phi (m-n)/2}.
    if r == 0:
        return np.eye(n_max, dtype=complex)
    k = n_max + 1
    u, _ = roots_hermite(k)
    w = 1.0 / (k * hermite_functions(k, u)[k - 1] ** 2)
    mu = math.exp(r)
    sigma = math.sqrt((1 + mu * mu) / 2)
    left = hermite_functions(n_max, u / sigma)
    right = hermite_functions(n_max, mu * u / sigma)
    S = (math.exp(r / 2) / sigma) * (left * w) @ right.T
    idx = np.arange(n_max)
    dm = idx[:, None] - idx[None, :]
    S[(dm % 2) != 0] = 0.0
    return S * np.exp(0.5j * phi * dm)


def _squeeze_expm(r: float, phi: float, n_max: int) -> np.ndarray:
    a = annihilation(n_max)
    xi = r * np.exp(1j * phi)
    return expm((np.conj(xi) * a @ a - xi * a.conj().T @ a.conj().T) / 2)


@lru_cache(maxsize=64)
def _squeeze_cached(r: float, phi: float, n_max: int, method: str) -> np.ndarray:
    S = _squeeze_closed(r, phi, n_max) if method == "closed" else _squeeze_expm(r, phi, n_max)
    S.setflags(write=False)
    return S


def squeeze_operator(r: float, phi_s: float, n_max: int, method: str = "closed",
                     check: bool = True) -> np.ndarray:
    """Matrix of S(xi) = exp((xi^* a^2 - xi a^+2)/2) with xi = r e^{i phi_s}.

    Squeezing spreads |n> over roughly n cosh(2r) quanta, so unitarity is only
    checked on the block n < n_max e^{-2r} / 4.
    """
    if r < 0:
        raise ValueError("squeeze magnitude must be >= 0 (encode sign in phi_s)")
    if r > MAX_SQUEEZE_R:
        raise ValueError(
            f"r={r} exceeds {MAX_SQUEEZE_R}; truncation demands grow as e^(2r). "
            "Use a smaller r or analyse in a less squeezed basis."
        )
    if method not in ("closed", "expm"):
        raise ValueError(f"unknown method {method!r}")
    S = _squeeze_cached(float(r), float(phi_s), int(n_max), method)
    if check:
        _check_unitary_block(S, f"squeeze r={r:.3g}", squeeze_safe_block(r, n_max))
    return S


def squeeze_safe_block(r: float, n_max: int) -> int:
    return max(1, int(n_max * math.exp(-2 * r) / 4))


def _check_unitary_block(U: np.ndarray, what: str, block: int | None = None) -> None:
    half = U.shape[0] // 2 if block is None else block
    if half == 0:
        return
    blk = U[:, :half]
    err = np.max(np.abs(blk.conj().T @ blk - np.eye(half)))
    if err >= UNITARY_TOL:
        raise TruncationError(f"{what}: unitarity defect {err:.2e} on safe block of dim {U.shape[0]}")


def effective_displacement(beta: complex, r: float, phi_s: float) -> complex:
    """beta_eff with S(xi) D(beta) S(xi)^+ = D(beta_eff)."""
    return complex(beta * math.cosh(r) - np.conj(beta) * np.exp(1j * phi_s) * math.sinh(r))


# -- analysis bases --------------------------------------------------------


@dataclass(frozen=True)
class ProbeBasis:
    """Analysis basis |phi_n> = S(xi) D(beta) |n>, xi = r e^{i phi_s}."""

    kind: str = "number"
    beta: complex = 0j
    r: float = 0.0
    phi_s: float = 0.0

    KINDS = ("number", "squeezed", "displaced", "displaced_squeezed")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "phi_s", float(self.phi_s))
        if self.kind == "number" and (self.beta != 0 or self.r != 0):
            raise ValueError("number basis takes no beta or r")
        if self.kind == "squeezed" and self.beta != 0:
            raise ValueError("squeezed basis takes no beta; use displaced_squeezed")
        if self.kind == "displaced" and self.r != 0:
            raise ValueError("displaced basis takes no r; use displaced_squeezed")

    @classmethod
    def number(cls) -> "ProbeBasis":
        return cls("number")

    @classmethod
    def squeezed(cls, r: float, phi_s: float) -> "ProbeBasis":
        return cls("squeezed", 0j, r, phi_s)

    @classmethod
    def displaced(cls, beta: complex) -> "ProbeBasis":
        return cls("displaced", beta)

    @classmethod
    def displaced_squeezed(cls, beta: complex, r: float, phi_s: float) -> "ProbeBasis":
        return cls("displaced_squeezed", beta, r, phi_s)

    @property
    def is_displaced(self) -> bool:
        return self.kind in ("displaced", "displaced_squeezed")

    @property
    def is_squeezed(self) -> bool:
        return self.kind in ("squeezed", "displaced_squeezed")

    @property
    def effective_point(self) -> complex:
        return effective_displacement(self.beta, self.r, self.phi_s)


@dataclass(frozen=True)
class PopulationVector:
    p: np.ndarray
    basis: ProbeBasis = field(default_factory=ProbeBasis)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if np.any(p < 0):
            raise ValueError("populations must be non-negative")
        if p.sum() > 1 + 1e-9:
            raise ValueError(f"populations sum to {p.sum():.12f} > 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def mean_n(self) -> float:
        return float(np.dot(np.arange(self.p.size), self.p))


def _basis_transform(basis: ProbeBasis, n_max: int) -> np.ndarray:
    """Matrix T with T[n, :] = <phi_n| in the number basis, i.e. D(-beta) S(-xi).

    Both factors are exact elementwise, but the product truncates the inner
    sum, so callers keep only the leading half of the rows.
    """
    T = np.eye(n_max, dtype=complex)
    if basis.is_squeezed and basis.r > 0:
        T = squeeze_operator(basis.r, basis.phi_s + math.pi, n_max, check=False)
    if basis.is_displaced and basis.beta != 0:
        T = displacement_operator(-basis.beta, n_max, check=False) @ T
    return T


def _support(p: np.ndarray, tol: float = 1e-18) -> int:
    tail = np.cumsum(p[::-1])[::-1]
    keep = np.nonzero(tail > tol)[0]
    return int(keep[-1]) + 1 if keep.size else 1


def _start_dim(support: int, basis: ProbeBasis) -> int:
    return int(max(support + 10, 32, math.ceil(abs(basis.beta) ** 2 + 8 * abs(basis.beta) + 10)))


def populations_in_basis(state: FockVector, basis: ProbeBasis, loss_tol: float = 1e-9,
                         max_dim: int = 4096) -> PopulationVector:
    """Populations p[n] = |<n| D(beta)^+ S(xi)^+ |state>|^2.

    The working dimension doubles until the captured probability is within
    ``loss_tol`` of one.
    """
    if basis.kind == "number":
        return PopulationVector(_clip_sum(state.populations), basis)
    sup = _support(state.populations)
    psi0 = state.amps[:sup]
    m = _start_dim(sup, basis)
    while True:
        p = np.abs(_basis_transform(basis, 2 * m)[:m, :sup] @ psi0) ** 2
        if 1 - p.sum() <= loss_tol:
            return PopulationVector(_clip_sum(p), basis)
        if 2 * m > max_dim:
            raise TruncationError(f"basis populations lose {1 - p.sum():.2e} at dim {m}")
        m *= 2


def populations_from_density(rho: np.ndarray, basis: ProbeBasis, loss_tol: float = 1e-9,
                             max_dim: int = 4096) -> PopulationVector:
    """Basis populations <phi_n|rho|phi_n> of an oscillator density matrix."""
    rho = np.asarray(rho, dtype=complex)
    diag = np.clip(np.real(np.diag(rho)), 0, None)
    if basis.kind == "number":
        return PopulationVector(_clip_sum(diag), basis)
    sup = _support(diag)
    rho = rho[:sup, :sup]
    trace = float(np.real(np.trace(rho)))
    m = _start_dim(sup, basis)
    while True:
        T = _basis_transform(basis, 2 * m)[:m, :sup]
        p = np.clip(np.real(np.einsum("ij,jk,ik->i", T, rho, T.conj())), 0, None)
        if trace - p.sum() <= loss_tol:
            return PopulationVector(_clip_sum(p), basis)
        if 2 * m > max_dim:
            raise TruncationError(f"basis populations lose {trace - p.sum():.2e} at dim {m}")
        m *= 2


def _clip_sum(p: np.ndarray) -> np.ndarray:
    s = p.sum()
    return p / s if s > 1 else p


def parity(p) -> float:
    """Sum over n of (-1)^n p[n]."""
    p = np.asarray(getattr(p, "p", p), dtype=float)
    return float(np.sum(p * (-1.0) ** np.arange(p.size)))


def squeezed_mean_occupation(alpha: complex, r: float) -> float:
    """Mean occupation of |alpha> in the squeezed basis aligned against the displacement."""
    if r < 0:
        raise ValueError("r must be >= 0")
    return abs(alpha) ** 2 * math.exp(-2 * r) + math.sinh(r) ** 2


def r_min(alpha: complex) -> float:
    """Squeeze magnitude minimizing the squeezed-basis mean occupation."""
    return math.log(4 * abs(alpha) ** 2 + 1) / 4


def aligned_squeeze_phase(alpha: complex) -> float:
    """phi_s that anti-squeezes along the cat separation axis: 2 arg(alpha) + pi."""
    return float(2 * np.angle(alpha) + math.pi)


# 40Ca+ (mass of the neutral-atom isotope; the electron mass is below the quoted precision)
CA40_MASS_U = 39.962590863


def physical_units(omega_z: float, mass_u: float, alpha: complex) -> dict:
    """Ground-state rms extent z0 and wavepacket-centre separation (metres).

    ``omega_z`` in rad/s, ``mass_u`` in atomic mass units.
    """
    from scipy.constants import atomic_mass, hbar

    if omega_z <= 0 or mass_u <= 0:
        raise ValueError("frequency and mass must be positive")
    z0 = math.sqrt(hbar / (2 * mass_u * atomic_mass * omega_z))
    delta_alpha = 2 * abs(alpha)
    return {"z0": z0, "separation": 2 * delta_alpha * z0, "amplitude": 2 * abs(alpha) * z0}
