"""Joint spin-oscillator Hamiltonians, unitary evolution and heralded projection.

The joint space is ordered spin-major: index ``s * n_max + n`` with ``s = 0``
for spin down and ``s = 1`` for spin up. hbar = 1 and all rates are angular
frequencies in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, expm
from scipy.sparse.linalg import expm_multiply

from .fock import (
    FockVector,
    ProbeBasis,
    annihilation,
    displacement_element,
    normalized,
    squeeze_operator,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
# |up><down| and |down><up| in the (down, up) ordering
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
EIGH_MAX_DIM = 1024
HERMITIAN_TOL = 1e-12


class HeraldError(ValueError):
    """Raised when a heralding outcome has zero probability."""


@dataclass(frozen=True)
class SpinFockState:
    down: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        d = np.array(self.down, dtype=complex)
        u = np.array(self.up, dtype=complex)
        if d.shape != u.shape or d.ndim != 1:
            raise ValueError("spin components must be 1-D arrays of equal length")
        if abs(np.vdot(d, d).real + np.vdot(u, u).real - 1) > 1e-10:
            raise ValueError("joint spin-motion state is not normalized")
        d.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "down", d)
        object.__setattr__(self, "up", u)

    @property
    def n_max(self) -> int:
        return self.down.size

    @classmethod
    def product(cls, spin: str, motion: FockVector) -> "SpinFockState":
        z = np.zeros(motion.dim, dtype=complex)
        if spin == "down":
            return cls(motion.amps, z)
        if spin == "up":
            return cls(z, motion.amps)
        raise ValueError("spin must be 'up' or 'down'")

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "SpinFockState":
        n = v.size // 2
        return cls(v[:n], v[n:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.down, self.up])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))

    def p_down(self) -> float:
        return float(np.sum(np.abs(self.down) ** 2))

    def fidelity(self, other: "SpinFockState") -> float:
        return abs(np.vdot(self.vector(), other.vector())) ** 2


def joint(spin_op: np.ndarray, motion_op: np.ndarray) -> np.ndarray:
    return np.kron(spin_op, motion_op)


# -- Lamb-Dicke matrix elements ---------------------------------------------


def lamb_dicke_matrix_element(n: int, eta: float) -> complex:
    """M_n = <n+1| exp(i eta (a + a^+)) |n>, closed form via D(i eta)."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    return displacement_element(n + 1, n, 1j * eta)


def lamb_dicke_matrix_element_expm(n: int, eta: float, n_max: int | None = None) -> complex:
    """Same element from exponentiating i eta (a + a^+) in a large truncated space."""
    if n_max is None:
        n_max = n + 60
    a = annihilation(n_max)
    U = expm(1j * eta * (a + a.conj().T))
    return complex(U[n + 1, n])


def sideband_raising(n_max: int, eta: float = 0.0) -> np.ndarray:
    """Raising ladder with elements |M_n|/eta (sqrt(n+1) in the Lamb-Dicke limit)."""
    out = np.zeros((n_max, n_max), dtype=complex)
    n = np.arange(n_max - 1)
    if eta == 0:
        out[n + 1, n] = np.sqrt(n + 1)
    else:
        out[n + 1, n] = [abs(lamb_dicke_matrix_element(k, eta)) / eta for k in n]
    return out


# -- Hamiltonians -----------------------------------------------------------

KINDS = ("sdf", "red", "blue", "squeezed", "carrier_displacement", "carrier", "sum")


@dataclass(frozen=True)
class HamiltonianSpec:
    """Parametrized interaction-picture Hamiltonian.

    kinds:
      sdf                   omega sigma_x (e^{i phase} a^+ + h.c.) / 2
      red                   (omega/2) [A^+ sigma_- + h.c.]
      blue                  (omega/2) [A^+ sigma_+ + h.c.]
      squeezed              (omega/2) [(A^+ + tanh r e^{-i phi_s} A) sigma_- + h.c.]
      carrier_displacement  -(omega/2) [beta^* sigma_- + beta sigma_+]
      carrier               (omega/2) sigma_x
      sum                   sum of ``terms``
    A^+ is the sideband ladder with |M_n|/eta elements (a^+ when eta = 0).
    """

    kind: str
    omega: float = 0.0
    eta: float = 0.0
    r: float = 0.0
    phi_s: float = 0.0
    beta: complex = 0j
    phase: float = 0.0
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind != "sum" and self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.eta < 0 or self.r < 0:
            raise ValueError("eta and r must be >= 0")
        object.__setattr__(self, "terms", tuple(self.terms))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "omega": self.omega, "eta": self.eta, "r": self.r,
             "phi_s": self.phi_s, "beta": [self.beta.real, self.beta.imag] if isinstance(self.beta, complex)
             else [float(self.beta), 0.0], "phase": self.phase}
        if self.terms:
            d["terms"] = [t.to_dict() for t in self.terms]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HamiltonianSpec":
        d = dict(d)
        allowed = {"kind", "omega", "eta", "r", "phi_s", "beta", "phase", "terms"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown Hamiltonian keys {sorted(unknown)}")
        if "beta" in d:
            b = d["beta"]
            d["beta"] = complex(b[0], b[1]) if isinstance(b, (list, tuple)) else complex(b)
        if "terms" in d:
            d["terms"] = tuple(cls.from_dict(t) for t in d["terms"])
        return cls(**d)


def build_hamiltonian(spec: HamiltonianSpec, n_max: int) -> np.ndarray:
    """Dense Hermitian matrix of ``spec`` on the 2 n_max joint space."""
    k = spec.kind
    eye = np.eye(n_max, dtype=complex)
    if k == "sum":
        H = np.zeros((2 * n_max, 2 * n_max), dtype=complex)
        for t in spec.terms:
            H += build_hamiltonian(t, n_max)
        return H
    if k == "sdf":
        a = annihilation(n_max)
        x = np.exp(1j * spec.phase) * a.conj().T
        return spec.omega / 2 * joint(SIGMA_X, x + x.conj().T)
    if k == "carrier":
        return spec.omega / 2 * joint(SIGMA_X, eye)
    if k == "carrier_displacement":
        b = complex(spec.beta)
        op = np.conj(b) * SIGMA_MINUS + b * SIGMA_PLUS
        return -spec.omega / 2 * joint(op, eye)
    up = sideband_raising(n_max, spec.eta)
    if k == "red":
        half = joint(SIGMA_MINUS, up)
    elif k == "blue":
        half = joint(SIGMA_PLUS, up)
    else:
        ladder = up + math.tanh(spec.r) * np.exp(-1j * spec.phi_s) * up.conj().T
        half = joint(SIGMA_MINUS, ladder)
    return spec.omega / 2 * (half + half.conj().T)


def probe_hamiltonian(basis: ProbeBasis, omega: float, eta: float = 0.0) -> HamiltonianSpec:
    """Probe Hamiltonian whose red-sideband ladder is that of ``basis``.

    ``omega`` is the trace-level Rabi rate: level n flops as
    cos(omega sqrt(n+1) t / 2), which needs a ladder coupling of omega/2.
    """
    g = omega / 2
    if basis.is_squeezed and basis.r > 0:
        probe = HamiltonianSpec("squeezed", g * math.cosh(basis.r), eta, basis.r, basis.phi_s)
    else:
        probe = HamiltonianSpec("red", g, eta)
    if basis.is_displaced and basis.beta != 0:
        return HamiltonianSpec("sum", terms=(probe, HamiltonianSpec("carrier_displacement", g, beta=basis.beta)))
    return probe


# -- evolution ---------------------------------------------------------------


def check_hermitian(H: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("Hamiltonian is not Hermitian")


class Propagator:
    """exp(-i H t) acting on vectors, reusable across many times.

    Uses a Hermitian eigendecomposition up to ``EIGH_MAX_DIM`` and
    Krylov-type ``expm_multiply`` above it.
    """

    def __init__(self, H: np.ndarray):
        H = np.asarray(H, dtype=complex)
        check_hermitian(H)
        self.H = H
        self.dim = H.shape[0]
        if self.dim <= EIGH_MAX_DIM:
            self.energies, self.modes = eigh(H)
        else:
            self.energies = self.modes = None

    def apply(self, v: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(v, dtype=complex)
        if self.modes is not None:
            c = self.modes.conj().T @ v
            return self.modes @ (np.exp(-1j * self.energies * t) * c)
        return expm_multiply(-1j * t * self.H, v)

    def matrix(self, t: float) -> np.ndarray:
        if self.modes is not None:
            return (self.modes * np.exp(-1j * self.energies * t)) @ self.modes.conj().T
        return expm(-1j * t * self.H)


def evolve_unitary(state, H: np.ndarray, t: float):
    """Evolve a SpinFockState (or plain vector) under H for time t."""
    prop = Propagator(H)
    if isinstance(state, SpinFockState):
        return SpinFockState.from_vector(prop.apply(state.vector(), t))
    return prop.apply(np.asarray(state, dtype=complex), t)


def entangled_state(alpha: complex, n_max: int) -> SpinFockState:
    """Closed-form (|+>|alpha> + |->|-alpha>)/sqrt(2) in the (down, up) basis."""
    from .fock import _coherent_amps

    cp = _coherent_amps(complex(alpha), n_max)
    cm = _coherent_amps(-complex(alpha), n_max)
    return SpinFockState((cp + cm) / 2, (cp - cm) / 2)


def sdf_alpha(omega: float, t: float, phase: float = 0.0) -> complex:
    """Coherent amplitude reached by the state-dependent force: -i omega t e^{i phase} / 2."""
    return -1j * omega * t * np.exp(1j * phase) / 2


def carrier_pi(state: SpinFockState) -> SpinFockState:
    """Resonant carrier pi pulse, exp(-i pi sigma_x / 2) = -i sigma_x."""
    return SpinFockState(-1j * state.up, -1j * state.down)


def herald_project(state: SpinFockState, outcome: str, carrier_flip_first: bool = False):
    """Project onto a spin outcome; returns (motional FockVector, probability)."""
    if carrier_flip_first:
        state = carrier_pi(state)
    if outcome == "up":
        comp = state.up
    elif outcome == "down":
        comp = state.down
    else:
        raise ValueError("outcome must be 'up' or 'down'")
    prob = float(np.sum(np.abs(comp) ** 2))
    if prob <= 1e-300:
        raise HeraldError(f"outcome {outcome!r} has zero probability")
    return normalized(comp, check_tail=False), prob


# -- Rabi frequencies -------------------------------------------------------

NUMERIC_SQUEEZE_R = 0.8


def _ld_scaling(n_count: int, eta: float) -> np.ndarray:
    n = np.arange(n_count)
    if eta == 0:
        return np.sqrt(n + 1.0)
    return np.array([abs(lamb_dicke_matrix_element(k, eta)) / eta for k in n])


def squeezed_probe_elements(r: float, phi_s: float, eta: float, n_count: int) -> np.ndarray:
    """|<(n+1)_s| (A^+ + tanh r e^{-i phi_s} A) |n_s>| cosh r between squeezed Fock states."""
    m = int(max(64, math.ceil(4 * (n_count + 2) * math.exp(2 * r))))
    up = sideband_raising(m, eta)
    X = up + math.tanh(r) * np.exp(-1j * phi_s) * up.conj().T
    B = squeeze_operator(r, phi_s, m)[:, : n_count + 1]
    E = B.conj().T @ X @ B
    n = np.arange(n_count)
    return math.cosh(r) * np.abs(E[n + 1, n])


def rabi_frequencies(basis: ProbeBasis, omega: float, eta: float, n_count: int) -> np.ndarray:
    """Trace-level Rabi rates Omega_{n,n+1} for levels n < n_count of ``basis``.

    Number and displaced bases scale with |M_n|/eta. Squeezed bases with
    r > 0.8 use matrix elements of the eta-corrected squeezed probe between
    squeezed Fock states; below that they fall back to the |M_n|/eta scaling.
    """
    if basis.is_squeezed and basis.r > NUMERIC_SQUEEZE_R and eta > 0:
        return omega * squeezed_probe_elements(basis.r, basis.phi_s, eta, n_count)
    return omega * _ld_scaling(n_count, eta)


# -- decoherence --------------------------------------------------------------


@dataclass(frozen=True)
class DecoherenceSpec:
    """Heating (quanta/s), motional dephasing (1/s) and spin dephasing (1/s) rates.

    Motional dephasing damps the |0>,|1> coherence at ``motional_dephasing_rate``;
    spin dephasing damps the spin coherence at ``spin_dephasing_rate``.
    """

    heating_rate: float = 0.0
    motional_dephasing_rate: float = 0.0
    spin_dephasing_rate: float = 0.0

    def __post_init__(self):
        for name in ("heating_rate", "motional_dephasing_rate", "spin_dephasing_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def measured(cls) -> "DecoherenceSpec":
        # 10 quanta/s heating, 32 ms |0>+|1> coherence, 930 us Ramsey coherence
        return cls(10.0, 1 / 32e-3, 1 / 930e-6)

    @property
    def is_zero(self) -> bool:
        return self.heating_rate == 0 and self.motional_dephasing_rate == 0 and self.spin_dephasing_rate == 0

    def to_dict(self) -> dict:
        return {"heating_rate": self.heating_rate,
                "motional_dephasing_rate": self.motional_dephasing_rate,
                "spin_dephasing_rate": self.spin_dephasing_rate}

    @classmethod
    def from_dict(cls, d: dict) -> "DecoherenceSpec":
        unknown = set(d) - {"heating_rate", "motional_dephasing_rate", "spin_dephasing_rate"}
        if unknown:
            raise ValueError(f"unknown decoherence keys {sorted(unknown)}")
        return cls(**d)


def collapse_operators(dec: DecoherenceSpec, n_max: int, spin: bool = True) -> list[np.ndarray]:
    """Lindblad jump operators (rates folded in) on the motional or joint space.

    Heating is an infinite-temperature bath: equal up and down channels at the
    quoted rate, which gives d<n>/dt = rate exactly.
    """
    a = annihilation(n_max)
    n_op = a.conj().T @ a
    motional = []
    if dec.heating_rate > 0:
        g = math.sqrt(dec.heating_rate)
        motional += [g * a.conj().T, g * a]
    if dec.motional_dephasing_rate > 0:
        motional.append(math.sqrt(2 * dec.motional_dephasing_rate) * n_op)
    if not spin:
        return motional
    ops = [joint(np.eye(2), c) for c in motional]
    if dec.spin_dephasing_rate > 0:
        ops.append(math.sqrt(dec.spin_dephasing_rate / 2) * joint(SIGMA_Z, np.eye(n_max)))
    return ops
