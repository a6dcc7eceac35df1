"""Run configuration: one JSON file per run, validated before any computation.

Rates given as *_hz are Omega/2pi in Hz; times as *_us are microseconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fock import ProbeBasis, aligned_squeeze_phase, db_to_r
from .spin import DecoherenceSpec
from .synth import DECAY_KINDS, BRANCHES, DecayModel, HeraldModel, calibrate_herald

SCHEMA_VERSION = 1
EXPERIMENTS = ("simulate", "herald", "fit", "wigner", "report")


class ConfigError(ValueError):
    """Configuration failed validation."""


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _complex(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where} must be a number or a [re, im] pair")


def _num(d: dict, key: str, default, where: str, lo=None, hi=None, integer=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise ConfigError(f"{where}.{key} must be {'an integer' if integer else 'a number'}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key} must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key} must be <= {hi}")
    return v


# -- sections ---------------------------------------------------------------------


@dataclass
class BasisConfig:
    kind: str = "number"
    beta: complex = 0j
    r: float = 0.0
    phi_s: float | str = 0.0

    KEYS = {"kind", "beta", "r", "squeeze_db", "phi_s"}

    @classmethod
    def parse(cls, d: dict, where: str = "basis") -> "BasisConfig":
        _check_keys(d, cls.KEYS, where)
        if "r" in d and "squeeze_db" in d:
            raise ConfigError(f"{where}: give r or squeeze_db, not both")
        r = db_to_r(_num(d, "squeeze_db", 0.0, where, lo=0)) if "squeeze_db" in d else _num(d, "r", 0.0, where, 0, 1.5)
        phi = d.get("phi_s", 0.0)
        if phi != "aligned":
            phi = _num(d, "phi_s", 0.0, where)
        kind = d.get("kind", "number")
        if kind not in ProbeBasis.KINDS:
            raise ConfigError(f"{where}.kind must be one of {ProbeBasis.KINDS}")
        return cls(kind, _complex(d.get("beta", 0.0), f"{where}.beta"), float(r), phi)

    def build(self, alpha: complex = 0j) -> ProbeBasis:
        phi = aligned_squeeze_phase(alpha) if self.phi_s == "aligned" else float(self.phi_s)
        try:
            return ProbeBasis(self.kind, self.beta, self.r, phi)
        except ValueError as e:
            raise ConfigError(f"basis: {e}") from None


@dataclass
class SamplingConfig:
    t_max_us: float = 450.0
    n_points: int = 121
    sequences: int = 250

    KEYS = {"t_max_us", "n_points", "sequences"}

    @classmethod
    def parse(cls, d: dict, where: str = "sampling") -> "SamplingConfig":
        _check_keys(d, cls.KEYS, where)
        c = cls(_num(d, "t_max_us", 450.0, where, lo=1e-6),
                _num(d, "n_points", 121, where, lo=2, integer=True),
                _num(d, "sequences", 250, where, integer=True))
        if c.sequences < 1:
            raise ConfigError(f"{where}.sequences must be >= 1 (got {c.sequences})")
        return c

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0, self.t_max_us * 1e-6, self.n_points)


@dataclass
class PhysicsConfig:
    alpha: complex = 3.0
    eta: float = 0.0
    omega_probe_hz: float = 31e3
    sdf_omega_hz: float = 50e3
    decoherence: DecoherenceSpec = field(default_factory=DecoherenceSpec)
    decay: DecayModel = field(default_factory=DecayModel)

    KEYS = {"alpha", "eta", "omega_probe_hz", "sdf_omega_hz", "decoherence", "decay"}

    @classmethod
    def parse(cls, d: dict, where: str = "physics") -> "PhysicsConfig":
        _check_keys(d, cls.KEYS, where)
        dec = d.get("decoherence", {})
        _check_keys(dec, {"heating_rate", "motional_dephasing_rate", "spin_dephasing_rate"}, f"{where}.decoherence")
        for k in dec:
            _num(dec, k, 0.0, f"{where}.decoherence", lo=0)
        decay = d.get("decay", {})
        _check_keys(decay, {"kind", "gamma"}, f"{where}.decay")
        if decay.get("kind", "exponential") not in DECAY_KINDS:
            raise ConfigError(f"{where}.decay.kind must be one of {DECAY_KINDS}")
        return cls(_complex(d.get("alpha", 3.0), f"{where}.alpha"),
                   _num(d, "eta", 0.0, where, 0, 1),
                   _num(d, "omega_probe_hz", 31e3, where, lo=1e-12),
                   _num(d, "sdf_omega_hz", 50e3, where, lo=1e-12),
                   DecoherenceSpec(**dec),
                   DecayModel(decay.get("kind", "exponential"), _num(decay, "gamma", 0.0, f"{where}.decay", lo=0)))

    @property
    def omega_probe(self) -> float:
        return 2 * math.pi * self.omega_probe_hz


def parse_herald(d, where: str = "herald") -> HeraldModel | None:
    """null -> ideal herald; error rates -> calibrated; explicit means -> as given."""
    if d is None:
        return None
    _check_keys(d, {"p_down_as_up", "p_up_as_down", "threshold", "detect_time_us", "bright_mean", "dark_mean"}, where)
    thr = _num(d, "threshold", 1, where, lo=-1, integer=True)
    dt = _num(d, "detect_time_us", 75.0, where, lo=0) * 1e-6
    try:
        if "bright_mean" in d or "dark_mean" in d:
            return HeraldModel(_num(d, "bright_mean", None, where, lo=0), _num(d, "dark_mean", 0.0, where, lo=0), thr, dt)
        return calibrate_herald(_num(d, "p_down_as_up", 0.008, where, 0, 1),
                                _num(d, "p_up_as_down", 2e-5, where, 0, 1), thr, dt)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass
class RunSpec:
    name: str
    branch: str = "minus"
    basis: BasisConfig | None = None
    probe: str = "model"

    KEYS = {"name", "branch", "basis", "probe"}


@dataclass
class FitConfig:
    traces: list = field(default_factory=list)
    decay_kind: str = "exponential"
    n_levels: int | None = None
    bootstrap: int = 200
    gamma: float | None = None
    strict_sum: bool = False
    omega_span: float = 0.1
    mixture_alpha: complex | None = None
    prior_alpha: complex | None = None

    KEYS = {"traces", "decay_kind", "n_levels", "bootstrap", "gamma", "strict_sum", "omega_span",
            "mixture_alpha", "prior_alpha"}

    @classmethod
    def parse(cls, d: dict, where: str = "fit") -> "FitConfig":
        _check_keys(d, cls.KEYS, where)
        traces = d.get("traces", [])
        if not isinstance(traces, list) or not all(isinstance(t, str) for t in traces):
            raise ConfigError(f"{where}.traces must be a list of paths")
        if d.get("decay_kind", "exponential") not in DECAY_KINDS:
            raise ConfigError(f"{where}.decay_kind must be one of {DECAY_KINDS}")
        if not isinstance(d.get("strict_sum", False), bool):
            raise ConfigError(f"{where}.strict_sum must be true or false")
        mix = d.get("mixture_alpha")
        prior = d.get("prior_alpha")
        return cls(traces, d.get("decay_kind", "exponential"),
                   _num(d, "n_levels", None, where, lo=1, integer=True),
                   _num(d, "bootstrap", 200, where, lo=0, integer=True),
                   _num(d, "gamma", None, where, lo=0),
                   d.get("strict_sum", False),
                   _num(d, "omega_span", 0.1, where, lo=0, hi=0.9),
                   None if mix is None else _complex(mix, f"{where}.mixture_alpha"),
                   None if prior is None else _complex(prior, f"{where}.prior_alpha"))


@dataclass
class AxisSpec:
    lo: float
    hi: float
    n: int

    @classmethod
    def parse(cls, d, where: str) -> "AxisSpec":
        _check_keys(d, {"min", "max", "n"}, where)
        for k in ("min", "max", "n"):
            if k not in d:
                raise ConfigError(f"{where}.{k} is required")
        a = cls(_num(d, "min", None, where), _num(d, "max", None, where), _num(d, "n", None, where, lo=1, integer=True))
        if a.hi < a.lo:
            raise ConfigError(f"{where}: max < min")
        return a

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class WignerConfig:
    state: str = "minus"
    re: AxisSpec | None = None
    im: AxisSpec | None = None
    source: str = "oracle"
    r: float = 0.0
    phi_s: float | str = 0.0
    cut: AxisSpec | None = None
    alpha_guess: float | None = None
    shots: int = 250
    gamma: float = 0.0
    t_max_us: float = 300.0
    n_points: int = 121

    KEYS = {"state", "re", "im", "source", "r", "squeeze_db", "phi_s", "cut", "alpha_guess", "shots", "gamma",
            "t_max_us", "n_points"}

    @classmethod
    def parse(cls, d: dict, where: str = "wigner") -> "WignerConfig":
        _check_keys(d, cls.KEYS, where)
        state = d.get("state", "minus")
        if state not in BRANCHES:
            raise ConfigError(f"{where}.state must be one of {BRANCHES}")
        source = d.get("source", "oracle")
        if source not in ("oracle", "simulated", "fitted"):
            raise ConfigError(f"{where}.source must be oracle, simulated or fitted")
        re = AxisSpec.parse(d["re"], f"{where}.re") if "re" in d else None
        im = AxisSpec.parse(d["im"], f"{where}.im") if "im" in d else None
        cut = AxisSpec.parse(d["cut"], f"{where}.cut") if "cut" in d else None
        if (re is None) != (im is None):
            raise ConfigError(f"{where}: give both re and im axes for a grid")
        if re is None and cut is None:
            raise ConfigError(f"{where}: give a grid (re, im) and/or a cut")
        b = BasisConfig.parse({k: d[k] for k in ("r", "squeeze_db", "phi_s") if k in d}, where)
        return cls(state, re, im, source, b.r, b.phi_s, cut, _num(d, "alpha_guess", None, where, lo=1e-9),
                   _num(d, "shots", 250, where, lo=1, integer=True), _num(d, "gamma", 0.0, where, lo=0),
                   _num(d, "t_max_us", 300.0, where, lo=1e-6), _num(d, "n_points", 121, where, lo=3, integer=True))


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    threads: int | None = None
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    herald: HeraldModel | None = None
    runs: list = field(default_factory=list)
    fit: FitConfig = field(default_factory=FitConfig)
    wigner: WignerConfig | None = None
    source_path: Path | None = None

    KEYS = {"schema_version", "experiment", "seed", "threads", "physics", "basis", "sampling", "herald", "runs",
            "fit", "wigner", "description"}


def parse_config(d: dict, source_path=None) -> RunConfig:
    _check_keys(d, RunConfig.KEYS, "config")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    exp = d.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    cfg = RunConfig(exp, _num(d, "seed", 0, "config", lo=0, integer=True),
                    _num(d, "threads", None, "config", lo=1, integer=True),
                    PhysicsConfig.parse(d.get("physics", {})), BasisConfig.parse(d.get("basis", {})),
                    SamplingConfig.parse(d.get("sampling", {})), parse_herald(d.get("herald")),
                    source_path=Path(source_path) if source_path else None)
    runs = d.get("runs", [{"name": "trace"}] if exp == "simulate" else [])
    if not isinstance(runs, list):
        raise ConfigError("runs must be a list")
    names = set()
    for i, r in enumerate(runs):
        _check_keys(r, RunSpec.KEYS, f"runs[{i}]")
        name = r.get("name", f"trace{i}")
        if not isinstance(name, str) or not name or "/" in name or name in names:
            raise ConfigError(f"runs[{i}].name must be a unique plain file stem")
        names.add(name)
        branch = r.get("branch", "minus")
        if branch not in BRANCHES:
            raise ConfigError(f"runs[{i}].branch must be one of {BRANCHES}")
        probe = r.get("probe", "model")
        if probe not in ("model", "hamiltonian"):
            raise ConfigError(f"runs[{i}].probe must be model or hamiltonian")
        basis = BasisConfig.parse(r["basis"], f"runs[{i}].basis") if "basis" in r else None
        cfg.runs.append(RunSpec(name, branch, basis, probe))
    cfg.fit = FitConfig.parse(d.get("fit", {}))
    if exp == "wigner":
        if "wigner" not in d:
            raise ConfigError("wigner experiment needs a wigner section")
        cfg.wigner = WignerConfig.parse(d["wigner"])
    elif "wigner" in d:
        cfg.wigner = WignerConfig.parse(d["wigner"])
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return parse_config(raw, path)
