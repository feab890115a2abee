"""Strict INI configuration for the ``count`` command line.

Every key is declared below with its type and default; unknown sections or
keys are errors.  Physical parameters are given in the user's units and
mapped to desk scale through the scale invariance

    phi~(lam z0, lam^2 t; G / lam, eps / lam) = phi~(z0, t; G, eps) / sqrt(lam),

with lam = gamma / desk_gamma.  Intensities are invariant under the map.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path

COMMANDS = ("figure1", "figure2", "figure3", "sweep", "singlemode", "joint", "validate")
CONVENTION_ALIASES = {"paper": "paper_literal", "flux": "flux_consistent",
                      "paper_literal": "paper_literal", "flux_consistent": "flux_consistent"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit status 2)."""


def _floats(text: str) -> tuple[float, ...]:
    items = [s for s in text.replace(",", " ").split() if s]
    if not items:
        raise ValueError("empty list")
    return tuple(float(s) for s in items)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> parser; defaults live on the dataclasses
_SCHEMA = {
    "run": {"command": str},
    "physics": {"gamma": float, "epsilon": float, "n_particles": float, "z0_scaled": _floats,
                "convention": str, "hbar": float, "mass": float, "tau_max": float,
                "tau_short": float, "tau_long": float},
    "numerics": {"desk_gamma": float, "n_times": int, "grid_z_min": float, "grid_z_max": float,
                 "grid_points": int, "grid_dt": float, "grid_t_final": float, "grid_check": _bool,
                 "strict_ordering": _bool},
    "sweep": {"parameter": str, "values": _floats, "tau": float, "methods": lambda s: tuple(s.replace(",", " ").split())},
    "singlemode": {"state": str, "nbar": float, "n_max": int, "epsilon_tau": _floats, "form": str},
    "joint": {"z0_scaled_1": float, "z0_scaled_2": float, "epsilon_1": float, "epsilon_2": float,
              "tau": float, "compare_single": _bool},
    "validate": {"gamma": float, "epsilon": float, "seed": int},
}


@dataclass
class Physics:
    """User-facing physical parameters; defaults are the figure-caption values.

    ``z0_scaled`` lists detector positions in units of 1/gamma.  Times left
    at 0 are filled in from the detector strength: ``tau_max`` = 1e3 / eps^2
    (natural units), ``tau_short`` = 1e-2 / eps and ``tau_long`` = 1e2 / eps^2.
    """

    gamma: float = 1e5
    epsilon: float = 1.0
    n_particles: float = 100.0
    z0_scaled: tuple[float, ...] = (0.0, 0.1, 0.4)
    convention: str = "paper_literal"
    hbar: float = 1.0
    mass: float = 1.0
    tau_max: float = 0.0
    tau_short: float = 0.0
    tau_long: float = 0.0


@dataclass
class Numerics:
    desk_gamma: float = 2.0
    n_times: int = 400
    grid_z_min: float = -30.0
    grid_z_max: float = 30.0
    grid_points: int = 12001
    grid_dt: float = 2.5e-4       # largest desk-scale step
    grid_t_final: float = 5.0     # desk-scale time
    grid_check: bool = False
    strict_ordering: bool = True


@dataclass
class Sweep:
    parameter: str = "epsilon"
    values: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    tau: float = 0.0
    methods: tuple[str, ...] = ("free", "exact", "born2", "born_exp")


@dataclass
class SingleMode:
    state: str = "thermal"
    nbar: float = 1.0
    n_max: int = 200
    epsilon_tau: tuple[float, ...] = (0.01, 0.1, 1.0, 3.0)
    form: str = "normal_ordered"


@dataclass
class Joint:
    z0_scaled_1: float = -0.4
    z0_scaled_2: float = 0.4
    epsilon_1: float = 0.0      # 0 means: use physics.epsilon
    epsilon_2: float = 0.0
    tau: float = 0.0            # 0 means: the end of the grid run
    compare_single: bool = True


@dataclass
class Validate:
    """Desk-scale parameters of the oracle suite (independent of [physics])."""

    gamma: float = 2.0
    epsilon: float = 1.0
    seed: int = 12345


@dataclass
class RunConfig:
    command: str
    physics: Physics = field(default_factory=Physics)
    numerics: Numerics = field(default_factory=Numerics)
    sweep: Sweep = field(default_factory=Sweep)
    singlemode: SingleMode = field(default_factory=SingleMode)
    joint: Joint = field(default_factory=Joint)
    validate: Validate = field(default_factory=Validate)
    out_dir: str = ""
    jobs: int = 1

    # -- desk-scale mapping -----------------------------------------------------

    @property
    def lam(self) -> float:
        return self.physics.gamma / self.numerics.desk_gamma

    def kappa_scale(self) -> float:
        """Natural-unit amplitude strength eps m / hbar, before the desk map."""
        return self.physics.epsilon * self.physics.mass / self.physics.hbar

    def time_defaults(self) -> dict:
        """tau_max, tau_short and tau_long in physical units, defaults filled in."""
        p = self.physics
        k = self.kappa_scale()
        unit = p.mass / p.hbar   # natural time -> physical time
        if k == 0 and 0 in (p.tau_max, p.tau_short, p.tau_long):
            raise ConfigError("with epsilon = 0 the tau parameters must be given explicitly")
        return {"tau_max": p.tau_max or 1e3 / k ** 2 * unit,
                "tau_short": p.tau_short or 1e-2 / k * unit,
                "tau_long": p.tau_long or 1e2 / k ** 2 * unit}

    def desk(self) -> dict:
        """Internal parameter set actually integrated (natural units, desk scale)."""
        lam = self.lam
        p = self.physics
        natural_time = p.hbar / p.mass
        times = {k: v * natural_time * lam ** 2 for k, v in self.time_defaults().items()}
        return {"lambda": lam, "gamma": p.gamma / lam, "epsilon": self.kappa_scale() / lam,
                "z0": [z / (p.gamma / lam) for z in p.z0_scaled], **times}

    def to_dict(self) -> dict:
        return asdict(self)

    def validate_values(self) -> None:
        p, n = self.physics, self.numerics
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name, value in (("gamma", p.gamma), ("hbar", p.hbar), ("mass", p.mass),
                            ("desk_gamma", n.desk_gamma), ("grid_dt", n.grid_dt),
                            ("grid_t_final", n.grid_t_final), ("validate.gamma", self.validate.gamma)):
            if not value > 0:
                raise ConfigError(f"{name} must be positive")
        for name, value in (("epsilon", p.epsilon), ("n_particles", p.n_particles), ("tau_max", p.tau_max),
                            ("tau_short", p.tau_short), ("tau_long", p.tau_long),
                            ("validate.epsilon", self.validate.epsilon)):
            if value < 0:
                raise ConfigError(f"{name} must be non-negative")
        if p.convention not in CONVENTION_ALIASES:
            raise ConfigError(f"unknown convention {p.convention!r}")
        p.convention = CONVENTION_ALIASES[p.convention]
        if n.n_times < 10:
            raise ConfigError("n_times must be at least 10")
        if n.grid_points < 3 or n.grid_z_max <= n.grid_z_min:
            raise ConfigError("grid must have at least 3 points and z_max > z_min")
        td = self.time_defaults()
        if not td["tau_short"] < td["tau_long"] <= td["tau_max"]:
            raise ConfigError("need tau_short < tau_long <= tau_max")
        if self.sweep.parameter not in ("epsilon", "gamma", "z0_scaled", "n_particles"):
            raise ConfigError(f"cannot sweep {self.sweep.parameter!r}")
        for m in self.sweep.methods:
            if m not in ("free", "exact", "born2", "born_exp"):
                raise ConfigError(f"unknown sweep method {m!r}")
        if self.singlemode.state not in ("fock", "thermal", "coherent"):
            raise ConfigError(f"unknown single-mode state {self.singlemode.state!r}")
        if self.singlemode.form not in ("normal_ordered", "printed"):
            raise ConfigError(f"unknown counting form {self.singlemode.form!r}")
        if self.singlemode.nbar < 0 or self.singlemode.n_max < 1:
            raise ConfigError("nbar must be non-negative and n_max positive")
        if any(x < 0 for x in self.singlemode.epsilon_tau):
            raise ConfigError("epsilon_tau values must be non-negative")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")


def load_config(path, command: str, convention: str | None = None, out_dir: str | None = None,
                jobs: int = 1) -> RunConfig:
    """Parse ``path`` strictly and apply command-line overrides."""
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    cfg = RunConfig(command=command)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        target = cfg if section == "run" else getattr(cfg, section)
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                value = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
            if section == "run" and key == "command":
                if value != command:
                    raise ConfigError(f"config is for command {value!r}, not {command!r}")
                continue
            setattr(target, key, value)
    if convention is not None:
        if convention not in CONVENTION_ALIASES:
            raise ConfigError(f"unknown convention {convention!r}")
        cfg.physics.convention = CONVENTION_ALIASES[convention]
    cfg.out_dir = out_dir or str(Path("out") / command)
    cfg.jobs = jobs
    cfg.validate_values()
    return cfg
