"""Key-value run configuration (see configs/schema.md)."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .params import HBAR, NUCLEON_MASS, Exponential, PhysicalParams, White, to_natural


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mass_kg: float = 1.0
    m0_kg: float = 0.0  # 0: nucleon mass for si, 1 for natural
    lambda0: float = 0.25
    hbar: float = 0.0  # 0: SI value for si, 1 for natural
    kernel: str = "exponential"
    gamma: float = 1.0
    t_final: float = 1.0
    n_steps: int = 200
    seed: int = 0
    units: str = "natural"
    sigma0: float = 0.7071067811865476  # alpha0 = 1/2 in natural units
    mean_q0: float = 0.0
    mean_p0: float = 0.0
    n_paths: int = 1000
    xi_mode: str = "unitary"
    record_every: int = 0  # 0: pick automatically

    def __post_init__(self):
        if self.units not in ("si", "natural"):
            raise ConfigError(f"units must be si or natural, got {self.units!r}")
        if self.kernel not in ("white", "exponential"):
            raise ConfigError(f"kernel must be white or exponential, got {self.kernel!r}")
        if self.xi_mode not in ("unitary", "collapse"):
            raise ConfigError(f"xi_mode must be unitary or collapse, got {self.xi_mode!r}")
        if self.m0_kg < 0 or self.hbar < 0:
            raise ConfigError("m0_kg and hbar must be positive (or 0 for the default)")
        for name in ("mass_kg", "t_final", "sigma0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda0 < 0 or (self.kernel == "exponential" and not self.gamma > 0):
            raise ConfigError("lambda0 must be >= 0 and gamma > 0")
        if self.n_steps < 3 or self.n_paths < 1:
            raise ConfigError("n_steps must be >= 3 and n_paths >= 1")

    @property
    def physical(self):
        si = self.units == "si"
        m0 = self.m0_kg or (NUCLEON_MASS if si else 1.0)
        hbar = self.hbar or (HBAR if si else 1.0)
        return PhysicalParams(mass=self.mass_kg, lambda0=self.lambda0, m0=m0, hbar=hbar)

    def natural(self):
        """(scales, kernel, t_final, alpha0, beta0, lam) in natural units.

        With units = natural every input is taken as already dimensionless
        (hbar = m = 1) and lambda0 is the coupling itself.
        """
        if self.units == "natural":
            kern = White() if self.kernel == "white" else Exponential(self.gamma)
            alpha0 = 1 / (4 * self.sigma0**2)
            beta0 = 2 * alpha0 * self.mean_q0 + 1j * self.mean_p0
            return None, kern, self.t_final, alpha0, beta0, self.lambda0
        sc = to_natural(self.physical)
        if sc.free_particle:
            raise ConfigError("SI runs need lambda0 > 0 to define the time unit")
        kern = White() if self.kernel == "white" else Exponential(self.gamma).scaled(sc.time)
        alpha0 = sc.alpha(1 / (4 * self.sigma0**2))
        beta0 = 2 * alpha0 * sc.x(self.mean_q0) + 1j * sc.momentum(self.mean_p0)
        return sc, kern, sc.t(self.t_final), alpha0, beta0, 0.25

    @property
    def auto_record_every(self):
        if self.record_every:
            return self.record_every
        for parts in (50, 20, 10):
            if self.n_steps % parts == 0 and self.n_steps // parts >= 3:
                return self.n_steps // parts
        return self.n_steps


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CAST = {"float": float, "int": int, "str": str}


def parse_config(text, section="run"):
    """Parse ``key = value`` lines (an optional [run] header is allowed)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    body = text if text.lstrip().startswith("[") else f"[{section}]\n{text}"
    try:
        cp.read_string(body)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not cp.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    values = {}
    for key, raw in cp.items(section):
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _CAST[_TYPES[key]](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return RunConfig(**values)


def load_config(path=None, **overrides):
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                cfg = parse_config(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **clean) if clean else cfg

