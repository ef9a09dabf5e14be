"""
Run configuration: TOML files with one table per section.

Every field has a default that reproduces the reference numerics (sigma = 0.1,
walls at +-10, h = 0.01). Unknown sections or keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli
import tomli_w

from .criticality import SearchSettings, linear_range
from .exceptions import ConfigError, PacketTooWide
from .model import DiffusionProfile, GaussianWavepacket, Grid1D, HarmonicPotential, initial_density
from .pde import SolverConfig
from .sde import DEFAULT_SEED, EnsembleConfig


@dataclass(frozen=True)
class PhysicsSection:
    d0: float = 1.0
    alpha: float = 0.0
    k: float = 1.0
    epsilon0: float = 1.0
    sigma: float = 0.1


@dataclass(frozen=True)
class GridSection:
    eps_min: float = -10.0
    eps_max: float = 10.0
    n: int = 2001


@dataclass(frozen=True)
class SolverSection:
    dt: float = 1e-3
    t_end: float = 5.0
    theta: float = 0.5
    snapshot_stride: int = 10
    tol_mass: float = 1e-6


@dataclass(frozen=True)
class AnalysisSection:
    delta: float = 1e-4
    fit_lo: float = 0.1
    fit_hi: float = 0.9
    moment_orders: tuple = (1, 2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class SweepSection:
    # explicit value lists win over the (min, max, n) ranges when non-empty
    alphas: tuple = ()
    alpha_min: float = 0.0
    alpha_max: float = 1.0
    n_alpha: int = 5
    ks: tuple = ()
    k_min: float = 0.25
    k_max: float = 1.0
    n_k: int = 5
    tol_eps: float = 0.01
    eps_hi: float = 5.0
    t_end_max: float = 40.0
    epsilon0s: tuple = tuple(round(0.1 * i, 10) for i in range(1, 21))


@dataclass(frozen=True)
class OracleSection:
    n_traj: int = 100_000
    dt_sde: float = 1e-3
    seed: int = DEFAULT_SEED
    record_every: float = 0.1
    block_size: int = 8192


SECTIONS = {
    "physics": PhysicsSection,
    "grid": GridSection,
    "solver": SolverSection,
    "analysis": AnalysisSection,
    "sweep": SweepSection,
    "oracle": OracleSection,
}


@dataclass(frozen=True)
class RunConfig:
    physics: PhysicsSection = PhysicsSection()
    grid: GridSection = GridSection()
    solver: SolverSection = SolverSection()
    analysis: AnalysisSection = AnalysisSection()
    sweep: SweepSection = SweepSection()
    oracle: OracleSection = OracleSection()

    # --- domain objects -------------------------------------------------
    def profile(self) -> DiffusionProfile:
        return DiffusionProfile(self.physics.d0, self.physics.alpha)

    def potential(self) -> HarmonicPotential:
        return HarmonicPotential(self.physics.k)

    def packet(self) -> GaussianWavepacket:
        return GaussianWavepacket(self.physics.epsilon0, self.physics.sigma)

    def grid_1d(self) -> Grid1D:
        return Grid1D(self.grid.eps_min, self.grid.eps_max, self.grid.n)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(s.dt, s.t_end, s.theta, s.snapshot_stride, s.tol_mass)

    def fit_window(self) -> tuple:
        return (self.analysis.fit_lo, self.analysis.fit_hi)

    def search_settings(self) -> SearchSettings:
        s, sw = self.solver, self.sweep
        return SearchSettings(
            d0=self.physics.d0,
            sigma=self.physics.sigma,
            grid=self.grid_1d(),
            dt=s.dt,
            theta=s.theta,
            snapshot_stride=s.snapshot_stride,
            tol_mass=s.tol_mass,
            t_end=s.t_end,
            t_end_max=sw.t_end_max,
            delta=self.analysis.delta,
            fit_window=self.fit_window(),
            tol_eps=sw.tol_eps,
            eps_hi=sw.eps_hi,
        )

    def sweep_alphas(self) -> np.ndarray:
        sw = self.sweep
        if sw.alphas:
            return np.asarray(sw.alphas, dtype=float)
        return linear_range(sw.alpha_min, sw.alpha_max, sw.n_alpha)

    def sweep_ks(self) -> np.ndarray:
        sw = self.sweep
        if sw.ks:
            return np.asarray(sw.ks, dtype=float)
        return linear_range(sw.k_min, sw.k_max, sw.n_k)

    def ensemble_config(self, t_end: float | None = None) -> EnsembleConfig:
        o = self.oracle
        horizon = self.solver.t_end if t_end is None else t_end
        n = int(round(horizon / o.record_every))
        times = tuple(float(np.round(i * o.record_every, 12)) for i in range(n + 1))
        return EnsembleConfig(
            n_traj=o.n_traj,
            dt_sde=o.dt_sde,
            t_end=horizon,
            seed=o.seed,
            record_times=times,
            orders=(1, 2),
            block_size=o.block_size,
        )

    # --- validation -----------------------------------------------------
    def validate(self) -> "RunConfig":
        """Build every domain object once; any failure becomes a ConfigError."""
        try:
            grid = self.grid_1d()
            self.profile()
            self.potential()
            packet = self.packet()
            self.solver_config()
            initial_density(packet, grid)
        except PacketTooWide as exc:
            raise ConfigError(f"packet too close to the wall: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        a = self.analysis
        if not a.delta >= 0:
            raise ConfigError("delta must be non-negative")
        if not 0 < a.fit_lo < a.fit_hi < 1:
            raise ConfigError("fit window must satisfy 0 < fit_lo < fit_hi < 1")
        if any(int(n) != n or n < 1 for n in a.moment_orders):
            raise ConfigError("moment orders must be positive integers")
        sw = self.sweep
        if not sw.tol_eps > 0:
            raise ConfigError("tol_eps must be positive")
        if not self.physics.sigma < sw.eps_hi <= grid.eps_max - 6 * self.physics.sigma:
            raise ConfigError("eps_hi must lie between sigma and the packet-safe wall distance")
        o = self.oracle
        if o.n_traj < 2 or not o.dt_sde > 0 or not o.record_every > 0 or o.block_size < 1:
            raise ConfigError("invalid oracle settings")
        return self

    def validate_sweep(self) -> None:
        sw = self.sweep
        for explicit, lo, hi, n in ((sw.alphas, sw.alpha_min, sw.alpha_max, sw.n_alpha), (sw.ks, sw.k_min, sw.k_max, sw.n_k)):
            if not explicit and (n < 1 or lo > hi):
                raise ConfigError("empty sweep range")
        try:
            alphas, ks = self.sweep_alphas(), self.sweep_ks()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if alphas.size == 0 or ks.size == 0:
            raise ConfigError("empty sweep range")
        if np.any(alphas < 0) or np.any(ks < 0):
            raise ConfigError("sweep values must be non-negative")

    # --- (de)serialization ---------------------------------------------
    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = {
                f.name: list(getattr(sec, f.name)) if isinstance(getattr(sec, f.name), tuple) else getattr(sec, f.name)
                for f in fields(sec)
            }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        sections = {}
        for name, sec_cls in SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, Mapping):
                raise ConfigError(f"section {name} must be a table")
            sections[name] = _build_section(name, sec_cls, values)
        return cls(**sections)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Apply ``{"section.field": value}`` overrides, coercing types."""
        data = self.to_dict()
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if section not in data or name not in data[section]:
                raise ConfigError(f"unknown key: {key}")
            data[section][name] = value
        return RunConfig.from_dict(data)


def _coerce(section: str, f: dataclasses.Field, value: Any) -> Any:
    key = f"{section}.{f.name}"
    default = f.default
    if isinstance(default, tuple):
        if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
            raise ConfigError(f"{key} must be a list")
        item_type = int if f.name == "moment_orders" else float
        try:
            return tuple(_scalar(key, item_type, v) for v in value)
        except ConfigError:
            raise ConfigError(f"{key} must be a list of {item_type.__name__}") from None
    return _scalar(key, type(default), value)


def _scalar(key: str, kind: type, value: Any) -> Any:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be {kind.__name__}")
    if kind is int:
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{key} must be an integer")
    if isinstance(value, (int, float)):
        return float(value)
    raise ConfigError(f"{key} must be a number")


def _build_section(name: str, sec_cls: type, values: Mapping[str, Any]):
    known = {f.name: f for f in fields(sec_cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return sec_cls(**{k: _coerce(name, known[k], v) for k, v in values.items()})


def field_index() -> dict:
    """Map each field name to ``(section, Field)``; names are unique across sections."""
    index = {}
    for section, sec_cls in SECTIONS.items():
        for f in fields(sec_cls):
            assert f.name not in index, f.name
            index[f.name] = (section, f)
    return index


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return RunConfig.from_dict(data)


def dump_config(config: RunConfig, path) -> None:
    Path(path).write_text(tomli_w.dumps(config.to_dict()))
