"""Perturbed integrable flows in action-angle coordinates.

The action is the initial value plus a scaled noise path, with no
discretisation error.  The angle is ``θ0 + ∫ω(I_r)dr + ζ·noise``, where the
frequency integral is a cumulative trapezoid over grid samples of ``ω(I)``.
Angles are kept unwrapped.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError, DomainExitError
from .models import (FrequencyMap, OscillatorChart, PendulumParams, cached_chart,
                     oscillator_frequency)
from .noise import LevyTriplet, NoisePath, TimeGrid, sample_brownian, sample_levy
from .rng import Seed, child

Noise = Union[str, LevyTriplet]
DOMAIN_POLICIES = ("abort", "reflect", "clamp")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """An integrable system: its dimension and frequency map ``ω(I)``."""

    kind: str
    dim: int = 1
    chart: Optional[OscillatorChart] = None
    pendulum: Optional[PendulumParams] = None
    frequency_map: Optional[FrequencyMap] = None

    def __post_init__(self):
        if self.kind == "oscillator":
            ok = self.chart is not None and self.dim == 1
        elif self.kind == "pendulum":
            ok = self.pendulum is not None and self.dim == 1
        elif self.kind == "custom":
            ok = self.frequency_map is not None and self.frequency_map.dim == self.dim
        else:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if not ok:
            raise ValueError(f"inconsistent {self.kind} system specification")

    @classmethod
    def oscillator(cls, m: int, tol: float = 1e-10, cache_dir=None) -> "SystemSpec":
        return cls("oscillator", 1, chart=cached_chart(m, tol, cache_dir))

    @classmethod
    def pendulum_system(cls, g: float, l: float, mass: float = 1.0) -> "SystemSpec":
        return cls("pendulum", 1, pendulum=PendulumParams(g, l, mass))

    @classmethod
    def custom(cls, fmap: FrequencyMap) -> "SystemSpec":
        return cls("custom", fmap.dim, frequency_map=fmap)

    @property
    def constant_frequency(self) -> Optional[np.ndarray]:
        if self.kind == "pendulum":
            return np.array([self.pendulum.omega])
        if self.kind == "custom" and self.frequency_map.constant is not None:
            return self.frequency_map.constant.copy()
        return None

    def in_domain(self, I: np.ndarray) -> np.ndarray:
        """Row mask of actions where ``ω`` is defined."""
        I = np.asarray(I, float)
        if self.kind == "oscillator":
            return np.all(I > 0, axis=-1)
        return np.all(np.isfinite(I), axis=-1)

    def omega(self, I: np.ndarray) -> np.ndarray:
        """Frequencies at actions of shape ``(..., dim)``."""
        I = np.asarray(I, float)
        if self.kind == "oscillator":
            return oscillator_frequency(self.chart, I)
        if self.kind == "pendulum":
            return np.full(I.shape, self.pendulum.omega)
        return self.frequency_map(I)

    def to_dict(self) -> dict:
        if self.kind == "oscillator":
            return {"kind": "oscillator", "m": self.chart.m, "tol": self.chart.tol,
                    "T_star": self.chart.T_star}
        if self.kind == "pendulum":
            p = self.pendulum
            return {"kind": "pendulum", "g": p.g, "l": p.l, "omega": p.omega}
        f = self.frequency_map
        return {"kind": "custom", "dim": self.dim, "map": f.name, **(f.params or {})}


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Initial state, noise intensities and noise laws of a perturbed system.

    ``zeta`` scales the angle noise (``η`` in the d-dimensional systems).
    ``action_noise``/``angle_noise`` are ``"brownian"`` or a :class:`LevyTriplet`.
    With ``interlace`` the angle noise loses its large jumps.
    """

    I0: np.ndarray
    theta0: np.ndarray
    grid: TimeGrid
    sigma: float = 0.0
    zeta: float = 0.0
    action_noise: Noise = "brownian"
    angle_noise: Noise = "brownian"
    interlace: bool = False
    domain_policy: str = "abort"
    clamp_eps: float = 1e-12

    def __post_init__(self):
        I0 = np.atleast_1d(np.asarray(self.I0, float))
        th = np.atleast_1d(np.asarray(self.theta0, float))
        if I0.shape != th.shape or I0.ndim != 1:
            raise ValueError("I0 and theta0 must be vectors of equal length")
        object.__setattr__(self, "I0", I0)
        object.__setattr__(self, "theta0", th)
        if not (np.isfinite(self.sigma) and np.isfinite(self.zeta)):
            raise ValueError("noise intensities must be finite")
        if self.domain_policy not in DOMAIN_POLICIES:
            raise ValueError(f"domain_policy must be one of {DOMAIN_POLICIES}")
        for noise in (self.action_noise, self.angle_noise):
            if isinstance(noise, str):
                if noise != "brownian":
                    raise ValueError(f"unknown noise {noise!r}")
            elif isinstance(noise, LevyTriplet):
                if noise.dim != I0.size:
                    raise ValueError("Lévy triplet dimension differs from the system's")
            else:
                raise TypeError(f"noise must be 'brownian' or a LevyTriplet, got {noise!r}")

    @property
    def dim(self) -> int:
        return self.I0.size

    def with_grid(self, grid: TimeGrid) -> "SimConfig":
        return SimConfig(self.I0, self.theta0, grid, self.sigma, self.zeta,
                         self.action_noise, self.angle_noise, self.interlace,
                         self.domain_policy, self.clamp_eps)


@dataclass(frozen=True, eq=False)
class ActionAnglePath:
    """Joint ``(I, θ)`` trajectory; arrays have shape ``(steps + 1, dim)``."""

    grid: TimeGrid
    I: np.ndarray
    theta: np.ndarray
    freq_integral: np.ndarray
    flagged: bool = False
    action_noise: Optional[NoisePath] = field(default=None, repr=False)
    angle_noise: Optional[NoisePath] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.I.shape[1]


def _noise_path(noise: Noise, grid: TimeGrid, dim: int, seed: Seed,
                interlace: bool) -> NoisePath:
    if isinstance(noise, LevyTriplet):
        return sample_levy(noise, grid, seed, interlace=interlace)
    return sample_brownian(grid, dim, seed)


def _guard_domain(spec: SystemSpec, cfg: SimConfig, I: np.ndarray):
    ok = spec.in_domain(I)
    if ok.all():
        return I, False
    if cfg.domain_policy == "abort":
        index = int(np.argmin(ok))
        raise DomainExitError(f"action left the chart domain at grid index {index}", index)
    if spec.kind != "oscillator":
        raise DomainError("only the oscillator chart has a repairable domain")
    if cfg.domain_policy == "reflect":
        return np.abs(I), True
    return np.maximum(I, cfg.clamp_eps), True


def action_path(spec: SystemSpec, cfg: SimConfig, seed: Seed):
    """Action noise and action path; the path is ``I0 + sigma * noise``."""
    noise = _noise_path(cfg.action_noise, cfg.grid, cfg.dim, child(seed, "action"),
                        interlace=False)
    I = cfg.I0[None, :] + cfg.sigma * noise.values
    return noise, I


def _check_dims(spec: SystemSpec, cfg: SimConfig):
    if spec.dim != cfg.dim:
        raise ValueError(f"system has dim {spec.dim} but config has dim {cfg.dim}")


def simulate(spec: SystemSpec, cfg: SimConfig, seed: Seed) -> ActionAnglePath:
    """One trajectory of the perturbed system.

    Action and angle noise come from the independent sub-streams
    ``child(seed, "action")`` and ``child(seed, "angle")``.  If the action
    leaves the domain of ``ω`` the configured policy applies: ``abort`` raises
    :class:`DomainExitError`, ``reflect``/``clamp`` repair the path and set
    ``flagged``.
    """
    _check_dims(spec, cfg)
    action_noise, I = action_path(spec, cfg, seed)
    I, flagged = _guard_domain(spec, cfg, I)
    angle_noise = _noise_path(cfg.angle_noise, cfg.grid, cfg.dim, child(seed, "angle"),
                              interlace=cfg.interlace)
    w = spec.omega(I)
    freq_integral = cumulative_trapezoid(w, dx=cfg.grid.dt, axis=0, initial=0.0)
    theta = cfg.theta0[None, :] + freq_integral + cfg.zeta * angle_noise.values
    return ActionAnglePath(cfg.grid, I, theta, freq_integral, flagged,
                           action_noise, angle_noise)


class NonConvergenceWarning(UserWarning):
    """Long-time average has not settled between half and full horizon."""


@dataclass(frozen=True, eq=False)
class BirkhoffEstimate:
    """Replica mean of the time average of ``ω`` along action paths."""

    w_bar: np.ndarray
    se: np.ndarray
    half_horizon_w_bar: np.ndarray
    half_horizon_se: np.ndarray
    horizon: float
    replicas: int
    discarded: int
    converged: bool

    def to_dict(self) -> dict:
        return {"w_bar": self.w_bar.tolist(), "se": self.se.tolist(),
                "half_horizon_w_bar": self.half_horizon_w_bar.tolist(),
                "horizon": self.horizon, "replicas": self.replicas,
                "discarded": self.discarded, "converged": self.converged,
                "note": "long-time empirical average used as the spatial "
                        "frequency average"}


def birkhoff_average(spec: SystemSpec, cfg: SimConfig, horizon: float, replicas: int,
                     seed: Seed) -> BirkhoffEstimate:
    """Estimate ``lim (1/T) ∫_0^T ω(I_s) ds`` by replica-averaged time averages.

    Replica ``r`` uses seed ``child(seed, r)``.  Replicas whose action leaves
    the domain under the ``abort`` policy are discarded and counted.  A
    :class:`NonConvergenceWarning` is issued when the averages at ``horizon``
    and ``horizon/2`` differ by more than 5 standard errors.
    """
    _check_dims(spec, cfg)
    grid = TimeGrid.covering(horizon, cfg.grid.dt)
    const = spec.constant_frequency
    if const is not None or cfg.sigma == 0:
        w = const if const is not None else spec.omega(cfg.I0)
        z = np.zeros_like(w)
        return BirkhoffEstimate(w, z, w.copy(), z.copy(), horizon, replicas, 0, True)
    cfg = cfg.with_grid(grid)
    mid = grid.steps // 2
    full, half = [], []
    discarded = 0
    for r in range(replicas):
        _, I = action_path(spec, cfg, child(seed, r))
        try:
            I, _ = _guard_domain(spec, cfg, I)
        except DomainExitError:
            discarded += 1
            continue
        fi = cumulative_trapezoid(spec.omega(I), dx=grid.dt, axis=0, initial=0.0)
        full.append(fi[-1] / grid.horizon)
        half.append(fi[mid] / (mid * grid.dt))
    kept = len(full)
    if kept < 2:
        raise DomainError(f"only {kept} of {replicas} replicas stayed in the domain")
    full = np.array(full)
    half = np.array(half)
    w_bar, w_half = full.mean(axis=0), half.mean(axis=0)
    se = full.std(axis=0, ddof=1) / np.sqrt(kept)
    se_half = half.std(axis=0, ddof=1) / np.sqrt(kept)
    gap = np.abs(w_bar - w_half)
    converged = bool(np.all(gap <= 5 * np.hypot(se, se_half)))
    if not converged:
        warnings.warn(f"time average moved by {gap.max():.3g} between horizon/2 and "
                      f"horizon (more than 5 standard errors)", NonConvergenceWarning,
                      stacklevel=2)
    return BirkhoffEstimate(w_bar, se, w_half, se_half, horizon, replicas, discarded,
                            converged)
