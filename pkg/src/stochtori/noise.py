"""Brownian and Lévy noise paths on uniform time grids.

A Lévy process is sampled through its Lévy–Itô decomposition: drift, a
scaled Brownian motion, compensated small jumps (|z| < 1) and uncompensated
large jumps (|z| >= 1).  Jump measures are of finite activity; in dimension
``d > 1`` the measure is placed on the coordinate axes, i.e. every coordinate
carries an independent copy of the one-dimensional jump process.

Every summand is drawn from its own seed sub-stream (see :mod:`stochtori.rng`),
so switching one component on or off leaves the others bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import EmptyPathError, IntegrationError, UnsupportedMeasureError
from .rng import Seed, child, generator

QUAD_EPSABS = 1e-10
# accepted residual of a quadrature before it counts as a failure
QUAD_RESIDUAL_MAX = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + k*dt`` for ``k = 0..steps``."""

    dt: float
    steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def covering(cls, horizon: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        """Grid from ``t0`` to ``t0 + horizon``; ``dt`` must divide ``horizon``."""
        k = round(horizon / dt)
        if k < 1 or abs(k * dt - horizon) > 1e-9 * max(1.0, abs(horizon)):
            raise ValueError(f"dt={dt} does not divide horizon={horizon}")
        return cls(dt=dt, steps=k, t0=t0)

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def time(self, k):
        # computed from the index, never accumulated
        return self.t0 + np.asarray(k) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.steps + 1) * self.dt

    def elapsed(self) -> np.ndarray:
        """Times since ``t0`` at every grid point."""
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Noise realisation; ``values`` has shape ``(steps + 1, dim)``."""

    grid: TimeGrid
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def endpoint(self) -> np.ndarray:
        return self.values[-1]


def _radii(intervals):
    lo = min(0.0 if a <= 0 <= b else min(abs(a), abs(b)) for a, b in intervals)
    hi = max(max(abs(a), abs(b)) for a, b in intervals)
    return lo, hi


@dataclass(frozen=True, eq=False)
class JumpMeasureSpec:
    """Finite jump intensity measure on the real line.

    ``density`` integrates to ``total_mass`` (jumps per unit time) and vanishes
    outside ``intervals``.  ``sampler(gen, size)`` draws jump sizes from the
    normalised law.  Use the named constructors; the plain constructor is
    there for measures that are declared but cannot be sampled.
    """

    kind: str
    density: Callable[[np.ndarray], np.ndarray]
    intervals: tuple
    total_mass: float
    sampler: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    breakpoints: tuple = ()
    first_moment: Optional[float] = None
    second_moment: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("none", "finite-activity", "infinite-activity"):
            raise ValueError(f"unknown jump measure kind {self.kind!r}")

    # -- constructors ------------------------------------------------------
    @classmethod
    def none(cls) -> "JumpMeasureSpec":
        return cls(kind="none", density=lambda z: np.zeros_like(np.asarray(z, float)),
                   intervals=((0.0, 0.0),), total_mass=0.0, name="none",
                   first_moment=0.0, second_moment=0.0)

    @classmethod
    def uniform(cls, lo: float, hi: float, rate: float, symmetric: bool = False):
        """Uniform jumps on ``[lo, hi]`` (also ``[-hi, -lo]`` if ``symmetric``)."""
        if not hi > lo:
            raise ValueError("uniform jumps need hi > lo")
        _check_rate(rate)
        width = hi - lo

        def base_density(z):
            z = np.asarray(z, float)
            return np.where((z >= lo) & (z <= hi), rate / width, 0.0)

        def base_sampler(gen, size):
            return lo + width * gen.random(size)

        m1 = rate * (lo + hi) / 2
        m2 = rate * (lo * lo + lo * hi + hi * hi) / 3
        return cls._build("uniform", dict(lo=lo, hi=hi, rate=rate, symmetric=symmetric),
                          base_density, base_sampler, (lo, hi), rate, symmetric, m1, m2, ())

    @classmethod
    def triangular(cls, lo: float, mode: float, hi: float, rate: float,
                   symmetric: bool = False):
        """Triangular jumps on ``[lo, hi]`` peaking at ``mode``."""
        if not (lo <= mode <= hi and hi > lo):
            raise ValueError("triangular jumps need lo <= mode <= hi, hi > lo")
        _check_rate(rate)
        w = hi - lo
        f_mode = (mode - lo) / w

        def base_density(z):
            z = np.asarray(z, float)
            up = np.where(mode > lo, 2 * (z - lo) / (w * max(mode - lo, 1e-300)), 0.0)
            down = np.where(hi > mode, 2 * (hi - z) / (w * max(hi - mode, 1e-300)), 0.0)
            d = np.where(z < mode, up, down)
            return np.where((z >= lo) & (z <= hi), rate * d, 0.0)

        def base_sampler(gen, size):
            u = gen.random(size)
            left = lo + np.sqrt(u * w * (mode - lo))
            right = hi - np.sqrt((1 - u) * w * (hi - mode))
            return np.where(u < f_mode, left, right)

        m1 = rate * (lo + mode + hi) / 3
        m2 = rate * (lo * lo + mode * mode + hi * hi + lo * mode + lo * hi + mode * hi) / 6
        return cls._build("triangular",
                          dict(lo=lo, mode=mode, hi=hi, rate=rate, symmetric=symmetric),
                          base_density, base_sampler, (lo, hi), rate, symmetric, m1, m2,
                          (mode,))

    @classmethod
    def tabulated(cls, abscissae: Sequence[float], values: Sequence[float]):
        """Density given at ``abscissae``, linearly interpolated, zero outside."""
        x = np.asarray(abscissae, float)
        v = np.asarray(values, float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("tabulated density needs matching 1-d arrays of length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and non-negative")
        mass = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))
        vmax = float(v.max())

        def density(z):
            return np.interp(np.asarray(z, float), x, v, left=0.0, right=0.0)

        def sampler(gen, size):
            return _rejection(gen, size, density, x[0], x[-1], vmax)

        params = dict(abscissae=x.tolist(), values=v.tolist())
        return cls(kind="finite-activity" if mass > 0 else "none", density=density,
                   intervals=((float(x[0]), float(x[-1])),), total_mass=mass,
                   sampler=sampler, name="tabulated", params=params,
                   breakpoints=tuple(float(a) for a in x[1:-1]))

    @classmethod
    def custom(cls, density: Callable, lo: float, hi: float, bound: float):
        """Bounded density on ``[lo, hi]``; ``bound`` must dominate it."""
        mass = _quad(density, lo, hi)
        if not math.isfinite(mass):
            raise UnsupportedMeasureError("custom jump density has infinite mass")

        def sampler(gen, size):
            return _rejection(gen, size, density, lo, hi, bound)

        return cls(kind="finite-activity" if mass > 0 else "none", density=density,
                   intervals=((lo, hi),), total_mass=mass, sampler=sampler,
                   params=dict(lo=lo, hi=hi, bound=bound))

    @classmethod
    def _build(cls, name, params, base_density, base_sampler, support, rate, symmetric,
               m1, m2, breaks):
        lo, hi = support
        if not symmetric:
            return cls(kind="finite-activity" if rate > 0 else "none",
                       density=base_density, intervals=((lo, hi),), total_mass=rate,
                       sampler=base_sampler, name=name, params=params,
                       breakpoints=breaks, first_moment=m1, second_moment=m2)
        if lo < 0:
            raise ValueError("symmetric jump laws are mirrored from a support in [0, inf)")

        def density(z):
            z = np.asarray(z, float)
            return 0.5 * (base_density(z) + base_density(-z))

        def sampler(gen, size):
            z = base_sampler(gen, size)
            sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
            return sign * z

        mirrored = tuple(-b for b in breaks) + tuple(breaks)
        return cls(kind="finite-activity" if rate > 0 else "none", density=density,
                   intervals=((-hi, -lo), (lo, hi)), total_mass=rate, sampler=sampler,
                   name=name, params=params, breakpoints=mirrored,
                   first_moment=0.0, second_moment=m2)

    # -- properties --------------------------------------------------------
    @property
    def support_radius(self) -> float:
        return _radii(self.intervals)[1]

    @property
    def inner_radius(self) -> float:
        return _radii(self.intervals)[0]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """``∫ f(z) ν(dz)`` by adaptive quadrature over the support."""
        if self.kind == "none":
            return 0.0
        total = 0.0
        for a, b in self.intervals:
            if b > a:
                total += _quad(lambda z: f(z) * self.density(z), a, b,
                               [p for p in self.breakpoints if a < p < b])
        return total

    def mean_jump(self) -> float:
        """``∫ z ν(dz)``, the compensator rate of the jump part."""
        if self.first_moment is not None:
            return self.first_moment
        return self.integrate(lambda z: z)

    def jump_second_moment(self) -> float:
        """``∫ z² ν(dz)``."""
        if self.second_moment is not None:
            return self.second_moment
        return self.integrate(lambda z: z * z)

    def levy_integrability(self) -> float:
        """``∫ min(z², 1) ν(dz)``; finite for every admissible measure."""
        return self.integrate(lambda z: np.minimum(np.square(z), 1.0))

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        _require_finite_activity(self)
        if size == 0 or self.kind == "none":
            return np.zeros(size)
        return np.asarray(self.sampler(gen, size), float)

    def to_dict(self) -> dict:
        return {"kind": self.name, **self.params}


def _check_rate(rate):
    if not (math.isfinite(rate) and rate >= 0):
        raise ValueError(f"jump rate must be finite and non-negative, got {rate}")


def _rejection(gen, size, density, lo, hi, bound):
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = max(16, 2 * need)
        z = lo + (hi - lo) * gen.random(batch)
        keep = z[gen.random(batch) * bound < density(z)]
        take = min(keep.size, need)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def _quad(f, a, b, points=()):
    pts = list(points) or None
    val, err = integrate.quad(lambda z: float(f(np.float64(z))), a, b,
                              epsabs=QUAD_EPSABS, epsrel=1e-10, limit=400, points=pts)
    if not math.isfinite(val) or err > QUAD_RESIDUAL_MAX * max(1.0, abs(val)):
        raise IntegrationError(f"quadrature on [{a}, {b}] did not converge "
                               f"(residual estimate {err:.3g})", residual=err)
    return val


def _require_finite_activity(spec: JumpMeasureSpec):
    if spec.kind == "infinite-activity" or not math.isfinite(spec.total_mass):
        raise UnsupportedMeasureError(
            "only finite-activity jump measures can be sampled")


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Generating data of a Lévy process: drift, diffusion and jump measures."""

    gamma: np.ndarray
    xi: float = 0.0
    small_jumps: JumpMeasureSpec = field(default_factory=JumpMeasureSpec.none)
    large_jumps: JumpMeasureSpec = field(default_factory=JumpMeasureSpec.none)

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, float))
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise ValueError("gamma must be a finite vector")
        object.__setattr__(self, "gamma", g)
        if not (math.isfinite(self.xi) and self.xi >= 0):
            raise ValueError(f"xi must be finite and >= 0, got {self.xi}")
        if self.small_jumps.kind != "none" and not self.small_jumps.support_radius < 1:
            raise ValueError("small jumps must be supported strictly inside the unit ball")
        if self.large_jumps.kind != "none" and not self.large_jumps.inner_radius >= 1:
            raise ValueError("large jumps must be supported outside the open unit ball")

    @property
    def dim(self) -> int:
        return self.gamma.size

    @classmethod
    def brownian(cls, dim: int = 1) -> "LevyTriplet":
        return cls(gamma=np.zeros(dim), xi=1.0)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "xi": self.xi,
                "small_jumps": self.small_jumps.to_dict(),
                "large_jumps": self.large_jumps.to_dict()}


def _require_steps(grid: TimeGrid):
    if grid.steps < 1:
        raise EmptyPathError("grid has no steps")


def sample_brownian(grid: TimeGrid, dim: int, seed: Seed) -> NoisePath:
    """Standard ``dim``-dimensional Brownian motion started at 0."""
    _require_steps(grid)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    gen = generator(seed)
    values = np.zeros((grid.steps + 1, dim))
    incr = gen.standard_normal((grid.steps, dim))
    incr *= math.sqrt(grid.dt)
    np.cumsum(incr, axis=0, out=values[1:])
    return NoisePath(grid, values)


def _jump_sum(spec: JumpMeasureSpec, grid: TimeGrid, dim: int, seed: Seed) -> np.ndarray:
    # compound Poisson sum, each jump binned to the first grid point at or after it
    gen = generator(seed)
    out = np.zeros((grid.steps + 1, dim))
    if spec.kind == "none" or spec.total_mass == 0:
        return out
    horizon = grid.horizon
    for j in range(dim):
        count = gen.poisson(spec.total_mass * horizon)
        if count == 0:
            continue
        arrivals = gen.uniform(0.0, horizon, count)
        sizes = spec.sample(gen, count)
        idx = np.clip(np.ceil(arrivals / grid.dt).astype(np.int64), 1, grid.steps)
        out[:, j] = np.cumsum(np.bincount(idx, weights=sizes, minlength=grid.steps + 1))
    return out


def sample_compensated_small_jumps(spec: JumpMeasureSpec, grid: TimeGrid, seed: Seed,
                                   dim: int = 1) -> NoisePath:
    """``∫_{|z|<1} z Ñ(t, dz)``: compound Poisson sum minus ``t ∫ z ν(dz)``."""
    _require_steps(grid)
    _require_finite_activity(spec)
    if spec.kind != "none" and not spec.support_radius < 1:
        raise ValueError("small-jump measure must live strictly inside the unit ball")
    values = _jump_sum(spec, grid, dim, seed)
    drift = spec.mean_jump()
    if drift != 0.0:
        values -= grid.elapsed()[:, None] * drift
    return NoisePath(grid, values)


def sample_levy(triplet: LevyTriplet, grid: TimeGrid, seed: Seed,
                interlace: bool = False) -> NoisePath:
    """Lévy path ``γt + ξB(t) + small compensated jumps + large jumps``.

    With ``interlace`` the large-jump summand is dropped.  The diffusion part
    uses the sub-stream ``child(seed, "diffusion")``, so a triplet with
    ``xi = 1`` and nothing else reproduces ``sample_brownian`` on that stream.
    """
    _require_steps(grid)
    _require_finite_activity(triplet.small_jumps)
    _require_finite_activity(triplet.large_jumps)
    dim = triplet.dim
    values = grid.elapsed()[:, None] * triplet.gamma[None, :]
    if triplet.xi > 0:
        values = values + triplet.xi * sample_brownian(
            grid, dim, child(seed, "diffusion")).values
    if triplet.small_jumps.kind != "none":
        values = values + sample_compensated_small_jumps(
            triplet.small_jumps, grid, child(seed, "small_jumps"), dim).values
    if not interlace and triplet.large_jumps.kind != "none":
        values = values + _jump_sum(triplet.large_jumps, grid, dim,
                                    child(seed, "large_jumps"))
    return NoisePath(grid, values)


def _jump_exponent(spec: JumpMeasureSpec, u: float, compensate: bool) -> complex:
    if spec.kind == "none" or u == 0:
        return 0.0j
    re = spec.integrate(lambda z: np.cos(u * z) - 1.0)
    if compensate:
        im = spec.integrate(lambda z: np.sin(u * z) - u * z)
    else:
        im = spec.integrate(lambda z: np.sin(u * z))
    return complex(re, im)


def levy_khintchine_exponent(triplet: LevyTriplet, u, t: float,
                             interlace: bool = False) -> complex:
    """Characteristic function ``E exp(i<u, X(t)>)`` from the Lévy–Khintchine formula.

    Returns ``exp(t ψ(u))`` with
    ``ψ(u) = i<u,γ> - ξ²|u|²/2 + ∫ (e^{i<u,z>} - 1 - i<u,z> 1{|z|<1}) ν(dz)``;
    the jump integral is evaluated per coordinate by adaptive quadrature.
    Large jumps are left out when ``interlace`` is set, matching
    :func:`sample_levy`.
    """
    _require_finite_activity(triplet.small_jumps)
    _require_finite_activity(triplet.large_jumps)
    u = np.atleast_1d(np.asarray(u, float))
    if u.shape != triplet.gamma.shape:
        raise ValueError(f"frequency has shape {u.shape}, expected {triplet.gamma.shape}")
    psi = 1j * float(u @ triplet.gamma) - 0.5 * triplet.xi ** 2 * float(u @ u)
    for uj in u:
        psi += _jump_exponent(triplet.small_jumps, float(uj), compensate=True)
        if not interlace:
            psi += _jump_exponent(triplet.large_jumps, float(uj), compensate=False)
    return complex(np.exp(t * psi))
